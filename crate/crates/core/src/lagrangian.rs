//! Order-`N` Lagrangian problems and their Euler–Lagrange equations.
//!
//! For `L(t, q_0, ..., q_N)` with `n` degrees of freedom the equations are
//! `E_i = sum_{a=0}^{N} (-1)^a D_t^a (dL/dq^i_a) = 0`, of order `2N`. `E_i` is
//! affine in the top jet `q_{2N}` with coefficient matrix `(-1)^N` times the
//! top Hessian `d^2L / dq_N dq_N`, which is what [`LagrangianProblem::el_explicit_rhs`]
//! inverts.

use std::collections::BTreeMap;

use crate::expr::{parse, partial, total_time_derivative_n, Compiled, Expr, JetSymbol, SymbolTable};
use crate::{linalg, Error, Result};

/// A point of `j_M(V)`: time and `q^i_a` for `a <= M`. `jets[i][a]`, `i` 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint {
    pub t: f64,
    pub jets: Vec<Vec<f64>>,
}

impl JetPoint {
    pub fn new(t: f64, jets: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = jets.first() else {
            return Err(Error::Shape("jet point without coordinates".into()));
        };
        if first.is_empty() || jets.iter().any(|j| j.len() != first.len()) {
            return Err(Error::Shape("every coordinate needs the same number of jets".into()));
        }
        Ok(JetPoint { t, jets })
    }

    /// Single degree of freedom.
    pub fn scalar(t: f64, jets: &[f64]) -> Self {
        JetPoint {
            t,
            jets: vec![jets.to_vec()],
        }
    }

    pub fn dof(&self) -> usize {
        self.jets.len()
    }

    /// Highest derivative order present.
    pub fn order(&self) -> usize {
        self.jets[0].len() - 1
    }

    pub fn truncated(&self, order: usize) -> JetPoint {
        JetPoint {
            t: self.t,
            jets: self.jets.iter().map(|j| j[..=order].to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LagrangianProblem {
    dof: usize,
    order: usize,
    lagrangian: Expr,
    parameters: BTreeMap<String, f64>,
    euler_lagrange: Vec<Expr>,
    top_hessian: Vec<Vec<Expr>>,
    table: SymbolTable,
    el_compiled: Vec<Compiled>,
    hessian_compiled: Vec<Vec<Compiled>>,
}

impl LagrangianProblem {
    pub fn new(
        dof: usize,
        order: usize,
        lagrangian: Expr,
        parameters: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Problem("at least one degree of freedom is required".into()));
        }
        if order == 0 {
            return Err(Error::Problem("derivative order must be at least 1".into()));
        }
        let mut depends_on_top = false;
        for symbol in lagrangian.free_symbols() {
            match &symbol {
                JetSymbol::Time => {}
                JetSymbol::Coordinate { index, order: a } => {
                    if *index as usize > dof {
                        return Err(Error::Problem(format!(
                            "`{symbol}` refers to coordinate {index} but n = {dof}"
                        )));
                    }
                    if *a as usize > order {
                        return Err(Error::Problem(format!(
                            "order exceeds N: `{symbol}` with N = {order}"
                        )));
                    }
                    depends_on_top |= *a as usize == order;
                }
                JetSymbol::Parameter(name) => {
                    if !parameters.contains_key(name) {
                        return Err(Error::Problem(format!("undeclared parameter `{name}`")));
                    }
                }
                JetSymbol::Momentum { .. } | JetSymbol::Control(_) => {
                    return Err(Error::Problem(format!(
                        "`{symbol}` is not a jet coordinate; a higher-order Lagrangian may use only t, q<i>_<a> and parameters"
                    )))
                }
            }
        }
        if !depends_on_top {
            return Err(Error::Problem(format!(
                "the Lagrangian does not depend on any derivative of order N = {order}"
            )));
        }

        let mut euler_lagrange = Vec::with_capacity(dof);
        for i in 1..=dof as u32 {
            let mut terms = Vec::with_capacity(order + 1);
            for a in 0..=order {
                let d = partial(&lagrangian, &JetSymbol::coordinate(i, a as u32));
                let da = total_time_derivative_n(&d, a)?;
                terms.push(if a % 2 == 1 { -da } else { da });
            }
            euler_lagrange.push(Expr::add_all(terms));
        }

        let top: Vec<Expr> = (1..=dof as u32)
            .map(|i| partial(&lagrangian, &JetSymbol::coordinate(i, order as u32)))
            .collect();
        let top_hessian: Vec<Vec<Expr>> = top
            .iter()
            .map(|row| {
                (1..=dof as u32)
                    .map(|j| partial(row, &JetSymbol::coordinate(j, order as u32)))
                    .collect()
            })
            .collect();

        let table = jet_table(dof, 2 * order, &parameters);
        let el_compiled = euler_lagrange
            .iter()
            .map(|e| Compiled::new(e, &table))
            .collect::<std::result::Result<_, _>>()?;
        let hessian_compiled = top_hessian
            .iter()
            .map(|row| row.iter().map(|e| Compiled::new(e, &table)).collect())
            .collect::<std::result::Result<_, _>>()?;

        Ok(LagrangianProblem {
            dof,
            order,
            lagrangian,
            parameters,
            euler_lagrange,
            top_hessian,
            table,
            el_compiled,
            hessian_compiled,
        })
    }

    /// Parses the Lagrangian from the expression language.
    pub fn parse(
        dof: usize,
        order: usize,
        lagrangian: &str,
        parameters: &[(&str, f64)],
    ) -> Result<Self> {
        let params = parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        LagrangianProblem::new(dof, order, parse(lagrangian)?, params)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    pub fn is_autonomous(&self) -> bool {
        !self.lagrangian.contains(&JetSymbol::Time)
    }

    /// `E_i`, over jets of order `<= 2N`.
    pub fn euler_lagrange(&self) -> &[Expr] {
        &self.euler_lagrange
    }

    /// `d^2 L / dq^i_N dq^j_N`.
    pub fn top_hessian(&self) -> &[Vec<Expr>] {
        &self.top_hessian
    }

    /// Slot vector with `t`, parameters, and jets up to the point's order
    /// filled. Higher jets are NaN so accidental use is visible.
    fn slots(&self, point: &JetPoint) -> Vec<f64> {
        let mut slots = vec![f64::NAN; self.table.len()];
        fill_jet_slots(&mut slots, self.dof, 2 * self.order, point);
        fill_parameter_slots(&mut slots, &self.table, &self.parameters);
        slots
    }

    fn check_point(&self, point: &JetPoint, min_order: usize) -> Result<()> {
        if point.dof() != self.dof || point.order() < min_order {
            return Err(Error::Shape(format!(
                "need jets of order {min_order} for {} coordinates, got order {} for {}",
                self.dof,
                point.order(),
                point.dof()
            )));
        }
        Ok(())
    }

    pub fn top_hessian_at(&self, point: &JetPoint) -> Result<Vec<Vec<f64>>> {
        self.check_point(point, self.order)?;
        let slots = self.slots(point);
        self.hessian_from_slots(&slots)
    }

    fn hessian_from_slots(&self, slots: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; self.dof]; self.dof];
        for (i, row) in self.hessian_compiled.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                out[i][j] = c.eval(slots)?;
            }
        }
        Ok(out)
    }

    /// `det` of the top Hessian at `point` (jets to order `N`). Compare with
    /// [`linalg::is_singular`] to decide degeneracy.
    pub fn nondegeneracy_at(&self, point: &JetPoint) -> Result<f64> {
        Ok(linalg::determinant(&self.top_hessian_at(point)?))
    }

    /// `E_i` at a point carrying jets to order `2N`.
    pub fn el_residual(&self, point: &JetPoint) -> Result<Vec<f64>> {
        self.check_point(point, 2 * self.order)?;
        let slots = self.slots(point);
        self.el_compiled
            .iter()
            .map(|c| c.eval(&slots).map_err(Error::from))
            .collect()
    }

    /// Solves `E = 0` for `q_{2N}` given jets to order `2N - 1`.
    pub fn el_explicit_rhs(&self, point: &JetPoint) -> Result<Vec<f64>> {
        self.check_point(point, 2 * self.order - 1)?;
        let mut slots = self.slots(&point.truncated(2 * self.order - 1));
        let top = 2 * self.order;
        for i in 0..self.dof {
            slots[jet_slot(self.dof, i, top)] = 0.0;
        }
        let rest: Vec<f64> = self
            .el_compiled
            .iter()
            .map(|c| c.eval(&slots))
            .collect::<std::result::Result<_, _>>()?;
        let mut hessian = self.hessian_from_slots(&slots)?;
        if self.order % 2 == 1 {
            for row in &mut hessian {
                for x in row.iter_mut() {
                    *x = -*x;
                }
            }
        }
        let rhs: Vec<f64> = rest.iter().map(|r| -r).collect();
        linalg::solve(&hessian, &rhs, "top Hessian")
    }

    /// First-order state for the Euler–Lagrange route: `y[a*n + i] = q^i_a`
    /// for `a < 2N`.
    pub fn jet_state(&self, point: &JetPoint) -> Result<Vec<f64>> {
        self.check_point(point, 2 * self.order - 1)?;
        let mut y = vec![0.0; 2 * self.order * self.dof];
        for a in 0..2 * self.order {
            for i in 0..self.dof {
                y[a * self.dof + i] = point.jets[i][a];
            }
        }
        Ok(y)
    }

    pub fn jet_point_from_state(&self, t: f64, y: &[f64]) -> JetPoint {
        let levels = y.len() / self.dof;
        JetPoint {
            t,
            jets: (0..self.dof)
                .map(|i| (0..levels).map(|a| y[a * self.dof + i]).collect())
                .collect(),
        }
    }

    /// Vector field of the order-`2N` Euler–Lagrange system in the layout of
    /// [`LagrangianProblem::jet_state`].
    pub fn el_field(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.dof;
        let levels = 2 * self.order;
        if y.len() != levels * n || dy.len() != y.len() {
            return Err(Error::Shape(format!("expected state of length {}", levels * n)));
        }
        dy[..(levels - 1) * n].copy_from_slice(&y[n..]);
        let top = self.el_explicit_rhs(&self.jet_point_from_state(t, y))?;
        dy[(levels - 1) * n..].copy_from_slice(&top);
        Ok(())
    }
}

/// Jet slot layout shared by the problem types: slot 0 is `t`, then
/// `q^i_a` at `1 + a*n + i` (i 0-based) for `a <= max_order`, then parameters.
pub(crate) fn jet_table(
    dof: usize,
    max_order: usize,
    parameters: &BTreeMap<String, f64>,
) -> SymbolTable {
    let mut table = SymbolTable::new();
    table.insert(JetSymbol::Time);
    for a in 0..=max_order as u32 {
        for i in 1..=dof as u32 {
            table.insert(JetSymbol::coordinate(i, a));
        }
    }
    for name in parameters.keys() {
        table.insert(JetSymbol::parameter(name.clone()));
    }
    table
}

pub(crate) fn jet_slot(dof: usize, i: usize, order: usize) -> usize {
    1 + order * dof + i
}

pub(crate) fn fill_jet_slots(slots: &mut [f64], dof: usize, max_order: usize, point: &JetPoint) {
    slots[0] = point.t;
    for (i, jets) in point.jets.iter().enumerate() {
        for (a, v) in jets.iter().enumerate().take(max_order + 1) {
            slots[jet_slot(dof, i, a)] = *v;
        }
    }
}

pub(crate) fn fill_parameter_slots(
    slots: &mut [f64],
    table: &SymbolTable,
    parameters: &BTreeMap<String, f64>,
) {
    for (name, value) in parameters {
        if let Some(slot) = table.slot(&JetSymbol::parameter(name.clone())) {
            slots[slot] = *value;
        }
    }
}
