//! Ostrogradsky's Hamiltonian formulation of an order-`N` Lagrangian.
//!
//! The momenta are
//! `p^a_i = sum_{b=a}^{N-1} (-1)^(b-a) D_t^(b-a) dL/dq^i_{b+1}`, the phase
//! coordinates are `(t, q^i_a, p^a_i)` for `a < N`, and the top derivative
//! `q_N` is recovered from `p^{N-1} = dL/dq_N` by Newton iteration.

use std::collections::HashMap;

use crate::expr::{self, partial, total_time_derivative_n, Compiled, Expr, JetSymbol, SymbolTable};
use crate::lagrangian::{fill_jet_slots, fill_parameter_slots, jet_slot, jet_table, JetPoint, LagrangianProblem};
use crate::{linalg, Error, Result};

const NEWTON_MAX_ITERATIONS: usize = 50;

/// A phase point, flat in `(a, i)`: `q[a*n + i] = q^i_a`, `p[a*n + i] = p^a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(t: f64, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != p.len() {
            return Err(Error::Shape(format!(
                "phase state needs equally many q and p values, got {} and {}",
                q.len(),
                p.len()
            )));
        }
        Ok(PhaseState { t, q, p })
    }

    /// Builds the flat layout from per-coordinate lists `q[i][a]`, `p[i][a]`.
    pub fn from_coordinates(t: f64, q: &[Vec<f64>], p: &[Vec<f64>]) -> Result<Self> {
        let n = q.len();
        let levels = q.first().map_or(0, Vec::len);
        if n == 0 || p.len() != n || q.iter().chain(p).any(|v| v.len() != levels) || levels == 0 {
            return Err(Error::Shape("every coordinate needs N values of q and of p".into()));
        }
        let flat = |m: &[Vec<f64>]| -> Vec<f64> {
            (0..levels).flat_map(|a| (0..n).map(move |i| (a, i))).map(|(a, i)| m[i][a]).collect()
        };
        Ok(PhaseState { t, q: flat(q), p: flat(p) })
    }

    /// `[q..., p...]`, the integrator layout.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.q.clone();
        y.extend_from_slice(&self.p);
        y
    }

    pub fn from_slice(t: f64, y: &[f64]) -> Self {
        let (q, p) = y.split_at(y.len() / 2);
        PhaseState { t, q: q.to_vec(), p: p.to_vec() }
    }
}

/// Symbolic momenta `momenta[a][i]` and the top relation
/// `top_relation[i] = p^{N-1}_i - dL/dq^i_N`.
#[derive(Debug, Clone)]
pub struct MomentaTable {
    pub momenta: Vec<Vec<Expr>>,
    pub top_relation: Vec<Expr>,
}

pub fn momenta_expressions(problem: &LagrangianProblem) -> MomentaTable {
    let n = problem.dof() as u32;
    let order = problem.order();
    let l = problem.lagrangian();
    let mut momenta = Vec::with_capacity(order);
    for a in 0..order {
        let row = (1..=n)
            .map(|i| {
                Expr::add_all((a..order).map(|b| {
                    let d = partial(l, &JetSymbol::coordinate(i, b as u32 + 1));
                    // L is validated to hold only jet symbols, so D_t cannot fail.
                    let d = total_time_derivative_n(&d, b - a).expect("jet-only expression");
                    if (b - a) % 2 == 1 {
                        -d
                    } else {
                        d
                    }
                }))
            })
            .collect();
        momenta.push(row);
    }
    let top_relation = (1..=n)
        .map(|i| {
            Expr::momentum(i, order as u32 - 1) - partial(l, &JetSymbol::coordinate(i, order as u32))
        })
        .collect();
    MomentaTable { momenta, top_relation }
}

#[derive(Debug, Clone)]
pub struct OstrogradskySystem {
    problem: LagrangianProblem,
    momenta: MomentaTable,
    table: SymbolTable,
    momenta_compiled: Vec<Vec<Compiled>>,
    top_gradient: Vec<Compiled>,
    hessian: Vec<Vec<Compiled>>,
    // dL/dq^i_a for a < N, [a][i]
    gradient: Vec<Vec<Compiled>>,
    lagrangian: Compiled,
}

impl OstrogradskySystem {
    /// Fails with [`Error::Singular`] when the top Hessian determinant is
    /// identically zero, e.g. for Lagrangians affine in `q_N`.
    pub fn new(problem: LagrangianProblem) -> Result<Self> {
        let det = expr::determinant(problem.top_hessian());
        if det.is_zero() {
            return Err(Error::Singular { what: "top Hessian", det: 0.0 });
        }
        let n = problem.dof() as u32;
        let order = problem.order();
        let momenta = momenta_expressions(&problem);
        let table = jet_table(problem.dof(), 2 * order - 1, problem.parameters());
        let compile = |e: &Expr| Compiled::new(e, &table);
        let l = problem.lagrangian();

        let momenta_compiled = momenta
            .momenta
            .iter()
            .map(|row| row.iter().map(compile).collect())
            .collect::<Result<_, _>>()?;
        let top_gradient = (1..=n)
            .map(|i| compile(&partial(l, &JetSymbol::coordinate(i, order as u32))))
            .collect::<Result<_, _>>()?;
        let hessian = problem
            .top_hessian()
            .iter()
            .map(|row| row.iter().map(compile).collect())
            .collect::<Result<_, _>>()?;
        let gradient = (0..order as u32)
            .map(|a| {
                (1..=n)
                    .map(|i| compile(&partial(l, &JetSymbol::coordinate(i, a))))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let lagrangian = compile(l)?;

        Ok(OstrogradskySystem {
            problem,
            momenta,
            table,
            momenta_compiled,
            top_gradient,
            hessian,
            gradient,
            lagrangian,
        })
    }

    pub fn problem(&self) -> &LagrangianProblem {
        &self.problem
    }

    pub fn momenta(&self) -> &MomentaTable {
        &self.momenta
    }

    /// Dimension of the flat `[q..., p...]` state, `2nN`.
    pub fn state_len(&self) -> usize {
        2 * self.problem.dof() * self.problem.order()
    }

    fn check_state(&self, s: &PhaseState) -> Result<()> {
        let len = self.problem.dof() * self.problem.order();
        if s.q.len() != len || s.p.len() != len {
            return Err(Error::Shape(format!(
                "phase state needs {len} q and {len} p values, got {} and {}",
                s.q.len(),
                s.p.len()
            )));
        }
        Ok(())
    }

    /// Jets up to `N - 1` from `s`, `q_N` NaN until set.
    fn phase_slots(&self, s: &PhaseState) -> Vec<f64> {
        let n = self.problem.dof();
        let mut slots = vec![f64::NAN; self.table.len()];
        slots[0] = s.t;
        for a in 0..self.problem.order() {
            for i in 0..n {
                slots[jet_slot(n, i, a)] = s.q[a * n + i];
            }
        }
        fill_parameter_slots(&mut slots, &self.table, self.problem.parameters());
        slots
    }

    fn set_top(&self, slots: &mut [f64], top: &[f64]) {
        let n = self.problem.dof();
        for (i, v) in top.iter().enumerate() {
            slots[jet_slot(n, i, self.problem.order())] = *v;
        }
    }

    /// Evaluates the momenta at a jet of order `>= 2N - 1`.
    pub fn jet_to_phase(&self, point: &JetPoint) -> Result<PhaseState> {
        let n = self.problem.dof();
        let order = self.problem.order();
        if point.dof() != n || point.order() < 2 * order - 1 {
            return Err(Error::Shape(format!(
                "need jets of order {} for {n} coordinates",
                2 * order - 1
            )));
        }
        let mut slots = vec![f64::NAN; self.table.len()];
        fill_jet_slots(&mut slots, n, 2 * order - 1, point);
        fill_parameter_slots(&mut slots, &self.table, self.problem.parameters());
        let mut q = Vec::with_capacity(n * order);
        let mut p = Vec::with_capacity(n * order);
        for a in 0..order {
            for i in 0..n {
                q.push(point.jets[i][a]);
                p.push(self.momenta_compiled[a][i].eval(&slots)?);
            }
        }
        Ok(PhaseState { t: point.t, q, p })
    }

    /// Solves `p^{N-1} = dL/dq_N` for `q_N`. Without a guess Newton starts at
    /// zero, and from all ones if the Hessian is singular there.
    pub fn solve_top_velocity(&self, s: &PhaseState, guess: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let mut slots = self.phase_slots(s);
        let n = self.problem.dof();
        let top_p = &s.p[(self.problem.order() - 1) * n..];
        match guess {
            Some(g) => self.newton(&mut slots, top_p, g.to_vec()),
            None => match self.newton(&mut slots, top_p, vec![0.0; n]) {
                Err(Error::Singular { .. }) => self.newton(&mut slots, top_p, vec![1.0; n]),
                other => other,
            },
        }
    }

    fn newton(&self, slots: &mut [f64], top_p: &[f64], mut x: Vec<f64>) -> Result<Vec<f64>> {
        let n = x.len();
        let tol = 1e-12 * (1.0 + linalg::max_abs(top_p));
        let mut residual = vec![0.0; n];
        let mut hessian = vec![vec![0.0; n]; n];
        for iteration in 0..=NEWTON_MAX_ITERATIONS {
            self.set_top(slots, &x);
            for i in 0..n {
                residual[i] = top_p[i] - self.top_gradient[i].eval(slots)?;
            }
            let norm = linalg::max_abs(&residual);
            if norm < tol {
                return Ok(x);
            }
            if iteration == NEWTON_MAX_ITERATIONS || !norm.is_finite() {
                return Err(Error::NoConvergence {
                    what: "top-velocity Newton iteration",
                    iterations: iteration,
                    residual: norm,
                });
            }
            for (row, compiled) in hessian.iter_mut().zip(&self.hessian) {
                for (h, c) in row.iter_mut().zip(compiled) {
                    *h = c.eval(slots)?;
                }
            }
            // R(x) = p - g(x), R' = -H, so the step is +H^{-1} R.
            let step = linalg::solve(&hessian, &residual, "top Hessian")?;
            for (xi, di) in x.iter_mut().zip(&step) {
                *xi += di;
            }
        }
        unreachable!()
    }

    pub fn hamiltonian_value(&self, s: &PhaseState, guess: Option<&[f64]>) -> Result<f64> {
        let top = self.solve_top_velocity(s, guess)?;
        self.hamiltonian_with_top(s, &top)
    }

    fn hamiltonian_with_top(&self, s: &PhaseState, top: &[f64]) -> Result<f64> {
        let n = self.problem.dof();
        let order = self.problem.order();
        let mut slots = self.phase_slots(s);
        self.set_top(&mut slots, top);
        let mut h = -self.lagrangian.eval(&slots)?;
        for a in 0..order {
            for i in 0..n {
                let next = if a + 1 < order { s.q[(a + 1) * n + i] } else { top[i] };
                h += s.p[a * n + i] * next;
            }
        }
        Ok(h)
    }

    /// Hamilton's equations in the `[q..., p...]` layout, together with the
    /// solved `q_N`.
    pub fn hamiltonian_field(&self, s: &PhaseState, guess: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let top = self.solve_top_velocity(s, guess)?;
        let mut dy = vec![0.0; self.state_len()];
        self.field_with_top(s, &top, &mut dy)?;
        Ok((dy, top))
    }

    fn field_with_top(&self, s: &PhaseState, top: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.problem.dof();
        let order = self.problem.order();
        let mut slots = self.phase_slots(s);
        self.set_top(&mut slots, top);
        let (dq, dp) = dy.split_at_mut(n * order);
        dq[..n * (order - 1)].copy_from_slice(&s.q[n..]);
        dq[n * (order - 1)..].copy_from_slice(top);
        for a in 0..order {
            for i in 0..n {
                let g = self.gradient[a][i].eval(&slots)?;
                dp[a * n + i] = if a == 0 { g } else { g - s.p[(a - 1) * n + i] };
            }
        }
        Ok(())
    }

    /// `H` with `q_N` left as the controls `z_i`: `sum p^a q_{a+1} - L`.
    pub fn hamiltonian_template(&self) -> Expr {
        let n = self.problem.dof() as u32;
        let order = self.problem.order() as u32;
        let to_z: HashMap<JetSymbol, Expr> = (1..=n)
            .map(|i| (JetSymbol::coordinate(i, order), Expr::control(i)))
            .collect();
        let mut terms = Vec::new();
        for a in 0..order {
            for i in 1..=n {
                let next = if a + 1 < order { Expr::coord(i, a + 1) } else { Expr::control(i) };
                terms.push(Expr::momentum(i, a) * next);
            }
        }
        terms.push(-self.problem.lagrangian().substitute(&to_z));
        Expr::add_all(terms)
    }

    /// Vector field closure state for the integrator, warm-starting Newton
    /// from the previous evaluation.
    pub fn flow(&self) -> HamiltonianFlow<'_> {
        HamiltonianFlow { system: self, last_top: None }
    }
}

pub struct HamiltonianFlow<'a> {
    system: &'a OstrogradskySystem,
    last_top: Option<Vec<f64>>,
}

impl HamiltonianFlow<'_> {
    pub fn field(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        if y.len() != self.system.state_len() || dy.len() != y.len() {
            return Err(Error::Shape(format!("expected state of length {}", self.system.state_len())));
        }
        let s = PhaseState::from_slice(t, y);
        let top = self.system.solve_top_velocity(&s, self.last_top.as_deref())?;
        self.system.field_with_top(&s, &top, dy)?;
        self.last_top = Some(top);
        Ok(())
    }
}
