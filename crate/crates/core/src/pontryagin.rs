//! Variational problems with velocity constraints `dq/dt = psi(t, q, z)`.
//!
//! Configuration coordinates are written `q<k>_0` and controls `z<A>`. On the
//! contact bundle `(t, q, z, p)` the Pontryagin Hamiltonian is
//! `H = p_k psi^k - L`; extremals satisfy
//!
//! ```text
//! dq/dt = dH/dp,   dp/dt = -dH/dq,   dH/dz = 0.
//! ```
//!
//! Where `d^2H/dz dz` is invertible the last equation gives `z(t, q, p)` and
//! the first two become Hamilton's equations for `H(t, q, p, z(t, q, p))`.
//! [`from_higher_order`] turns an order-`N` Lagrangian into such a problem.

use std::collections::{BTreeMap, HashMap};

use crate::expr::{self, parse, partial, Compiled, Expr, JetSymbol, SymbolTable};
use crate::lagrangian::LagrangianProblem;
use crate::{linalg, Error, Result};

const NEWTON_MAX_ITERATIONS: usize = 50;

/// Records how an order-`N` problem with `dof` coordinates was flattened:
/// `q<a*dof + i + 1>_0` stands for `q<i+1>_<a>` and `z<i+1>` for `q<i+1>_<N>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub dof: usize,
    pub order: usize,
}

impl Embedding {
    /// 1-based flat index of `q<i>_<a>` (`i` 1-based).
    pub fn flat_index(&self, i: usize, a: usize) -> usize {
        a * self.dof + i
    }

    /// Inverse of [`Embedding::flat_index`].
    pub fn coordinate_of(&self, flat: usize) -> (usize, usize) {
        ((flat - 1) % self.dof + 1, (flat - 1) / self.dof)
    }

    /// `(flat symbol, jet symbol)` pairs, controls included.
    pub fn symbol_map(&self) -> Vec<(JetSymbol, JetSymbol)> {
        let mut out = Vec::new();
        for a in 0..self.order {
            for i in 1..=self.dof {
                out.push((
                    JetSymbol::coordinate(self.flat_index(i, a) as u32, 0),
                    JetSymbol::coordinate(i as u32, a as u32),
                ));
            }
        }
        for i in 1..=self.dof {
            out.push((JetSymbol::control(i as u32), JetSymbol::coordinate(i as u32, self.order as u32)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    pub t: f64,
    pub q: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
}

impl ContactState {
    pub fn new(t: f64, q: Vec<f64>, z: Vec<f64>, p: Vec<f64>) -> Self {
        ContactState { t, q, z, p }
    }

    /// `[q..., z..., p...]`, the layout of [`ConstrainedProblem::full_field`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.q.clone();
        y.extend_from_slice(&self.z);
        y.extend_from_slice(&self.p);
        y
    }

    pub fn from_slice(t: f64, y: &[f64], controls: usize) -> Self {
        let n = (y.len() - controls) / 2;
        ContactState {
            t,
            q: y[..n].to_vec(),
            z: y[n..n + controls].to_vec(),
            p: y[n + controls..].to_vec(),
        }
    }
}

/// A sampled curve in the contact bundle, strictly increasing in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSection {
    samples: Vec<ContactState>,
}

impl DiscreteSection {
    pub fn new(samples: Vec<ContactState>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Shape("a section needs at least 2 samples".into()));
        }
        let first = &samples[0];
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Shape(format!("sample times not increasing at t = {}", w[1].t)));
            }
        }
        if samples.iter().any(|s| {
            s.q.len() != first.q.len() || s.z.len() != first.z.len() || s.p.len() != first.p.len()
        }) {
            return Err(Error::Shape("samples of differing dimension".into()));
        }
        Ok(DiscreteSection { samples })
    }

    pub fn samples(&self) -> &[ContactState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `self + eps * direction`, sample by sample. Times must agree.
    pub fn perturbed(&self, direction: &DiscreteSection, eps: f64) -> Result<DiscreteSection> {
        if direction.len() != self.len() {
            return Err(Error::Shape("direction has a different number of samples".into()));
        }
        let axpy = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
            if a.len() != b.len() {
                return Err(Error::Shape("direction has a different dimension".into()));
            }
            Ok(a.iter().zip(b).map(|(x, d)| x + eps * d).collect())
        };
        let samples = self
            .samples
            .iter()
            .zip(&direction.samples)
            .map(|(s, d)| {
                Ok(ContactState {
                    t: s.t,
                    q: axpy(&s.q, &d.q)?,
                    z: axpy(&s.z, &d.z)?,
                    p: axpy(&s.p, &d.p)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(DiscreteSection { samples })
    }
}

#[derive(Debug, Clone)]
struct CompiledParts {
    hamiltonian: Compiled,
    psi: Vec<Compiled>,
    lagrangian: Compiled,
    stationarity: Vec<Compiled>,
    z_hessian: Vec<Vec<Compiled>>,
    // dH/dq_k
    h_q: Vec<Compiled>,
    // d^2H/dz_A dt, d^2H/dz_A dq_k, dpsi^k/dz_A
    h_zt: Vec<Compiled>,
    h_zq: Vec<Vec<Compiled>>,
    psi_z: Vec<Vec<Compiled>>,
}

#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    dof: usize,
    controls: usize,
    psi: Vec<Expr>,
    lagrangian: Expr,
    parameters: BTreeMap<String, f64>,
    embedding: Option<Embedding>,
    hamiltonian: Expr,
    stationarity: Vec<Expr>,
    z_hessian: Vec<Vec<Expr>>,
    table: SymbolTable,
    compiled: CompiledParts,
}

fn q_sym(k: usize) -> JetSymbol {
    JetSymbol::coordinate(k as u32, 0)
}

fn z_sym(a: usize) -> JetSymbol {
    JetSymbol::control(a as u32)
}

fn p_sym(k: usize) -> JetSymbol {
    JetSymbol::momentum(k as u32, 0)
}

impl ConstrainedProblem {
    /// `controls <= dof` is allowed; with `controls == dof` and `psi = z` the
    /// problem is an ordinary first-order Lagrangian one.
    pub fn new(
        dof: usize,
        controls: usize,
        psi: Vec<Expr>,
        lagrangian: Expr,
        parameters: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if dof == 0 || controls == 0 {
            return Err(Error::Problem("need at least one coordinate and one control".into()));
        }
        if controls > dof {
            return Err(Error::Problem(format!("r = {controls} controls exceed n = {dof}")));
        }
        if psi.len() != dof {
            return Err(Error::Problem(format!("psi has {} components but n = {dof}", psi.len())));
        }
        for (what, e) in psi.iter().map(|e| ("psi", e)).chain([("lagrangian", &lagrangian)]) {
            for symbol in e.free_symbols() {
                let ok = match &symbol {
                    JetSymbol::Time => true,
                    JetSymbol::Coordinate { index, order } => *order == 0 && *index as usize <= dof,
                    JetSymbol::Control(a) => *a as usize <= controls,
                    JetSymbol::Parameter(name) => {
                        if !parameters.contains_key(name) {
                            return Err(Error::Problem(format!("undeclared parameter `{name}`")));
                        }
                        true
                    }
                    JetSymbol::Momentum { .. } => false,
                };
                if !ok {
                    return Err(Error::Problem(format!(
                        "`{symbol}` is not allowed in the {what}; use t, q<k>_0 (k <= {dof}), z<A> (A <= {controls}) and parameters"
                    )));
                }
            }
        }

        let hamiltonian = Expr::add_all(
            psi.iter()
                .enumerate()
                .map(|(k, e)| Expr::symbol(p_sym(k + 1)) * e.clone())
                .chain([-lagrangian.clone()]),
        );
        let stationarity: Vec<Expr> = (1..=controls).map(|a| partial(&hamiltonian, &z_sym(a))).collect();
        let z_hessian: Vec<Vec<Expr>> = stationarity
            .iter()
            .map(|row| (1..=controls).map(|b| partial(row, &z_sym(b))).collect())
            .collect();

        let mut table = SymbolTable::new();
        table.insert(JetSymbol::Time);
        (1..=dof).for_each(|k| {
            table.insert(q_sym(k));
        });
        (1..=controls).for_each(|a| {
            table.insert(z_sym(a));
        });
        (1..=dof).for_each(|k| {
            table.insert(p_sym(k));
        });
        for name in parameters.keys() {
            table.insert(JetSymbol::parameter(name.clone()));
        }

        let c = |e: &Expr| Compiled::new(e, &table);
        let all = |es: &[Expr]| es.iter().map(c).collect::<std::result::Result<Vec<_>, _>>();
        let compiled = CompiledParts {
            hamiltonian: c(&hamiltonian)?,
            psi: all(&psi)?,
            lagrangian: c(&lagrangian)?,
            stationarity: all(&stationarity)?,
            z_hessian: z_hessian.iter().map(|r| all(r)).collect::<std::result::Result<_, _>>()?,
            h_q: (1..=dof).map(|k| c(&partial(&hamiltonian, &q_sym(k)))).collect::<std::result::Result<_, _>>()?,
            h_zt: stationarity
                .iter()
                .map(|s| c(&partial(s, &JetSymbol::Time)))
                .collect::<std::result::Result<_, _>>()?,
            h_zq: stationarity
                .iter()
                .map(|s| (1..=dof).map(|k| c(&partial(s, &q_sym(k)))).collect())
                .collect::<std::result::Result<_, _>>()?,
            psi_z: psi
                .iter()
                .map(|e| (1..=controls).map(|a| c(&partial(e, &z_sym(a)))).collect())
                .collect::<std::result::Result<_, _>>()?,
        };

        Ok(ConstrainedProblem {
            dof,
            controls,
            psi,
            lagrangian,
            parameters,
            embedding: None,
            hamiltonian,
            stationarity,
            z_hessian,
            table,
            compiled,
        })
    }

    pub fn parse(
        dof: usize,
        controls: usize,
        psi: &[&str],
        lagrangian: &str,
        parameters: &[(&str, f64)],
    ) -> Result<Self> {
        let psi = psi.iter().map(|s| parse(s)).collect::<std::result::Result<_, _>>()?;
        let params = parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        ConstrainedProblem::new(dof, controls, psi, parse(lagrangian)?, params)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn controls(&self) -> usize {
        self.controls
    }

    pub fn psi(&self) -> &[Expr] {
        &self.psi
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    /// Present when built by [`from_higher_order`].
    pub fn embedding(&self) -> Option<&Embedding> {
        self.embedding.as_ref()
    }

    /// `p_k psi^k - L`, over `q<k>_0`, `z<A>` and `p<k>_0`.
    pub fn hamiltonian(&self) -> &Expr {
        &self.hamiltonian
    }

    /// `dH/dz_A`.
    pub fn stationarity(&self) -> &[Expr] {
        &self.stationarity
    }

    pub fn regularity_expression(&self) -> Expr {
        expr::determinant(&self.z_hessian)
    }

    fn slots(&self, t: f64, q: &[f64], z: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.dof || z.len() != self.controls || p.len() != self.dof {
            return Err(Error::Shape(format!(
                "contact state needs {} q, {} z and {} p values, got {}, {} and {}",
                self.dof,
                self.controls,
                self.dof,
                q.len(),
                z.len(),
                p.len()
            )));
        }
        let mut slots = Vec::with_capacity(self.table.len());
        slots.push(t);
        slots.extend_from_slice(q);
        slots.extend_from_slice(z);
        slots.extend_from_slice(p);
        slots.extend(self.parameters.values());
        Ok(slots)
    }

    fn set_z(&self, slots: &mut [f64], z: &[f64]) {
        slots[1 + self.dof..1 + self.dof + self.controls].copy_from_slice(z);
    }

    fn state_slots(&self, s: &ContactState) -> Result<Vec<f64>> {
        self.slots(s.t, &s.q, &s.z, &s.p)
    }

    fn matrix(rows: &[Vec<Compiled>], slots: &[f64]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| eval_all(r, slots)).collect()
    }

    /// Rank of `dpsi/dz`, which should equal `r`.
    pub fn control_rank_at(&self, t: f64, q: &[f64], z: &[f64]) -> Result<usize> {
        let slots = self.slots(t, q, z, &vec![0.0; self.dof])?;
        let m = Self::matrix(&self.compiled.psi_z, &slots)?;
        let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        Ok(linalg::rank(&m, 1e-10 * (1.0 + scale)))
    }

    pub fn hamiltonian_value(&self, s: &ContactState) -> Result<f64> {
        Ok(self.compiled.hamiltonian.eval(&self.state_slots(s)?)?)
    }

    pub fn stationarity_residual(&self, s: &ContactState) -> Result<Vec<f64>> {
        eval_all(&self.compiled.stationarity, &self.state_slots(s)?)
    }

    /// `det d^2H/dz dz`.
    pub fn regularity_at(&self, s: &ContactState) -> Result<f64> {
        let slots = self.state_slots(s)?;
        Ok(linalg::determinant(&Self::matrix(&self.compiled.z_hessian, &slots)?))
    }

    /// Newton on `dH/dz = 0`. Without a guess it starts at zero, and from all
    /// ones if `d^2H/dz^2` is singular there.
    pub fn solve_z(&self, t: f64, q: &[f64], p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let r = self.controls;
        let mut slots = self.slots(t, q, &vec![0.0; r], p)?;
        match guess {
            Some(g) => self.newton(&mut slots, p, g.to_vec()),
            None => match self.newton(&mut slots, p, vec![0.0; r]) {
                Err(Error::Singular { .. }) => self.newton(&mut slots, p, vec![1.0; r]),
                other => other,
            },
        }
    }

    fn newton(&self, slots: &mut [f64], p: &[f64], mut z: Vec<f64>) -> Result<Vec<f64>> {
        if z.len() != self.controls {
            return Err(Error::Shape(format!("guess needs {} values", self.controls)));
        }
        let tol = 1e-12 * (1.0 + linalg::max_abs(p));
        for iteration in 0..=NEWTON_MAX_ITERATIONS {
            self.set_z(slots, &z);
            let residual = eval_all(&self.compiled.stationarity, slots)?;
            let norm = linalg::max_abs(&residual);
            if norm < tol {
                return Ok(z);
            }
            if iteration == NEWTON_MAX_ITERATIONS || !norm.is_finite() {
                return Err(Error::NoConvergence {
                    what: "stationarity Newton iteration",
                    iterations: iteration,
                    residual: norm,
                });
            }
            let jac = Self::matrix(&self.compiled.z_hessian, slots)?;
            let step = linalg::solve(&jac, &residual, "d^2H/dz^2")?;
            for (zi, di) in z.iter_mut().zip(&step) {
                *zi -= di;
            }
        }
        unreachable!()
    }

    pub fn reduced_hamiltonian_value(&self, t: f64, q: &[f64], p: &[f64], guess: Option<&[f64]>) -> Result<f64> {
        let z = self.solve_z(t, q, p, guess)?;
        Ok(self.compiled.hamiltonian.eval(&self.slots(t, q, &z, p)?)?)
    }

    /// `(dq/dt, dp/dt)` on the stationarity set, plus the solved `z`.
    pub fn reduced_field(
        &self,
        t: f64,
        q: &[f64],
        p: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let z = self.solve_z(t, q, p, guess)?;
        let slots = self.slots(t, q, &z, p)?;
        let dq = eval_all(&self.compiled.psi, &slots)?;
        let dp = eval_all(&self.compiled.h_q, &slots)?.into_iter().map(|x| -x).collect();
        Ok((dq, dp, z))
    }

    /// The Pontryagin equations on `[q..., z..., p...]`, with `dz/dt` taken
    /// from the time derivative of `dH/dz = 0`:
    /// `H_zz z' = -(H_zt + H_zq q' + psi_z^T p')`.
    pub fn full_field(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n, r) = (self.dof, self.controls);
        if y.len() != 2 * n + r || dy.len() != y.len() {
            return Err(Error::Shape(format!("expected state of length {}", 2 * n + r)));
        }
        let slots = self.slots(t, &y[..n], &y[n..n + r], &y[n + r..])?;
        let dq = eval_all(&self.compiled.psi, &slots)?;
        let dp: Vec<f64> = eval_all(&self.compiled.h_q, &slots)?.into_iter().map(|x| -x).collect();
        let h_zt = eval_all(&self.compiled.h_zt, &slots)?;
        let h_zq = Self::matrix(&self.compiled.h_zq, &slots)?;
        let psi_z = Self::matrix(&self.compiled.psi_z, &slots)?;
        let rhs: Vec<f64> = (0..r)
            .map(|a| {
                let mut v = h_zt[a];
                for k in 0..n {
                    v += h_zq[a][k] * dq[k] + psi_z[k][a] * dp[k];
                }
                -v
            })
            .collect();
        let jac = Self::matrix(&self.compiled.z_hessian, &slots)?;
        let dz = linalg::solve(&jac, &rhs, "d^2H/dz^2")?;
        dy[..n].copy_from_slice(&dq);
        dy[n..n + r].copy_from_slice(&dz);
        dy[n + r..].copy_from_slice(&dp);
        Ok(())
    }

    /// Reduced field closure state for the integrator on `[q..., p...]`,
    /// warm-starting the `z` solve.
    pub fn reduced_flow(&self) -> ReducedFlow<'_> {
        ReducedFlow { problem: self, last_z: None }
    }

    /// Central-difference `dq/dt - psi` at each interior sample of a
    /// uniformly spaced section.
    pub fn admissibility_residual(&self, sec: &DiscreteSection) -> Result<Vec<Vec<f64>>> {
        let s = sec.samples();
        if s.len() < 3 {
            return Err(Error::Shape("admissibility residual needs at least 3 samples".into()));
        }
        let h = s[1].t - s[0].t;
        if s.windows(2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-6 * h.abs()) {
            return Err(Error::Shape("admissibility residual needs a uniform step".into()));
        }
        let mut out = Vec::with_capacity(s.len() - 2);
        for k in 1..s.len() - 1 {
            let psi = eval_all(&self.compiled.psi, &self.state_slots(&s[k])?)?;
            out.push(
                (0..self.dof)
                    .map(|i| (s[k + 1].q[i] - s[k - 1].q[i]) / (2.0 * h) - psi[i])
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Trapezoidal quadrature of `L + p (dq/dt - psi)`, with `dq/dt` from
    /// 3-point differences (one-sided at the ends).
    pub fn action_value(&self, sec: &DiscreteSection) -> Result<f64> {
        let s = sec.samples();
        let m = s.len();
        let mut integrand = Vec::with_capacity(m);
        for k in 0..m {
            let slots = self.state_slots(&s[k])?;
            let h = self.compiled.hamiltonian.eval(&slots)?;
            let mut v = -h;
            for i in 0..self.dof {
                v += s[k].p[i] * derivative(s, k, i);
            }
            integrand.push(v);
        }
        Ok((1..m)
            .map(|k| 0.5 * (s[k].t - s[k - 1].t) * (integrand[k] + integrand[k - 1]))
            .sum())
    }

    /// `L` alone at a state, for reporting.
    pub fn lagrangian_value(&self, s: &ContactState) -> Result<f64> {
        Ok(self.compiled.lagrangian.eval(&self.state_slots(s)?)?)
    }
}

fn eval_all(cs: &[Compiled], slots: &[f64]) -> Result<Vec<f64>> {
    cs.iter().map(|c| c.eval(slots).map_err(Error::from)).collect()
}

/// `dq_i/dt` at sample `k` from a 3-point stencil on a possibly nonuniform
/// grid; two samples fall back to the secant.
fn derivative(s: &[ContactState], k: usize, i: usize) -> f64 {
    let m = s.len();
    if m == 2 {
        return (s[1].q[i] - s[0].q[i]) / (s[1].t - s[0].t);
    }
    let c = k.clamp(1, m - 2);
    let (t0, t1, t2) = (s[c - 1].t, s[c].t, s[c + 1].t);
    let (f0, f1, f2) = (s[c - 1].q[i], s[c].q[i], s[c + 1].q[i]);
    let (h0, h1) = (t1 - t0, t2 - t1);
    let w = if k == c {
        [-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1))]
    } else if k < c {
        [-(2.0 * h0 + h1) / (h0 * (h0 + h1)), (h0 + h1) / (h0 * h1), -h0 / (h1 * (h0 + h1))]
    } else {
        [h1 / (h0 * (h0 + h1)), -(h0 + h1) / (h0 * h1), (2.0 * h1 + h0) / (h1 * (h0 + h1))]
    };
    w[0] * f0 + w[1] * f1 + w[2] * f2
}

pub struct ReducedFlow<'a> {
    problem: &'a ConstrainedProblem,
    last_z: Option<Vec<f64>>,
}

impl ReducedFlow<'_> {
    pub fn field(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.problem.dof;
        if y.len() != 2 * n || dy.len() != y.len() {
            return Err(Error::Shape(format!("expected state of length {}", 2 * n)));
        }
        let (dq, dp, z) = self.problem.reduced_field(t, &y[..n], &y[n..], self.last_z.as_deref())?;
        dy[..n].copy_from_slice(&dq);
        dy[n..].copy_from_slice(&dp);
        self.last_z = Some(z);
        Ok(())
    }
}

/// The order-`N` problem as a constrained one on `n*N` coordinates:
/// `psi` shifts each flattened jet up by one order and the top one becomes
/// the control `z_i`.
pub fn from_higher_order(problem: &LagrangianProblem) -> Result<ConstrainedProblem> {
    let n = problem.dof();
    let order = problem.order();
    let embedding = Embedding { dof: n, order };
    let mut map: HashMap<JetSymbol, Expr> = HashMap::new();
    for (flat, jet) in embedding.symbol_map() {
        map.insert(jet, Expr::symbol(flat));
    }
    let psi = (0..order)
        .flat_map(|a| (1..=n).map(move |i| (a, i)))
        .map(|(a, i)| {
            if a + 1 < order {
                Expr::coord(embedding.flat_index(i, a + 1) as u32, 0)
            } else {
                Expr::control(i as u32)
            }
        })
        .collect();
    let lagrangian = problem.lagrangian().substitute(&map);
    let mut cp = ConstrainedProblem::new(n * order, n, psi, lagrangian, problem.parameters().clone())?;
    cp.embedding = Some(embedding);
    Ok(cp)
}
