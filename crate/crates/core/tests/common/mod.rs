#![allow(dead_code)]

use jetflow::expr::{self, Binding, Number};
use jetflow::integrator::{integrate, Options, Trajectory};
use jetflow::{
    ConstrainedProblem, ContactState, DiscreteSection, Expr, JetPoint, JetSymbol, LagrangianProblem,
    OstrogradskySystem, PhaseState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Case {
    pub name: &'static str,
    pub dof: usize,
    pub order: usize,
    pub lagrangian: &'static str,
    pub params: &'static [(&'static str, f64)],
    /// Initial jets `[i][a]`, `a < 2N`.
    pub jets: Vec<Vec<f64>>,
}

impl Case {
    pub fn problem(&self) -> LagrangianProblem {
        LagrangianProblem::parse(self.dof, self.order, self.lagrangian, self.params).unwrap()
    }

    pub fn system(&self) -> OstrogradskySystem {
        OstrogradskySystem::new(self.problem()).unwrap()
    }

    pub fn initial(&self) -> JetPoint {
        JetPoint::new(0.0, self.jets.clone()).unwrap()
    }
}

pub const PAIS_UHLENBECK: &str = "(q1_2^2 - (w1^2 + w2^2)*q1_1^2 + w1^2*w2^2*q1_0^2)/2";

pub fn free_second_order() -> Case {
    Case {
        name: "free-2",
        dof: 1,
        order: 2,
        lagrangian: "q1_2^2 / 2",
        params: &[],
        jets: vec![vec![0.0, 0.0, 0.0, 6.0]],
    }
}

pub fn pais_uhlenbeck() -> Case {
    Case {
        name: "pais-uhlenbeck",
        dof: 1,
        order: 2,
        lagrangian: PAIS_UHLENBECK,
        params: &[("w1", 1.0), ("w2", 2.0)],
        jets: vec![vec![1.0, 0.0, -1.0, 0.0]],
    }
}

pub fn free_third_order() -> Case {
    Case {
        name: "free-3",
        dof: 1,
        order: 3,
        lagrangian: "q1_3^2 / 2",
        params: &[],
        jets: vec![vec![0.0, 0.0, 0.0, 0.0, 0.0, 120.0]],
    }
}

/// Every test Lagrangian: linear and nonlinear, one and two degrees of
/// freedom, orders 1 to 3, and one with explicit time dependence.
pub fn catalogue() -> Vec<Case> {
    vec![
        free_second_order(),
        pais_uhlenbeck(),
        free_third_order(),
        Case {
            name: "oscillator",
            dof: 1,
            order: 1,
            lagrangian: "q1_1^2/2 - w^2*q1_0^2/2",
            params: &[("w", 1.5)],
            jets: vec![vec![1.0, 0.0]],
        },
        Case {
            name: "quartic",
            dof: 1,
            order: 2,
            lagrangian: "q1_2^2/2 + q1_2^4/8 - 5*q1_1^2/2 + 2*q1_0^2",
            params: &[],
            jets: vec![vec![0.1, 0.0, 0.05, -0.02]],
        },
        Case {
            name: "coupled",
            dof: 2,
            order: 2,
            lagrangian: "(q1_2^2 + q2_2^2)/2 + c*q1_2*q2_2 - 5*(q1_1^2 + q2_1^2)/2 + 2*q1_0^2 + 3*q2_0^2 + k*q1_0*q2_0",
            params: &[("c", 0.1), ("k", 0.1)],
            jets: vec![vec![0.3, 0.0, 0.1, 0.0], vec![-0.2, 0.1, 0.0, 0.05]],
        },
        Case {
            name: "driven",
            dof: 1,
            order: 2,
            lagrangian: "(1 + t^2/4)*q1_2^2/2 - 5*q1_1^2/2 + 2*q1_0^2 + sin(t)*q1_0",
            params: &[],
            jets: vec![vec![0.2, 0.1, -0.3, 0.0]],
        },
    ]
}

/// `psi = (z, z^2)`, `L = z^2 / 2`; reduced `H = p1^2 / (2 (1 - 2 p2))`.
pub fn constrained_example() -> ConstrainedProblem {
    ConstrainedProblem::parse(2, 1, &["z1", "z1^2"], "z1^2/2", &[]).unwrap()
}

/// A constrained problem whose momenta and control actually move.
pub fn steered_example() -> ConstrainedProblem {
    ConstrainedProblem::parse(
        2,
        1,
        &["z1 + q2_0", "z1^2/2 - q1_0"],
        "z1^2/2 + z1^4/4 + (q1_0^2 + q2_0^2)/2",
        &[],
    )
    .unwrap()
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| uniform(rng, -scale, scale)).collect()
}

pub fn random_phase(rng: &mut impl Rng, sys: &OstrogradskySystem) -> PhaseState {
    let len = sys.state_len() / 2;
    let t = uniform(rng, 0.0, 2.0);
    PhaseState::new(t, random_vec(rng, len, 1.0), random_vec(rng, len, 1.0)).unwrap()
}

/// Fourth-order Richardson-extrapolated central difference.
pub fn derivative(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d1 = d(&mut f, h);
    let d2 = d(&mut f, h / 2.0);
    (4.0 * d2 - d1) / 3.0
}

pub fn rk4(
    field: impl FnMut(f64, &[f64], &mut [f64]) -> jetflow::Result<()>,
    s0: &[f64],
    t1: f64,
    dt: f64,
) -> Trajectory {
    integrate(field, 0.0, s0, t1, Options::rk4(dt)).unwrap()
}

pub fn el_trajectory(p: &LagrangianProblem, jets: &JetPoint, t1: f64, dt: f64) -> Trajectory {
    let y = p.jet_state(jets).unwrap();
    integrate(|t, y, dy| p.el_field(t, y, dy), jets.t, &y, t1, Options::rk4(dt)).unwrap()
}

pub fn ostro_trajectory(sys: &OstrogradskySystem, s0: &PhaseState, t1: f64, dt: f64) -> Trajectory {
    let mut flow = sys.flow();
    integrate(|t, y, dy| flow.field(t, y, dy), s0.t, &s0.to_vec(), t1, Options::rk4(dt)).unwrap()
}

pub fn reduced_trajectory(cp: &ConstrainedProblem, t0: f64, q: &[f64], p: &[f64], t1: f64, dt: f64) -> Trajectory {
    let mut y = q.to_vec();
    y.extend_from_slice(p);
    let mut flow = cp.reduced_flow();
    integrate(|t, y, dy| flow.field(t, y, dy), t0, &y, t1, Options::rk4(dt)).unwrap()
}

/// Samples of a reduced `[q, p]` trajectory lifted to the contact bundle with
/// the stationary control.
pub fn section_from_reduced(cp: &ConstrainedProblem, traj: &Trajectory) -> DiscreteSection {
    let n = cp.dof();
    let mut guess: Option<Vec<f64>> = None;
    let samples = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, y)| {
            let z = cp.solve_z(t, &y[..n], &y[n..], guess.as_deref()).unwrap();
            guess = Some(z.clone());
            ContactState::new(t, y[..n].to_vec(), z, y[n..].to_vec())
        })
        .collect();
    DiscreteSection::new(samples).unwrap()
}

/// Smooth random perturbation direction: sine modes in `q` (so `q` vanishes
/// at both ends), cosine modes in `z` and `p`.
pub fn smooth_direction(rng: &mut impl Rng, base: &DiscreteSection) -> DiscreteSection {
    let s = base.samples();
    let (t0, t1) = (s[0].t, s.last().unwrap().t);
    let (n, r) = (s[0].q.len(), s[0].z.len());
    let mut modes = |count: usize| -> Vec<[f64; 3]> {
        (0..count).map(|_| [uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)]).collect()
    };
    let (qm, zm, pm) = (modes(n), modes(r), modes(n));
    let last = s.len() - 1;
    let samples = s
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let x = (st.t - t0) / (t1 - t0) * std::f64::consts::PI;
            let sine = |c: &[f64; 3]| {
                if k == 0 || k == last {
                    0.0
                } else {
                    (0..3).map(|m| c[m] * ((m + 1) as f64 * x).sin()).sum()
                }
            };
            let cosine = |c: &[f64; 3]| (0..3).map(|m| c[m] * (m as f64 * x).cos()).sum();
            ContactState::new(
                st.t,
                qm.iter().map(sine).collect(),
                zm.iter().map(cosine).collect(),
                pm.iter().map(cosine).collect(),
            )
        })
        .collect();
    DiscreteSection::new(samples).unwrap()
}

/// Least-squares slope of `log|d|` against `log eps`.
pub fn fitted_slope(eps: &[f64], diffs: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.abs().ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

// ---- random expressions ----

/// Jet symbols the generator draws from; bindings also cover one order more
/// so that `D_t` of a generated expression can be evaluated.
pub fn generator_symbols() -> Vec<JetSymbol> {
    vec![
        JetSymbol::Time,
        JetSymbol::coordinate(1, 0),
        JetSymbol::coordinate(1, 1),
        JetSymbol::coordinate(1, 2),
        JetSymbol::coordinate(2, 0),
        JetSymbol::coordinate(2, 1),
        JetSymbol::parameter("w"),
    ]
}

/// Random expression that is finite and smooth for arguments in `[-1, 1]`:
/// logs, square roots and denominators only ever see `1 + x^2` or similar.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    let symbols = generator_symbols();
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.7) {
            Expr::symbol(symbols[rng.random_range(0..symbols.len())].clone())
        } else if rng.random_bool(0.5) {
            Expr::rational(rng.random_range(-4..=4), rng.random_range(1..=3))
        } else {
            Expr::constant(uniform(rng, -2.0, 2.0))
        };
    }
    let child = |rng: &mut R| random_expr(rng, depth - 1);
    let one_plus_square = |e: Expr| Expr::one() + e.pow(2);
    match rng.random_range(0..11) {
        0 => Expr::add_all((0..rng.random_range(2..=3)).map(|_| child(rng))),
        1 | 2 => Expr::mul_all((0..rng.random_range(2..=3)).map(|_| child(rng))),
        3 => child(rng).pow(rng.random_range(2..=3)),
        4 => child(rng) / one_plus_square(child(rng)),
        5 => child(rng).sin(),
        6 => child(rng).cos(),
        7 => {
            let e = child(rng);
            (&e / &one_plus_square(e.clone())).exp()
        }
        8 => one_plus_square(child(rng)).log(),
        9 => one_plus_square(child(rng)).sqrt(),
        _ => one_plus_square(child(rng)).pow(Number::ratio(-3, 2)),
    }
}

/// Binding with every generator symbol and jets up to order 3 in `[-1, 1]`.
pub fn random_binding(rng: &mut impl Rng) -> Binding {
    let mut b = Binding::new();
    b.set(JetSymbol::Time, uniform(rng, -1.0, 1.0));
    b.set(JetSymbol::parameter("w"), uniform(rng, -1.0, 1.0));
    for i in 1..=2 {
        for a in 0..=3 {
            b.set(JetSymbol::coordinate(i, a), uniform(rng, -1.0, 1.0));
        }
    }
    b
}

/// `|D(e1 e2) - (De1 e2 + e1 De2)|` and the scale it is judged against.
pub fn leibniz_gap(e1: &Expr, e2: &Expr, b: &Binding) -> (f64, f64) {
    let dt = |e: &Expr| expr::total_time_derivative(e).unwrap();
    let ev = |e: &Expr| expr::evaluate(e, b).unwrap();
    let lhs = ev(&dt(&(e1 * e2)));
    let (a, c) = (ev(&dt(e1)) * ev(e2), ev(e1) * ev(&dt(e2)));
    ((lhs - (a + c)).abs(), (a.abs() + c.abs()).max(1.0))
}

/// Expression and binding with evaluation finite and at most `1e3` in size,
/// drawn deterministically from `seed`.
pub fn sample_expr(seed: u64) -> (Expr, Binding) {
    let mut rng = rng(seed);
    loop {
        let depth = rng.random_range(1..=6);
        let e = random_expr(&mut rng, depth);
        let b = random_binding(&mut rng);
        if matches!(expr::evaluate(&e, &b), Ok(v) if v.abs() <= 1e3) {
            return (e, b);
        }
    }
}

/// Plain central difference with `h = 1e-6 max(1, |x|)`.
pub fn central_difference(e: &Expr, s: &JetSymbol, b: &Binding) -> f64 {
    let x = b.get(s).unwrap();
    let h = 1e-6 * x.abs().max(1.0);
    let at = |v: f64| {
        let mut moved = b.clone();
        moved.set(s.clone(), v);
        expr::evaluate(e, &moved).unwrap()
    };
    (at(x + h) - at(x - h)) / (2.0 * h)
}

