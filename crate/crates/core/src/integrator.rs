//! Explicit Runge–Kutta integration with sample retention.

use std::fmt;
use std::str::FromStr;

use crate::pontryagin::DiscreteSection;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Classical fixed-step fourth order.
    Rk4,
    /// Dormand–Prince 5(4) with step control.
    Rk45,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "rk45" => Ok(Method::Rk45),
            _ => Err(format!("unknown method `{s}` (expected rk4 or rk45)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        })
    }
}

/// Which equation system a trajectory integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Route {
    EulerLagrange,
    Ostrogradsky,
    PontryaginFull,
    PontryaginReduced,
}

impl Route {
    pub const ALL: [Route; 4] = [
        Route::EulerLagrange,
        Route::Ostrogradsky,
        Route::PontryaginFull,
        Route::PontryaginReduced,
    ];

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Route::EulerLagrange => "el",
            Route::Ostrogradsky => "ostro",
            Route::PontryaginFull => "pontryagin-full",
            Route::PontryaginReduced => "pontryagin-reduced",
        }
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "el" | "euler-lagrange" => Ok(Route::EulerLagrange),
            "ostro" | "ostrogradsky" => Ok(Route::Ostrogradsky),
            "pontryagin-full" => Ok(Route::PontryaginFull),
            "pontryagin-reduced" => Ok(Route::PontryaginReduced),
            _ => Err(format!(
                "unknown route `{s}` (expected el, ostro, pontryagin-full or pontryagin-reduced)"
            )),
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::EulerLagrange => "euler-lagrange",
            Route::Ostrogradsky => "ostrogradsky",
            Route::PontryaginFull => "pontryagin-full",
            Route::PontryaginReduced => "pontryagin-reduced",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub method: Method,
    /// Step for rk4, initial step for rk45.
    pub dt: f64,
    /// Per-step relative tolerance for rk45.
    pub tol: f64,
}

impl Options {
    pub fn rk4(dt: f64) -> Self {
        Options { method: Method::Rk4, dt, tol: 0.0 }
    }

    pub fn rk45(tol: f64) -> Self {
        Options { method: Method::Rk45, dt: 0.0, tol }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub problem: String,
    pub route: Option<Route>,
    pub method: Option<Method>,
    /// `dt` for rk4, the tolerance for rk45.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: Metadata,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last(&self) -> (f64, &[f64]) {
        (*self.times.last().unwrap(), self.states.last().unwrap())
    }

    pub fn with_meta(mut self, problem: &str, route: Route) -> Self {
        self.meta.problem = problem.to_string();
        self.meta.route = Some(route);
        self
    }

    /// Linear interpolation, clamped to the sampled interval.
    pub fn sample_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k == self.times.len() {
            return self.states[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.states[k - 1]
            .iter()
            .zip(&self.states[k])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Largest componentwise gap between two trajectories after projecting each
/// state, sampled on the coarser grid with the finer one interpolated.
pub fn max_deviation(
    a: &Trajectory,
    b: &Trajectory,
    project_a: impl Fn(&[f64]) -> Vec<f64>,
    project_b: impl Fn(&[f64]) -> Vec<f64>,
) -> f64 {
    let gap = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(&y).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
    if a.times == b.times {
        return a
            .states
            .iter()
            .zip(&b.states)
            .fold(0.0, |m, (x, y)| gap(project_a(x), project_b(y)).max(m));
    }
    let mut worst = 0.0f64;
    if a.len() <= b.len() {
        for (t, s) in a.times.iter().zip(&a.states) {
            worst = worst.max(gap(project_a(s), project_b(&b.sample_at(*t))));
        }
    } else {
        for (t, s) in b.times.iter().zip(&b.states) {
            worst = worst.max(gap(project_a(&a.sample_at(*t)), project_b(s)));
        }
    }
    worst
}

/// A failed integration: the cause and every sample accepted before it.
#[derive(Debug, Clone)]
pub struct Failure {
    pub error: Error,
    pub partial: Trajectory,
}

impl From<Failure> for Error {
    fn from(f: Failure) -> Error {
        f.error
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} samples kept)", self.error, self.partial.len())
    }
}

impl std::error::Error for Failure {}

/// Integrates `y' = field(t, y)` from `(t0, s0)` to exactly `t1`.
pub fn integrate<F>(mut field: F, t0: f64, s0: &[f64], t1: f64, opts: Options) -> Result<Trajectory, Failure>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![s0.to_vec()],
        meta: Metadata {
            method: Some(opts.method),
            step: if opts.method == Method::Rk4 { opts.dt } else { opts.tol },
            ..Metadata::default()
        },
    };
    let fail = |error: Error, traj: Trajectory| Failure { error, partial: traj };
    if !(t1 > t0) {
        let e = Error::Shape(format!("need t1 > t0, got t0 = {t0}, t1 = {t1}"));
        return Err(fail(e, traj));
    }
    let result = match opts.method {
        Method::Rk4 => rk4(&mut field, t0, t1, opts.dt, &mut traj),
        Method::Rk45 => rk45(&mut field, t0, t1, opts, &mut traj),
    };
    match result {
        Ok(()) => Ok(traj),
        Err(e) => Err(fail(e, traj)),
    }
}

fn at<F>(field: &mut F, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    field(t, y, dy).map_err(|e| Error::Integration { t, source: Box::new(e) })
}

fn rk4<F>(field: &mut F, t0: f64, t1: f64, dt: f64, traj: &mut Trajectory) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::Shape(format!("rk4 needs dt > 0, got {dt}")));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let dim = traj.states[0].len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    traj.times.reserve(steps);
    traj.states.reserve(steps);
    let mut y = traj.states[0].clone();
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        at(field, t, &y, &mut k1)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        at(field, t + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        at(field, t + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..dim {
            tmp[j] = y[j] + h * k3[j];
        }
        at(field, t + h, &tmp, &mut k4)?;
        for j in 0..dim {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        traj.times.push(if step + 1 == steps { t1 } else { t0 + (step + 1) as f64 * h });
        traj.states.push(y.clone());
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45<F>(field: &mut F, t0: f64, t1: f64, opts: Options, traj: &mut Trajectory) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let tol = opts.tol;
    if !(tol > 0.0) {
        return Err(Error::Shape(format!("rk45 needs tol > 0, got {tol}")));
    }
    let dim = traj.states[0].len();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut y = traj.states[0].clone();
    let mut t = t0;
    let span = t1 - t0;
    let mut h = if opts.dt > 0.0 { opts.dt } else { span * 1e-3 }.min(span);
    at(field, t, &y, &mut k[0])?;
    while t < t1 {
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        for s in 1..7 {
            for j in 0..dim {
                tmp[j] = y[j] + h * (0..s).map(|m| A[s][m] * k[m][j]).sum::<f64>();
            }
            at(field, t + C[s] * h, &tmp, &mut k[s])?;
        }
        // tmp now holds the fifth-order solution (FSAL row).
        let mut err = 0.0f64;
        for j in 0..dim {
            let e = h * (0..7).map(|m| (B5[m] - B4[m]) * k[m][j]).sum::<f64>();
            let scale = tol * (1.0 + y[j].abs().max(tmp[j].abs()));
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&tmp);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            traj.times.push(t);
            traj.states.push(y.clone());
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(())
}

/// `max_k |f(s_k) - f(s_0)| / max(1, |f(s_0)|)`.
pub fn invariant_drift<F>(traj: &Trajectory, mut f: F) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<f64>,
{
    if traj.len() < 2 {
        return Err(Error::Shape("drift needs at least 2 samples".into()));
    }
    let f0 = f(traj.times[0], &traj.states[0])?;
    let mut worst = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.states).skip(1) {
        worst = worst.max((f(*t, s)? - f0).abs());
    }
    Ok(worst / f0.abs().max(1.0))
}

/// `action(base + eps * direction) - action(base)`. The direction must
/// leave the endpoint `q` fixed.
pub fn first_variation<F>(mut action: F, base: &DiscreteSection, direction: &DiscreteSection, eps: f64) -> Result<f64>
where
    F: FnMut(&DiscreteSection) -> Result<f64>,
{
    let ends = [&direction.samples()[0], direction.samples().last().unwrap()];
    if ends.iter().any(|s| s.q.iter().any(|x| *x != 0.0)) {
        return Err(Error::Shape("direction must vanish in q at both endpoints".into()));
    }
    if base.samples().iter().zip(direction.samples()).any(|(a, b)| a.t != b.t) {
        return Err(Error::Shape("direction is sampled at different times".into()));
    }
    let moved = base.perturbed(direction, eps)?;
    Ok(action(&moved)? - action(base)?)
}
