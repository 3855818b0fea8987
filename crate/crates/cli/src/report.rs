//! `derive` and `verify` output: an ordered list of `key = value` lines, also
//! available as JSON.

use std::fmt::Write as _;

use jetflow::integrator::{invariant_drift, max_deviation, Route};
use jetflow::ostrogradsky::momenta_expressions;
use jetflow::{ConstrainedProblem, ContactState, JetPoint, JetSymbol, LagrangianProblem, PhaseState};
use serde::Serialize;

use crate::problem::{HigherInitial, Loaded, Model};
use crate::routes::{RouteRun, Runner};

pub const ROUTE_TOLERANCE: f64 = 1e-8;
pub const MOMENTUM_TOLERANCE: f64 = 1e-7;
pub const DRIFT_TOLERANCE: f64 = 1e-8;
pub const LEGENDRE_TOLERANCE: f64 = 1e-6;
pub const STATIONARITY_TOLERANCE: f64 = 1e-8;
/// Smallest |determinant| accepted as regular at the initial point.
pub const REGULARITY_FLOOR: f64 = 1e-12;
const LEGENDRE_SAMPLES: usize = 11;

#[derive(Debug, Serialize)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Serialize)]
pub struct RouteSummary {
    pub route: String,
    pub status: String,
    pub samples: usize,
    pub t_final: Option<f64>,
    pub final_state: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// `max`: pass when measured <= limit; `min`: pass when measured >= limit.
    pub bound: &'static str,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub problem: String,
    pub kind: String,
    pub derived: Vec<Entry>,
    pub initial: Vec<(String, f64)>,
    pub routes: Vec<RouteSummary>,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub pass: bool,
}

impl Report {
    fn new(loaded: &Loaded) -> Self {
        Report {
            problem: loaded.name.clone(),
            kind: loaded.kind().name().to_string(),
            derived: Vec::new(),
            initial: Vec::new(),
            routes: Vec::new(),
            checks: Vec::new(),
            errors: Vec::new(),
            pass: true,
        }
    }

    fn derived(&mut self, key: impl Into<String>, value: impl ToString) {
        self.derived.push(Entry { key: key.into(), value: value.to_string() });
    }

    fn error(&mut self, message: String) {
        self.errors.push(message);
        self.pass = false;
    }

    fn check_max(&mut self, name: &str, measured: f64, limit: f64) {
        let pass = measured <= limit;
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), measured, bound: "max", limit, pass });
    }

    fn check_min(&mut self, name: &str, measured: f64, limit: f64) {
        let pass = measured >= limit;
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), measured, bound: "min", limit, pass });
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k} = {v}").unwrap();
        line("problem", &self.problem);
        line("kind", &self.kind);
        for e in &self.derived {
            line(&format!("derived.{}", e.key), &e.value);
        }
        for (k, v) in &self.initial {
            line(&format!("initial.{k}"), &num(*v));
        }
        for r in &self.routes {
            let key = format!("route.{}", r.route);
            line(&format!("{key}.status"), &r.status);
            if let Some(t) = r.t_final {
                line(&format!("{key}.samples"), &r.samples);
                line(&format!("{key}.t_final"), &num(t));
                for (name, v) in &r.final_state {
                    line(&format!("{key}.final.{name}"), &num(*v));
                }
            }
        }
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "fail" };
            line(
                &format!("check.{}", c.name),
                &format!("{verdict} (measured {}, {} {})", num(c.measured), c.bound, num(c.limit)),
            );
        }
        for (k, e) in self.errors.iter().enumerate() {
            line(&format!("error.{}", k + 1), e);
        }
        line("status", &if self.pass { "pass" } else { "fail" });
        out
    }

    pub fn derivation_text(&self) -> String {
        let mut out = String::new();
        for e in &self.derived {
            writeln!(out, "{} = {}", e.key, e.value).unwrap();
        }
        for e in &self.errors {
            writeln!(out, "error = {e}").unwrap();
        }
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

fn p_name(i: usize, a: usize) -> String {
    format!("p{i}_{a}")
}

fn derive_higher(report: &mut Report, problem: &LagrangianProblem, runner: Option<&Runner>) {
    for (i, e) in problem.euler_lagrange().iter().enumerate() {
        report.derived(format!("E{}", i + 1), e);
    }
    let table = momenta_expressions(problem);
    for (a, row) in table.momenta.iter().enumerate() {
        for (i, e) in row.iter().enumerate() {
            report.derived(p_name(i + 1, a), e);
        }
    }
    for (i, e) in table.top_relation.iter().enumerate() {
        report.derived(format!("top_relation.{}", i + 1), format!("{e} = 0"));
    }
    report.derived("nondegeneracy", jetflow::expr::determinant(problem.top_hessian()));
    if let Some(runner) = runner {
        report.derived("hamiltonian", runner.system().unwrap().hamiltonian_template());
        if let Some(e) = runner.constrained().embedding() {
            for (flat, jet) in e.symbol_map() {
                report.derived(format!("embedding.{flat}"), jet);
            }
        }
    }
}

fn derive_constrained(report: &mut Report, cp: &ConstrainedProblem) {
    report.derived("hamiltonian", cp.hamiltonian());
    for (a, e) in cp.stationarity().iter().enumerate() {
        report.derived(format!("stationarity.{}", a + 1), e);
    }
    report.derived("regularity", cp.regularity_expression());
}

/// Symbolic derivations; `Err` carries the report when the problem is degenerate.
pub fn derive(loaded: &Loaded) -> Result<Report, Report> {
    let mut report = Report::new(loaded);
    let runner = Runner::new(loaded);
    match &loaded.model {
        Model::HigherOrder { problem, .. } => derive_higher(&mut report, problem, runner.as_ref().ok()),
        Model::Constrained { problem, .. } => derive_constrained(&mut report, problem),
    }
    match runner {
        Ok(_) => Ok(report),
        Err(e) => {
            report.error(format!("derivation: {e}"));
            Err(report)
        }
    }
}

fn relative(dev: f64, traj: &RouteRun) -> f64 {
    let scale = traj
        .traj
        .states
        .iter()
        .flat_map(|y| y[..traj.phase_len].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    dev / scale.max(1.0)
}

/// Largest gap over the shared grid; on different grids (adaptive steps)
/// only the final states are compared.
fn route_gap(a: &RouteRun, b: &RouteRun, range: std::ops::Range<usize>) -> f64 {
    if a.traj.times == b.traj.times {
        max_deviation(&a.traj, &b.traj, |y| y[range.clone()].to_vec(), |y| y[range.clone()].to_vec())
    } else {
        let (ya, yb) = (a.traj.last().1, b.traj.last().1);
        range.map(|k| (ya[k] - yb[k]).abs()).fold(0.0, f64::max)
    }
}

fn richardson(mut f: impl FnMut(f64) -> Result<f64, jetflow::Error>, x: f64) -> Result<f64, jetflow::Error> {
    let h = 1e-4 * x.abs().max(1.0);
    let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let d2 = (f(x + h / 2.0)? - f(x - h / 2.0)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Worst relative gap between a Hamiltonian field and finite differences of
/// its Hamiltonian, over samples of a `[q, p]` trajectory.
fn legendre_gap(
    run: &RouteRun,
    mut h: impl FnMut(f64, &[f64]) -> Result<f64, jetflow::Error>,
    mut field: impl FnMut(f64, &[f64]) -> Result<Vec<f64>, jetflow::Error>,
) -> Result<f64, jetflow::Error> {
    let traj = &run.traj;
    let half = run.phase_len / 2;
    let mut worst = 0.0f64;
    let step = (traj.len() - 1).div_ceil(LEGENDRE_SAMPLES - 1).max(1);
    for k in (0..traj.len()).step_by(step) {
        let (t, y) = (traj.times[k], &traj.states[k][..run.phase_len]);
        let f = field(t, y)?;
        for j in 0..2 * half {
            let fd = richardson(
                |x| {
                    let mut moved = y.to_vec();
                    moved[j] = x;
                    h(t, &moved)
                },
                y[j],
            )?;
            // q' = dH/dp, p' = -dH/dq
            let (got, expected) = if j < half { (f[half + j], -fd) } else { (f[j - half], fd) };
            worst = worst.max((got - expected).abs() / got.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn run_routes(report: &mut Report, runner: &Runner) -> Vec<RouteRun> {
    let mut runs = Vec::new();
    for route in Route::ALL {
        let name = route.short_name().to_string();
        if let Some(why) = runner.unavailable(route) {
            report.routes.push(RouteSummary {
                route: name,
                status: format!("skipped ({why})"),
                samples: 0,
                t_final: None,
                final_state: Vec::new(),
            });
            continue;
        }
        let summary = |run: &RouteRun, status: String| {
            let (t, y) = run.traj.last();
            RouteSummary {
                route: name.clone(),
                status,
                samples: run.traj.len(),
                t_final: Some(t),
                final_state: run.columns.iter().cloned().zip(y.iter().copied()).collect(),
            }
        };
        match runner.run(route) {
            Ok(run) => {
                report.routes.push(summary(&run, "ok".into()));
                runs.push(run);
            }
            Err(f) => {
                let status = format!("failed: {}", f.error);
                report.error(format!("route {name}: {}", f.error));
                match &f.partial {
                    Some(p) if !p.traj.is_empty() => report.routes.push(summary(p, status)),
                    _ => report.routes.push(RouteSummary {
                        route: name.clone(),
                        status,
                        samples: 0,
                        t_final: None,
                        final_state: Vec::new(),
                    }),
                }
            }
        }
    }
    runs
}

fn find(runs: &[RouteRun], route: Route) -> Option<&RouteRun> {
    runs.iter().find(|r| r.route == route)
}

fn record<T>(report: &mut Report, what: &str, result: Result<T, jetflow::Error>) -> Option<T> {
    result.map_err(|e| report.error(format!("{what}: {e}"))).ok()
}

fn verify_higher(report: &mut Report, loaded: &Loaded, problem: &LagrangianProblem, runner: &Runner) {
    let sys = runner.system().unwrap();
    let n = problem.dof();
    let order = problem.order();
    let s0 = runner.initial_phase();
    let point = match &loaded.model {
        Model::HigherOrder { initial: HigherInitial::Jets(j), .. } => Ok(j.truncated(order)),
        _ => sys.solve_top_velocity(&s0, None).and_then(|top| {
            let jets = (0..n)
                .map(|i| (0..order).map(|a| s0.q[a * n + i]).chain([top[i]]).collect())
                .collect();
            JetPoint::new(s0.t, jets)
        }),
    };
    if let Some(det) = record(report, "nondegeneracy", point.and_then(|p| problem.nondegeneracy_at(&p))) {
        report.initial.push(("nondegeneracy".into(), det));
        report.check_min("nondegeneracy_initial", det.abs(), REGULARITY_FLOOR);
    }
    let h0 = sys.hamiltonian_value(&s0, None);
    if let Some(h) = record(report, "hamiltonian", h0) {
        report.initial.push(("hamiltonian".into(), h));
    }

    let runs = run_routes(report, runner);
    let half = n * order;
    if let Some(ostro) = find(&runs, Route::Ostrogradsky) {
        if let Some(el) = find(&runs, Route::EulerLagrange) {
            report.check_max("el_vs_ostro.q", relative(route_gap(el, ostro, 0..half), ostro), ROUTE_TOLERANCE);
            report.check_max(
                "el_vs_ostro.p",
                relative(route_gap(el, ostro, half..2 * half), ostro),
                MOMENTUM_TOLERANCE,
            );
        }
        if let Some(red) = find(&runs, Route::PontryaginReduced) {
            report.check_max(
                "pontryagin_reduced_vs_ostro",
                relative(route_gap(red, ostro, 0..2 * half), ostro),
                ROUTE_TOLERANCE,
            );
        }
        if problem.is_autonomous() {
            let drift = invariant_drift(&ostro.traj, |t, y| sys.hamiltonian_value(&PhaseState::from_slice(t, y), None));
            if let Some(d) = record(report, "hamiltonian drift", drift) {
                report.check_max("hamiltonian_drift", d, DRIFT_TOLERANCE);
            }
        }
        let gap = legendre_gap(
            ostro,
            |t, y| sys.hamiltonian_value(&PhaseState::from_slice(t, y), None),
            |t, y| sys.hamiltonian_field(&PhaseState::from_slice(t, y), None).map(|(f, _)| f),
        );
        if let Some(g) = record(report, "legendre check", gap) {
            report.check_max("legendre_fd", g, LEGENDRE_TOLERANCE);
        }
    }
    pontryagin_checks(report, runner.constrained(), &runs);
}

fn pontryagin_checks(report: &mut Report, cp: &ConstrainedProblem, runs: &[RouteRun]) {
    let (Some(full), Some(red)) = (find(runs, Route::PontryaginFull), find(runs, Route::PontryaginReduced)) else {
        return;
    };
    let half = cp.dof();
    report.check_max(
        "pontryagin_full_vs_reduced",
        relative(route_gap(full, red, 0..2 * half), red),
        ROUTE_TOLERANCE,
    );
    let r = cp.controls();
    let mut worst = Ok(0.0f64);
    for (t, y) in full.traj.times.iter().zip(&full.traj.states) {
        let s = ContactState::new(*t, y[..half].to_vec(), y[2 * half..2 * half + r].to_vec(), y[half..2 * half].to_vec());
        worst = worst.and_then(|w| {
            let res = cp.stationarity_residual(&s)?;
            Ok(res.iter().fold(w, |m, v| m.max(v.abs())))
        });
    }
    if let Some(w) = record(report, "stationarity residual", worst) {
        report.check_max("pontryagin_full.stationarity", relative(w, full), STATIONARITY_TOLERANCE);
    }
}

fn verify_constrained(report: &mut Report, cp: &ConstrainedProblem, initial: &ContactState, runner: &Runner) {
    let residual = cp.stationarity_residual(initial);
    if let Some(res) = record(report, "stationarity residual", residual) {
        report.initial.push(("stationarity_residual_given".into(), res.iter().fold(0.0, |m: f64, v| m.max(v.abs()))));
    }
    if let Some(z) = record(report, "initial control", runner.initial_z()) {
        let s = ContactState { z: z.clone(), ..initial.clone() };
        for (a, v) in z.iter().enumerate() {
            report.initial.push((format!("z{}", a + 1), *v));
        }
        if let Some(reg) = record(report, "regularity", cp.regularity_at(&s)) {
            report.initial.push(("regularity".into(), reg));
            report.check_min("regularity_initial", reg.abs(), REGULARITY_FLOOR);
        }
        if let Some(h) = record(report, "hamiltonian", cp.hamiltonian_value(&s)) {
            report.initial.push(("hamiltonian".into(), h));
        }
    }

    let runs = run_routes(report, runner);
    let n = cp.dof();
    if let Some(red) = find(&runs, Route::PontryaginReduced) {
        if !cp.hamiltonian().contains(&JetSymbol::Time) {
            let drift = invariant_drift(&red.traj, |t, y| cp.reduced_hamiltonian_value(t, &y[..n], &y[n..], None));
            if let Some(d) = record(report, "hamiltonian drift", drift) {
                report.check_max("hamiltonian_drift", d, DRIFT_TOLERANCE);
            }
        }
        let gap = legendre_gap(
            red,
            |t, y| cp.reduced_hamiltonian_value(t, &y[..n], &y[n..], None),
            |t, y| cp.reduced_field(t, &y[..n], &y[n..], None).map(|(dq, dp, _)| dq.into_iter().chain(dp).collect()),
        );
        if let Some(g) = record(report, "legendre check", gap) {
            report.check_max("legendre_fd", g, LEGENDRE_TOLERANCE);
        }
    }
    pontryagin_checks(report, cp, &runs);
}

pub fn verify(loaded: &Loaded) -> Report {
    let mut report = match derive(loaded) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let runner = Runner::new(loaded).expect("derive succeeded");
    match &loaded.model {
        Model::HigherOrder { problem, .. } => verify_higher(&mut report, loaded, problem, &runner),
        Model::Constrained { problem, initial } => verify_constrained(&mut report, problem, initial, &runner),
    }
    report
}
