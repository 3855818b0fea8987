//! Integration along each route, with states mapped to the common
//! `[q, p]` phase layout so trajectories from different routes line up.

use std::io::Write;

use jetflow::integrator::{integrate, Failure, Route};
use jetflow::{from_higher_order, ConstrainedProblem, ContactState, OstrogradskySystem, PhaseState, Trajectory};

use crate::problem::{HigherInitial, Loaded, Model};
use crate::CliError;

/// A trajectory in CSV layout: `t`, then `q`, then `p`, then (full
/// Pontryagin route only) the controls `z`.
pub struct RouteRun {
    pub route: Route,
    pub columns: Vec<String>,
    pub traj: Trajectory,
    /// `q` and `p` together, the prefix shared by every route.
    pub phase_len: usize,
}

impl RouteRun {
    pub fn phase(&self, y: &[f64]) -> Vec<f64> {
        y[..self.phase_len].to_vec()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CliError::Input(format!("cannot write CSV: {e}"));
        w.write_record(std::iter::once("t").chain(self.columns.iter().map(String::as_str)))
            .map_err(io)?;
        for (t, y) in self.traj.times.iter().zip(&self.traj.states) {
            w.write_record(std::iter::once(t).chain(y).map(|v| format!("{v:.16e}"))).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Input(format!("cannot write CSV: {e}")))
    }
}

/// Column names for `n` coordinates of order `order`, `(a, i)` ordered.
pub fn phase_columns(n: usize, order: usize) -> Vec<String> {
    let names = |letter: char| {
        (0..order).flat_map(move |a| (1..=n).map(move |i| format!("{letter}{i}_{a}")))
    };
    names('q').chain(names('p')).collect()
}

/// The solver failure with whatever was integrated before it.
pub struct RouteFailure {
    pub error: jetflow::Error,
    pub partial: Option<RouteRun>,
}

impl From<jetflow::Error> for RouteFailure {
    fn from(error: jetflow::Error) -> Self {
        RouteFailure { error, partial: None }
    }
}

impl From<RouteFailure> for CliError {
    fn from(f: RouteFailure) -> Self {
        CliError::Solver(f.error)
    }
}

/// Initial phase state for a higher-order problem.
pub fn initial_phase(sys: &OstrogradskySystem, initial: &HigherInitial) -> Result<PhaseState, jetflow::Error> {
    match initial {
        HigherInitial::Jets(j) => sys.jet_to_phase(j),
        HigherInitial::Phase(s) => Ok(s.clone()),
    }
}

pub struct Runner<'a> {
    loaded: &'a Loaded,
    system: Option<OstrogradskySystem>,
    constrained: ConstrainedProblem,
    q0: Vec<f64>,
    p0: Vec<f64>,
    z_guess: Option<Vec<f64>>,
    columns: Vec<String>,
}

impl<'a> Runner<'a> {
    /// Fails for a degenerate Lagrangian, before any integration.
    pub fn new(loaded: &'a Loaded) -> Result<Self, jetflow::Error> {
        match &loaded.model {
            Model::HigherOrder { problem, initial } => {
                let system = OstrogradskySystem::new(problem.clone())?;
                let s0 = initial_phase(&system, initial)?;
                Ok(Runner {
                    loaded,
                    constrained: from_higher_order(problem)?,
                    columns: phase_columns(problem.dof(), problem.order()),
                    q0: s0.q,
                    p0: s0.p,
                    z_guess: None,
                    system: Some(system),
                })
            }
            Model::Constrained { problem, initial } => Ok(Runner {
                loaded,
                constrained: problem.clone(),
                columns: phase_columns(problem.dof(), 1),
                q0: initial.q.clone(),
                p0: initial.p.clone(),
                z_guess: Some(initial.z.clone()),
                system: None,
            }),
        }
    }

    pub fn system(&self) -> Option<&OstrogradskySystem> {
        self.system.as_ref()
    }

    pub fn constrained(&self) -> &ConstrainedProblem {
        &self.constrained
    }

    pub fn initial_phase(&self) -> PhaseState {
        PhaseState { t: self.loaded.t0, q: self.q0.clone(), p: self.p0.clone() }
    }

    /// Controls on the stationarity set at the initial point.
    pub fn initial_z(&self) -> Result<Vec<f64>, jetflow::Error> {
        self.constrained.solve_z(self.loaded.t0, &self.q0, &self.p0, self.z_guess.as_deref())
    }

    /// `None` when the route does not apply to the problem or its initial data.
    pub fn unavailable(&self, route: Route) -> Option<&'static str> {
        match (route, &self.loaded.model) {
            (Route::EulerLagrange | Route::Ostrogradsky, Model::Constrained { .. }) => {
                Some("needs kind = \"higher-order\"")
            }
            (Route::EulerLagrange, Model::HigherOrder { initial: HigherInitial::Phase(_), .. }) => {
                Some("needs initial.jets")
            }
            _ => None,
        }
    }

    fn finish(&self, route: Route, result: Result<Trajectory, Failure>, map: impl Fn(f64, &[f64]) -> Result<Vec<f64>, jetflow::Error>) -> Result<RouteRun, RouteFailure> {
        let mut columns = self.columns.clone();
        if route == Route::PontryaginFull {
            columns.extend((1..=self.constrained.controls()).map(|a| format!("z{a}")));
        }
        let wrap = |traj: Trajectory| -> Result<RouteRun, jetflow::Error> {
            let states = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(t, y)| map(*t, y))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RouteRun {
                route,
                columns: columns.clone(),
                traj: Trajectory { states, ..traj }.with_meta(&self.loaded.name, route),
                phase_len: self.columns.len(),
            })
        };
        match result {
            Ok(traj) => Ok(wrap(traj)?),
            Err(Failure { error, partial }) => Err(RouteFailure { error, partial: wrap(partial).ok() }),
        }
    }

    pub fn run(&self, route: Route) -> Result<RouteRun, RouteFailure> {
        let (t0, t1, opts) = (self.loaded.t0, self.loaded.t1, self.loaded.options);
        let n = self.constrained.dof();
        match route {
            Route::EulerLagrange => {
                let Model::HigherOrder { problem, initial: HigherInitial::Jets(jets) } = &self.loaded.model else {
                    unreachable!("checked by unavailable()")
                };
                let sys = self.system.as_ref().expect("higher-order problem");
                let y0 = problem.jet_state(jets)?;
                let result = integrate(|t, y, dy| problem.el_field(t, y, dy), t0, &y0, t1, opts);
                self.finish(route, result, |t, y| {
                    let phase = sys.jet_to_phase(&problem.jet_point_from_state(t, y))?;
                    Ok(phase.to_vec())
                })
            }
            Route::Ostrogradsky => {
                let sys = self.system.as_ref().expect("higher-order problem");
                let mut flow = sys.flow();
                let y0 = self.initial_phase().to_vec();
                let result = integrate(|t, y, dy| flow.field(t, y, dy), t0, &y0, t1, opts);
                self.finish(route, result, |_, y| Ok(y.to_vec()))
            }
            Route::PontryaginReduced => {
                let mut flow = self.constrained.reduced_flow();
                let y0 = self.initial_phase().to_vec();
                let result = integrate(|t, y, dy| flow.field(t, y, dy), t0, &y0, t1, opts);
                self.finish(route, result, |_, y| Ok(y.to_vec()))
            }
            Route::PontryaginFull => {
                let z0 = self.initial_z()?;
                let y0 = ContactState::new(t0, self.q0.clone(), z0, self.p0.clone()).to_vec();
                let cp = &self.constrained;
                let result = integrate(|t, y, dy| cp.full_field(t, y, dy), t0, &y0, t1, opts);
                let r = cp.controls();
                // [q, z, p] -> [q, p, z]
                self.finish(route, result, |_, y| {
                    Ok(y[..n].iter().chain(&y[n + r..]).chain(&y[n..n + r]).copied().collect())
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_order() {
        assert_eq!(phase_columns(2, 2), ["q1_0", "q2_0", "q1_1", "q2_1", "p1_0", "p2_0", "p1_1", "p2_1"]);
        assert_eq!(phase_columns(1, 1), ["q1_0", "p1_0"]);
    }
}
