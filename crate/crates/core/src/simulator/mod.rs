//! Time integration of the coupled phase / temperature system.
//!
//! Each step first advances the phase for the lagged temperature and then the
//! temperature for the new phase. With [`Coupling::Iterated`] the pair is
//! repeated, feeding the latest temperature back into the phase step, until
//! the temperature stops changing.

mod ledger;
pub mod mms;
pub mod scenarios;
mod studies;

use std::path::PathBuf;
use std::time::Instant;

pub use ledger::{EnergyLedger, LedgerTotals, StepRecord};
pub use studies::{
    convergence_study, sweep_epsilon, ConvergenceLevel, ConvergenceReport, SweepEntry, SweepGaps,
    SweepReport,
};

use crate::constitutive::{ModelParams, ModelVariant};
use crate::error::{CryoError, Result};
use crate::expr::{Expr, Vars};
use crate::grid::{Field, Grid, GridSpec};
use crate::heat::{apriori_monitor, heat_step_for_variant, HeatSolverOptions, HeatStepResult};
use crate::phase::{driving_field, solve_projected, PhaseEstimate, PhaseStepResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// One phase step followed by one heat step.
    Staggered,
    /// Phase and heat steps repeated until `‖θ^k − θ^{k−1}‖ ≤ outer_tol`.
    Iterated { max_outer: usize, outer_tol: f64 },
}

/// Initial data for one state variable.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Expression(Expr),
    /// Nodal values on the configured grid (e.g. loaded from a snapshot).
    Values(Field),
}

impl InitialData {
    pub fn expr(src: &str) -> Result<Self> {
        Ok(InitialData::Expression(Expr::parse(src)?))
    }

    pub fn resolve(&self, grid: &Grid, theta_c: f64) -> Result<Field> {
        match self {
            InitialData::Expression(e) => Ok(grid.field_from_fn(|x, y| {
                e.eval(&Vars { x, y, t: 0.0, theta_c })
            })),
            InitialData::Values(f) => {
                grid.check_field(f)?;
                Ok(f.clone())
            }
        }
    }
}

/// Heat source `r(x, y, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Expression(Expr),
}

impl Source {
    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub phase_tol: f64,
    pub phase_max_iter: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            phase_tol: 1e-10,
            phase_max_iter: 200_000,
            picard_tol: 1e-10,
            picard_max: 200,
            linear_tol: 1e-10,
        }
    }
}

impl SolverSettings {
    pub fn heat_options(&self) -> HeatSolverOptions {
        HeatSolverOptions {
            picard_tol: self.picard_tol,
            max_picard: self.picard_max,
            linear_tol: self.linear_tol,
            linear_max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub dt: f64,
    pub t_end: f64,
    pub coupling: Coupling,
    pub theta0: InitialData,
    pub beta0: InitialData,
    pub source: Source,
    pub solvers: SolverSettings,
    /// Simulated time between snapshots; `None` keeps only the initial and final states.
    pub cadence: Option<f64>,
    /// Where to write the last good state when a step fails.
    pub dump_dir: Option<PathBuf>,
}

impl SimConfig {
    /// Checks everything that does not require running; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let grid = Grid::from_spec(&self.grid)?;
        let mut warnings = self.params.validate(self.grid.dim)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CryoError::invalid(format!("time.dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CryoError::invalid(format!(
                "time.t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.dt > self.t_end {
            return Err(CryoError::invalid(format!(
                "time.dt = {} exceeds time.t_end = {}",
                self.dt, self.t_end
            )));
        }
        if let Coupling::Iterated { max_outer, outer_tol } = self.coupling {
            if max_outer == 0 || !(outer_tol > 0.0) {
                return Err(CryoError::invalid(
                    "iterated coupling needs max_outer >= 1 and outer_tol > 0",
                ));
            }
        }
        if let Some(c) = self.cadence {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CryoError::invalid("output.cadence must be positive"));
            }
        }
        let s = &self.solvers;
        if !(s.phase_tol > 0.0 && s.picard_tol > 0.0 && s.linear_tol > 0.0)
            || s.phase_max_iter == 0
            || s.picard_max == 0
        {
            return Err(CryoError::invalid(
                "solver tolerances must be positive and iteration limits nonzero",
            ));
        }
        let theta0 = self.theta0.resolve(&grid, self.params.theta_c)?;
        let beta0 = self.beta0.resolve(&grid, self.params.theta_c)?;
        if let Some(i) = theta0.values.iter().position(|v| !v.is_finite()) {
            return Err(CryoError::invalid(format!(
                "initial.theta0 is not finite at node {i}"
            )));
        }
        if let Some(i) = beta0
            .values
            .iter()
            .position(|v| !(0.0..=1.0).contains(v))
        {
            return Err(CryoError::invalid(format!(
                "initial.beta0 = {} at node {i} is outside [0, 1]",
                beta0.values[i]
            )));
        }
        if self.params.variant == ModelVariant::FullEnergy
            && theta0.values.iter().any(|t| *t <= 0.0)
        {
            return Err(CryoError::invalid(
                "the full_energy variant needs a positive initial temperature",
            ));
        }
        if self.params.epsilon == 0.0 && self.params.delta == 0.0 {
            warnings.push(
                "epsilon = 0 and delta = 0: linear solves may fail where beta vanishes".into(),
            );
        }
        Ok(warnings)
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn step_count(&self) -> usize {
        let n = self.t_end / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }

    /// Time at the end of step `k` (1-based).
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.step_count() {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

/// Per-step forcing: heat source and, in verification mode only, a phase source.
pub(crate) trait Forcing: Sync {
    fn heat_source(&self, grid: &Grid, t: f64) -> Field;
    fn phase_source(&self, _grid: &Grid, _t: f64) -> Option<Field> {
        None
    }
}

pub(crate) struct PhysicalForcing<'a> {
    source: &'a Source,
    theta_c: f64,
}

impl Forcing for PhysicalForcing<'_> {
    fn heat_source(&self, grid: &Grid, t: f64) -> Field {
        match self.source {
            Source::Zero => grid.zeros(),
            Source::Expression(e) => grid.field_from_fn(|x, y| {
                e.eval(&Vars { x, y, t, theta_c: self.theta_c })
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub theta: Field,
    pub beta: Field,
    pub xi: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub steps: usize,
    pub phase_iterations: usize,
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    pub outer_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub grid: Grid,
    pub theta: Field,
    pub beta: Field,
    pub xi: Field,
    pub snapshots: Vec<Snapshot>,
    pub ledger: EnergyLedger,
    pub stats: RunStats,
}

/// State handed to run observers after every completed step.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub theta: &'a Field,
    pub beta: &'a Field,
}

pub fn run(config: &SimConfig) -> Result<RunResult> {
    run_observed(config, &mut |_| {})
}

/// [`run`] with a callback after each step.
pub fn run_observed(config: &SimConfig, observer: &mut dyn FnMut(&StepView)) -> Result<RunResult> {
    config.validate()?;
    let forcing = PhysicalForcing {
        source: &config.source,
        theta_c: config.params.theta_c,
    };
    run_with(config, &forcing, observer)
}

struct CoupledStep {
    phase: PhaseStepResult,
    heat: HeatStepResult,
    drive: Field,
    outer_iterations: usize,
}

fn coupled_step(
    grid: &Grid,
    config: &SimConfig,
    theta: &Field,
    beta: &Field,
    r: &Field,
    phase_source: Option<&Field>,
    dt: f64,
) -> Result<CoupledStep> {
    let params = &config.params;
    let s = &config.solvers;
    let heat_opts = s.heat_options();
    let drive_for = |th: &Field| {
        let mut d = driving_field(th, params);
        if let Some(extra) = phase_source {
            d.values.iter_mut().zip(&extra.values).for_each(|(a, b)| *a += b);
        }
        d
    };
    let phase_for = |drive: &Field| {
        solve_projected(grid, beta, &drive.values, dt, params.mu, s.phase_tol, s.phase_max_iter)
    };

    match config.coupling {
        Coupling::Staggered => {
            let drive = drive_for(theta);
            let phase = phase_for(&drive)?;
            let heat = heat_step_for_variant(grid, theta, &phase.beta_new, beta, r, dt, params, &heat_opts)?;
            Ok(CoupledStep { phase, heat, drive, outer_iterations: 1 })
        }
        Coupling::Iterated { max_outer, outer_tol } => {
            let mut lagged = theta.clone();
            let mut last = f64::INFINITY;
            for k in 1..=max_outer {
                let drive = drive_for(&lagged);
                let phase = phase_for(&drive)?;
                let heat =
                    heat_step_for_variant(grid, theta, &phase.beta_new, beta, r, dt, params, &heat_opts)?;
                last = grid.norm_l2(&heat.theta_new.zip_map(&lagged, |a, b| a - b));
                if last <= outer_tol {
                    return Ok(CoupledStep { phase, heat, drive, outer_iterations: k });
                }
                lagged = heat.theta_new;
            }
            Err(CryoError::NonConvergence {
                solver: "phase/heat fixed-point coupling",
                iterations: max_outer,
                residual: last,
            })
        }
    }
}

fn dump_state(config: &SimConfig, grid: &Grid, theta: &Field, beta: &Field, xi: &Field) -> Option<PathBuf> {
    let dir = config.dump_dir.as_ref()?;
    std::fs::create_dir_all(dir).ok()?;
    let path = dir.join("failure_state.csv");
    crate::cli::formats::write_snapshot(&path, grid, theta, beta, xi).ok()?;
    Some(path)
}

pub(crate) fn run_with(
    config: &SimConfig,
    forcing: &dyn Forcing,
    observer: &mut dyn FnMut(&StepView),
) -> Result<RunResult> {
    let started = Instant::now();
    let grid = Grid::from_spec(&config.grid)?;
    let params = &config.params;
    let mut theta = config.theta0.resolve(&grid, params.theta_c)?;
    let mut beta = config.beta0.resolve(&grid, params.theta_c)?;
    let mut xi = grid.zeros();

    let initial_total = grid.integral(&theta) + grid.integral(&beta);
    let mut ledger = EnergyLedger::new(initial_total.abs().max(1.0));
    let mut source_total = 0.0;
    let mut stats = RunStats::default();

    let mut snapshots = Vec::new();
    let mut next_output = 1usize;
    if config.cadence.is_some() || config.step_count() > 0 {
        snapshots.push(Snapshot {
            step: 0,
            time: 0.0,
            theta: theta.clone(),
            beta: beta.clone(),
            xi: xi.clone(),
        });
    }

    let steps = config.step_count();
    let mut t = 0.0;
    for k in 1..=steps {
        let t_new = config.time_at(k);
        let dt = t_new - t;
        let r = forcing.heat_source(&grid, t_new);
        let phase_source = forcing.phase_source(&grid, t_new);

        let step = match coupled_step(&grid, config, &theta, &beta, &r, phase_source.as_ref(), dt) {
            Ok(s) => s,
            Err(e) => {
                let dump = dump_state(config, &grid, &theta, &beta, &xi);
                return Err(CryoError::StepFailure {
                    step: k,
                    time: t_new,
                    dump,
                    source: Box::new(e),
                });
            }
        };

        let heat_est = apriori_monitor(&grid, &step.heat, &theta, &step.phase.beta_new, &beta, &r, dt, params);
        let phase_est = PhaseEstimate::compute(&grid, &beta, &step.phase.beta_new, &step.drive, dt, params.mu);
        source_total += dt * grid.integral(&r);

        let new_theta = step.heat.theta_new;
        let new_beta = step.phase.beta_new;
        let total = grid.integral(&new_theta) + grid.integral(&new_beta);
        let lap = grid.laplacian_neumann(&new_beta);
        let rate = new_beta.zip_map(&beta, |a, b| (a - b) / dt);

        ledger.push(StepRecord {
            step: k,
            time: t_new,
            dt,
            beta_rate_sq_dt: dt * grid.inner(&rate, &rate),
            grad_beta_l2: grid.norm_grad_l2(&new_beta),
            lap_beta_sq_dt: dt * grid.inner(&lap, &lap),
            theta_l2: grid.norm_l2(&new_theta),
            beta_grad_theta_sq_dt: heat_est.beta_grad_sq_dt,
            grad_theta_p_dt: heat_est.grad_p_dt,
            eps_grad_theta_sq_dt: heat_est.eps_grad_sq_dt,
            xi_l2: grid.norm_l2(&step.phase.xi),
            conservation_residual: (total - initial_total - source_total).abs(),
            complementarity_residual: step.phase.complementarity_residual,
            phase_estimate_gap: phase_est.gap(),
            energy_gap: heat_est.energy_gap(),
            energy_scale: heat_est.scale(),
            phase_iterations: step.phase.iterations,
            picard_iterations: step.heat.picard_iterations,
            linear_iterations: step.heat.linear_solver_iterations,
            outer_iterations: step.outer_iterations,
            positivity_loss: step.heat.positivity_loss,
        });
        stats.phase_iterations += step.phase.iterations;
        stats.picard_iterations += step.heat.picard_iterations;
        stats.linear_iterations += step.heat.linear_solver_iterations;
        stats.outer_iterations += step.outer_iterations;
        stats.steps = k;

        theta = new_theta;
        beta = new_beta;
        xi = step.phase.xi;
        t = t_new;
        observer(&StepView {
            step: k,
            time: t,
            theta: &theta,
            beta: &beta,
        });

        let due = match config.cadence {
            Some(c) => {
                let mut hit = false;
                while t + 1e-9 * dt >= next_output as f64 * c {
                    next_output += 1;
                    hit = true;
                }
                hit || k == steps
            }
            None => k == steps,
        };
        if due {
            snapshots.push(Snapshot {
                step: k,
                time: t,
                theta: theta.clone(),
                beta: beta.clone(),
                xi: xi.clone(),
            });
        }
    }

    stats.wall_time_s = started.elapsed().as_secs_f64();
    Ok(RunResult {
        grid,
        theta,
        beta,
        xi,
        snapshots,
        ledger,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::scenarios;
    use super::*;

    #[test]
    fn step_count_and_times() {
        let mut c = scenarios::steady_state();
        c.dt = 0.1;
        c.t_end = 1.0;
        assert_eq!(c.step_count(), 10);
        assert_eq!(c.time_at(10), 1.0);
        c.dt = 0.3;
        assert_eq!(c.step_count(), 4);
        assert!((c.time_at(3) - 0.9).abs() < 1e-15);
        assert_eq!(c.time_at(4), 1.0);
    }

    #[test]
    fn validation_errors() {
        let mut c = scenarios::steady_state();
        c.dt = 10.0 * c.t_end;
        assert!(c.validate().is_err());
        let mut c = scenarios::steady_state();
        c.beta0 = InitialData::expr("1.5").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("beta0"));
        let mut c = scenarios::steady_state();
        c.params.p = 2.5;
        assert!(c.validate().is_err());
        let mut c = scenarios::steady_state();
        c.coupling = Coupling::Iterated { max_outer: 0, outer_tol: 1e-8 };
        assert!(c.validate().is_err());
        let mut c = scenarios::steady_state();
        c.theta0 = InitialData::expr("1/0 * x").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapshot_cadence() {
        let mut c = scenarios::quench();
        c.t_end = 0.5;
        c.dt = 0.01;
        c.cadence = Some(0.1);
        let res = run(&c).unwrap();
        let times: Vec<f64> = res.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 6);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12, "{times:?}");
        }
        assert!(res
            .snapshots
            .iter()
            .all(|s| s.beta.values.iter().all(|b| (0.0..=1.0).contains(b))));
    }

    #[test]
    fn failure_carries_step_and_dump() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = scenarios::supercooling();
        c.solvers.phase_max_iter = 1;
        c.solvers.phase_tol = 1e-14;
        c.dump_dir = Some(dir.path().to_path_buf());
        let err = run(&c).unwrap_err();
        match &err {
            CryoError::StepFailure { step, dump, .. } => {
                assert_eq!(*step, 1);
                assert!(dump.as_ref().unwrap().exists());
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(err.exit_code(), 3);
    }
}
