//! Order verification against manufactured solutions on `[0, 1]`.
//!
//! The manufactured pair is
//!
//! ```text
//! θ = θ_c + a_θ cos(πx) e^{−t},   β = b₀ + a_β cos(πx) e^{−t},
//! ```
//!
//! which satisfies the no-flux boundary conditions and keeps `β` strictly
//! inside `(0, 1)`, so the multiplier vanishes. The heat equation gets the
//! matching source `r` and the phase equation an extra source `s`, both
//! averaged exactly over each node's dual cell. The power-law flux is not
//! differentiable where `θ_x = 0`, which cell averages sidestep: only flux
//! values at cell ends are needed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::thread;

use super::{run_with, Coupling, Forcing, InitialData, SimConfig, SolverSettings, Source};
use crate::constitutive::{power_law_coefficient, ModelParams};
use crate::error::{CryoError, Result};
use crate::grid::{Field, Grid, GridSpec};

/// Required least-squares orders.
pub const SPACE_ORDER_THRESHOLD: f64 = 1.9;
pub const TIME_ORDER_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsPreset {
    /// Both fields vary, `p = 1.5`.
    Default,
    /// `p = 2` and a constant phase: the temperature equation is linear.
    LinearFlux,
    /// The manufactured solution is the constant state `(θ_c, 1/2)`.
    Zero,
}

impl FromStr for MmsPreset {
    type Err = CryoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(MmsPreset::Default),
            "linear" => Ok(MmsPreset::LinearFlux),
            "zero" => Ok(MmsPreset::Zero),
            _ => Err(CryoError::invalid(format!(
                "unknown manufactured solution '{s}' (expected default, linear or zero)"
            ))),
        }
    }
}

impl fmt::Display for MmsPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MmsPreset::Default => "default",
            MmsPreset::LinearFlux => "linear",
            MmsPreset::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Manufactured {
    a_theta: f64,
    b0: f64,
    a_beta: f64,
    params: ModelParams,
}

impl Manufactured {
    fn new(preset: MmsPreset) -> Self {
        let mut params = ModelParams::default();
        let (a_theta, a_beta) = match preset {
            MmsPreset::Default => (0.5, 0.25),
            MmsPreset::LinearFlux => {
                params.p = 2.0;
                (0.5, 0.0)
            }
            MmsPreset::Zero => (0.0, 0.0),
        };
        Self {
            a_theta,
            b0: 0.5,
            a_beta,
            params,
        }
    }

    fn theta(&self, x: f64, t: f64) -> f64 {
        self.params.theta_c + self.a_theta * (PI * x).cos() * (-t).exp()
    }

    fn beta(&self, x: f64, t: f64) -> f64 {
        self.b0 + self.a_beta * (PI * x).cos() * (-t).exp()
    }

    /// `(ε + β)θ_x + (1 − β) a_δ(θ_x) θ_x`
    fn heat_flux(&self, x: f64, t: f64) -> f64 {
        let gx = -self.a_theta * PI * (PI * x).sin() * (-t).exp();
        let b = self.beta(x, t);
        let a = power_law_coefficient(gx * gx, self.params.p, self.params.delta);
        (self.params.epsilon + b) * gx + (1.0 - b) * a * gx
    }

    fn beta_x(&self, x: f64, t: f64) -> f64 {
        -self.a_beta * PI * (PI * x).sin() * (-t).exp()
    }

    /// Average of `cos(πx)` over `[a, b]`.
    fn cos_average(a: f64, b: f64) -> f64 {
        ((PI * b).sin() - (PI * a).sin()) / (PI * (b - a))
    }

    fn cell(grid: &Grid, i: usize) -> (f64, f64) {
        grid.dual_cell(i, 0)
    }
}

impl Forcing for Manufactured {
    /// Average of `θ_t + β_t − ∂_x F` over each dual cell.
    fn heat_source(&self, grid: &Grid, t: f64) -> Field {
        Field::new(
            (0..grid.node_count())
                .map(|i| {
                    let (a, b) = Self::cell(grid, i);
                    let rate = -(self.a_theta + self.a_beta) * (-t).exp() * Self::cos_average(a, b);
                    rate - (self.heat_flux(b, t) - self.heat_flux(a, t)) / (b - a)
                })
                .collect(),
        )
    }

    /// Average of `μβ_t − β_xx − (θ − θ_c)/θ_c` over each dual cell.
    fn phase_source(&self, grid: &Grid, t: f64) -> Option<Field> {
        let p = &self.params;
        Some(Field::new(
            (0..grid.node_count())
                .map(|i| {
                    let (a, b) = Self::cell(grid, i);
                    let c = Self::cos_average(a, b) * (-t).exp();
                    -p.mu * self.a_beta * c
                        - (self.beta_x(b, t) - self.beta_x(a, t)) / (b - a)
                        - self.a_theta * c / p.theta_c
                })
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Space,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsSpec {
    pub preset: MmsPreset,
    /// Refinement levels per ladder, at least 3.
    pub levels: usize,
}

impl Default for MmsSpec {
    fn default() -> Self {
        Self {
            preset: MmsPreset::Default,
            levels: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsLevel {
    pub nodes: usize,
    pub h: f64,
    pub dt: f64,
    pub theta_error: f64,
    pub beta_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsLadder {
    pub refinement: Refinement,
    pub levels: Vec<MmsLevel>,
    /// Least-squares slope of `log e` against `log h` (space) or `log dt` (time);
    /// `None` when every error is exactly zero.
    pub theta_order: Option<f64>,
    pub beta_order: Option<f64>,
}

impl MmsLadder {
    pub fn threshold(&self) -> f64 {
        match self.refinement {
            Refinement::Space => SPACE_ORDER_THRESHOLD,
            Refinement::Time => TIME_ORDER_THRESHOLD,
        }
    }

    /// Resolution variable of level `k` (h or dt).
    pub fn resolution(&self, k: usize) -> f64 {
        match self.refinement {
            Refinement::Space => self.levels[k].h,
            Refinement::Time => self.levels[k].dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub preset: MmsPreset,
    pub space: MmsLadder,
    pub time: MmsLadder,
}

impl MmsReport {
    /// `OrderRegression` for the first order below its threshold.
    pub fn check(&self) -> Result<()> {
        for ladder in [&self.space, &self.time] {
            let name = match ladder.refinement {
                Refinement::Space => "space",
                Refinement::Time => "time",
            };
            for (q, order) in [("theta", ladder.theta_order), ("beta", ladder.beta_order)] {
                if let Some(o) = order {
                    if !(o >= ladder.threshold()) {
                        return Err(CryoError::OrderRegression {
                            quantity: format!("{q} ({name})"),
                            observed: o,
                            required: ladder.threshold(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

const SPACE_T_END: f64 = 0.1;
const SPACE_DT_FACTOR: f64 = 0.25;
const TIME_T_END: f64 = 0.5;
const TIME_NODES: usize = 161;
const TIME_BASE_STEPS: usize = 8;

fn level_config(m: &Manufactured, nodes: usize, dt: f64, t_end: f64) -> SimConfig {
    let grid = Grid::new_1d(1.0, nodes).expect("valid manufactured grid");
    let theta0 = grid.field_from_fn(|x, _| m.theta(x, 0.0));
    let beta0 = grid.field_from_fn(|x, _| m.beta(x, 0.0));
    SimConfig {
        grid: GridSpec {
            dim: 1,
            lengths: vec![1.0],
            nodes: vec![nodes],
        },
        params: m.params,
        dt,
        t_end,
        coupling: Coupling::Staggered,
        theta0: InitialData::Values(theta0),
        beta0: InitialData::Values(beta0),
        source: Source::Zero,
        solvers: SolverSettings {
            phase_tol: 1e-12,
            phase_max_iter: 1_000_000,
            picard_tol: 1e-12,
            picard_max: 500,
            linear_tol: 1e-13,
        },
        cadence: None,
        dump_dir: None,
    }
}

fn run_level(m: &Manufactured, nodes: usize, dt: f64, t_end: f64) -> Result<MmsLevel> {
    let cfg = level_config(m, nodes, dt, t_end);
    let res = run_with(&cfg, m, &mut |_| {})?;
    let g = &res.grid;
    let exact_theta = g.field_from_fn(|x, _| m.theta(x, t_end));
    let exact_beta = g.field_from_fn(|x, _| m.beta(x, t_end));
    Ok(MmsLevel {
        nodes,
        h: g.spacing()[0],
        dt,
        theta_error: g.norm_l2(&res.theta.zip_map(&exact_theta, |a, b| a - b)),
        beta_error: g.norm_l2(&res.beta.zip_map(&exact_beta, |a, b| a - b)),
    })
}

/// Least-squares slope of `log y` against `log x`; `None` if any `y` is zero.
pub fn fitted_order(x: &[f64], y: &[f64]) -> Option<f64> {
    if y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

fn ladder(m: &Manufactured, refinement: Refinement, levels: usize) -> Result<MmsLadder> {
    let plan: Vec<(usize, f64, f64)> = (0..levels)
        .map(|l| match refinement {
            Refinement::Space => {
                let nodes = 10 * (1 << l) + 1;
                let h = 1.0 / (nodes - 1) as f64;
                (nodes, SPACE_DT_FACTOR * h * h, SPACE_T_END)
            }
            Refinement::Time => (
                TIME_NODES,
                TIME_T_END / (TIME_BASE_STEPS << l) as f64,
                TIME_T_END,
            ),
        })
        .collect();
    let results: Vec<Result<MmsLevel>> = thread::scope(|s| {
        let handles: Vec<_> = plan
            .iter()
            .map(|&(n, dt, t)| s.spawn(move || run_level(m, n, dt, t)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("verification worker panicked"))
            .collect()
    });
    let levels = results.into_iter().collect::<Result<Vec<_>>>()?;
    let res: Vec<f64> = levels
        .iter()
        .map(|l| match refinement {
            Refinement::Space => l.h,
            Refinement::Time => l.dt,
        })
        .collect();
    let te: Vec<f64> = levels.iter().map(|l| l.theta_error).collect();
    let be: Vec<f64> = levels.iter().map(|l| l.beta_error).collect();
    Ok(MmsLadder {
        refinement,
        theta_order: fitted_order(&res, &te),
        beta_order: fitted_order(&res, &be),
        levels,
    })
}

/// Runs both refinement ladders and reports errors and fitted orders.
pub fn mms_study(spec: &MmsSpec) -> Result<MmsReport> {
    if spec.levels < 3 {
        return Err(CryoError::invalid(format!(
            "order verification needs at least 3 levels, got {}",
            spec.levels
        )));
    }
    if spec.levels > 7 {
        return Err(CryoError::invalid("at most 7 refinement levels are supported"));
    }
    let m = Manufactured::new(spec.preset);
    Ok(MmsReport {
        preset: spec.preset,
        space: ladder(&m, Refinement::Space, spec.levels)?,
        time: ladder(&m, Refinement::Time, spec.levels)?,
    })
}

/// [`mms_study`] followed by [`MmsReport::check`].
pub fn mms_verify(spec: &MmsSpec) -> Result<MmsReport> {
    let report = mms_study(spec)?;
    report.check()?;
    Ok(report)
}
