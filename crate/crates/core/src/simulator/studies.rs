//! Parameter sweeps and refinement studies built on [`super::run`].

use std::thread;

use super::{run, run_observed, InitialData, SimConfig};
use crate::error::{CryoError, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGaps {
    /// `max_n ‖θ_ε^n − θ_0^n‖`
    pub theta_gap: f64,
    /// `max_n ‖β_ε^n − β_0^n‖`
    pub beta_gap: f64,
    pub final_theta_gap: f64,
    pub final_beta_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub epsilon: f64,
    /// Gaps to the `ε = 0` run, or the failure message of this run.
    pub outcome: std::result::Result<SweepGaps, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|e| e.outcome.is_ok())
    }

    /// Whether the temperature gap is non-increasing as `ε` decreases,
    /// up to round-off. Failed runs are skipped.
    pub fn is_monotone(&self) -> bool {
        let gaps: Vec<f64> = self
            .entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|g| g.theta_gap))
            .collect();
        gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
    }
}

/// Runs `config` once with `ε = 0` and once per entry of `epsilons`
/// (positive, strictly decreasing), and reports the distance between them.
///
/// A failing `ε > 0` run is reported in its entry; a failing reference run
/// is an error.
pub fn sweep_epsilon(config: &SimConfig, epsilons: &[f64]) -> Result<SweepReport> {
    if epsilons.is_empty() {
        return Err(CryoError::invalid("epsilon sweep needs at least one value"));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(CryoError::invalid(format!(
            "epsilon sweep values must be positive, got {e}"
        )));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CryoError::invalid(
            "epsilon sweep values must be strictly decreasing",
        ));
    }

    let mut reference_cfg = config.clone();
    reference_cfg.params.epsilon = 0.0;
    let mut reference: Vec<(Field, Field)> = Vec::new();
    run_observed(&reference_cfg, &mut |v| {
        reference.push((v.theta.clone(), v.beta.clone()))
    })?;
    let grid = Grid::from_spec(&config.grid)?;

    let entries = thread::scope(|s| {
        let handles: Vec<_> = epsilons
            .iter()
            .map(|&eps| {
                let (grid, reference) = (&grid, &reference);
                let mut cfg = config.clone();
                cfg.params.epsilon = eps;
                s.spawn(move || {
                    let mut gaps = SweepGaps {
                        theta_gap: 0.0,
                        beta_gap: 0.0,
                        final_theta_gap: 0.0,
                        final_beta_gap: 0.0,
                    };
                    let outcome = run_observed(&cfg, &mut |v| {
                        let (rt, rb) = &reference[v.step - 1];
                        let dt = grid.norm_l2(&v.theta.zip_map(rt, |a, b| a - b));
                        let db = grid.norm_l2(&v.beta.zip_map(rb, |a, b| a - b));
                        gaps.theta_gap = gaps.theta_gap.max(dt);
                        gaps.beta_gap = gaps.beta_gap.max(db);
                        gaps.final_theta_gap = dt;
                        gaps.final_beta_gap = db;
                    });
                    SweepEntry {
                        epsilon: eps,
                        outcome: outcome.map(|_| gaps).map_err(|e| e.to_string()),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    Ok(SweepReport { entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLevel {
    pub nodes: Vec<usize>,
    pub h: f64,
    pub dt: f64,
    /// L2 distance to the finest level on this level's nodes; `None` on the finest level.
    pub theta_error: Option<f64>,
    pub beta_error: Option<f64>,
    /// Observed rate from the previous level, when both errors are nonzero.
    pub theta_rate: Option<f64>,
    pub beta_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
}

impl ConvergenceReport {
    pub fn theta_rates(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.theta_rate).collect()
    }

    pub fn beta_rates(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.beta_rate).collect()
    }
}

/// Runs `config` on a sequence of nested grids with `dt ∝ h` and compares
/// each level with the finest one at the final time.
///
/// `levels` are x-node counts; each must refine the previous one by an
/// integer factor. The y-direction of a 2D grid is refined by the same factor.
pub fn convergence_study(config: &SimConfig, levels: &[usize]) -> Result<ConvergenceReport> {
    if levels.len() < 3 {
        return Err(CryoError::invalid(format!(
            "a convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    for w in levels.windows(2) {
        if w[0] < 3 || w[1] <= w[0] || (w[1] - 1) % (w[0] - 1) != 0 {
            return Err(CryoError::invalid(format!(
                "levels {} and {} are not nested refinements",
                w[0], w[1]
            )));
        }
    }
    if matches!(config.theta0, InitialData::Values(_)) || matches!(config.beta0, InitialData::Values(_)) {
        return Err(CryoError::invalid(
            "a convergence study needs initial data given as expressions",
        ));
    }

    let base = levels[0] - 1;
    let configs: Vec<SimConfig> = levels
        .iter()
        .map(|&n| {
            let factor = (n - 1) / base;
            let mut c = config.clone();
            c.grid.nodes[0] = n;
            if c.grid.dim == 2 {
                c.grid.nodes[1] = (config.grid.nodes[1] - 1) * factor + 1;
            }
            c.dt = config.dt / factor as f64;
            c.cadence = None;
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }

    let results = thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let finest = results.last().expect("at least three levels");
    let mut out: Vec<ConvergenceLevel> = Vec::with_capacity(results.len());
    for (k, (res, cfg)) in results.iter().zip(&configs).enumerate() {
        let h = res.grid.spacing()[0];
        let (te, be) = if k + 1 == results.len() {
            (None, None)
        } else {
            let rt = res.grid.restrict_from(&finest.grid, &finest.theta)?;
            let rb = res.grid.restrict_from(&finest.grid, &finest.beta)?;
            (
                Some(res.grid.norm_l2(&res.theta.zip_map(&rt, |a, b| a - b))),
                Some(res.grid.norm_l2(&res.beta.zip_map(&rb, |a, b| a - b))),
            )
        };
        let rate = |prev: Option<f64>, cur: Option<f64>, h_prev: f64| match (prev, cur) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (h_prev / h).ln()),
            _ => None,
        };
        let (tr, br) = match out.last() {
            Some(p) => (rate(p.theta_error, te, p.h), rate(p.beta_error, be, p.h)),
            None => (None, None),
        };
        out.push(ConvergenceLevel {
            nodes: cfg.grid.nodes.clone(),
            h,
            dt: cfg.dt,
            theta_error: te,
            beta_error: be,
            theta_rate: tr,
            beta_rate: br,
        });
    }
    Ok(ConvergenceReport { levels: out })
}

#[cfg(test)]
mod tests {
    use super::super::scenarios;
    use super::*;

    #[test]
    fn sweep_rejects_bad_lists() {
        let c = scenarios::quench();
        assert!(sweep_epsilon(&c, &[]).is_err());
        assert!(sweep_epsilon(&c, &[1e-2, 1e-1]).is_err());
        assert!(sweep_epsilon(&c, &[1e-2, 0.0]).is_err());
        assert!(sweep_epsilon(&c, &[1e-2, 1e-2]).is_err());
    }

    #[test]
    fn convergence_rejects_bad_levels() {
        let c = scenarios::supercooling();
        assert!(convergence_study(&c, &[11, 21]).is_err());
        assert!(convergence_study(&c, &[11, 21, 31]).is_err());
        assert!(convergence_study(&c, &[21, 11, 41]).is_err());
    }

    #[test]
    fn convergence_of_quench_has_positive_rates() {
        let mut c = scenarios::quench();
        c.t_end = 0.2;
        c.dt = 0.02;
        let rep = convergence_study(&c, &[11, 21, 41, 81]).unwrap();
        let rates = rep.theta_rates();
        assert_eq!(rates.len(), 2);
        assert!(rates.iter().all(|r| *r > 0.0), "{rep:?}");
    }
}
