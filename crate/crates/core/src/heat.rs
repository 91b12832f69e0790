//! Implicit step of the temperature equation
//!
//! ```text
//! θ_t + β_t − εΔθ − div(β∇θ + (1 − β) a_δ(∇θ) ∇θ) = r
//! ```
//!
//! with `β` frozen at its new value. The power-law coefficient is lagged
//! (Picard / Kačanov iteration) so that every sweep is a symmetric
//! positive-definite solve of
//!
//! ```text
//! W(θ − θ_old)/dt + K(κ_m) θ = W (r − β_t),   κ_m = ε + β_f + (1 − β_f) a_δ(∇θ^{(m−1)}),
//! ```
//!
//! where `β_f` is the face average of `β_new`.

use crate::constitutive::{power_law_coefficient, ModelParams, ModelVariant};
use crate::error::{CryoError, Result};
use crate::grid::{Field, Grid, VectorField};
use crate::linalg::{pcg, SpdOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatSolverOptions {
    /// Picard stopping threshold on `‖θ^m − θ^{m−1}‖ / (1 + ‖θ^m‖)`.
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Relative residual for each linear solve.
    pub linear_tol: f64,
    /// Linear iteration cap; `None` means ten times the node count.
    pub linear_max_iter: Option<usize>,
}

impl Default for HeatSolverOptions {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            max_picard: 200,
            linear_tol: 1e-10,
            linear_max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatStepResult {
    pub theta_new: Field,
    /// Heat flux `q` on faces at the converged state.
    pub flux: VectorField,
    pub picard_iterations: usize,
    pub picard_residual: f64,
    /// Picard residual after every sweep.
    pub picard_history: Vec<f64>,
    pub linear_solver_iterations: usize,
    /// Set when a full-energy step produced a non-positive temperature.
    pub positivity_loss: bool,
}

impl HeatStepResult {
    pub fn picard_monotone(&self) -> bool {
        self.picard_history.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Face average of `β`, clamped to `[0, 1]`.
pub fn face_beta(grid: &Grid, beta: &Field) -> Vec<f64> {
    grid.faces()
        .iter()
        .map(|f| (0.5 * (beta.values[f.lo] + beta.values[f.hi])).clamp(0.0, 1.0))
        .collect()
}

/// Face conductivity `ε + β_f + (1 − β_f) a_δ(g_f)`.
fn conductivity(grad: &[f64], beta_f: &[f64], params: &ModelParams) -> Vec<f64> {
    grad.iter()
        .zip(beta_f)
        .map(|(g, b)| params.epsilon + b + (1.0 - b) * power_law_coefficient(g * g, params.p, params.delta))
        .collect()
}

/// Heat flux on faces, `−(β_f g + (1 − β_f) a_δ(g) g)`.
pub fn face_flux(grid: &Grid, theta: &Field, beta: &Field, params: &ModelParams) -> VectorField {
    let g = grid.gradient(theta);
    let bf = face_beta(grid, beta);
    VectorField {
        values: g
            .values
            .iter()
            .zip(&bf)
            .map(|(g, b)| -(b + (1.0 - b) * power_law_coefficient(g * g, params.p, params.delta)) * g)
            .collect(),
    }
}

struct HeatOperator<'a> {
    grid: &'a Grid,
    inv_dt: f64,
    kappa: &'a [f64],
}

impl SpdOperator for HeatOperator<'_> {
    fn dim(&self) -> usize {
        self.grid.node_count()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.grid.weighted_laplacian_unscaled(x, self.kappa, out);
        for ((o, w), xi) in out.iter_mut().zip(self.grid.weights()).zip(x) {
            *o = w * xi * self.inv_dt - *o;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.grid.weights().iter().map(|w| w * self.inv_dt).collect();
        for (face, k) in self.grid.faces().iter().zip(self.kappa) {
            let c = k * face.conductance();
            d[face.lo] += c;
            d[face.hi] += c;
        }
        d
    }
}

/// Source side of the step: `β_t` coupling factor and extra source per node.
struct Forcing {
    /// Multiplies `β_t` on the left-hand side.
    coupling: Vec<f64>,
    extra: Vec<f64>,
}

fn check_common(
    grid: &Grid,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
) -> Result<()> {
    for f in [theta_old, beta_new, beta_old, r] {
        grid.check_field(f)?;
        if !f.is_finite() {
            return Err(CryoError::invalid("non-finite input field in heat step"));
        }
    }
    for b in [beta_new, beta_old] {
        if b.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CryoError::invalid("volume fraction outside [0, 1] in heat step"));
        }
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CryoError::invalid(format!("dt must be positive, got {dt}")));
    }
    // p = 2 is admitted here for linear-flux verification runs.
    if !(params.p > 1.0 && params.p <= 2.0) {
        return Err(CryoError::invalid(format!(
            "heat step needs 1 < p <= 2, got {}",
            params.p
        )));
    }
    if params.epsilon < 0.0 || params.delta < 0.0 {
        return Err(CryoError::invalid("epsilon and delta must be non-negative"));
    }
    Ok(())
}

/// One step of the simplified (near-`θ_c`) temperature equation.
#[allow(clippy::too_many_arguments)]
pub fn heat_step(
    grid: &Grid,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
    opts: &HeatSolverOptions,
) -> Result<HeatStepResult> {
    check_common(grid, theta_old, beta_new, beta_old, r, dt, params)?;
    let n = grid.node_count();
    let forcing = Forcing {
        coupling: vec![1.0; n],
        extra: vec![0.0; n],
    };
    solve(grid, theta_old, beta_new, beta_old, r, dt, params, opts, &forcing)
}

/// One step of the full-energy temperature equation
///
/// ```text
/// θ_t + (θ/θ_c) β_t − εΔθ − div(q) = r + |β_t|²
/// ```
///
/// with `θ/θ_c` taken from `θ_old`. Positivity of `θ` is monitored through
/// [`HeatStepResult::positivity_loss`], not enforced.
#[allow(clippy::too_many_arguments)]
pub fn heat_step_full_energy(
    grid: &Grid,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
    opts: &HeatSolverOptions,
) -> Result<HeatStepResult> {
    check_common(grid, theta_old, beta_new, beta_old, r, dt, params)?;
    if params.variant != ModelVariant::FullEnergy {
        return Err(CryoError::invalid(
            "heat_step_full_energy requires the full_energy model variant",
        ));
    }
    if theta_old.values.iter().any(|t| *t <= 0.0) {
        return Err(CryoError::invalid(
            "full-energy step needs a positive temperature",
        ));
    }
    let forcing = Forcing {
        coupling: theta_old.values.iter().map(|t| t / params.theta_c).collect(),
        extra: beta_new
            .values
            .iter()
            .zip(&beta_old.values)
            .map(|(b1, b0)| {
                let rate = (b1 - b0) / dt;
                rate * rate
            })
            .collect(),
    };
    let mut res = solve(grid, theta_old, beta_new, beta_old, r, dt, params, opts, &forcing)?;
    res.positivity_loss = res.theta_new.values.iter().any(|t| *t <= 0.0);
    Ok(res)
}

/// Dispatches on the model variant.
#[allow(clippy::too_many_arguments)]
pub fn heat_step_for_variant(
    grid: &Grid,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
    opts: &HeatSolverOptions,
) -> Result<HeatStepResult> {
    match params.variant {
        ModelVariant::Simplified => heat_step(grid, theta_old, beta_new, beta_old, r, dt, params, opts),
        ModelVariant::FullEnergy => {
            heat_step_full_energy(grid, theta_old, beta_new, beta_old, r, dt, params, opts)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve(
    grid: &Grid,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
    opts: &HeatSolverOptions,
    forcing: &Forcing,
) -> Result<HeatStepResult> {
    let n = grid.node_count();
    let inv_dt = 1.0 / dt;
    let w = grid.weights();
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let rate = (beta_new.values[i] - beta_old.values[i]) * inv_dt;
            w[i] * (theta_old.values[i] * inv_dt + (r.values[i] + forcing.extra[i])
                - forcing.coupling[i] * rate)
        })
        .collect();
    let beta_f = face_beta(grid, beta_new);
    let max_linear = opts.linear_max_iter.unwrap_or(10 * n);

    let mut prev = theta_old.clone();
    let mut history = Vec::new();
    let mut linear_iterations = 0;
    for sweep in 1..=opts.max_picard {
        let grad = grid.gradient(&prev);
        let kappa = conductivity(&grad.values, &beta_f, params);
        let op = HeatOperator {
            grid,
            inv_dt,
            kappa: &kappa,
        };
        let mut next = prev.values.clone();
        let rep = pcg(&op, &rhs, &mut next, opts.linear_tol, max_linear)?;
        linear_iterations += rep.iterations;

        // The stiffness annihilates constants, so the exact solution satisfies
        // Σ w θ/dt = Σ rhs. Remove the constant-mode part of the linear residual.
        let defect: f64 = (0..n).map(|i| rhs[i] - w[i] * (next[i] * inv_dt)).sum();
        let shift = defect * dt / w.iter().sum::<f64>();
        if shift != 0.0 {
            next.iter_mut().for_each(|v| *v += shift);
        }
        let next = Field::new(next);
        if !next.is_finite() {
            return Err(CryoError::LinearSolveFailure {
                iterations: linear_iterations,
                residual: f64::NAN,
                reason: "non-finite temperature iterate".into(),
            });
        }

        let change = grid.norm_l2(&next.zip_map(&prev, |a, b| a - b));
        let residual = change / (1.0 + grid.norm_l2(&next));
        history.push(residual);
        prev = next;
        if residual <= opts.picard_tol {
            let flux = face_flux(grid, &prev, beta_new, params);
            return Ok(HeatStepResult {
                theta_new: prev,
                flux,
                picard_iterations: sweep,
                picard_residual: residual,
                picard_history: history,
                linear_solver_iterations: linear_iterations,
                positivity_loss: false,
            });
        }
    }
    Err(CryoError::NonConvergence {
        solver: "Picard iteration (heat step)",
        iterations: opts.max_picard,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Per-step quantities entering the discrete energy estimate obtained by
/// testing the heat step with `θ_new`. All integrals are at the new state;
/// `*_dt` entries are already multiplied by `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatEstimate {
    pub half_theta_sq_old: f64,
    pub half_theta_sq: f64,
    pub beta_grad_sq_dt: f64,
    pub grad_p_dt: f64,
    pub eps_grad_sq_dt: f64,
    pub source_work_dt: f64,
    pub phase_work_dt: f64,
    pub beta_grad_p_dt: f64,
}

impl HeatEstimate {
    /// `lhs − rhs` of
    ///
    /// ```text
    /// ½‖θ‖² − ½‖θ_old‖² + dt[ε‖∇θ‖² + ∫β|∇θ|² + ∫|∇θ|^p]
    ///     ≤ dt[∫rθ − ∫β_tθ + ∫β|∇θ|^p]
    /// ```
    pub fn energy_gap(&self) -> f64 {
        let lhs = self.half_theta_sq - self.half_theta_sq_old
            + self.eps_grad_sq_dt
            + self.beta_grad_sq_dt
            + self.grad_p_dt;
        let rhs = self.source_work_dt - self.phase_work_dt + self.beta_grad_p_dt;
        lhs - rhs
    }

    /// Magnitude used to scale tolerances on [`Self::energy_gap`].
    pub fn scale(&self) -> f64 {
        [
            self.half_theta_sq_old,
            self.half_theta_sq,
            self.source_work_dt.abs(),
            self.phase_work_dt.abs(),
            1.0,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Estimate increments for a completed heat step.
pub fn apriori_monitor(
    grid: &Grid,
    result: &HeatStepResult,
    theta_old: &Field,
    beta_new: &Field,
    beta_old: &Field,
    r: &Field,
    dt: f64,
    params: &ModelParams,
) -> HeatEstimate {
    let theta = &result.theta_new;
    let g = grid.gradient(theta);
    let bf = face_beta(grid, beta_new);
    let mut beta_grad_sq = 0.0;
    let mut grad_sq = 0.0;
    let mut grad_p = 0.0;
    let mut beta_grad_p = 0.0;
    for ((face, gv), b) in grid.faces().iter().zip(&g.values).zip(&bf) {
        let v = face.volume;
        let gp = gv.abs().powf(params.p);
        beta_grad_sq += v * b * gv * gv;
        grad_sq += v * gv * gv;
        grad_p += v * gp;
        beta_grad_p += v * b * gp;
    }
    let rate = beta_new.zip_map(beta_old, |a, b| (a - b) / dt);
    HeatEstimate {
        half_theta_sq_old: 0.5 * grid.inner(theta_old, theta_old),
        half_theta_sq: 0.5 * grid.inner(theta, theta),
        beta_grad_sq_dt: dt * beta_grad_sq,
        grad_p_dt: dt * grad_p,
        eps_grad_sq_dt: dt * params.epsilon * grad_sq,
        source_work_dt: dt * grid.inner(r, theta),
        phase_work_dt: dt * grid.inner(&rate, theta),
        beta_grad_p_dt: dt * beta_grad_p,
    }
}
