//! Implicit step of the constrained phase equation
//!
//! ```text
//! μ β_t − Δβ + ∂I_[0,1](β) ∋ (θ − θ_c)/θ_c
//! ```
//!
//! with the temperature frozen at its lagged value. Backward Euler turns each
//! step into the obstacle problem
//!
//! ```text
//! min_{0 ≤ β ≤ 1}  (μ/2dt)‖β − β_old‖²_w + ½‖∇β‖²_w − (g, β)_w,
//! ```
//!
//! solved either by projected SOR or through the Yosida
//! approximation of `∂I_[0,1]`. The multiplier `ξ` is recovered from the
//! discrete equation after the solve.

use crate::constitutive::{phase_driving_force, ModelParams};
use crate::error::{CryoError, Result};
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStepResult {
    pub beta_new: Field,
    /// Selection of `∂I_[0,1](β_new)`.
    pub xi: Field,
    pub iterations: usize,
    pub complementarity_residual: f64,
    /// Natural residual of the discrete inclusion, in multiplier units.
    pub pde_residual: f64,
}

/// Nodal values of `(θ − θ_c)/θ_c`.
pub fn driving_field(theta: &Field, params: &ModelParams) -> Field {
    theta.map(|t| phase_driving_force(t, params))
}

/// `max_i max(min(β_i, (−ξ_i)⁺), min(1 − β_i, ξ_i⁺))`, plus `|ξ_i|` where the
/// multiplier has the wrong sign for the active bound.
pub fn complementarity_residual(beta: &Field, xi: &Field) -> f64 {
    beta.values
        .iter()
        .zip(&xi.values)
        .map(|(&b, &x)| {
            let lower = b.min((-x).max(0.0));
            let upper = (1.0 - b).min(x.max(0.0));
            lower.max(upper)
        })
        .fold(0.0, f64::max)
}

fn check_inputs(grid: &Grid, beta_old: &Field, drive: &[f64], dt: f64, tol: f64) -> Result<()> {
    grid.check_field(beta_old)?;
    if drive.len() != grid.node_count() {
        return Err(CryoError::invalid("driving field does not match the grid"));
    }
    if let Some((i, b)) = beta_old
        .values
        .iter()
        .enumerate()
        .find(|(_, b)| !(0.0..=1.0).contains(*b))
    {
        return Err(CryoError::invalid(format!(
            "beta_old[{i}] = {b} is outside [0, 1]"
        )));
    }
    if drive.iter().any(|d| !d.is_finite()) {
        return Err(CryoError::invalid("non-finite temperature in phase step"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CryoError::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(tol > 0.0) {
        return Err(CryoError::invalid("phase tolerance must be positive"));
    }
    Ok(())
}

/// Backward-Euler system `A β = b` with `A = μW/dt + K` in node-local form.
struct PhaseSystem<'a> {
    grid: &'a Grid,
    beta_old: &'a [f64],
    drive: &'a [f64],
    inertia: f64,
    diag: Vec<f64>,
    /// Over-relaxation factor for the projected sweeps.
    omega: f64,
}

impl<'a> PhaseSystem<'a> {
    fn new(grid: &'a Grid, beta_old: &'a [f64], drive: &'a [f64], dt: f64, mu: f64) -> Self {
        let inertia = mu / dt;
        let faces = grid.faces();
        let diag = (0..grid.node_count())
            .map(|i| {
                inertia * grid.weights()[i]
                    + grid
                        .neighbours(i)
                        .iter()
                        .map(|&(_, f)| faces[f].conductance())
                        .sum::<f64>()
            })
            .collect::<Vec<f64>>();
        // Row-sum bound on the Jacobi spectral radius, fed into the usual SOR choice.
        let rho = diag
            .iter()
            .zip(grid.weights())
            .map(|(d, w)| 1.0 - inertia * w / d)
            .fold(0.0, f64::max);
        let omega = 2.0 / (1.0 + (1.0 - rho * rho).max(0.0).sqrt());
        Self {
            grid,
            beta_old,
            drive,
            inertia,
            diag,
            omega,
        }
    }

    /// `(A β − b)_i`, arranged so that it is exactly zero at a discrete equilibrium.
    #[inline]
    fn residual(&self, beta: &[f64], i: usize) -> f64 {
        let faces = self.grid.faces();
        let w = self.grid.weights()[i];
        let coupling: f64 = self
            .grid
            .neighbours(i)
            .iter()
            .map(|&(j, f)| faces[f].conductance() * (beta[i] - beta[j]))
            .sum();
        w * (self.inertia * (beta[i] - self.beta_old[i]) - self.drive[i]) + coupling
    }

    /// Value of node `i` that zeroes its residual with all neighbours frozen.
    #[inline]
    fn local_solution(&self, beta: &[f64], i: usize) -> f64 {
        beta[i] - self.residual(beta, i) / self.diag[i]
    }

    /// Smallest natural residual that round-off lets the sweeps resolve.
    fn roundoff_floor(&self) -> f64 {
        (0..self.diag.len())
            .map(|i| self.diag[i] / self.grid.weights()[i] + self.drive[i].abs())
            .fold(0.0, f64::max)
            * 8.0
            * f64::EPSILON
    }

    /// Over-relaxed local update, projected onto `[0, 1]`.
    #[inline]
    fn relaxed_update(&self, beta: &[f64], i: usize) -> f64 {
        (beta[i] - self.omega * self.residual(beta, i) / self.diag[i]).clamp(0.0, 1.0)
    }

    /// `ξ_i = g_i − μ(β_i − β_old,i)/dt + (Δ_h β)_i`.
    fn multiplier(&self, beta: &[f64]) -> Field {
        Field::new(
            (0..beta.len())
                .map(|i| -self.residual(beta, i) / self.grid.weights()[i])
                .collect(),
        )
    }

    /// Projected natural residual `|β − P(β − r/A_ii)|` rescaled to multiplier units.
    fn natural_residual(&self, beta: &[f64]) -> f64 {
        (0..beta.len())
            .map(|i| {
                let trial = (beta[i] - self.residual(beta, i) / self.diag[i]).clamp(0.0, 1.0);
                (beta[i] - trial).abs() * self.diag[i] / self.grid.weights()[i]
            })
            .fold(0.0, f64::max)
    }
}

/// Projected SOR solve of the phase step (lexicographic sweeps).
///
/// `tol` bounds the natural residual in multiplier units, so on success
/// `|ξ| ≤ tol` wherever `0 < β < 1`. A `tol` below the round-off level of the
/// system (about `8 ε_mach max(A_ii/w_i)`) is raised to that level.
pub fn phase_step_projected(
    grid: &Grid,
    beta_old: &Field,
    theta: &Field,
    dt: f64,
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseStepResult> {
    grid.check_field(theta)?;
    let drive = driving_field(theta, params);
    solve_projected(grid, beta_old, &drive.values, dt, params.mu, tol, max_iter)
}

pub(crate) fn solve_projected(
    grid: &Grid,
    beta_old: &Field,
    drive: &[f64],
    dt: f64,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseStepResult> {
    check_inputs(grid, beta_old, drive, dt, tol)?;
    let sys = PhaseSystem::new(grid, &beta_old.values, drive, dt, mu);
    let mut beta = beta_old.values.clone();
    let target = tol.max(sys.roundoff_floor());
    let mut residual = sys.natural_residual(&beta);
    let mut iterations = 0;
    while residual > target {
        if iterations == max_iter {
            return Err(CryoError::NonConvergence {
                solver: "projected SOR (phase step)",
                iterations,
                residual,
            });
        }
        for i in 0..beta.len() {
            beta[i] = sys.relaxed_update(&beta, i);
        }
        iterations += 1;
        residual = sys.natural_residual(&beta);
    }
    let xi = sys.multiplier(&beta);
    let beta_new = Field::new(beta);
    Ok(PhaseStepResult {
        complementarity_residual: complementarity_residual(&beta_new, &xi),
        beta_new,
        xi,
        iterations,
        pde_residual: residual,
    })
}

/// Yosida approximation of `∂I_[0,1]`: `(β − P_[0,1] β)/λ`.
#[inline]
pub fn yosida_multiplier(beta: f64, lambda: f64) -> f64 {
    (beta - beta.clamp(0.0, 1.0)) / lambda
}

/// Phase step with `∂I_[0,1]` replaced by its Yosida approximation.
///
/// The penalized system is solved by nodewise fixed-point sweeps, each node
/// solving its piecewise-linear scalar equation exactly. The returned `β` is
/// clamped to `[0, 1]` and `ξ` is the Yosida multiplier before clamping.
#[allow(clippy::too_many_arguments)]
pub fn phase_step_yosida(
    grid: &Grid,
    beta_old: &Field,
    theta: &Field,
    dt: f64,
    params: &ModelParams,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseStepResult> {
    grid.check_field(theta)?;
    let drive = driving_field(theta, params);
    solve_yosida(grid, beta_old, &drive.values, dt, params.mu, lambda, tol, max_iter)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_yosida(
    grid: &Grid,
    beta_old: &Field,
    drive: &[f64],
    dt: f64,
    mu: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PhaseStepResult> {
    check_inputs(grid, beta_old, drive, dt, tol)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CryoError::invalid(format!(
            "Yosida parameter must be positive, got {lambda}"
        )));
    }
    let sys = PhaseSystem::new(grid, &beta_old.values, drive, dt, mu);
    let weights = grid.weights();
    let penalized_residual = |beta: &[f64], i: usize| {
        sys.residual(beta, i) / weights[i] + yosida_multiplier(beta[i], lambda)
    };
    let max_residual = |beta: &[f64]| {
        (0..beta.len())
            .map(|i| penalized_residual(beta, i).abs())
            .fold(0.0, f64::max)
    };

    let target = tol.max(sys.roundoff_floor() + 16.0 * f64::EPSILON / lambda);
    let mut beta = beta_old.values.clone();
    let mut residual = max_residual(&beta);
    let mut iterations = 0;
    while residual > target {
        if iterations == max_iter {
            return Err(CryoError::NonConvergence {
                solver: "Yosida fixed-point iteration (phase step)",
                iterations,
                residual,
            });
        }
        for i in 0..beta.len() {
            // Solve a·β + (w/λ)(β − P β) = c for this node.
            let a = sys.diag[i];
            let c = a * sys.local_solution(&beta, i);
            let penalty = weights[i] / lambda;
            let interior = c / a;
            beta[i] = if interior < 0.0 {
                c / (a + penalty)
            } else if interior > 1.0 {
                (c + penalty) / (a + penalty)
            } else {
                interior
            };
        }
        iterations += 1;
        residual = max_residual(&beta);
    }

    let xi = Field::new(beta.iter().map(|&b| yosida_multiplier(b, lambda)).collect());
    let beta_new = Field::new(beta.iter().map(|b| b.clamp(0.0, 1.0)).collect());
    Ok(PhaseStepResult {
        complementarity_residual: complementarity_residual(&beta_new, &xi),
        beta_new,
        xi,
        iterations,
        pde_residual: residual,
    })
}

/// Terms of the discrete a priori estimate obtained by testing the phase
/// step with `β − β_old`:
///
/// ```text
/// μ‖β − β_old‖²/dt + ‖∇β‖² ≤ ‖∇β_old‖² + dt‖g‖²/μ
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    /// `μ ‖(β − β_old)/dt‖² dt`
    pub rate_term: f64,
    pub grad_new_sq: f64,
    pub grad_old_sq: f64,
    /// `dt ‖g‖² / μ`
    pub forcing_term: f64,
}

impl PhaseEstimate {
    pub fn compute(
        grid: &Grid,
        beta_old: &Field,
        beta_new: &Field,
        drive: &Field,
        dt: f64,
        mu: f64,
    ) -> Self {
        let diff = beta_new.zip_map(beta_old, |a, b| a - b);
        Self {
            rate_term: mu * grid.inner(&diff, &diff) / dt,
            grad_new_sq: grid.norm_grad_l2(beta_new).powi(2),
            grad_old_sq: grid.norm_grad_l2(beta_old).powi(2),
            forcing_term: dt * grid.inner(drive, drive) / mu,
        }
    }

    /// `lhs − rhs`; non-positive when the estimate holds.
    pub fn gap(&self) -> f64 {
        self.rate_term + self.grad_new_sq - self.grad_old_sq - self.forcing_term
    }
}
