//! Model constants and pointwise constitutive laws for the He I / He II mixture.
//!
//! State: absolute temperature `theta` and the He I volume fraction `beta`,
//! constrained to `[0, 1]`. The free energy is
//!
//! ```text
//! Ψ(θ, β, ∇β) = −c_s θ log θ − (ℓ/θ_c)(θ − θ_c) β + k|∇β|² + I_[0,1](β)
//! ```
//!
//! and dissipation is described by
//!
//! ```text
//! Φ(β_t, ∇θ; θ, β) = (μ/2)|β_t|² + (d/θ)(|∇θ|²/2 + (1 − β)|∇θ|^p / p),   1 < p < 2.
//! ```
//!
//! The heat flux actually used by the solvers is the mixed Fourier / power-law
//! form `q = −β∇θ − (1 − β)|∇θ|^{p−2}∇θ`, with the degenerate coefficient
//! smoothed to `(|∇θ|² + δ²)^{(p−2)/2}`.

use serde::{Deserialize, Serialize};

use crate::error::{CryoError, Result};

/// Phase-transition temperature of helium at atmospheric pressure, in kelvin.
pub const LAMBDA_POINT: f64 = 2.17;

/// Default smoothing of the power-law coefficient near vanishing gradients.
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Which energy balance the temperature equation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Linearized near `θ_c`: coupling `β_t`, no quadratic dissipation source.
    #[default]
    Simplified,
    /// Keeps the `(θ/θ_c) β_t` coupling and the `|β_t|²` source.
    FullEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub theta_c: f64,
    /// Power-law flux exponent, `1 < p < 2`.
    pub p: f64,
    /// Artificial diffusion of the regularized temperature equation.
    pub epsilon: f64,
    /// Gradient smoothing for the power-law coefficient.
    pub delta: f64,
    pub c_s: f64,
    pub ell: f64,
    pub k: f64,
    pub mu: f64,
    pub d: f64,
    pub variant: ModelVariant,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            theta_c: LAMBDA_POINT,
            p: 1.5,
            epsilon: 0.0,
            delta: DEFAULT_DELTA,
            c_s: 1.0,
            ell: 1.0,
            k: 1.0,
            mu: 1.0,
            d: 1.0,
            variant: ModelVariant::Simplified,
        }
    }
}

impl ModelParams {
    /// Checks every invariant for a domain of spatial dimension `dim`.
    ///
    /// Returns non-fatal warnings on success. The compactness restriction
    /// `p > 6/5` only matters in three dimensions, which the solvers do not
    /// support, so it is reported as a warning rather than an error.
    pub fn validate(&self, dim: usize) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let all = [
            ("theta_c", self.theta_c),
            ("p", self.p),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("c_s", self.c_s),
            ("ell", self.ell),
            ("k", self.k),
            ("mu", self.mu),
            ("d", self.d),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(CryoError::invalid(format!("model.{name} must be finite")));
        }
        if !(self.p > 1.0 && self.p < 2.0) {
            return Err(CryoError::invalid(format!(
                "model.p = {} is outside the admissible range 1 < p < 2",
                self.p
            )));
        }
        if self.theta_c <= 0.0 {
            return Err(CryoError::invalid("model.theta_c must be > 0"));
        }
        if self.epsilon < 0.0 {
            return Err(CryoError::invalid("model.epsilon must be >= 0"));
        }
        if self.delta < 0.0 {
            return Err(CryoError::invalid("model.delta must be >= 0"));
        }
        for (name, v) in [
            ("c_s", self.c_s),
            ("ell", self.ell),
            ("k", self.k),
            ("mu", self.mu),
            ("d", self.d),
        ] {
            if v <= 0.0 {
                return Err(CryoError::invalid(format!("model.{name} must be > 0")));
            }
        }
        if dim >= 3 && self.p <= 1.2 {
            warnings.push(format!(
                "p = {} <= 6/5: compactness of the limit problem is not guaranteed in three dimensions",
                self.p
            ));
        }
        if self.delta == 0.0 {
            warnings.push(
                "delta = 0: the power-law coefficient is singular at vanishing gradients".into(),
            );
        }
        Ok(warnings)
    }
}

fn check_temperature(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(CryoError::Domain(format!(
            "temperature must be positive and finite, got {theta}"
        )))
    }
}

fn check_fraction(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(CryoError::Domain(format!(
            "volume fraction must lie in [0, 1], got {beta}"
        )))
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Free energy density. Returns `+inf` when `beta` leaves `[0, 1]`.
pub fn free_energy(theta: f64, beta: f64, grad_beta: &[f64], params: &ModelParams) -> Result<f64> {
    check_temperature(theta)?;
    if !beta.is_finite() || grad_beta.iter().any(|g| !g.is_finite()) {
        return Err(CryoError::Domain("non-finite phase input".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Ok(f64::INFINITY);
    }
    Ok(-params.c_s * theta * theta.ln()
        - params.ell / params.theta_c * (theta - params.theta_c) * beta
        + params.k * norm_sq(grad_beta))
}

/// Entropy density `s = −∂Ψ/∂θ`.
pub fn entropy(theta: f64, beta: f64, params: &ModelParams) -> Result<f64> {
    check_temperature(theta)?;
    Ok(params.c_s * (theta.ln() + 1.0) + params.ell / params.theta_c * beta)
}

/// Internal energy density `e = Ψ + θ s = c_s θ + ℓ β + k|∇β|²`.
pub fn internal_energy_density(
    theta: f64,
    beta: f64,
    grad_beta: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    check_temperature(theta)?;
    check_fraction(beta)?;
    Ok(params.c_s * theta + params.ell * beta + params.k * norm_sq(grad_beta))
}

/// Smoothed power-law coefficient `a_δ = (|g|² + δ²)^{(p−2)/2}` from `|g|²`.
///
/// For `δ = 0` and `g = 0` this returns 0, so that `a_δ(g) g` is the
/// continuous extension of `|g|^{p−2} g` at the origin.
#[inline]
pub fn power_law_coefficient(grad_sq: f64, p: f64, delta: f64) -> f64 {
    let s = grad_sq + delta * delta;
    if s == 0.0 {
        0.0
    } else {
        s.powf(0.5 * (p - 2.0))
    }
}

/// Heat flux `q = −β∇θ − (1−β) a_δ(∇θ) ∇θ`.
pub fn heat_flux(theta_grad: &[f64], beta: f64, params: &ModelParams) -> Vec<f64> {
    debug_assert!((0.0..=1.0).contains(&beta), "beta out of [0, 1]: {beta}");
    let a = power_law_coefficient(norm_sq(theta_grad), params.p, params.delta);
    let kappa = beta + (1.0 - beta) * a;
    theta_grad.iter().map(|g| -kappa * g).collect()
}

/// Right-hand side of the phase equation, `(θ − θ_c)/θ_c`.
#[inline]
pub fn phase_driving_force(theta: f64, params: &ModelParams) -> f64 {
    (theta - params.theta_c) / params.theta_c
}

/// Pseudo-potential of dissipation. Diagnostic only; the solvers use the flux directly.
pub fn pseudo_potential(
    beta_t: f64,
    theta_grad: &[f64],
    theta: f64,
    beta: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_temperature(theta)?;
    check_fraction(beta)?;
    let g2 = norm_sq(theta_grad);
    let gp = g2.sqrt().powf(params.p);
    Ok(0.5 * params.mu * beta_t * beta_t
        + params.d / theta * (0.5 * g2 + (1.0 - beta) * gp / params.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn free_energy_examples() {
        let p = unit();
        let f = free_energy(2.17, 0.5, &[0.0], &p).unwrap();
        assert!((f - (-2.17 * 2.17f64.ln())).abs() < 1e-14);
        assert!((f + 1.68116).abs() < 1e-5);

        assert_eq!(free_energy(1.0, 1.5, &[0.0], &p).unwrap(), f64::INFINITY);
        assert_eq!(free_energy(1.0, -0.1, &[0.0], &p).unwrap(), f64::INFINITY);

        let expected = {
            let a = -3.0 * 3f64.ln();
            let b = -(3.0 - 2.17) / 2.17;
            let c = 0.25;
            a + b + c
        };
        let f = free_energy(3.0, 1.0, &[0.5], &p).unwrap();
        assert!((f - expected).abs() < 1e-14);

        assert!(matches!(
            free_energy(0.0, 0.5, &[0.0], &p),
            Err(CryoError::Domain(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        let p = unit();
        assert_eq!(entropy(1.0, 0.0, &p).unwrap(), 1.0);
        assert!((entropy(1.0, 1.0, &p).unwrap() - (1.0 + 1.0 / 2.17)).abs() < 1e-15);
        assert!((entropy(std::f64::consts::E, 0.0, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!(entropy(-1.0, 0.0, &p).is_err());
    }

    #[test]
    fn internal_energy_examples() {
        let p = unit();
        assert_eq!(internal_energy_density(2.0, 0.0, &[0.0], &p).unwrap(), 2.0);
        let e0 = internal_energy_density(1e-300, 1.0, &[0.0], &p).unwrap();
        assert!((e0 - 1.0).abs() < 1e-15);
        let e = internal_energy_density(1.5, 0.25, &[1.0, 1.0], &p).unwrap();
        assert!((e - 3.75).abs() < 1e-15);
        assert!(internal_energy_density(1.0, 1.2, &[0.0], &p).is_err());
        assert!(internal_energy_density(0.0, 0.2, &[0.0], &p).is_err());
    }

    #[test]
    fn internal_energy_from_derivative_of_free_energy() {
        // e = Ψ − θ ∂Ψ/∂θ with the derivative taken by central differences.
        let p = unit();
        let (theta, beta, gb) = (1.5, 0.25, [1.0, 1.0]);
        let h = 1e-5;
        let dpsi = (free_energy(theta + h, beta, &gb, &p).unwrap()
            - free_energy(theta - h, beta, &gb, &p).unwrap())
            / (2.0 * h);
        let e = free_energy(theta, beta, &gb, &p).unwrap() - theta * dpsi;
        assert!((e - 3.75).abs() < 1e-8);
    }

    #[test]
    fn heat_flux_examples() {
        let mut p = unit();
        p.delta = 0.0;
        for exponent in [1.1, 1.5, 1.9] {
            p.p = exponent;
            assert_eq!(heat_flux(&[0.5], 1.0, &p), vec![-0.5]);
        }
        p.p = 1.5;
        let q = heat_flux(&[2.0], 0.0, &p);
        assert!((q[0] + 2f64.sqrt()).abs() < 1e-15);
        assert!((q[0] + std::f64::consts::SQRT_2).abs() < 1e-5);
        assert_eq!(heat_flux(&[0.0, 0.0], 0.3, &p), vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_exponent_gives_fourier_flux() {
        let mut p = unit();
        p.p = 2.0;
        p.delta = 0.0;
        for beta in [0.0, 0.3, 1.0] {
            let q = heat_flux(&[0.7, -1.3], beta, &p);
            assert_eq!(q, vec![-0.7, 1.3]);
        }
    }

    #[test]
    fn smoothing_converges_quadratically() {
        let mut p = unit();
        p.p = 1.5;
        p.delta = 0.0;
        let g = [0.3];
        let exact = heat_flux(&g, 0.2, &p)[0];
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&d| {
                p.delta = d;
                (heat_flux(&g, 0.2, &p)[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log10();
            assert!((rate - 2.0).abs() < 0.05, "rate {rate}, errors {errs:?}");
        }
    }

    #[test]
    fn driving_force_examples() {
        let p = unit();
        assert_eq!(phase_driving_force(p.theta_c, &p), 0.0);
        assert_eq!(phase_driving_force(2.0 * p.theta_c, &p), 1.0);
        assert_eq!(phase_driving_force(0.0, &p), -1.0);
    }

    #[test]
    fn pseudo_potential_examples() {
        let p = unit();
        assert_eq!(pseudo_potential(0.0, &[0.0], 1.0, 0.5, &p).unwrap(), 0.0);
        assert_eq!(pseudo_potential(2.0, &[0.0], 1.0, 0.5, &p).unwrap(), 2.0);
        let v = pseudo_potential(0.0, &[1.0], 1.0, 0.0, &p).unwrap();
        let independent = 1.0 / 2.0 + 1f64.powf(1.5) / 1.5;
        assert!((v - independent).abs() < 1e-15);
        assert!((v - 1.16667).abs() < 1e-5);
    }

    #[test]
    fn validation() {
        let mut p = unit();
        assert!(p.validate(1).unwrap().is_empty());
        p.p = 2.5;
        let msg = p.validate(1).unwrap_err().to_string();
        assert!(msg.contains("1 < p < 2"), "{msg}");
        p.p = 1.1;
        assert!(p.validate(2).unwrap().is_empty());
        assert_eq!(p.validate(3).unwrap().len(), 1);
        p = unit();
        p.mu = 0.0;
        assert!(p.validate(1).is_err());
        p = unit();
        p.epsilon = -1.0;
        assert!(p.validate(1).is_err());
        p = unit();
        p.theta_c = f64::NAN;
        assert!(p.validate(1).is_err());
    }

    fn vec2() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 2)
    }

    proptest! {
        #[test]
        fn pseudo_potential_nonnegative(
            bt in -5.0..5.0f64, g in vec2(), theta in 0.01..10.0f64,
            beta in 0.0..=1.0f64, p in 1.01..1.99f64,
        ) {
            let params = ModelParams { p, ..unit() };
            let v = pseudo_potential(bt, &g, theta, beta, &params).unwrap();
            prop_assert!(v >= 0.0);
            let zero = bt == 0.0 && g.iter().all(|x| *x == 0.0);
            prop_assert_eq!(v == 0.0, zero);
        }

        #[test]
        fn negative_flux_is_monotone(
            g1 in vec2(), g2 in vec2(), beta in 0.0..=1.0f64,
            p in 1.01..1.99f64, di in 0usize..3,
        ) {
            let delta = [0.0, 1e-8, 1e-4][di];
            let params = ModelParams { p, delta, ..unit() };
            let q1 = heat_flux(&g1, beta, &params);
            let q2 = heat_flux(&g2, beta, &params);
            let prod: f64 = (0..2).map(|i| (q1[i] - q2[i]) * (g1[i] - g2[i])).sum();
            let scale: f64 = (0..2).map(|i| (q1[i].abs() + q2[i].abs()) * (g1[i].abs() + g2[i].abs())).sum();
            prop_assert!(prod <= 1e-14 * scale.max(1.0));
        }

        #[test]
        fn energy_consistency(
            theta in 0.01..10.0f64, beta in 0.0..=1.0f64, gb in vec2(),
        ) {
            let params = unit();
            let e = internal_energy_density(theta, beta, &gb, &params).unwrap();
            let via = free_energy(theta, beta, &gb, &params).unwrap()
                + theta * entropy(theta, beta, &params).unwrap();
            let scale = e.abs().max(theta * theta.ln().abs()).max(1.0);
            prop_assert!((e - via).abs() <= 1e-12 * scale);
        }
    }
}
