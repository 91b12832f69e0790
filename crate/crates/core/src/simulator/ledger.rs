/// Diagnostics for one completed step. Fields ending in `_dt` are already
/// multiplied by the step length so that column sums approximate time integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub beta_rate_sq_dt: f64,
    pub grad_beta_l2: f64,
    pub lap_beta_sq_dt: f64,
    pub theta_l2: f64,
    pub beta_grad_theta_sq_dt: f64,
    pub grad_theta_p_dt: f64,
    pub eps_grad_theta_sq_dt: f64,
    pub xi_l2: f64,
    /// `|∫(θ + β) − ∫(θ₀ + β₀) − Σ dt ∫ r|`
    pub conservation_residual: f64,
    pub complementarity_residual: f64,
    /// Discrete phase estimate, `lhs − rhs` (non-positive when it holds).
    pub phase_estimate_gap: f64,
    /// Discrete temperature energy inequality, `lhs − rhs`.
    pub energy_gap: f64,
    pub energy_scale: f64,
    pub phase_iterations: usize,
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    pub outer_iterations: usize,
    pub positivity_loss: bool,
}

impl StepRecord {
    pub const HEADER: [&'static str; 21] = [
        "step",
        "time",
        "dt",
        "beta_rate_sq_dt",
        "grad_beta_l2",
        "lap_beta_sq_dt",
        "theta_l2",
        "beta_grad_theta_sq_dt",
        "grad_theta_p_dt",
        "eps_grad_theta_sq_dt",
        "xi_l2",
        "conservation_residual",
        "complementarity_residual",
        "phase_estimate_gap",
        "energy_gap",
        "energy_scale",
        "phase_iterations",
        "picard_iterations",
        "linear_iterations",
        "outer_iterations",
        "positivity_loss",
    ];

    /// Row in [`Self::HEADER`] order, floats in round-trip exponent form.
    pub fn row(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.16e}");
        vec![
            self.step.to_string(),
            f(self.time),
            f(self.dt),
            f(self.beta_rate_sq_dt),
            f(self.grad_beta_l2),
            f(self.lap_beta_sq_dt),
            f(self.theta_l2),
            f(self.beta_grad_theta_sq_dt),
            f(self.grad_theta_p_dt),
            f(self.eps_grad_theta_sq_dt),
            f(self.xi_l2),
            f(self.conservation_residual),
            f(self.complementarity_residual),
            f(self.phase_estimate_gap),
            f(self.energy_gap),
            f(self.energy_scale),
            self.phase_iterations.to_string(),
            self.picard_iterations.to_string(),
            self.linear_iterations.to_string(),
            self.outer_iterations.to_string(),
            (self.positivity_loss as u8).to_string(),
        ]
    }
}

/// Step-by-step record of the quantities controlled by the a priori estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    records: Vec<StepRecord>,
    /// `max(1, |∫(θ₀ + β₀)|)`, the natural scale for conservation residuals.
    pub mass_scale: f64,
}

/// Running totals of the dissipation columns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerTotals {
    pub beta_rate_sq: f64,
    pub lap_beta_sq: f64,
    pub beta_grad_theta_sq: f64,
    pub grad_theta_p: f64,
    pub eps_grad_theta_sq: f64,
    pub max_grad_beta_l2: f64,
    pub max_theta_l2: f64,
}

impl EnergyLedger {
    pub fn new(mass_scale: f64) -> Self {
        Self {
            records: Vec::new(),
            mass_scale,
        }
    }

    pub fn push(&mut self, rec: StepRecord) {
        self.records.push(rec);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> LedgerTotals {
        self.records.iter().fold(LedgerTotals::default(), |mut acc, r| {
            acc.beta_rate_sq += r.beta_rate_sq_dt;
            acc.lap_beta_sq += r.lap_beta_sq_dt;
            acc.beta_grad_theta_sq += r.beta_grad_theta_sq_dt;
            acc.grad_theta_p += r.grad_theta_p_dt;
            acc.eps_grad_theta_sq += r.eps_grad_theta_sq_dt;
            acc.max_grad_beta_l2 = acc.max_grad_beta_l2.max(r.grad_beta_l2);
            acc.max_theta_l2 = acc.max_theta_l2.max(r.theta_l2);
            acc
        })
    }

    pub fn max_conservation_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.conservation_residual)
            .fold(0.0, f64::max)
    }

    pub fn max_complementarity_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.complementarity_residual)
            .fold(0.0, f64::max)
    }

    /// Largest energy-inequality violation relative to its step scale.
    pub fn max_relative_energy_gap(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.energy_gap / r.energy_scale.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_phase_estimate_gap(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.phase_estimate_gap)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
