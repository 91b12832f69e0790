//! Built-in initial configurations on the unit interval.

use super::{Coupling, InitialData, SimConfig, SolverSettings, Source};
use crate::constitutive::ModelParams;
use crate::grid::GridSpec;

pub const NAMES: [&str; 3] = ["steady", "quench", "supercooling"];

fn base(theta0: &str, beta0: &str) -> SimConfig {
    SimConfig {
        grid: GridSpec {
            dim: 1,
            lengths: vec![1.0],
            nodes: vec![51],
        },
        params: ModelParams::default(),
        dt: 0.01,
        t_end: 1.0,
        coupling: Coupling::Staggered,
        theta0: InitialData::expr(theta0).expect("built-in expression"),
        beta0: InitialData::expr(beta0).expect("built-in expression"),
        source: Source::Zero,
        solvers: SolverSettings::default(),
        cadence: None,
        dump_dir: None,
    }
}

/// `θ ≡ θ_c`, `β ≡ 1/2`: an exact discrete equilibrium.
pub fn steady_state() -> SimConfig {
    base("theta_c", "0.5")
}

/// Fully superfluid domain cooled uniformly below `θ_c`, with a small
/// cosine ripple so that the transport terms take part.
pub fn quench() -> SimConfig {
    base("theta_c - 0.5 + 0.05 * cos(pi * x)", "1")
}

/// Left half below `θ_c`, right half above it, starting fully superfluid.
pub fn supercooling() -> SimConfig {
    base("theta_c - 0.3 + 0.6 * step(x - 0.5)", "1")
}

pub fn by_name(name: &str) -> Option<SimConfig> {
    match name {
        "steady" => Some(steady_state()),
        "quench" => Some(quench()),
        "supercooling" => Some(supercooling()),
        _ => None,
    }
}
