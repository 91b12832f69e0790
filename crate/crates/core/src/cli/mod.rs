//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or CSV error |
//! | 2 | invalid arguments, configuration or input data |
//! | 3 | a solver did not converge |
//! | 4 | observed convergence order below the required threshold |
//! | 5 | a study or reproducibility check failed |

pub mod config;
pub mod formats;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::{CryoError, Result};
use crate::simulator::mms::{mms_study, MmsPreset, MmsSpec};
use crate::simulator::{convergence_study, run, sweep_epsilon, RunResult};
use config::{load_config, LoadedConfig};
use formats::{
    mms_table, write_convergence_report, write_diagnostics, write_snapshot, write_sweep_report,
    write_text,
};

const DEFAULT_OUTPUT_DIR: &str = "cryophase_output";

#[derive(Debug, Parser)]
#[command(name = "cryophase", version, about = "Helium supercooling phase-transition simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configured simulation and write snapshots, diagnostics and a manifest.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides output.dir in the config).
        #[arg(long, env = "CRYOPHASE_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Run twice and require bitwise-identical results.
        #[arg(long)]
        seed_check: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Verify convergence orders against a manufactured solution.
    Mms {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// default, linear or zero
        #[arg(long, default_value = "default")]
        solution: String,
    },
    /// Compare runs for decreasing epsilon against the epsilon = 0 run.
    SweepEps {
        config: PathBuf,
        /// Comma-separated, positive and strictly decreasing.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        eps: Vec<f64>,
        #[arg(long, env = "CRYOPHASE_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Self-convergence under simultaneous mesh and time-step refinement.
    Convergence {
        config: PathBuf,
        /// Number of levels, each halving h and dt.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, env = "CRYOPHASE_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            output_dir,
            seed_check,
            quiet,
        } => cmd_simulate(&config, output_dir.as_deref(), seed_check, quiet),
        Command::Mms { levels, solution } => cmd_mms(levels, &solution),
        Command::SweepEps {
            config,
            eps,
            output_dir,
        } => cmd_sweep_eps(&config, &eps, output_dir.as_deref()),
        Command::Convergence {
            config,
            levels,
            output_dir,
        } => cmd_convergence(&config, levels, output_dir.as_deref()),
    }
}

fn output_dir(flag: Option<&Path>, loaded: &LoadedConfig) -> Result<PathBuf> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| loaded.file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    std::fs::create_dir_all(&dir).map_err(|e| CryoError::io(&dir, e))?;
    Ok(dir)
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn same_bits(a: &crate::grid::Field, b: &crate::grid::Field) -> bool {
    a.values.len() == b.values.len()
        && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn check_reproducible(a: &RunResult, b: &RunResult) -> Result<()> {
    let rows_a: Vec<_> = a.ledger.records().iter().map(|r| r.row()).collect();
    let rows_b: Vec<_> = b.ledger.records().iter().map(|r| r.row()).collect();
    if rows_a != rows_b {
        return Err(CryoError::CheckFailed("diagnostics differ between two identical runs".into()));
    }
    if !(same_bits(&a.theta, &b.theta) && same_bits(&a.beta, &b.beta) && same_bits(&a.xi, &b.xi)) {
        return Err(CryoError::CheckFailed("final fields differ between two identical runs".into()));
    }
    Ok(())
}

pub fn cmd_simulate(config: &Path, output: Option<&Path>, seed_check: bool, quiet: bool) -> Result<()> {
    let loaded = load_config(config)?;
    if !quiet {
        warn(&loaded.warnings);
    }
    let dir = output_dir(output, &loaded)?;
    let mut sim = loaded.sim.clone();
    sim.dump_dir = Some(dir.clone());

    let result = run(&sim)?;
    if seed_check {
        check_reproducible(&result, &run(&sim)?)?;
    }

    let mut names = Vec::with_capacity(result.snapshots.len());
    for (k, snap) in result.snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:04}.csv");
        write_snapshot(&dir.join(&name), &result.grid, &snap.theta, &snap.beta, &snap.xi)?;
        names.push(json!({ "file": name, "step": snap.step, "time": snap.time }));
    }
    write_diagnostics(&dir.join("diagnostics.csv"), &result.ledger)?;

    let mut echo = loaded.file.clone();
    echo.output.dir = Some(dir.clone());
    let s = &result.stats;
    let manifest = json!({
        "cryophase_version": env!("CARGO_PKG_VERSION"),
        "config": echo,
        "warnings": loaded.warnings,
        "seed_check": seed_check,
        "snapshots": names,
        "statistics": {
            "steps": s.steps,
            "phase_iterations": s.phase_iterations,
            "picard_iterations": s.picard_iterations,
            "linear_iterations": s.linear_iterations,
            "outer_iterations": s.outer_iterations,
            "wall_time_s": s.wall_time_s,
        },
    });
    let manifest_path = dir.join("run_manifest.json");
    write_text(&manifest_path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;

    if !quiet {
        let totals = &result.ledger;
        println!(
            "{} steps, {} snapshots, max conservation residual {:.3e}, max complementarity residual {:.3e}",
            s.steps,
            result.snapshots.len(),
            totals.max_conservation_residual(),
            totals.max_complementarity_residual()
        );
        println!("output written to {}", dir.display());
    }
    Ok(())
}

pub fn cmd_mms(levels: usize, solution: &str) -> Result<()> {
    let preset: MmsPreset = solution.parse()?;
    let report = mms_study(&MmsSpec { preset, levels })?;
    print!("{}", mms_table(&report));
    report.check()
}

pub fn cmd_sweep_eps(config: &Path, eps: &[f64], output: Option<&Path>) -> Result<()> {
    let loaded = load_config(config)?;
    warn(&loaded.warnings);
    let dir = output_dir(output, &loaded)?;
    let report = sweep_epsilon(&loaded.sim, eps)?;
    write_sweep_report(&dir.join("sweep_report.csv"), &report)?;
    println!("{:>12} {:>14} {:>14}", "epsilon", "theta_gap", "beta_gap");
    for e in &report.entries {
        match &e.outcome {
            Ok(g) => println!("{:>12.3e} {:>14.6e} {:>14.6e}", e.epsilon, g.theta_gap, g.beta_gap),
            Err(msg) => println!("{:>12.3e} failed: {msg}", e.epsilon),
        }
    }
    if !report.all_ok() {
        return Err(CryoError::CheckFailed("some epsilon runs failed".into()));
    }
    if !report.is_monotone() {
        return Err(CryoError::CheckFailed(
            "temperature gap is not non-increasing as epsilon decreases".into(),
        ));
    }
    Ok(())
}

pub fn cmd_convergence(config: &Path, levels: usize, output: Option<&Path>) -> Result<()> {
    if levels < 3 {
        return Err(CryoError::invalid(format!(
            "a convergence study needs at least 3 levels, got {levels}"
        )));
    }
    if levels > 8 {
        return Err(CryoError::invalid("at most 8 refinement levels are supported"));
    }
    let loaded = load_config(config)?;
    warn(&loaded.warnings);
    let dir = output_dir(output, &loaded)?;
    let n0 = loaded.sim.grid.nodes[0];
    let ladder: Vec<usize> = (0..levels).map(|l| (n0 - 1) * (1 << l) + 1).collect();
    let report = convergence_study(&loaded.sim, &ladder)?;
    write_convergence_report(&dir.join("convergence_report.csv"), &report)?;
    println!(
        "{:>10} {:>12} {:>14} {:>14} {:>8} {:>8}",
        "nodes", "h", "theta_error", "beta_error", "rate_t", "rate_b"
    );
    for l in &report.levels {
        let e = |v: Option<f64>| v.map_or_else(|| "reference".into(), |x| format!("{x:.6e}"));
        let r = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.3}"));
        println!(
            "{:>10} {:>12.4e} {:>14} {:>14} {:>8} {:>8}",
            l.nodes[0],
            l.h,
            e(l.theta_error),
            e(l.beta_error),
            r(l.theta_rate),
            r(l.beta_rate)
        );
    }
    if let Some(bad) = report
        .theta_rates()
        .into_iter()
        .chain(report.beta_rates())
        .find(|r| !(*r > 0.0))
    {
        return Err(CryoError::CheckFailed(format!(
            "observed convergence rate {bad:.3} is not positive"
        )));
    }
    Ok(())
}
