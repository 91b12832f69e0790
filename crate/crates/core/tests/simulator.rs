use cryophase::simulator::mms::{mms_study, mms_verify, MmsPreset, MmsSpec};
use cryophase::simulator::{
    convergence_study, run, run_observed, scenarios, sweep_epsilon, Coupling, InitialData,
    SimConfig, Source,
};
use cryophase::{CryoError, Field, GridSpec, ModelVariant};

fn uniform(value: f64) -> InitialData {
    InitialData::expr(&value.to_string()).unwrap()
}

#[test]
fn steady_state_is_exact() {
    let res = run(&scenarios::steady_state()).unwrap();
    assert!(res.theta.values.iter().all(|t| *t == 2.17));
    assert!(res.beta.values.iter().all(|b| *b == 0.5));
    assert!(res.xi.values.iter().all(|x| *x == 0.0));
    assert_eq!(res.ledger.max_conservation_residual(), 0.0);
}

/// Spatially uniform data reduce each step to the scalar recurrence
/// `β⁺ = clamp(β + dt g(θ)/μ)`, `θ⁺ = θ − (β⁺ − β)`.
fn uniform_quench(excess: f64) -> (Vec<f64>, Vec<f64>) {
    let mut cfg = scenarios::steady_state();
    cfg.grid = GridSpec {
        dim: 1,
        lengths: vec![1.0],
        nodes: vec![3],
    };
    cfg.theta0 = uniform(2.17 + excess);
    cfg.beta0 = uniform(0.0);
    cfg.dt = 0.1;
    cfg.t_end = 5.0;
    cfg.solvers.phase_tol = 1e-14;
    cfg.solvers.picard_tol = 1e-14;
    cfg.solvers.linear_tol = 1e-14;
    let theta_c = cfg.params.theta_c;

    let (mut theta, mut beta) = (theta_c + excess, 0.0f64);
    let mut max_err = 0.0f64;
    let (mut thetas, mut betas) = (Vec::new(), Vec::new());
    run_observed(&cfg, &mut |v| {
        let next = (beta + cfg.dt * (theta - theta_c) / theta_c).clamp(0.0, 1.0);
        theta -= next - beta;
        beta = next;
        for i in 0..3 {
            max_err = max_err
                .max((v.theta.values[i] - theta).abs())
                .max((v.beta.values[i] - beta).abs());
        }
        thetas.push(v.theta.values[0]);
        betas.push(v.beta.values[0]);
    })
    .unwrap();
    assert!(max_err < 1e-12, "{max_err}");
    (thetas, betas)
}

#[test]
fn uniform_quench_follows_scalar_recurrence() {
    // θ₀ = θ_c + 1: β creeps up to 1 as θ falls to θ_c.
    let (thetas, betas) = uniform_quench(1.0);
    assert!(thetas.windows(2).all(|w| w[1] <= w[0]));
    assert!(betas.windows(2).all(|w| w[1] >= w[0]));
    assert!(*betas.last().unwrap() > 0.9 && *betas.last().unwrap() < 1.0);
    for (t, b) in thetas.iter().zip(&betas) {
        assert!((t + b - (2.17 + 1.0)).abs() < 1e-12);
    }

    // θ₀ = θ_c + 2: the constraint becomes active and θ freezes at θ_c + 1.
    let (thetas, betas) = uniform_quench(2.0);
    assert_eq!(*betas.last().unwrap(), 1.0);
    assert!((thetas.last().unwrap() - (2.17 + 1.0)).abs() < 1e-12);
}

#[test]
fn supercooling_melts_from_the_cold_side() {
    let mut cfg = scenarios::supercooling();
    cfg.cadence = Some(0.1);
    let res = run(&cfg).unwrap();
    assert_eq!(res.snapshots.len(), 11);
    let g = &res.grid;
    for snap in &res.snapshots {
        assert!(snap.beta.values.iter().all(|b| (0.0..=1.0).contains(b)));
        // The phase deficit is always largest on the cold side.
        assert!(snap.beta.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
    let early = &res.snapshots[1];
    for i in 0..g.node_count() {
        let x = g.coords(i)[0];
        if x < 0.4 {
            assert!(early.beta.values[i] < 1.0, "cold side at x = {x}");
        }
        if x >= 0.8 {
            assert_eq!(early.beta.values[i], 1.0, "hot side at x = {x}");
        }
    }
    let scale = res.ledger.mass_scale;
    assert!(res.ledger.max_conservation_residual() <= 1e-10 * scale);
    assert!(res.ledger.max_complementarity_residual() <= cfg.solvers.phase_tol);
}

#[test]
fn runs_are_bitwise_deterministic() {
    let cfg = scenarios::quench();
    let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
    let bits = |f: &Field| f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.theta), bits(&b.theta));
    assert_eq!(bits(&a.beta), bits(&b.beta));
    assert_eq!(bits(&a.xi), bits(&b.xi));
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.snapshots, b.snapshots);
}

/// Staggered and tightly iterated coupling differ by O(dt).
#[test]
fn iterated_and_staggered_coupling_agree_as_dt_shrinks() {
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let gaps: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let mut cfg = scenarios::supercooling();
            cfg.grid.nodes = vec![26];
            cfg.t_end = 0.2;
            cfg.dt = dt;
            let staggered = run(&cfg).unwrap();
            cfg.coupling = Coupling::Iterated {
                max_outer: 100,
                outer_tol: 1e-12,
            };
            let iterated = run(&cfg).unwrap();
            assert!(iterated.stats.outer_iterations > iterated.stats.steps);
            let g = &staggered.grid;
            g.norm_l2(&staggered.theta.zip_map(&iterated.theta, |a, b| a - b))
                + g.norm_l2(&staggered.beta.zip_map(&iterated.beta, |a, b| a - b))
        })
        .collect();
    let rates: Vec<f64> = gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!(mean >= 0.9, "gaps {gaps:?}, rates {rates:?}");
}

#[test]
fn ledger_totals_stay_bounded_under_dt_refinement() {
    let totals: Vec<_> = [0.02, 0.01]
        .iter()
        .map(|&dt| {
            let mut cfg = scenarios::supercooling();
            cfg.dt = dt;
            run(&cfg).unwrap().ledger.totals()
        })
        .collect();
    let (a, b) = (&totals[0], &totals[1]);
    let pairs = [
        (a.beta_rate_sq, b.beta_rate_sq),
        (a.lap_beta_sq, b.lap_beta_sq),
        (a.beta_grad_theta_sq, b.beta_grad_theta_sq),
        (a.grad_theta_p, b.grad_theta_p),
        (a.max_grad_beta_l2, b.max_grad_beta_l2),
        (a.max_theta_l2, b.max_theta_l2),
    ];
    for (coarse, fine) in pairs {
        assert!(coarse.is_finite() && fine.is_finite() && coarse >= 0.0);
        assert!(fine <= 2.0 * coarse && coarse <= 2.0 * fine, "{coarse} vs {fine}");
    }
}

#[test]
fn ledger_entries_are_finite_and_signed() {
    let res = run(&scenarios::quench()).unwrap();
    for r in res.ledger.records() {
        for v in [
            r.beta_rate_sq_dt,
            r.grad_beta_l2,
            r.lap_beta_sq_dt,
            r.theta_l2,
            r.beta_grad_theta_sq_dt,
            r.grad_theta_p_dt,
            r.eps_grad_theta_sq_dt,
            r.xi_l2,
            r.conservation_residual,
            r.complementarity_residual,
        ] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert!(r.phase_estimate_gap <= 1e-12);
        assert!(r.energy_gap <= 1e-8 * r.energy_scale);
    }
}

#[test]
fn heat_source_enters_the_balance() {
    let mut cfg = scenarios::steady_state();
    cfg.source = Source::Expression(cryophase::expr::Expr::parse("0.5 * cos(pi * x) + 0.1").unwrap());
    let res = run(&cfg).unwrap();
    assert!(res.ledger.max_conservation_residual() <= 1e-10 * res.ledger.mass_scale);
    let g = &res.grid;
    let gained = g.integral(&res.theta) + g.integral(&res.beta) - (2.17 + 0.5);
    assert!((gained - 0.1 * cfg.t_end).abs() < 1e-9, "{gained}");
}

#[test]
fn two_dimensional_run_conserves() {
    let mut cfg = scenarios::supercooling();
    cfg.grid = GridSpec {
        dim: 2,
        lengths: vec![1.0, 0.5],
        nodes: vec![17, 9],
    };
    cfg.theta0 = InitialData::expr("theta_c - 0.3 + 0.6 * step(x + y - 0.75)").unwrap();
    cfg.t_end = 0.2;
    let res = run(&cfg).unwrap();
    assert!(res.ledger.max_conservation_residual() <= 1e-10 * res.ledger.mass_scale);
    assert!(res.beta.values.iter().all(|b| (0.0..=1.0).contains(b)));
    assert!(res.ledger.max_relative_energy_gap() <= 1e-8);
}

#[test]
fn full_energy_variant_runs_and_stays_positive() {
    let mut cfg = scenarios::supercooling();
    cfg.params.variant = ModelVariant::FullEnergy;
    let res = run(&cfg).unwrap();
    assert!(res.ledger.records().iter().all(|r| !r.positivity_loss));
    assert!(res.theta.values.iter().all(|t| *t > 0.0));
}

#[test]
fn nonconvergence_reports_the_step() {
    let mut cfg = scenarios::quench();
    cfg.solvers.picard_max = 1;
    cfg.solvers.picard_tol = 1e-15;
    match run(&cfg).unwrap_err() {
        CryoError::StepFailure { step, source, .. } => {
            assert_eq!(step, 1);
            assert!(matches!(*source, CryoError::NonConvergence { .. }));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn sweep_on_steady_state_has_zero_gaps() {
    let rep = sweep_epsilon(&scenarios::steady_state(), &[1e-1, 1e-2, 1e-3]).unwrap();
    for e in &rep.entries {
        let g = e.outcome.as_ref().unwrap();
        assert_eq!((g.theta_gap, g.beta_gap), (0.0, 0.0));
    }
    assert!(rep.is_monotone());
}

#[test]
fn sweep_on_supercooling_is_monotone() {
    let rep = sweep_epsilon(&scenarios::supercooling(), &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(rep.all_ok() && rep.is_monotone());
    let gaps: Vec<f64> = rep.entries.iter().map(|e| e.outcome.as_ref().unwrap().theta_gap).collect();
    assert!(gaps[0] > 0.0 && gaps[2] < gaps[0]);
}

#[test]
fn sweep_rejects_zero_epsilon() {
    let err = sweep_epsilon(&scenarios::quench(), &[0.0]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn convergence_of_steady_state_is_exact() {
    let rep = convergence_study(&scenarios::steady_state(), &[11, 21, 41]).unwrap();
    for l in &rep.levels[..2] {
        assert_eq!(l.theta_error, Some(0.0));
        assert_eq!(l.beta_error, Some(0.0));
    }
    assert!(rep.theta_rates().is_empty());
}

#[test]
fn convergence_of_supercooling_reports_positive_rates() {
    let mut cfg = scenarios::supercooling();
    cfg.t_end = 0.25;
    let rep = convergence_study(&cfg, &[11, 21, 41, 81]).unwrap();
    let rates = rep.theta_rates();
    assert_eq!(rates.len(), 2);
    assert!(rates.iter().chain(&rep.beta_rates()).all(|r| *r > 0.0), "{rep:?}");
}

#[test]
fn convergence_rejects_non_nested_levels() {
    let err = convergence_study(&scenarios::supercooling(), &[11, 21, 35]).unwrap_err();
    assert!(err.to_string().contains("nested"));
}

#[test]
fn manufactured_presets() {
    let zero = mms_study(&MmsSpec {
        preset: MmsPreset::Zero,
        levels: 3,
    })
    .unwrap();
    assert_eq!(zero.space.theta_order, None);
    assert!(zero.space.levels.iter().all(|l| l.theta_error == 0.0 && l.beta_error == 0.0));

    let linear = mms_verify(&MmsSpec {
        preset: MmsPreset::LinearFlux,
        levels: 4,
    })
    .unwrap();
    assert!(linear.space.theta_order.unwrap() >= 1.9);
}

#[test]
fn config_validation_rejects_bad_time_step() {
    let mut cfg: SimConfig = scenarios::quench();
    cfg.dt = 10.0 * cfg.t_end;
    assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
}
