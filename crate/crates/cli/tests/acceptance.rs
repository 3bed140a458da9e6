//! Acceptance criteria, run at full size. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

#![allow(clippy::field_reassign_with_default)]

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use burstpdmp_cli::commands::{figures, selfcheck};
use burstpdmp_cli::manifest::MANIFEST_FILE;
use burstpdmp_cli::{execute, Command, ExperimentConfig};
use burstpdmp_core::density::{analytic_stationary, density_distance, DensitySolver, GridPolicy, PdeOptions};
use burstpdmp_core::model::{presets, JumpKind, Scaling};
use burstpdmp_core::moments::{ensemble_states, fit_scaling_exponents, MomentName, ScalingOptions};
use burstpdmp_core::ode::OdeOptions;
use burstpdmp_core::reduced::{ReducedOde, State1D};
use burstpdmp_core::simulator::{default_burn_in, default_window, stationary_samples, State2D};
use burstpdmp_core::stats::{batch_means, mean_se, MeanEstimate};
use burstpdmp_core::{BurstModel, BurstRate, JumpDensity, ModelParams, Norm, RateKind, ReducedJumpModel, RngStream};
use statrs::distribution::{Continuous, Gamma};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

const SEED: u64 = 20_240_601;

fn within(e: &MeanEstimate, target: f64, k: f64) -> bool {
    e.covers(target, k)
}

fn fmt_est(e: &MeanEstimate) -> String {
    format!("{:.5} ± {:.5}", e.mean, e.stderr)
}

fn stationary_means() -> Outcome {
    let (phi, b, g1, g2, l2) = (2.0, 1.0, 10.0, 1.0, 2.0);
    let model = BurstModel::new(
        ModelParams::new(g1, g2, l2).map_err(|e| e.to_string())?,
        BurstRate::constant(phi).map_err(|e| e.to_string())?,
        JumpDensity::exponential(b).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let n = 100_000;
    let mut rng = RngStream::new(SEED, 1);
    let samples = stationary_samples(
        &model,
        State2D::origin(),
        n,
        default_burn_in(&model.params),
        default_window(n, phi),
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let ex = batch_means(&xs, 20).map_err(|e| e.to_string())?;
    let ey = batch_means(&ys, 20).map_err(|e| e.to_string())?;
    let (tx, ty) = (b * phi / g1, b * phi * l2 / (g1 * g2));
    let ok = within(&ex, tx, 3.0) && within(&ey, ty, 3.0);
    Ok((
        ok,
        format!(
            "E[X] = {} (target {tx}), E[Y] = {} (target {ty}), n = {n}",
            fmt_est(&ex),
            fmt_est(&ey)
        ),
    ))
}

fn slopes() -> Outcome {
    let grid = [1.0, 10.0, 100.0, 1000.0];
    let opts = ScalingOptions {
        seed: SEED,
        ..ScalingOptions::default()
    };
    let s2 = fit_scaling_exponents(&presets::feedback_family(Scaling::S2), &grid, opts).map_err(|e| e.to_string())?;
    let s3 = fit_scaling_exponents(&presets::feedback_family(Scaling::S3), &grid, opts).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (report, name, target) in [
        (&s2, MomentName::Mu(1), 0.0),
        (&s2, MomentName::Nu(1), 0.0),
        (&s2, MomentName::Mu(2), 1.0),
        (&s2, MomentName::Nu(2), 1.0),
        (&s3, MomentName::Mu(1), -1.0),
    ] {
        let fit = report.slope(name).ok_or_else(|| format!("{name} not fitted"))?;
        let hit = (fit.slope - target).abs() <= 0.1;
        ok &= hit;
        parts.push(format!(
            "{:?} {name} {:.3} (target {target}){}",
            report.scaling,
            fit.slope,
            if hit { "" } else { " MISS" }
        ));
    }
    Ok((ok, parts.join(", ")))
}

fn distances_decrease() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = SEED;
    cfg.sweep.gamma1 = vec![0.1, 1.0, 10.0, 100.0];
    cfg.stationary.n_samples = 1_000_000;
    cfg.stationary.bins = 200;
    let sweep = figures::stationary_sweep(&cfg).map_err(|e| e.to_string())?;
    let panels = figures::panels(&cfg, &sweep).map_err(|e| e.to_string())?;
    let mut l1 = Vec::new();
    for p in &panels {
        let law = p.analytic.as_ref().ok_or("no analytic law")?;
        l1.push(density_distance(&p.y.grid, law, Norm::L1, GridPolicy::Error).map_err(|e| e.to_string())?);
    }
    let decreasing = l1.windows(2).all(|w| w[1] < w[0]);
    let last = *l1.last().unwrap();
    let ok = decreasing && last < 0.05;
    let listed: Vec<String> = cfg
        .sweep
        .gamma1
        .iter()
        .zip(&l1)
        .map(|(g, d)| format!("{g}: {d:.4}"))
        .collect();
    Ok((
        ok,
        format!(
            "L1 by gamma1 {{{}}}, strictly decreasing = {decreasing}",
            listed.join(", ")
        ),
    ))
}

fn gamma_oracle() -> Outcome {
    let (phi, g2, bbar) = (3.0, 1.5, 0.8);
    let m = ReducedJumpModel::new(
        g2,
        BurstRate::constant(phi).map_err(|e| e.to_string())?,
        JumpDensity::exponential(bbar).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let n = 100_000;
    let mut rng = RngStream::new(SEED, 4);
    let samples = stationary_samples(
        &m,
        State1D { t: 0.0, y: 0.0 },
        n,
        20.0 / g2,
        default_window(n, phi),
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let mean = batch_means(&ys, 20).map_err(|e| e.to_string())?;
    let sq: Vec<f64> = ys.iter().map(|y| (y - mean.mean).powi(2)).collect();
    let var = batch_means(&sq, 20).map_err(|e| e.to_string())?;
    let (tm, tv) = (bbar * phi / g2, bbar * bbar * phi / g2);

    let law = analytic_stationary(&m).map_err(|e| e.to_string())?;
    let gamma = Gamma::new(phi / g2, 1.0 / bbar).map_err(|e| e.to_string())?;
    let worst = (1..=2000)
        .map(|i| {
            let y = i as f64 * 0.01;
            (law.pdf(y) - gamma.pdf(y)).abs()
        })
        .fold(0.0f64, f64::max);
    let ok = within(&mean, tm, 3.0) && within(&var, tv, 3.0) && worst <= 1e-8;
    Ok((
        ok,
        format!(
            "mean {} (target {tm}), variance {} (target {tv}), max |pdf - Gamma pdf| = {worst:.2e}",
            fmt_est(&mean),
            fmt_est(&var)
        ),
    ))
}

fn exact_flow() -> Outcome {
    let worst = selfcheck::flow_deviation(burstpdmp_core::simulator::flow, SEED).map_err(|e| e.to_string())?;
    Ok((
        worst <= 1e-10,
        format!("max deviation {worst:.2e} over 100 parameter sets, a quarter with gamma1 = gamma2"),
    ))
}

fn thinning() -> Outcome {
    let p = selfcheck::thinning_pvalue(SEED).map_err(|e| e.to_string())?;
    Ok((p > 0.01, format!("KS p-value {p:.4}, n = 100000")))
}

fn pde_consistency() -> Outcome {
    let m = ReducedJumpModel::from_model(&presets::feedback_model()).map_err(|e| e.to_string())?;
    let law = analytic_stationary(&m).map_err(|e| e.to_string())?;
    let y_max = law.truncation_point(1e-6).map_err(|e| e.to_string())?;
    let horizon = 10.0 / m.gamma2;
    let opts = PdeOptions::default();
    let mut errors = Vec::new();
    let mut drifts = Vec::new();
    for n in [600usize, 1200, 2400] {
        let exact = law.bin_averages(y_max, n).map_err(|e| e.to_string())?;
        let solver = DensitySolver::new(&m, y_max, n, &opts).map_err(|e| e.to_string())?;
        let steady = solver.steady_state(&exact, 1e-10, 1e4).map_err(|e| e.to_string())?;
        let err = density_distance(&steady, &exact, Norm::L1, GridPolicy::Error).map_err(|e| e.to_string())?;
        let sol = solver.solve(&exact, horizon, &[], &opts).map_err(|e| e.to_string())?;
        let drift = density_distance(sol.last(), &exact, Norm::L1, GridPolicy::Error).map_err(|e| e.to_string())?;
        errors.push(err);
        drifts.push(drift);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let drift_ok = drifts.iter().zip(&errors).all(|(d, e)| *d < 5.0 * e);
    let order_ok = ratios.iter().all(|r| (r - 2.0).abs() <= 0.3);
    Ok((
        drift_ok && order_ok,
        format!(
            "N = 600/1200/2400: L1 error {:.3e}/{:.3e}/{:.3e}, drift {:.3e}/{:.3e}/{:.3e}, ratios {:.3}/{:.3}",
            errors[0], errors[1], errors[2], drifts[0], drifts[1], drifts[2], ratios[0], ratios[1]
        ),
    ))
}

fn deterministic_limit() -> Outcome {
    let family = presets::feedback_family(Scaling::S1);
    let t = 5.0 / family.base.params.gamma2;
    let n = 100_000;
    let mut stats = Vec::new();
    for (i, g) in [1.0, 10.0, 100.0].into_iter().enumerate() {
        let model = family.instantiate(g).map_err(|e| e.to_string())?;
        let states = ensemble_states(&model, State2D::origin(), t, n, SEED, i as u32).map_err(|e| e.to_string())?;
        let ys: Vec<f64> = states.iter().map(|s| s.y).collect();
        let mean = mean_se(&ys);
        let var = ys.iter().map(|y| (y - mean.mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        stats.push((g, mean, var));
    }
    let ode = ReducedOde::from_model(&family.base);
    let y_ode = ode
        .integrate(0.0, t, &[t], OdeOptions::with_tolerances(1e-12, 1e-12))
        .map_err(|e| e.to_string())?
        .last()[0];
    let decreasing = stats.windows(2).all(|w| w[1].2 < w[0].2);
    let last = &stats[2].1;
    let z = (last.mean - y_ode) / last.stderr;
    let ok = decreasing && z.abs() <= 3.0;
    let vars: Vec<String> = stats.iter().map(|(g, _, v)| format!("{g}: {v:.4}")).collect();
    Ok((
        ok,
        format!(
            "Var Y(5) by gamma1 {{{}}}; at gamma1 = 100 mean {} vs ODE {y_ode:.5} (z = {z:.2})",
            vars.join(", "),
            fmt_est(last)
        ),
    ))
}

fn reproducibility() -> Outcome {
    let dir = std::env::temp_dir().join(format!("burstpdmp-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    let mut cfg = ExperimentConfig::default();
    cfg.seed = SEED;
    cfg.sweep.gamma1 = vec![1.0, 10.0];
    cfg.simulate.replicas = 3;
    cfg.stationary.n_samples = 50_000;
    cfg.moments.replicas = 2_000;
    cfg.model.jump = JumpKind::Exponential { mean: 0.5 };
    let mut constant = cfg.clone();
    constant.model.rate = RateKind::Constant { phi0: 2.0 };
    let runs = [
        (Command::Simulate, cfg.clone()),
        (Command::Reduce, cfg.clone()),
        (Command::Moments, constant),
        (Command::Density, cfg.clone()),
        (Command::ReproduceFig1, cfg.clone()),
        (Command::ReproduceFig2, cfg.clone()),
        (Command::Selfcheck, cfg),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (command, mut cfg) in runs {
        let first = dir.join(format!("{}-first", command.name()));
        let second = dir.join(format!("{}-second", command.name()));
        cfg.output_dir = first.to_string_lossy().into_owned();
        let opts = selfcheck::SelfCheckOptions::default();
        let a = execute(command, cfg, &opts).map_err(|e| format!("{}: {e}", command.name()))?;
        let mut again = ExperimentConfig::load(&first.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        again.output_dir = second.to_string_lossy().into_owned();
        let b = execute(command, again, &opts).map_err(|e| format!("{}: {e}", command.name()))?;
        for out in a.outputs.iter().filter(|o| o.path.ends_with(".csv")) {
            compared += 1;
            let x = fs::read(first.join(&out.path)).map_err(|e| e.to_string())?;
            let y = fs::read(second.join(&out.path)).map_err(|e| format!("{}: {e}", out.path))?;
            if x != y {
                mismatches.push(format!("{}/{}", command.name(), out.path));
            }
        }
        if a.outputs.len() != b.outputs.len() {
            mismatches.push(format!("{}: output count", command.name()));
        }
    }
    let _ = fs::remove_dir_all(&dir);
    Ok((
        mismatches.is_empty() && compared > 0,
        format!("{compared} CSV files over 7 commands, mismatches: {mismatches:?}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "stationary means, constant rate",
            stationary_means,
            Duration::from_secs(60),
        ),
        (
            "moment scaling exponents under S2 and S3",
            slopes,
            Duration::from_secs(600),
        ),
        (
            "Y-histogram L1 distance decreases to < 0.05",
            distances_decrease,
            Duration::from_secs(900),
        ),
        ("constant-rate Gamma oracle", gamma_oracle, Duration::MAX),
        ("exact flow vs reference ODE", exact_flow, Duration::MAX),
        ("thinning KS test", thinning, Duration::MAX),
        (
            "density PDE drift and first-order convergence",
            pde_consistency,
            Duration::MAX,
        ),
        ("S1 deterministic limit", deterministic_limit, Duration::MAX),
        ("re-run from manifest is byte-identical", reproducibility, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed < *budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit = if *budget == Duration::MAX {
            String::new()
        } else {
            format!(", limit {} s", budget.as_secs())
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {detail} [{:.1} s{limit}]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
