use std::io::Write;

use burstpdmp_core::density::{analytic_stationary, DensitySolver, PdeOptions};
use burstpdmp_core::model::presets;
use burstpdmp_core::moments::MomentSystem;
use burstpdmp_core::ode::{self, OdeOptions};
use burstpdmp_core::simulator::{self, next_jump_time, State2D, ThinningOptions};
use burstpdmp_core::stats::ks_test;
use burstpdmp_core::{
    BurstModel, BurstRate, DensityGrid, JumpDensity, ModelParams, ReducedJumpModel, Result, RngStream,
};
use rand::Rng;

use crate::error::{CliError, CliResult};
use crate::manifest::{CheckRecord, RunContext};

pub type FlowFn = fn(State2D, f64, &ModelParams) -> State2D;

#[derive(Debug, Clone, Copy)]
pub struct SelfCheckOptions {
    /// Flow under test; replaced by a corrupted version in negative controls.
    pub flow: FlowFn,
    /// Largest accepted deviation from the reference integrator.
    pub flow_tolerance: f64,
    pub seed: u64,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            flow: simulator::flow,
            flow_tolerance: 1e-10,
            seed: 0,
        }
    }
}

/// Worst absolute deviation of `flow` from a tight Dormand–Prince solve over
/// 100 parameter sets, a quarter of them with `γ₁ = γ₂` and a quarter with
/// `|γ₁ − γ₂| = 1e-12`.
pub fn flow_deviation(flow: FlowFn, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, u64::MAX);
    let gaps = [0.0, 1e-12, 1e-6, 1.0];
    let reference = OdeOptions::with_tolerances(1e-15, 1e-13);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let gamma2 = rng.random_range(0.1..2.0);
        let p = ModelParams::new(gamma2 + gaps[i % 4], gamma2, rng.random_range(0.5..5.0))?;
        let s0 = State2D::new(0.0, rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let dt = rng.random_range(0.0..10.0);
        let exact = flow(s0, dt, &p);
        let sol = ode::solve(
            |_, u, du| {
                du[0] = -p.gamma1 * u[0];
                du[1] = -p.gamma2 * u[1] + p.lambda2 * u[0];
            },
            0.0,
            &[s0.x, s0.y],
            dt,
            &[dt],
            reference,
        )?;
        let r = sol.last();
        worst = worst.max((exact.x - r[0]).abs()).max((exact.y - r[1]).abs());
    }
    Ok(worst)
}

/// KS p-value of 1e5 constant-rate waiting times against their exponential law.
pub fn thinning_pvalue(seed: u64) -> Result<f64> {
    let phi = 2.0;
    let model = BurstModel::new(
        ModelParams::new(1.0, 1.0, 2.0)?,
        BurstRate::constant(phi)?,
        JumpDensity::exponential(0.5)?,
    )?;
    let mut rng = RngStream::new(seed, u64::MAX - 1);
    let mut s = State2D::origin();
    let mut waits = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let jt = next_jump_time(&model, s, &mut rng, ThinningOptions::default())?;
        waits.push(jt.wait);
        s = jt.state;
    }
    Ok(ks_test(&waits, |t| 1.0 - (-phi * t).exp()).p_value)
}

fn moment_fixed_point_error() -> Result<f64> {
    let (g1, g2, l2, phi, b) = (3.0, 0.5, 2.0, 2.0, 1.5);
    let model = BurstModel::new(
        ModelParams::new(g1, g2, l2)?,
        BurstRate::constant(phi)?,
        JumpDensity::exponential(b)?,
    )?;
    let sys = MomentSystem::new(&model, 2)?;
    let s = sys.stationary();
    let d = sys.rhs(&s)?;
    let x_eq = b * phi / g1;
    let y_eq = l2 * x_eq / g2;
    let residual = d.mu.iter().chain(&d.nu).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(((s.mu[1] - x_eq) / x_eq)
        .abs()
        .max(((s.nu[0] - y_eq) / y_eq).abs())
        .max(residual))
}

fn law_residual() -> Result<f64> {
    let m = ReducedJumpModel::from_model(&presets::feedback_model())?;
    let law = analytic_stationary(&m)?;
    let y_max = law.truncation_point(1e-6)?;
    let peak = law.approximate_max();
    let mut worst: f64 = 0.0;
    for i in 1..=512 {
        worst = worst.max(law.residual(y_max * i as f64 / 512.0)?.abs());
    }
    Ok(worst / peak)
}

fn density_mass_drift() -> Result<f64> {
    let m = ReducedJumpModel::from_model(&presets::feedback_model())?;
    let solver = DensitySolver::new(&m, 20.0, 400, &PdeOptions::default())?;
    let mut v0 = DensityGrid::new(20.0, vec![1.0; 400])?;
    v0.normalize()?;
    let sol = solver.solve(&v0, 5.0, &[], &PdeOptions::default())?;
    Ok((sol.last().mass() - 1.0).abs())
}

fn record(name: &str, value: Result<f64>, threshold: f64, at_least: bool, detail: &str) -> CheckRecord {
    match value {
        Ok(v) => CheckRecord {
            name: name.into(),
            passed: if at_least { v >= threshold } else { v <= threshold },
            observed: v,
            threshold,
            detail: detail.into(),
        },
        Err(e) => CheckRecord {
            name: name.into(),
            passed: false,
            observed: f64::NAN,
            threshold,
            detail: e.to_string(),
        },
    }
}

/// The fast invariant suite.
pub fn run_checks(opts: &SelfCheckOptions) -> Vec<CheckRecord> {
    vec![
        record(
            "flow_exactness",
            flow_deviation(opts.flow, opts.seed),
            opts.flow_tolerance,
            false,
            "max |closed-form flow - reference ODE solve| over 100 parameter sets",
        ),
        record(
            "thinning_ks",
            thinning_pvalue(opts.seed),
            0.01,
            true,
            "KS p-value of 1e5 constant-rate waiting times against Exponential(2)",
        ),
        record(
            "moment_fixed_points",
            moment_fixed_point_error(),
            1e-12,
            false,
            "relative error of stationary mu1 and nu0, and max |d/dt| at the fixed point",
        ),
        record(
            "stationary_law_residual",
            law_residual(),
            1e-6,
            false,
            "max |stationary density equation residual| / max density on 512 points",
        ),
        record(
            "density_mass_conservation",
            density_mass_drift(),
            5e-6,
            false,
            "|mass - 1| after t = 5 of the density solver",
        ),
    ]
}

pub fn print_report<W: Write>(mut w: W, checks: &[CheckRecord]) -> std::io::Result<()> {
    for c in checks {
        let cmp = if c.name == "thinning_ks" { ">=" } else { "<=" };
        writeln!(
            w,
            "{} {}: observed {:e}, required {cmp} {:e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.threshold,
            c.detail
        )?;
    }
    Ok(())
}

/// Runs the checks, records them in the manifest and `selfcheck.csv`, and
/// fails with exit code 4 if any failed.
pub fn run(ctx: &mut RunContext, opts: &SelfCheckOptions) -> CliResult<()> {
    let checks = ctx.stage("selfcheck", |_| Ok(run_checks(opts)))?;
    ctx.write("selfcheck.csv", |w| {
        writeln!(w, "check,passed,observed,threshold")?;
        for c in &checks {
            writeln!(w, "{},{},{:?},{:?}", c.name, c.passed, c.observed, c.threshold)?;
        }
        Ok(())
    })?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    let total = checks.len();
    for c in checks {
        ctx.check(c);
    }
    if failed > 0 {
        return Err(CliError::CheckFailed { failed, total });
    }
    Ok(())
}
