use std::io::Write;

use burstpdmp_core::moments::{fit_scaling_exponents, MomentName, MomentSystem, ScalingClass, ScalingOptions};
use burstpdmp_core::ode::OdeOptions;
use burstpdmp_core::{MomentVector, RngStream, ScalingReport};
use serde::Serialize;

use super::{gamma1_label, model_at};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::RunContext;

#[derive(Debug, Clone, Serialize)]
pub struct SlopeSummary {
    pub moment: String,
    pub slope: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub class: ScalingClass,
    /// Local slope between the two largest `γ₁` values.
    pub last_decade_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeManifest {
    pub scaling: String,
    pub t: f64,
    pub replicas: usize,
    pub gamma1: Vec<f64>,
    pub fit: String,
    pub slopes: Vec<SlopeSummary>,
}

pub fn moment_names(k_max: usize) -> Vec<MomentName> {
    (0..=k_max as u32)
        .map(MomentName::Mu)
        .chain((0..=k_max as u32).map(MomentName::Nu))
        .collect()
}

pub fn summarize(report: &ScalingReport, replicas: usize) -> SlopeManifest {
    let n = report.gamma1_grid.len();
    let slopes = report
        .slopes
        .iter()
        .map(|s| {
            let last = report.estimates[n - 1].get(s.moment).map_or(f64::NAN, |e| e.mean);
            let prev = report.estimates[n - 2].get(s.moment).map_or(f64::NAN, |e| e.mean);
            let local = (last / prev).log10() / (report.gamma1_grid[n - 1] / report.gamma1_grid[n - 2]).log10();
            SlopeSummary {
                moment: s.moment.to_string(),
                slope: s.slope,
                stderr: s.stderr,
                ci_low: s.ci.0,
                ci_high: s.ci.1,
                class: s.class,
                last_decade_slope: local,
            }
        })
        .collect();
    SlopeManifest {
        scaling: report.scaling.to_string(),
        t: report.t,
        replicas,
        gamma1: report.gamma1_grid.clone(),
        fit: "weighted least squares of log10(estimate) on log10(gamma1), weights 1/var(log10 estimate)".into(),
        slopes,
    }
}

pub fn scaling_report(cfg: &ExperimentConfig) -> CliResult<ScalingReport> {
    let family = cfg.model.family()?;
    let opts = ScalingOptions {
        k_max: cfg.moments.k_max,
        t: cfg.moments.t,
        replicas: cfg.moments.replicas,
        seed: cfg.seed,
        initial: cfg.model.initial_state(),
    };
    fit_scaling_exponents(&family, &cfg.moments.gamma1, opts).map_err(|e| CliError::in_section("moments", e))
}

/// Writes `<prefix>moments.csv` and `<prefix>slopes.json` for `report`.
pub fn write_report(ctx: &mut RunContext, prefix: &str, report: &ScalingReport) -> CliResult<()> {
    let names = moment_names(ctx.config.moments.k_max);
    for (i, g) in report.gamma1_grid.iter().enumerate() {
        ctx.stream(
            format!(
                "moments gamma1={} first replica of {}",
                gamma1_label(*g),
                ctx.config.moments.replicas
            ),
            RngStream::block_id(i as u32, 0),
        );
    }
    ctx.write(&format!("{prefix}moments.csv"), |w| {
        writeln!(w, "gamma1,moment_name,estimate,stderr")?;
        for (g, est) in report.gamma1_grid.iter().zip(&report.estimates) {
            for name in &names {
                let e = est.get(*name).expect("within k_max");
                writeln!(w, "{g:?},{name},{:?},{:?}", e.mean, e.stderr)?;
            }
        }
        Ok(())
    })?;
    let summary = summarize(report, ctx.config.moments.replicas);
    ctx.write(&format!("{prefix}slopes.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    Ok(())
}

/// Monte Carlo moments along the family with fitted `γ₁` exponents; for a
/// constant rate the exact moment-equation values are written alongside.
pub fn run(ctx: &mut RunContext) -> CliResult<()> {
    let cfg = ctx.config.clone();
    let report = ctx.stage("moments monte carlo", |_| scaling_report(&cfg))?;
    write_report(ctx, "", &report)?;
    let base = cfg.model.base_model()?;
    if base.rate.as_constant().is_some() {
        let rows = ctx.stage("moment equations", |_| {
            let mut rows = Vec::new();
            for &g in &cfg.moments.gamma1 {
                let model = model_at(&cfg, g)?;
                let sys = MomentSystem::new(&model, cfg.moments.k_max)?;
                let s0 = cfg.model.initial_state();
                let m0 = MomentVector::point_mass(0.0, s0.x, s0.y, cfg.moments.k_max);
                let m = sys
                    .integrate(&m0, report.t, &[report.t], OdeOptions::default())?
                    .pop()
                    .expect("final output");
                rows.push((g, m));
            }
            Ok(rows)
        })?;
        ctx.write("moments_ode.csv", |w| {
            writeln!(w, "gamma1,moment_name,value")?;
            for (g, m) in &rows {
                for name in moment_names(cfg.moments.k_max) {
                    let v = match name {
                        MomentName::Mu(k) => m.mu[k as usize],
                        MomentName::Nu(k) => m.nu[k as usize],
                    };
                    writeln!(w, "{g:?},{name},{v:?}")?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}
