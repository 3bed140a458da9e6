use std::io::Write;

use burstpdmp_core::density::{analytic_stationary, density_distance, histogram, GridPolicy};
use burstpdmp_core::model::Scaling;
use burstpdmp_core::simulator::{self, default_burn_in, default_window};
use burstpdmp_core::stats::{batch_means, MeanEstimate};
use burstpdmp_core::{DensityGrid, Histogram, Norm, ReducedJumpModel, RngStream, StationaryLaw};
use rayon::prelude::*;

use super::density::protein_range;
use super::moments::{scaling_report, write_report};
use super::{gamma1_label, model_at};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::manifest::{CheckRecord, RunContext};

const BATCHES: usize = 20;

/// Stationary samples of the full model at one `γ₁`, in time order.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub gamma1: f64,
    pub stream_id: u64,
    pub burn_in: f64,
    pub window: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Histograms and protein moments for one `γ₁`.
#[derive(Debug, Clone)]
pub struct Panel {
    pub gamma1: f64,
    pub x: Histogram,
    pub y: Histogram,
    /// Bin averages of the reduced model's stationary law on the `Y` bins.
    pub analytic: Option<DensityGrid>,
    pub y_mean: MeanEstimate,
    pub y_var: MeanEstimate,
}

/// Runs the stationary sampler at every `γ₁` of the sweep, in parallel
/// across `γ₁`; point `i` uses stream `block_id(i, 0)`.
pub fn stationary_sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SweepPoint>> {
    let s0 = cfg.model.initial_state();
    cfg.sweep
        .gamma1
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            let model = model_at(cfg, g)?;
            let n = cfg.stationary.n_samples;
            let burn_in = cfg.stationary.burn_in.unwrap_or_else(|| default_burn_in(&model.params));
            let window = cfg
                .stationary
                .window
                .unwrap_or_else(|| default_window(n, model.rate.upper_bound()));
            let stream_id = RngStream::block_id(i as u32, 0);
            let mut rng = RngStream::new(cfg.seed, stream_id);
            let samples = simulator::stationary_samples(&model, s0, n, burn_in, window, &mut rng)?;
            Ok(SweepPoint {
                gamma1: g,
                stream_id,
                burn_in,
                window,
                xs: samples.iter().map(|s| s.x).collect(),
                ys: samples.iter().map(|s| s.y).collect(),
            })
        })
        .collect()
}

/// The reduced model's closed-form law at `γ₁`, if the family has a
/// bursting limit with a closed form.
pub fn reduced_law(cfg: &ExperimentConfig, gamma1: f64) -> CliResult<(ReducedJumpModel, Option<StationaryLaw>)> {
    let reduced = ReducedJumpModel::from_model(&model_at(cfg, gamma1)?)?;
    if cfg.model.scaling == Scaling::S1 {
        return Ok((reduced, None));
    }
    let law = analytic_stationary(&reduced).ok();
    Ok((reduced, law))
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn panels(cfg: &ExperimentConfig, sweep: &[SweepPoint]) -> CliResult<Vec<Panel>> {
    sweep
        .iter()
        .map(|p| {
            let (reduced, law) = reduced_law(cfg, p.gamma1)?;
            let y_max = protein_range(&reduced, law.as_ref(), cfg.stationary.tail_mass)?;
            let bins = cfg.stationary.bins;
            let y = histogram(&p.ys, bins, y_max)?;
            let x_max = quantile(&p.xs, cfg.stationary.x_quantile);
            let x = histogram(&p.xs, bins, if x_max > 0.0 { x_max } else { 1.0 })?;
            let analytic = match &law {
                Some(law) => Some(law.bin_averages(y_max, bins)?),
                None => None,
            };
            let y_mean = batch_means(&p.ys, BATCHES)?;
            let centered: Vec<f64> = p.ys.iter().map(|v| (v - y_mean.mean).powi(2)).collect();
            let y_var = batch_means(&centered, BATCHES)?;
            Ok(Panel {
                gamma1: p.gamma1,
                x,
                y,
                analytic,
                y_mean,
                y_var,
            })
        })
        .collect()
}

fn sample_stage(ctx: &mut RunContext) -> CliResult<Vec<Panel>> {
    let cfg = ctx.config.clone();
    let sweep = ctx.stage("stationary sampling", |_| stationary_sweep(&cfg))?;
    ctx.note("stationary samples: i.i.d. uniform times on [burn_in, burn_in + window] along one trajectory per gamma1");
    for p in &sweep {
        ctx.stream(format!("stationary gamma1={}", gamma1_label(p.gamma1)), p.stream_id);
    }
    let panels = ctx.stage("histograms", |_| panels(&cfg, &sweep))?;
    ctx.write("sweep_summary.csv", |w| {
        writeln!(
            w,
            "gamma1,stream_id,n_samples,burn_in,window,x_max,x_tail_mass,y_max,y_tail_mass"
        )?;
        for (p, s) in panels.iter().zip(&sweep) {
            writeln!(
                w,
                "{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                p.gamma1,
                s.stream_id,
                s.xs.len(),
                s.burn_in,
                s.window,
                p.x.grid.y_max,
                p.x.tail_mass,
                p.y.grid.y_max,
                p.y.tail_mass
            )?;
        }
        Ok(())
    })?;
    Ok(panels)
}

/// Per-`γ₁` histograms of `X` and `Y` with the analytic overlay.
pub fn run_fig1(ctx: &mut RunContext) -> CliResult<()> {
    let panels = sample_stage(ctx)?;
    for p in &panels {
        let g = gamma1_label(p.gamma1);
        ctx.write(&format!("fig1_x_gamma1_{g}.csv"), |w| p.x.grid.write_csv(w))?;
        ctx.write(&format!("fig1_y_gamma1_{g}.csv"), |w| p.y.grid.write_csv(w))?;
        if let Some(a) = &p.analytic {
            ctx.write(&format!("fig1_analytic_gamma1_{g}.csv"), |w| a.write_csv(w))?;
        }
    }
    Ok(())
}

/// Distances between the `Y` histograms and the analytic law (`L¹`, `L²`,
/// `L∞`) per `γ₁`.
pub fn distances(panels: &[Panel]) -> CliResult<Vec<(f64, Norm, f64)>> {
    let mut rows = Vec::new();
    for p in panels {
        if let Some(a) = &p.analytic {
            for norm in Norm::ALL {
                rows.push((p.gamma1, norm, density_distance(&p.y.grid, a, norm, GridPolicy::Error)?));
            }
        }
    }
    Ok(rows)
}

/// Panel A distances, panel B protein moments, panels C–D moment scaling.
pub fn run_fig2(ctx: &mut RunContext) -> CliResult<()> {
    let cfg = ctx.config.clone();
    let panels = sample_stage(ctx)?;
    let rows = distances(&panels)?;
    ctx.write("fig2a_distance.csv", |w| {
        writeln!(w, "gamma1,norm,value")?;
        for (g, n, v) in &rows {
            writeln!(w, "{g:?},{},{v:?}", n.as_str())?;
        }
        Ok(())
    })?;
    for norm in Norm::ALL {
        let series: Vec<f64> = rows.iter().filter(|r| r.1 == norm).map(|r| r.2).collect();
        if series.len() >= 2 {
            let worst = series.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            ctx.check(CheckRecord {
                name: format!("fig2a {} strictly decreasing in gamma1", norm.as_str()),
                passed: worst < 0.0,
                observed: worst,
                threshold: 0.0,
                detail: "largest increment between consecutive gamma1 values".into(),
            });
        }
    }

    ctx.write("fig2b_y_moments.csv", |w| {
        writeln!(w, "gamma1,moment_name,estimate,stderr")?;
        for p in &panels {
            writeln!(w, "{:?},y_mean,{:?},{:?}", p.gamma1, p.y_mean.mean, p.y_mean.stderr)?;
            writeln!(w, "{:?},y_var,{:?},{:?}", p.gamma1, p.y_var.mean, p.y_var.stderr)?;
        }
        Ok(())
    })?;
    if let Some(last) = panels.last() {
        if let (_, Some(law)) = reduced_law(&cfg, last.gamma1)? {
            let (mean, var) = (law.mean()?, law.variance()?);
            ctx.write("fig2b_reduced.csv", |w| {
                writeln!(w, "moment_name,value")?;
                writeln!(w, "y_mean,{mean:?}")?;
                writeln!(w, "y_var,{var:?}")
            })?;
            let z = (last.y_mean.mean - mean) / last.y_mean.stderr;
            ctx.check(CheckRecord {
                name: format!(
                    "fig2b y_mean at gamma1={} within 3 SE of reduced mean",
                    gamma1_label(last.gamma1)
                ),
                passed: z.abs() <= 3.0,
                observed: z,
                threshold: 3.0,
                detail: format!(
                    "estimate {:?} ± {:?}, reduced {mean:?}",
                    last.y_mean.mean, last.y_mean.stderr
                ),
            });
        }
    }

    let report = ctx.stage("moment scaling", |_| scaling_report(&cfg))?;
    write_report(ctx, "fig2cd_", &report)?;
    Ok(())
}
