use std::io::Write;

use burstpdmp_core::density::{analytic_stationary, density_distance, DensitySolver, GridPolicy, PdeOptions};
use burstpdmp_core::reduced::ReducedLimit;
use burstpdmp_core::{DensityGrid, Error as CoreError, Norm, ReducedJumpModel, StationaryLaw};

use crate::error::{CliError, CliResult};
use crate::manifest::RunContext;

/// Histogram range for the reduced model: the analytic law's `1 − tail`
/// quantile when available, otherwise a Gamma-tail bound from the rate's
/// upper bound.
pub fn protein_range(model: &ReducedJumpModel, law: Option<&StationaryLaw>, tail: f64) -> CliResult<f64> {
    if let Some(law) = law {
        return Ok(law.truncation_point(tail)?);
    }
    let bbar = model.hbar.mean();
    Ok(bbar * (model.rate.upper_bound() / model.gamma2 + (1.0 / tail).ln() + 10.0))
}

fn bins_error(e: CoreError) -> CliError {
    match e {
        CoreError::Config { message, .. } => CliError::config("density.bins", message),
        other => CliError::Core(other),
    }
}

/// Stationary and transient densities of the reduced bursting process:
/// closed form (when available), numerical steady state, and their
/// distances.
pub fn run(ctx: &mut RunContext) -> CliResult<()> {
    let cfg = ctx.config.clone();
    let family = cfg.model.family()?;
    let model = match ReducedLimit::of_family(&family).map_err(|e| CliError::in_section("model", e))? {
        ReducedLimit::Bursting(m) => m,
        ReducedLimit::Deterministic(_) => {
            return Err(CliError::config(
                "model.scaling",
                "S1 has a deterministic limit; density tools need S2 or S3",
            ))
        }
    };
    let law = match analytic_stationary(&model) {
        Ok(law) => Some(law),
        Err(CoreError::Unsupported(reason)) => {
            log::warn!("{reason}");
            ctx.note(format!("no closed-form stationary law: {reason}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let y_max = protein_range(&model, law.as_ref(), cfg.stationary.tail_mass)?;
    let bins = cfg.density.bins;
    ctx.note(format!("density grid: {bins} bins on [0, {y_max:?}]"));
    let opts = PdeOptions {
        cfl: cfg.density.cfl,
        ..PdeOptions::default()
    };
    let solver = DensitySolver::new(&model, y_max, bins, &opts).map_err(bins_error)?;

    let analytic = match &law {
        Some(law) => Some(ctx.stage("analytic law", |_| Ok(law.bin_averages(y_max, bins)?))?),
        None => None,
    };
    let steady = ctx.stage("steady state", |_| {
        let mut start = DensityGrid::new(y_max, vec![1.0; bins])?;
        start.normalize()?;
        Ok(solver.steady_state(&start, cfg.density.steady_tol, 1e4 / model.gamma2)?)
    })?;
    let transient = ctx.stage("transient", |_| {
        let mut v0 = DensityGrid::zeros(y_max, bins)?;
        let cell = ((cfg.model.initial_y / v0.dy()) as usize).min(bins - 1);
        v0.values[cell] = 1.0 / v0.dy();
        let sol = solver.solve(&v0, cfg.density.horizon, &[], &opts)?;
        Ok(sol.last().clone())
    })?;

    if let Some(a) = &analytic {
        ctx.write("density_analytic.csv", |w| a.write_csv(w))?;
    }
    ctx.write("density_steady.csv", |w| steady.write_csv(w))?;
    ctx.write("density_transient.csv", |w| transient.write_csv(w))?;
    if let Some(a) = &analytic {
        let rows: Vec<(Norm, f64)> = Norm::ALL
            .iter()
            .map(|&n| Ok((n, density_distance(&steady, a, n, GridPolicy::Error)?)))
            .collect::<CliResult<_>>()?;
        ctx.write("distance.csv", |w| {
            writeln!(w, "gamma1,norm,value")?;
            for (n, v) in &rows {
                writeln!(w, "inf,{},{v:?}", n.as_str())?;
            }
            Ok(())
        })?;
    }
    Ok(())
}
