use std::io::Write;

use burstpdmp_core::ode::OdeOptions;
use burstpdmp_core::reduced::{self, ReducedLimit, State1D};
use burstpdmp_core::simulator::{ensemble, Trajectory};
use burstpdmp_core::RngStream;

use super::observation_times;
use crate::error::{CliError, CliResult};
use crate::manifest::RunContext;

/// The `γ₁ → ∞` limit of the configured family: the deterministic ODE for
/// S1, the protein bursting process for S2/S3. Both are `γ₁`-invariant.
pub fn run(ctx: &mut RunContext) -> CliResult<()> {
    let cfg = ctx.config.clone();
    let family = cfg.model.family()?;
    let horizon = cfg.simulate.horizon;
    let observations = observation_times(horizon, cfg.simulate.observe_every);
    let y0 = cfg.model.initial_y;
    match ReducedLimit::of_family(&family).map_err(|e| CliError::in_section("model", e))? {
        ReducedLimit::Deterministic(ode) => {
            let rows = ctx.stage("reduced ode", |_| {
                if horizon == 0.0 {
                    return Ok(Vec::new());
                }
                let sol = ode.integrate(y0, horizon, &observations, OdeOptions::default())?;
                Ok(sol
                    .times
                    .iter()
                    .zip(&sol.states)
                    .filter(|(t, _)| **t > 0.0)
                    .map(|(t, s)| (*t, s[0]))
                    .collect::<Vec<_>>())
            })?;
            ctx.note("reduced limit: deterministic ODE dY/dt = -gamma2 Y + lambda2 b phi(Y)/gamma1");
            ctx.write("reduced_ode.csv", |w| {
                writeln!(w, "t,y,event")?;
                for (t, y) in &rows {
                    writeln!(w, "{t:?},{y:?},obs")?;
                }
                Ok(())
            })?;
        }
        ReducedLimit::Bursting(model) => {
            let trajectories = ctx.stage("reduced bursting", |_| {
                Ok(ensemble(cfg.seed, 0, cfg.simulate.replicas, |mut rng| {
                    if horizon == 0.0 {
                        return Ok(Trajectory::<State1D>::default());
                    }
                    reduced::simulate_reduced(y0, horizon, &model, &observations, &mut rng)
                })?)
            })?;
            ctx.note("reduced limit: protein bursting process with rescaled burst density");
            for (r, traj) in trajectories.iter().enumerate() {
                let stream = RngStream::block_id(0, r as u32);
                ctx.stream(format!("reduce replica={r}"), stream);
                ctx.write(&format!("reduced_stream_{stream}.csv"), |w| {
                    reduced::write_reduced_csv(w, traj)
                })?;
            }
        }
    }
    Ok(())
}
