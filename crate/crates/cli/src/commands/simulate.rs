use burstpdmp_core::simulator::{self, ensemble, ThinningOptions, Trajectory};
use burstpdmp_core::RngStream;

use super::{gamma1_label, model_at, observation_times};
use crate::error::CliResult;
use crate::manifest::RunContext;

/// Full two-dimensional trajectories, one CSV per replica and `γ₁`.
pub fn run(ctx: &mut RunContext) -> CliResult<()> {
    let cfg = ctx.config.clone();
    let horizon = cfg.simulate.horizon;
    let observations = observation_times(horizon, cfg.simulate.observe_every);
    let s0 = cfg.model.initial_state();
    for (i, &g) in cfg.sweep.gamma1.iter().enumerate() {
        let model = model_at(&cfg, g)?;
        let trajectories = ctx.stage(&format!("simulate gamma1={}", gamma1_label(g)), |_| {
            Ok(ensemble(cfg.seed, i as u32, cfg.simulate.replicas, |mut rng| {
                if horizon == 0.0 {
                    return Ok(Trajectory::default());
                }
                simulator::simulate(&model, s0, horizon, &observations, &mut rng, ThinningOptions::default())
            })?)
        })?;
        for (r, traj) in trajectories.iter().enumerate() {
            let stream = RngStream::block_id(i as u32, r as u32);
            ctx.stream(format!("simulate gamma1={} replica={r}", gamma1_label(g)), stream);
            let name = format!("trajectory_gamma1_{}_stream_{stream}.csv", gamma1_label(g));
            ctx.write(&name, |w| simulator::write_trajectory_csv(w, traj))?;
        }
    }
    Ok(())
}
