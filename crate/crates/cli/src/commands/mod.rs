//! One function per subcommand. Each takes a [`RunContext`], writes its
//! outputs through it and leaves manifest writing to the caller.

pub mod density;
pub mod figures;
pub mod moments;
pub mod reduce;
pub mod selfcheck;
pub mod simulate;

use burstpdmp_core::BurstModel;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// `γ₁` as it appears in file names.
pub fn gamma1_label(g: f64) -> String {
    format!("{g:?}")
}

/// Observation times `k·every` in `(0, horizon]`.
pub fn observation_times(horizon: f64, dt: f64) -> Vec<f64> {
    if dt <= 0.0 {
        return Vec::new();
    }
    let n = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    (1..=n).map(|k| (k as f64 * dt).min(horizon)).collect()
}

pub(crate) fn model_at(config: &ExperimentConfig, gamma1: f64) -> CliResult<BurstModel> {
    config
        .model
        .family()?
        .instantiate(gamma1)
        .map_err(|e| CliError::in_section("sweep.gamma1", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_grid() {
        assert_eq!(observation_times(1.0, 0.0), Vec::<f64>::new());
        assert_eq!(observation_times(0.0, 0.1), Vec::<f64>::new());
        let t = observation_times(1.0, 0.1);
        assert_eq!(t.len(), 10);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert_eq!(gamma1_label(0.1), "0.1");
        assert_eq!(gamma1_label(100.0), "100.0");
    }
}
