//! Embedded Dormand–Prince 5(4) integrator with mixed absolute/relative
//! error control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; chosen from the horizon when `None`.
    pub h_init: Option<f64>,
    /// Steps shorter than this (relative to `|t|` + 1) abort integration.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            h_init: None,
            h_min: 1e-14,
            max_steps: 10_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(atol: f64, rtol: f64) -> Self {
        Self {
            atol,
            rtol,
            ..Self::default()
        }
    }
}

/// Sampled solution: `states[i]` is the state at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("solution always holds the initial state")
    }
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combine(y: &[f64], h: f64, coeffs: &[f64], stages: &[Vec<f64>], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in coeffs.iter().zip(stages) {
            acc += c * k[i];
        }
        *o = y[i] + h * acc;
    }
}

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t_end`.
///
/// With an empty `outputs` slice every accepted step is recorded; otherwise
/// the state is recorded exactly at each (sorted, within-range) output time.
pub fn solve<F>(mut rhs: F, t0: f64, y0: &[f64], t_end: f64, outputs: &[f64], opts: OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("integration end {t_end} precedes start {t0}")));
    }
    if !(opts.atol > 0.0 && opts.rtol >= 0.0) {
        return Err(Error::config("tol", "absolute tolerance must be positive"));
    }
    let n = y0.len();
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        accepted_steps: 0,
        rejected_steps: 0,
    };
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.iter().any(|&t| t < t0 || t > t_end) {
        return Err(Error::Domain(
            "output times must be sorted and inside the horizon".into(),
        ));
    }
    let mut next_output = outputs.iter().copied().skip_while(|&t| t <= t0).peekable();
    if t_end == t0 {
        return Ok(sol);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut k_stage = vec![0.0; n];
    rhs(t, &y, &mut k[0]);

    let mut h = opts.h_init.unwrap_or_else(|| {
        let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let slope = k[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let guess = if slope > 0.0 {
            0.01 * (opts.atol + opts.rtol * scale).max(1e-8 * (1.0 + scale)) / slope
        } else {
            1e-3
        };
        guess.max(1e-6 * (t_end - t0)).min(0.1 * (t_end - t0))
    });

    while t < t_end {
        if sol.accepted_steps + sol.rejected_steps >= opts.max_steps {
            return Err(Error::numeric(format!("step budget exhausted at t = {t}")));
        }
        let target = next_output.peek().copied().unwrap_or(t_end).min(t_end);
        let mut hit_target = false;
        if t + h >= target {
            h = target - t;
            hit_target = true;
        }
        if h <= opts.h_min * (1.0 + t.abs()) && !hit_target {
            return Err(Error::numeric(format!("step size underflow (h = {h:e}) at t = {t}")));
        }

        let stage_coeffs: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, coeffs) in stage_coeffs.iter().enumerate() {
            combine(&y, h, coeffs, &k[..=s], &mut tmp);
            rhs(t + C[s] * h, &tmp, &mut k_stage);
            k[s + 1].copy_from_slice(&k_stage);
        }
        combine(&y, h, &B, &k[..6], &mut y_new);
        let t_new = if hit_target { target } else { t + h };
        rhs(t_new, &y_new, &mut k[6]);

        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kk) in k.iter().enumerate() {
                e += E[j] * kk[i];
            }
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            err_sq += r * r;
        }
        let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };
        if !err.is_finite() {
            return Err(Error::numeric(format!("non-finite local error at t = {t}")));
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            sol.accepted_steps += 1;
            if hit_target {
                sol.times.push(t);
                sol.states.push(y.clone());
                if next_output.peek().is_some_and(|&o| o <= t) {
                    next_output.next();
                }
            } else if outputs.is_empty() {
                sol.times.push(t);
                sol.states.push(y.clone());
            }
            if !hit_target {
                h *= factor;
            } else {
                // Resume from the step that would have been taken.
                h = (h * factor).max(opts.h_min * 10.0 * (1.0 + t.abs()));
            }
        } else {
            sol.rejected_steps += 1;
            h *= factor.min(1.0);
        }
    }
    if !outputs.is_empty() && sol.times.last() != Some(&t_end) {
        sol.times.push(t);
        sol.states.push(y);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = solve(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            5.0,
            &[],
            OdeOptions::with_tolerances(1e-13, 1e-12),
        )
        .unwrap();
        assert!((sol.last()[0] - (-5.0f64).exp()).abs() < 1e-11);
        assert!(sol.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn hits_requested_outputs() {
        let outs = [0.5, 1.0, 2.0];
        let sol = solve(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], 2.0, &outs, OdeOptions::default()).unwrap();
        assert_eq!(sol.times, vec![0.0, 0.5, 1.0, 2.0]);
        for (t, s) in sol.times.iter().zip(&sol.states) {
            assert!((s[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_preserves_energy() {
        let sol = solve(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            20.0,
            &[],
            OdeOptions::with_tolerances(1e-12, 1e-12),
        )
        .unwrap();
        let y = sol.last();
        assert!((y[0] - 20f64.cos()).abs() < 1e-9);
        assert!((y[1] + 20f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_underflows() {
        let err = solve(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &[],
            OdeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}
