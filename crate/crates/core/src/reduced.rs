//! One-dimensional limits obtained by eliminating mRNA as `γ₁ → ∞`.
//!
//! With the burst rate scaled up (S1) the protein obeys the deterministic
//! equation `dY/dt = −γ₂Y + λ₂ψ(Y)`, `ψ(Y) = bφ(Y)/γ₁`. With the burst size
//! (S2) or the translation rate (S3) scaled up, protein itself is produced
//! in bursts with the rescaled size density `h̄`.

use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BurstModel, BurstRate, JumpDensity, ModelParams, Scaling, ScalingFamily};
use crate::ode::{self, OdeOptions, OdeSolution};
use crate::simulator::{self, Pdmp, ThinningOptions, Timed, Trajectory};

/// Protein burst-size density `h̄(Δy) = (γ₁/λ₂) h((γ₁/λ₂) Δy)`: a burst of
/// `ΔX` mRNA is converted into `(λ₂/γ₁)·ΔX` protein.
pub fn build_hbar(h: &JumpDensity, p: &ModelParams) -> Result<JumpDensity> {
    p.validate()?;
    h.scaled(p.lambda2 / p.gamma1)
}

/// Deterministic limit `dY/dt = −γ₂Y + λ₂ψ(Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOde {
    pub gamma2: f64,
    pub lambda2: f64,
    /// `b/γ₁`, so that `ψ(y) = production_scale · φ(y)`.
    pub production_scale: f64,
    pub rate: BurstRate,
}

impl ReducedOde {
    pub fn from_model(model: &BurstModel) -> Self {
        Self {
            gamma2: model.params.gamma2,
            lambda2: model.params.lambda2,
            production_scale: model.jump.mean() / model.params.gamma1,
            rate: model.rate.clone(),
        }
    }

    pub fn psi(&self, y: f64) -> f64 {
        self.production_scale * self.rate.value(y.max(0.0))
    }

    pub fn psi_bounds(&self) -> (f64, f64) {
        (
            self.production_scale * self.rate.lower_bound(),
            self.production_scale * self.rate.upper_bound(),
        )
    }

    pub fn rhs(&self, y: f64) -> f64 {
        -self.gamma2 * y + self.lambda2 * self.psi(y)
    }

    /// Integrates from `y0` over `[0, horizon]`; with empty `outputs` every
    /// accepted step is recorded.
    pub fn integrate(&self, y0: f64, horizon: f64, outputs: &[f64], opts: OdeOptions) -> Result<OdeSolution> {
        if !(y0 >= 0.0 && y0.is_finite()) {
            return Err(Error::Domain(format!(
                "initial protein level must be nonnegative, got {y0}"
            )));
        }
        if !(opts.atol > 0.0) {
            return Err(Error::config("tol", "tolerance must be positive"));
        }
        ode::solve(|_, y, dy| dy[0] = self.rhs(y[0]), 0.0, &[y0], horizon, outputs, opts)
    }
}

/// Convenience wrapper matching the default tolerances (1e-10 abs, 1e-8 rel).
pub fn integrate_ode(y0: f64, horizon: f64, m: &ReducedOde, opts: OdeOptions) -> Result<OdeSolution> {
    m.integrate(y0, horizon, &[], opts)
}

/// Protein-only bursting process `dY/dt = −γ₂Y + Ṅ(h̄, φ(Y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJumpModel {
    pub gamma2: f64,
    pub rate: BurstRate,
    pub hbar: JumpDensity,
}

impl ReducedJumpModel {
    pub fn new(gamma2: f64, rate: BurstRate, hbar: JumpDensity) -> Result<Self> {
        crate::error::ensure_positive("gamma2", gamma2)?;
        Ok(Self { gamma2, rate, hbar })
    }

    pub fn from_model(model: &BurstModel) -> Result<Self> {
        Self::new(
            model.params.gamma2,
            model.rate.clone(),
            build_hbar(&model.jump, &model.params)?,
        )
    }

    /// Stationary mean `b̄φ/γ₂` for a constant rate.
    pub fn stationary_mean(&self) -> Option<f64> {
        Some(self.hbar.mean() * self.rate.as_constant()? / self.gamma2)
    }
}

/// The `γ₁ → ∞` limit of a scaling family.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedLimit {
    Deterministic(ReducedOde),
    Bursting(ReducedJumpModel),
}

impl ReducedLimit {
    /// Both reduced objects are `γ₁`-invariant along their family, so the
    /// base model fixes them.
    pub fn of_family(family: &ScalingFamily) -> Result<Self> {
        match family.scaling {
            Scaling::S1 => Ok(Self::Deterministic(ReducedOde::from_model(&family.base))),
            Scaling::S2 | Scaling::S3 => Ok(Self::Bursting(ReducedJumpModel::from_model(&family.base)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State1D {
    pub t: f64,
    pub y: f64,
}

impl Timed for State1D {
    #[inline]
    fn time(&self) -> f64 {
        self.t
    }
}

impl Pdmp for ReducedJumpModel {
    type State = State1D;

    #[inline]
    fn flow(&self, s: &State1D, dt: f64) -> State1D {
        State1D {
            t: s.t + dt,
            y: s.y * (-self.gamma2 * dt).exp(),
        }
    }

    #[inline]
    fn intensity(&self, s: &State1D) -> f64 {
        self.rate.value(s.y)
    }

    fn intensity_bound(&self) -> f64 {
        self.rate.upper_bound()
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, s: &State1D, rng: &mut R) -> State1D {
        State1D {
            t: s.t,
            y: s.y + self.hbar.sample(rng),
        }
    }
}

/// Simulates the reduced bursting process from `y0` at time 0.
pub fn simulate_reduced<R: Rng + ?Sized>(
    y0: f64,
    horizon: f64,
    m: &ReducedJumpModel,
    observations: &[f64],
    rng: &mut R,
) -> Result<Trajectory<State1D>> {
    if !(y0 >= 0.0) {
        return Err(Error::Domain(format!(
            "initial protein level must be nonnegative, got {y0}"
        )));
    }
    simulator::simulate(
        m,
        State1D { t: 0.0, y: y0 },
        horizon,
        observations,
        rng,
        ThinningOptions::default(),
    )
}

/// Writes `t,y,event` rows.
pub fn write_reduced_csv<W: Write>(mut w: W, traj: &Trajectory<State1D>) -> io::Result<()> {
    writeln!(w, "t,y,event")?;
    for (s, e) in traj.states.iter().zip(&traj.events) {
        writeln!(w, "{:?},{:?},{}", s.t, s.y, e.as_str())?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::rng::RngStream;

    #[test]
    fn hbar_under_s2_is_gamma1_invariant() {
        let fam = presets::feedback_family(Scaling::S2);
        let reference = JumpDensity::exponential(1.0).unwrap();
        for g in [0.1, 1.0, 10.0, 100.0] {
            let m = fam.instantiate(g).unwrap();
            let hbar = build_hbar(&m.jump, &m.params).unwrap();
            for j in 1..=4 {
                let a = hbar.moment(j).unwrap();
                let b = reference.moment(j).unwrap();
                assert!(((a - b) / b).abs() < 1e-12, "γ₁={g}, j={j}");
            }
        }
    }

    #[test]
    fn hbar_unit_scaling_is_identity() {
        let h = JumpDensity::exponential(0.7).unwrap();
        let p = ModelParams::new(3.0, 1.0, 3.0).unwrap();
        assert_eq!(build_hbar(&h, &p).unwrap(), h);
    }

    #[test]
    fn hbar_moments_scale() {
        let h = JumpDensity::tabulated(0.5, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let p = ModelParams::new(4.0, 1.0, 3.0).unwrap();
        let hbar = build_hbar(&h, &p).unwrap();
        for j in 1..=3 {
            let expected = 0.75f64.powi(j as i32) * h.moment(j).unwrap();
            assert!(((hbar.moment(j).unwrap() - expected) / expected).abs() < 1e-12);
        }
    }

    fn constant_ode(psi: f64) -> ReducedOde {
        ReducedOde {
            gamma2: 0.8,
            lambda2: 2.0,
            production_scale: psi,
            rate: BurstRate::constant(1.0).unwrap(),
        }
    }

    #[test]
    fn ode_matches_linear_closed_form() {
        let m = constant_ode(0.6);
        let y_eq = 2.0 * 0.6 / 0.8;
        let sol = integrate_ode(3.0, 10.0, &m, OdeOptions::default()).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let exact = y_eq + (3.0 - y_eq) * (-0.8 * t).exp();
            assert!((y[0] - exact).abs() <= 1e-8, "t={t}");
        }
    }

    #[test]
    fn ode_fixed_point_stays_put() {
        let m = constant_ode(0.6);
        let y_eq = 1.5;
        let sol = integrate_ode(y_eq, 20.0, &m, OdeOptions::default()).unwrap();
        assert!(sol.states.iter().all(|y| (y[0] - y_eq).abs() < 1e-10));
    }

    #[test]
    fn ode_equilibrium_is_the_mean_protein_level() {
        let model = BurstModel::new(
            ModelParams::new(10.0, 1.0, 2.0).unwrap(),
            BurstRate::constant(2.0).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let m = ReducedOde::from_model(&model);
        let sol = integrate_ode(0.0, 60.0, &m, OdeOptions::default()).unwrap();
        assert!((sol.last()[0] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn ode_stays_in_invariant_interval() {
        let m = ReducedOde::from_model(&presets::feedback_model());
        let (_, psi_max) = m.psi_bounds();
        for y0 in [0.0, 1.0, 9.0] {
            let sol = integrate_ode(y0, 30.0, &m, OdeOptions::default()).unwrap();
            let ceiling = (m.lambda2 * psi_max / m.gamma2).max(y0);
            assert!(sol.states.iter().all(|y| y[0] >= 0.0 && y[0] <= ceiling + 1e-12));
        }
    }

    #[test]
    fn s1_equilibrium_is_gamma1_invariant() {
        let fam = presets::feedback_family(Scaling::S1);
        let ends: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&g| {
                let m = ReducedOde::from_model(&fam.instantiate(g).unwrap());
                integrate_ode(0.0, 40.0, &m, OdeOptions::default()).unwrap().last()[0]
            })
            .collect();
        assert!((ends[0] - ends[1]).abs() < 1e-9 && (ends[0] - ends[2]).abs() < 1e-9);
    }

    #[test]
    fn negative_initial_state_rejected() {
        let m = constant_ode(1.0);
        assert!(matches!(
            integrate_ode(-1.0, 1.0, &m, OdeOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn s1_limit_is_deterministic() {
        assert!(matches!(
            ReducedLimit::of_family(&presets::feedback_family(Scaling::S1)).unwrap(),
            ReducedLimit::Deterministic(_)
        ));
        assert!(matches!(
            ReducedLimit::of_family(&presets::feedback_family(Scaling::S3)).unwrap(),
            ReducedLimit::Bursting(_)
        ));
    }

    #[test]
    fn reduced_decay_before_first_jump() {
        let m = ReducedJumpModel::new(
            1.0,
            BurstRate::constant(1e-9).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_reduced(0.0, 5.0, &m, &[1.0, 5.0], &mut RngStream::new(2, 2)).unwrap();
        assert_eq!(traj.jump_count, 0);
        assert!(traj.states.iter().all(|s| s.y == 0.0));
    }

    #[test]
    fn reduced_determinism() {
        let m = ReducedJumpModel::from_model(&presets::feedback_model()).unwrap();
        let a = simulate_reduced(1.0, 50.0, &m, &[], &mut RngStream::new(8, 1)).unwrap();
        let b = simulate_reduced(1.0, 50.0, &m, &[], &mut RngStream::new(8, 1)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_reduced_csv(&mut buf, &a).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,y,event\n"));
    }
}
