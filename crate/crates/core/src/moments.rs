//! Mixed moments `μ_k = E[Xᵏ]` and `ν_k = E[Y Xᵏ]`.
//!
//! Applying the generator to `xᵏ` and `y xᵏ` gives
//!
//! ```text
//! dμ_k/dt = −kγ₁ μ_k + φ Σ_{i<k} C(k,i) μ_i Eᵏ⁻ⁱh
//! dν_k/dt = −(kγ₁ + γ₂) ν_k + λ₂ μ_{k+1} + φ Σ_{i<k} C(k,i) ν_i Eᵏ⁻ⁱh
//! ```
//!
//! which is closed (and linear) only for a constant burst rate `φ`. For a
//! state-dependent rate the moments are estimated by Monte Carlo; bounding
//! `φ` by its extremes gives two closed systems that envelope `μ_k`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BurstModel, Scaling, ScalingFamily};
use crate::ode::{self, OdeOptions};
use crate::simulator::{self, ensemble, State2D};
use crate::stats::{mean_se, weighted_linear_fit, MeanEstimate};

/// `μ_0..=μ_{K+1}` and `ν_0..=ν_K` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub t: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl MomentVector {
    /// Moments of the deterministic initial state `(x0, y0)` up to order `order`.
    pub fn point_mass(t: f64, x0: f64, y0: f64, order: usize) -> Self {
        let mu: Vec<f64> = (0..=order + 1).map(|k| x0.powi(k as i32)).collect();
        let nu = (0..=order).map(|k| y0 * mu[k]).collect();
        Self { t, mu, nu }
    }

    /// Truncation order `K` of the `ν` hierarchy.
    pub fn order(&self) -> usize {
        self.nu.len() - 1
    }

    fn flatten(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.nu).copied().collect()
    }

    fn unflatten(t: f64, flat: &[f64], order: usize) -> Self {
        Self {
            t,
            mu: flat[..order + 2].to_vec(),
            nu: flat[order + 2..].to_vec(),
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The closed moment hierarchy for a constant burst rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda2: f64,
    pub phi: f64,
    /// `Eʲh` for `j = 0..=K+1`.
    jump_moments: Vec<f64>,
    order: usize,
}

impl MomentSystem {
    /// Errors with [`Error::UnsupportedClosure`] unless the rate is constant.
    pub fn new(model: &BurstModel, order: usize) -> Result<Self> {
        let phi = model.rate.as_constant().ok_or(Error::UnsupportedClosure)?;
        Self::with_rate(model, phi, order)
    }

    /// The hierarchy with `φ` replaced by the constant `phi` (used for the
    /// lower/upper envelopes of a bounded state-dependent rate).
    pub fn with_rate(model: &BurstModel, phi: f64, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::config("order", "truncation order must be at least 1"));
        }
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(Error::config("phi", format!("must be nonnegative, got {phi}")));
        }
        let jump_moments = (0..=order as u32 + 1)
            .map(|j| model.jump.moment(j))
            .collect::<Result<_>>()?;
        Ok(Self {
            gamma1: model.params.gamma1,
            gamma2: model.params.gamma2,
            lambda2: model.params.lambda2,
            phi,
            jump_moments,
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn burst_gain(&self, k: usize, lower: &[f64]) -> f64 {
        (0..k)
            .map(|i| binomial(k, i) * lower[i] * self.jump_moments[k - i])
            .sum::<f64>()
            * self.phi
    }

    fn derivative_into(&self, mu: &[f64], nu: &[f64], dmu: &mut [f64], dnu: &mut [f64]) {
        dmu[0] = 0.0;
        for k in 1..mu.len() {
            dmu[k] = -(k as f64) * self.gamma1 * mu[k] + self.burst_gain(k, mu);
        }
        for k in 0..nu.len() {
            dnu[k] =
                -(k as f64 * self.gamma1 + self.gamma2) * nu[k] + self.lambda2 * mu[k + 1] + self.burst_gain(k, nu);
        }
    }

    /// Exact time derivative of every tracked moment.
    pub fn rhs(&self, m: &MomentVector) -> Result<MomentVector> {
        self.check_shape(m)?;
        let mut d = MomentVector {
            t: m.t,
            mu: vec![0.0; m.mu.len()],
            nu: vec![0.0; m.nu.len()],
        };
        self.derivative_into(&m.mu, &m.nu, &mut d.mu, &mut d.nu);
        Ok(d)
    }

    fn check_shape(&self, m: &MomentVector) -> Result<()> {
        if m.mu.len() != self.order + 2 || m.nu.len() != self.order + 1 {
            return Err(Error::config(
                "moments",
                format!("expected {} μ and {} ν entries", self.order + 2, self.order + 1),
            ));
        }
        Ok(())
    }

    /// Fixed point of the hierarchy, solved order by order.
    pub fn stationary(&self) -> MomentVector {
        let mut mu = vec![0.0; self.order + 2];
        mu[0] = 1.0;
        for k in 1..mu.len() {
            mu[k] = self.burst_gain(k, &mu) / (k as f64 * self.gamma1);
        }
        let mut nu = vec![0.0; self.order + 1];
        for k in 0..nu.len() {
            nu[k] = (self.lambda2 * mu[k + 1] + self.burst_gain(k, &nu)) / (k as f64 * self.gamma1 + self.gamma2);
        }
        MomentVector {
            t: f64::INFINITY,
            mu,
            nu,
        }
    }

    /// Integrates from `m0` to `m0.t + horizon`, reporting the moments at
    /// each absolute time in `outputs` (or at every accepted step if empty).
    pub fn integrate(
        &self,
        m0: &MomentVector,
        horizon: f64,
        outputs: &[f64],
        opts: OdeOptions,
    ) -> Result<Vec<MomentVector>> {
        self.check_shape(m0)?;
        let n_mu = self.order + 2;
        let sol = ode::solve(
            |_, y, dy| {
                let (dmu, dnu) = dy.split_at_mut(n_mu);
                self.derivative_into(&y[..n_mu], &y[n_mu..], dmu, dnu);
            },
            m0.t,
            &m0.flatten(),
            m0.t + horizon,
            outputs,
            opts,
        )?;
        Ok(sol
            .times
            .iter()
            .zip(&sol.states)
            .map(|(&t, s)| MomentVector::unflatten(t, s, self.order))
            .collect())
    }
}

/// Time derivative of the moments of `model`, which must have a constant rate.
pub fn moment_ode_rhs(m: &MomentVector, model: &BurstModel) -> Result<MomentVector> {
    MomentSystem::new(model, m.order())?.rhs(m)
}

pub fn integrate_moments(
    m0: &MomentVector,
    horizon: f64,
    model: &BurstModel,
    opts: OdeOptions,
) -> Result<Vec<MomentVector>> {
    MomentSystem::new(model, m0.order())?.integrate(m0, horizon, &[], opts)
}

/// Monte Carlo moments with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub t: f64,
    /// `μ_0..=μ_K`.
    pub mu: Vec<MeanEstimate>,
    /// `ν_0..=ν_K`.
    pub nu: Vec<MeanEstimate>,
    pub replicas: usize,
}

impl MomentEstimate {
    pub fn get(&self, name: MomentName) -> Option<&MeanEstimate> {
        match name {
            MomentName::Mu(k) => self.mu.get(k as usize),
            MomentName::Nu(k) => self.nu.get(k as usize),
        }
    }
}

/// Sample moments of independent states.
pub fn moments_from_states(t: f64, states: &[State2D], k_max: usize) -> MomentEstimate {
    let mut mu = Vec::with_capacity(k_max + 1);
    let mut nu = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let xk: Vec<f64> = states.iter().map(|s| s.x.powi(k as i32)).collect();
        let yxk: Vec<f64> = states.iter().zip(&xk).map(|(s, xk)| s.y * xk).collect();
        mu.push(mean_se(&xk));
        nu.push(mean_se(&yxk));
    }
    MomentEstimate {
        t,
        mu,
        nu,
        replicas: states.len(),
    }
}

/// States at time `s0.t + t` of `n_replicas` independent replicas
/// (streams `block_id(block, 0..n)`).
pub fn ensemble_states(
    model: &BurstModel,
    s0: State2D,
    t: f64,
    n_replicas: usize,
    seed: u64,
    block: u32,
) -> Result<Vec<State2D>> {
    ensemble(seed, block, n_replicas, |mut rng| {
        simulator::state_at(model, s0, t, &mut rng)
    })
}

pub fn estimate_moments_mc(
    model: &BurstModel,
    s0: State2D,
    t: f64,
    k_max: usize,
    n_replicas: usize,
    seed: u64,
    block: u32,
) -> Result<MomentEstimate> {
    if n_replicas < 2 {
        return Err(Error::config("replicas", "need at least two replicas"));
    }
    let states = ensemble_states(model, s0, t, n_replicas, seed, block)?;
    Ok(moments_from_states(s0.t + t, &states, k_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MomentName {
    Mu(u32),
    Nu(u32),
}

impl fmt::Display for MomentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentName::Mu(k) => write!(f, "mu{k}"),
            MomentName::Nu(k) => write!(f, "nu{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Bounded,
    PowerLaw,
}

/// Slopes with `|slope|` below this are classified as bounded.
pub const BOUNDED_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub moment: MomentName,
    pub slope: f64,
    pub stderr: f64,
    /// 95% confidence interval.
    pub ci: (f64, f64),
    pub class: ScalingClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub scaling: Scaling,
    pub t: f64,
    pub gamma1_grid: Vec<f64>,
    pub estimates: Vec<MomentEstimate>,
    pub slopes: Vec<SlopeFit>,
}

impl ScalingReport {
    pub fn slope(&self, name: MomentName) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.moment == name)
    }
}

/// Log-log weighted least-squares slope of `estimates` against `gamma1`,
/// weighting each point by the inverse variance of `log10(estimate)`.
pub fn fit_slope(name: MomentName, gamma1: &[f64], estimates: &[MeanEstimate]) -> Result<SlopeFit> {
    let x: Vec<f64> = gamma1.iter().map(|g| g.log10()).collect();
    let mut y = Vec::with_capacity(estimates.len());
    let mut w = Vec::with_capacity(estimates.len());
    for (g, e) in gamma1.iter().zip(estimates) {
        if !(e.mean > 0.0) {
            return Err(Error::numeric(format!(
                "{name} estimate at γ₁ = {g} is not positive ({})",
                e.mean
            )));
        }
        y.push(e.mean.log10());
        let sd_log = e.stderr / (e.mean * std::f64::consts::LN_10);
        // Exact estimates (e.g. μ₀) carry no sampling noise; give them unit weight.
        w.push(if sd_log > 0.0 { 1.0 / (sd_log * sd_log) } else { 1.0 });
    }
    let uniform = w.iter().all(|&w| w == 1.0);
    let fit = weighted_linear_fit(&x, &y, &w)?;
    let stderr = if uniform { 0.0 } else { fit.slope_stderr };
    Ok(SlopeFit {
        moment: name,
        slope: fit.slope,
        stderr,
        ci: (fit.slope - 1.96 * stderr, fit.slope + 1.96 * stderr),
        class: if fit.slope.abs() < BOUNDED_SLOPE {
            ScalingClass::Bounded
        } else {
            ScalingClass::PowerLaw
        },
    })
}

/// Options for [`fit_scaling_exponents`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingOptions {
    pub k_max: usize,
    /// Evaluation time; `5/γ₂` when `None`.
    pub t: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub initial: State2D,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            k_max: 2,
            t: None,
            replicas: 100_000,
            seed: 0,
            initial: State2D::origin(),
        }
    }
}

/// Estimates `μ_k(t)` and `ν_k(t)` along `family` at every `γ₁` of the grid
/// and fits their log-log slopes.
pub fn fit_scaling_exponents(
    family: &ScalingFamily,
    gamma1_grid: &[f64],
    opts: ScalingOptions,
) -> Result<ScalingReport> {
    if gamma1_grid.len() < 3 {
        return Err(Error::config("gamma1", "scaling fit needs at least three γ₁ values"));
    }
    if gamma1_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::config("gamma1", "γ₁ values must be positive"));
    }
    let lo = gamma1_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = gamma1_grid.iter().copied().fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::config("gamma1", "γ₁ grid must span at least two decades"));
    }
    if opts.replicas < 8 {
        return Err(Error::config(
            "replicas",
            "confidence intervals need at least 8 replicas",
        ));
    }
    if opts.k_max < 1 {
        return Err(Error::config("k_max", "must be at least 1"));
    }
    let t = opts.t.unwrap_or(5.0 / family.base.params.gamma2);
    let mut estimates = Vec::with_capacity(gamma1_grid.len());
    for (i, &g) in gamma1_grid.iter().enumerate() {
        let model = family.instantiate(g)?;
        estimates.push(estimate_moments_mc(
            &model,
            opts.initial,
            t,
            opts.k_max,
            opts.replicas,
            opts.seed,
            i as u32,
        )?);
    }
    let mut slopes = Vec::new();
    let names = (1..=opts.k_max as u32)
        .map(MomentName::Mu)
        .chain((0..=opts.k_max as u32).map(MomentName::Nu));
    for name in names {
        let series: Vec<MeanEstimate> = estimates.iter().map(|e| *e.get(name).expect("within k_max")).collect();
        slopes.push(fit_slope(name, gamma1_grid, &series)?);
    }
    Ok(ScalingReport {
        scaling: family.scaling,
        t,
        gamma1_grid: gamma1_grid.to_vec(),
        estimates,
        slopes,
    })
}
