//! Model parameters, feedback burst rates, burst-size densities and the
//! `γ₁`-scaling families.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Degradation and translation rates of the two-stage model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// mRNA degradation rate.
    pub gamma1: f64,
    /// Protein degradation rate.
    pub gamma2: f64,
    /// Translation rate.
    pub lambda2: f64,
}

impl ModelParams {
    pub fn new(gamma1: f64, gamma2: f64, lambda2: f64) -> Result<Self> {
        let p = Self {
            gamma1,
            gamma2,
            lambda2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("gamma1", self.gamma1)?;
        ensure_positive("gamma2", self.gamma2)?;
        ensure_positive("lambda2", self.lambda2)
    }
}

/// Functional form of the burst rate `φ(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateKind {
    /// `φ(y) = φ₀ (1 + K yⁿ) / (A + B yⁿ)`.
    Hill {
        phi0: f64,
        k: f64,
        a: f64,
        b: f64,
        n: f64,
    },
    Constant {
        phi0: f64,
    },
    /// Linear interpolation of `values` on the grid `i·dy`, held constant
    /// past the last node.
    Tabulated {
        dy: f64,
        values: Vec<f64>,
    },
}

/// Burst rate `φ(y)` together with certified bounds `lower ≤ φ ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstRate {
    kind: RateKind,
    lower: f64,
    upper: f64,
}

impl BurstRate {
    pub fn hill(phi0: f64, k: f64, a: f64, b: f64, n: f64) -> Result<Self> {
        for (field, v) in [("phi0", phi0), ("K", k), ("A", a), ("B", b), ("n", n)] {
            ensure_positive(field, v)?;
        }
        // (1 + K x) / (A + B x) is monotone in x = yⁿ, so the extremes are
        // the value at y = 0 and the limit y → ∞.
        let at_zero = phi0 / a;
        let at_infinity = phi0 * k / b;
        Ok(Self {
            kind: RateKind::Hill { phi0, k, a, b, n },
            lower: at_zero.min(at_infinity),
            upper: at_zero.max(at_infinity),
        })
    }

    /// A constant rate. Zero is accepted and describes a model without bursts.
    pub fn constant(phi0: f64) -> Result<Self> {
        if !(phi0.is_finite() && phi0 >= 0.0) {
            return Err(Error::config(
                "phi0",
                format!("must be nonnegative and finite, got {phi0}"),
            ));
        }
        Ok(Self {
            kind: RateKind::Constant { phi0 },
            lower: phi0,
            upper: phi0,
        })
    }

    /// A tabulated rate with caller-supplied bounds, checked on the nodes and
    /// on a refined sampling grid.
    pub fn tabulated(dy: f64, values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        ensure_positive("dy", dy)?;
        if values.is_empty() {
            return Err(Error::config("values", "tabulated rate needs at least one node"));
        }
        ensure_positive("lower_bound", lower)?;
        if !(upper.is_finite() && upper >= lower) {
            return Err(Error::config(
                "upper_bound",
                format!("must be finite and ≥ lower bound, got {upper}"),
            ));
        }
        let rate = Self {
            kind: RateKind::Tabulated { dy, values },
            lower,
            upper,
        };
        let span = dy * (rate.node_count() as f64);
        let samples = 8 * rate.node_count() + 64;
        for i in 0..=samples {
            let y = span * i as f64 / samples as f64;
            let v = rate.value(y);
            if !(v >= lower && v <= upper) {
                return Err(Error::config(
                    "values",
                    format!("φ({y}) = {v} escapes [{lower}, {upper}]"),
                ));
            }
        }
        Ok(rate)
    }

    pub fn from_kind(kind: RateKind) -> Result<Self> {
        match kind {
            RateKind::Hill { phi0, k, a, b, n } => Self::hill(phi0, k, a, b, n),
            RateKind::Constant { phi0 } => Self::constant(phi0),
            RateKind::Tabulated { dy, values } => {
                let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
                let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Self::tabulated(dy, values, lower, upper)
            }
        }
    }

    fn node_count(&self) -> usize {
        match &self.kind {
            RateKind::Tabulated { values, .. } => values.len(),
            _ => 0,
        }
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// The rate value when `φ` does not depend on `y`.
    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            RateKind::Constant { phi0 } => Some(phi0),
            _ => None,
        }
    }

    /// Evaluates `φ(y)`; `y` must be nonnegative.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("burst rate evaluated at y = {y}")));
        }
        Ok(self.value(y))
    }

    /// Unchecked evaluation for the simulation hot path (`y ≥ 0`).
    #[inline]
    pub(crate) fn value(&self, y: f64) -> f64 {
        match &self.kind {
            RateKind::Constant { phi0 } => *phi0,
            RateKind::Hill { phi0, k, a, b, n } => {
                if y.is_infinite() {
                    return phi0 * k / b;
                }
                let yn = pow(y, *n);
                if yn.is_infinite() {
                    return phi0 * k / b;
                }
                phi0 * (1.0 + k * yn) / (a + b * yn)
            }
            RateKind::Tabulated { dy, values } => {
                let pos = y / dy;
                let i = pos.floor();
                if i >= (values.len() - 1) as f64 {
                    return values[values.len() - 1];
                }
                let i = i as usize;
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }

    /// `c·φ`, with bounds scaled alongside.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::config(
                "factor",
                format!("rate scale must be nonnegative, got {factor}"),
            ));
        }
        let kind = match &self.kind {
            RateKind::Hill { phi0, k, a, b, n } => RateKind::Hill {
                phi0: phi0 * factor,
                k: *k,
                a: *a,
                b: *b,
                n: *n,
            },
            RateKind::Constant { phi0 } => RateKind::Constant { phi0: phi0 * factor },
            RateKind::Tabulated { dy, values } => RateKind::Tabulated {
                dy: *dy,
                values: values.iter().map(|v| v * factor).collect(),
            },
        };
        Ok(Self {
            kind,
            lower: self.lower * factor,
            upper: self.upper * factor,
        })
    }
}

#[inline]
fn pow(y: f64, n: f64) -> f64 {
    if n.fract() == 0.0 && n <= 64.0 {
        y.powi(n as i32)
    } else {
        y.powf(n)
    }
}

/// Functional form of a burst-size density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpKind {
    Exponential {
        mean: f64,
    },
    /// Linear interpolation of `values` on the nodes `i·dx`, zero outside.
    Tabulated {
        dx: f64,
        values: Vec<f64>,
    },
}

const MEMO_ORDERS: usize = 17;

/// Burst-size density `h` on `[0, ∞)`.
#[derive(Debug, Clone)]
pub struct JumpDensity {
    kind: JumpKind,
    /// Cumulative mass at each node (tabulated only).
    cumulative: Arc<Vec<f64>>,
    moments: Arc<[OnceLock<f64>; MEMO_ORDERS]>,
}

impl PartialEq for JumpDensity {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl JumpDensity {
    pub fn exponential(mean: f64) -> Result<Self> {
        ensure_positive("mean", mean)?;
        Ok(Self::with_kind(JumpKind::Exponential { mean }, Vec::new()))
    }

    /// A tabulated density. The nodes must be nonnegative and integrate
    /// (trapezoidal rule, exact for the interpolant) to one within 1e-6.
    pub fn tabulated(dx: f64, values: Vec<f64>) -> Result<Self> {
        ensure_positive("dx", dx)?;
        if values.len() < 2 {
            return Err(Error::config("values", "tabulated density needs at least two nodes"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config(
                "values",
                format!("density values must be nonnegative, got {v}"),
            ));
        }
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-6 {
            return Err(Error::config("values", format!("density integrates to {acc}, not 1")));
        }
        Ok(Self::with_kind(JumpKind::Tabulated { dx, values }, cumulative))
    }

    /// Like [`JumpDensity::tabulated`] but rescales the values to unit mass.
    pub fn tabulated_normalized(dx: f64, mut values: Vec<f64>) -> Result<Self> {
        ensure_positive("dx", dx)?;
        let mass: f64 = values.windows(2).map(|w| 0.5 * dx * (w[0] + w[1])).sum();
        ensure_positive("mass", mass)?;
        values.iter_mut().for_each(|v| *v /= mass);
        Self::tabulated(dx, values)
    }

    pub fn from_kind(kind: JumpKind) -> Result<Self> {
        match kind {
            JumpKind::Exponential { mean } => Self::exponential(mean),
            JumpKind::Tabulated { dx, values } => Self::tabulated(dx, values),
        }
    }

    fn with_kind(kind: JumpKind, cumulative: Vec<f64>) -> Self {
        Self {
            kind,
            cumulative: Arc::new(cumulative),
            moments: Arc::new(std::array::from_fn(|_| OnceLock::new())),
        }
    }

    pub fn kind(&self) -> &JumpKind {
        &self.kind
    }

    /// Mean burst size `b`.
    pub fn mean(&self) -> f64 {
        match self.kind {
            JumpKind::Exponential { mean } => mean,
            JumpKind::Tabulated { .. } => self.moment(1).expect("first moment of a tabulated density"),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.kind {
            JumpKind::Exponential { mean } => (-x / mean).exp() / mean,
            JumpKind::Tabulated { dx, values } => {
                let pos = x / dx;
                let i = pos.floor() as usize;
                if i + 1 >= values.len() {
                    return if pos == (values.len() - 1) as f64 {
                        values[values.len() - 1]
                    } else {
                        0.0
                    };
                }
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            JumpKind::Exponential { mean } => -(-x / mean).exp_m1(),
            JumpKind::Tabulated { dx, values } => {
                let pos = x / dx;
                let i = pos.floor() as usize;
                if i + 1 >= values.len() {
                    return *self.cumulative.last().expect("nonempty");
                }
                let s = x - i as f64 * dx;
                let slope = (values[i + 1] - values[i]) / dx;
                self.cumulative[i] + values[i] * s + 0.5 * slope * s * s
            }
        }
    }

    /// Raw moment `∫ xʲ h(x) dx`.
    pub fn moment(&self, j: u32) -> Result<f64> {
        if j == 0 {
            return Ok(1.0);
        }
        if let Some(cell) = self.moments.get(j as usize) {
            if let Some(v) = cell.get() {
                return Ok(*v);
            }
            let v = self.compute_moment(j)?;
            return Ok(*cell.get_or_init(|| v));
        }
        self.compute_moment(j)
    }

    fn compute_moment(&self, j: u32) -> Result<f64> {
        match &self.kind {
            JumpKind::Exponential { mean } => {
                let factorial: f64 = (1..=j).map(f64::from).product();
                Ok(factorial * mean.powi(j as i32))
            }
            JumpKind::Tabulated { dx, values } => tabulated_moment(*dx, values, j),
        }
    }

    /// Density of `c·ΔX` when `ΔX ~ h`, i.e. `x ↦ h(x/c)/c`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ensure_positive("factor", factor)?;
        match &self.kind {
            JumpKind::Exponential { mean } => Self::exponential(mean * factor),
            JumpKind::Tabulated { dx, values } => {
                let values: Vec<f64> = values.iter().map(|v| v / factor).collect();
                let mut cumulative = Vec::with_capacity(values.len());
                let dx = dx * factor;
                let mut acc = 0.0;
                cumulative.push(0.0);
                for w in values.windows(2) {
                    acc += 0.5 * dx * (w[0] + w[1]);
                    cumulative.push(acc);
                }
                Ok(Self::with_kind(JumpKind::Tabulated { dx, values }, cumulative))
            }
        }
    }

    /// Draws one burst size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            JumpKind::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            JumpKind::Tabulated { dx, values } => {
                let total = *self.cumulative.last().expect("nonempty");
                let target = rng.random::<f64>() * total;
                let i = self.cumulative.partition_point(|&c| c <= target).saturating_sub(1);
                let i = i.min(values.len() - 2);
                let rem = target - self.cumulative[i];
                let f0 = values[i];
                let slope = (values[i + 1] - values[i]) / dx;
                // Solve f0·s + slope·s²/2 = rem for s in [0, dx].
                let s = if slope.abs() < 1e-300 {
                    if f0 > 0.0 {
                        rem / f0
                    } else {
                        0.0
                    }
                } else {
                    let disc = (f0 * f0 + 2.0 * slope * rem).max(0.0);
                    2.0 * rem / (f0 + disc.sqrt())
                };
                (i as f64 * dx + s.clamp(0.0, *dx)).max(0.0)
            }
        }
    }
}

/// Romberg-extrapolated composite trapezoid of `xʲ h(x)` over the support of
/// the interpolant, refining each cell until successive diagonals agree.
fn tabulated_moment(dx: f64, values: &[f64], j: u32) -> Result<f64> {
    let integrand = |x: f64, f: f64| x.powi(j as i32) * f;
    let trapezoid = |sub: usize| -> f64 {
        let h = dx / sub as f64;
        let mut acc = 0.0;
        for (i, w) in values.windows(2).enumerate() {
            let x0 = i as f64 * dx;
            for s in 0..sub {
                let t0 = s as f64 / sub as f64;
                let t1 = (s + 1) as f64 / sub as f64;
                let f0 = w[0] + t0 * (w[1] - w[0]);
                let f1 = w[0] + t1 * (w[1] - w[0]);
                acc += 0.5 * h * (integrand(x0 + t0 * dx, f0) + integrand(x0 + t1 * dx, f1));
            }
        }
        acc
    };
    const LEVELS: usize = 10;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
    let mut residual = f64::INFINITY;
    for level in 0..LEVELS {
        let mut row = vec![trapezoid(1 << level)];
        for m in 1..=level {
            let factor = 4f64.powi(m as i32);
            let prev = &table[level - 1];
            let refined = (factor * row[m - 1] - prev[m - 1]) / (factor - 1.0);
            row.push(refined);
        }
        if level > 0 {
            let current = row[level];
            residual = (current - table[level - 1][level - 1]).abs();
            if residual <= 1e-13 * current.abs() + 1e-300 {
                return Ok(current);
            }
        }
        table.push(row);
    }
    Err(Error::Numeric {
        message: format!("moment of order {j} of tabulated density did not converge"),
        residual: Some(residual),
    })
}

/// Complete model: parameters, burst rate and burst-size density.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstModel {
    pub params: ModelParams,
    pub rate: BurstRate,
    pub jump: JumpDensity,
}

impl BurstModel {
    pub fn new(params: ModelParams, rate: BurstRate, jump: JumpDensity) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, rate, jump })
    }

    /// Stationary `(E[X], E[Y]) = (bφ/γ₁, bφλ₂/(γ₁γ₂))`, available for a
    /// constant burst rate.
    pub fn stationary_means(&self) -> Option<(f64, f64)> {
        let phi = self.rate.as_constant()?;
        let x = self.jump.mean() * phi / self.params.gamma1;
        Some((x, self.params.lambda2 * x / self.params.gamma2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scaling {
    /// Burst rate grows with `γ₁` (`φ/γ₁` fixed).
    S1,
    /// Burst size grows with `γ₁` (`h(x) = h₀(x/γ₁)/γ₁`).
    S2,
    /// Translation rate grows with `γ₁` (`λ₂/γ₁` fixed).
    S3,
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scaling::S1 => "S1",
            Scaling::S2 => "S2",
            Scaling::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Scaling::S1),
            "S2" => Ok(Scaling::S2),
            "S3" => Ok(Scaling::S3),
            other => Err(Error::config("scaling", format!("unknown scaling family `{other}`"))),
        }
    }
}

/// A model given at a reference `γ₁` and extended to other `γ₁` values so
/// that the mean protein level stays fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFamily {
    pub scaling: Scaling,
    /// The model at `base.params.gamma1`.
    pub base: BurstModel,
}

impl ScalingFamily {
    pub fn new(scaling: Scaling, base: BurstModel) -> Self {
        Self { scaling, base }
    }

    pub fn reference_gamma1(&self) -> f64 {
        self.base.params.gamma1
    }

    /// The concrete model at `gamma1`.
    pub fn instantiate(&self, gamma1: f64) -> Result<BurstModel> {
        ensure_positive("gamma1", gamma1)?;
        let ratio = gamma1 / self.reference_gamma1();
        let base = &self.base;
        let mut params = base.params;
        params.gamma1 = gamma1;
        let (rate, jump) = match self.scaling {
            Scaling::S1 => (base.rate.scaled(ratio)?, base.jump.clone()),
            Scaling::S2 => (base.rate.clone(), base.jump.scaled(ratio)?),
            Scaling::S3 => {
                params.lambda2 = base.params.lambda2 * ratio;
                (base.rate.clone(), base.jump.clone())
            }
        };
        BurstModel::new(params, rate, jump)
    }
}

/// Parameters of the reference feedback experiment: Hill rate with
/// `φ₀ = 5, K = 1, A = 4, B = 1, n = 4`, `γ₂ = 1`, `λ₂ = 2` and exponential
/// bursts of mean `γ₁/2`.
pub mod presets {
    use super::*;

    pub fn hill_feedback_rate() -> BurstRate {
        BurstRate::hill(5.0, 1.0, 4.0, 1.0, 4.0).expect("valid preset")
    }

    /// Feedback model at `γ₁ = 1` (burst mean `1/2`).
    pub fn feedback_model() -> BurstModel {
        BurstModel::new(
            ModelParams::new(1.0, 1.0, 2.0).expect("valid preset"),
            hill_feedback_rate(),
            JumpDensity::exponential(0.5).expect("valid preset"),
        )
        .expect("valid preset")
    }

    pub fn feedback_family(scaling: Scaling) -> ScalingFamily {
        ScalingFamily::new(scaling, feedback_model())
    }

    /// The `γ₁` values of the reference sweep.
    pub const GAMMA1_SWEEP: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    use crate::quadrature::{integrate_to_infinity, Tolerance};

    #[test]
    fn hill_rate_values() {
        let rate = presets::hill_feedback_rate();
        assert_eq!(rate.eval(0.0).unwrap(), 1.25);
        assert!((rate.eval(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((rate.eval(1e6).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(rate.eval(f64::INFINITY).unwrap(), 5.0);
        assert_eq!(rate.lower_bound(), 1.25);
        assert_eq!(rate.upper_bound(), 5.0);
    }

    #[test]
    fn negative_concentration_is_a_domain_error() {
        let rate = presets::hill_feedback_rate();
        assert!(matches!(rate.eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_nonpositive_hill_parameters() {
        assert!(BurstRate::hill(5.0, 0.0, 4.0, 1.0, 4.0).is_err());
        assert!(BurstRate::hill(5.0, 1.0, 4.0, -1.0, 4.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_rate_bounds_are_checked() {
        assert!(BurstRate::tabulated(0.5, vec![1.0, 2.0, 3.0], 1.0, 3.0).is_ok());
        assert!(BurstRate::tabulated(0.5, vec![1.0, 2.0, 3.0], 1.0, 2.5).is_err());
        let r = BurstRate::tabulated(0.5, vec![1.0, 2.0, 3.0], 1.0, 3.0).unwrap();
        assert_eq!(r.eval(0.25).unwrap(), 1.5);
        assert_eq!(r.eval(100.0).unwrap(), 3.0);
    }

    #[test]
    fn exponential_moments() {
        let h = JumpDensity::exponential(2.0).unwrap();
        assert_eq!(h.moment(0).unwrap(), 1.0);
        assert_eq!(h.moment(1).unwrap(), 2.0);
        assert_eq!(h.moment(2).unwrap(), 8.0);
        assert_eq!(h.mean(), 2.0);
    }

    #[test]
    fn exponential_moments_match_quadrature() {
        for b in [0.5, 2.0] {
            let h = JumpDensity::exponential(b).unwrap();
            for j in 0..=8u32 {
                let q = integrate_to_infinity(
                    |x| x.powi(j as i32) * (-x / b).exp() / b,
                    0.0,
                    Tolerance::new(0.0, 1e-12),
                )
                .unwrap()
                .value;
                let m = h.moment(j).unwrap();
                assert!(((q - m) / m).abs() < 1e-8, "b={b} j={j}: {q} vs {m}");
            }
        }
    }

    fn triangle() -> JumpDensity {
        // Triangle on [0, 2] peaking at 1.
        JumpDensity::tabulated(1.0, vec![0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn tabulated_density_moments() {
        let h = triangle();
        assert!((h.moment(1).unwrap() - 1.0).abs() < 1e-12);
        // E[X²] of the symmetric triangle on [0,2] is 1 + 1/6.
        assert!((h.moment(2).unwrap() - 7.0 / 6.0).abs() < 1e-12);
        assert!((h.cdf(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(h.cdf(5.0), 1.0);
        assert_eq!(h.pdf(3.0), 0.0);
    }

    #[test]
    fn tabulated_density_must_be_normalized() {
        assert!(JumpDensity::tabulated(1.0, vec![0.0, 2.0, 0.0]).is_err());
        let h = JumpDensity::tabulated_normalized(1.0, vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(h, triangle());
        assert!(JumpDensity::tabulated(1.0, vec![0.5, -0.5, 1.5]).is_err());
    }

    #[test]
    fn tabulated_sampling_matches_mean() {
        let h = triangle().scaled(3.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| h.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&d| (0.0..=6.0).contains(&d)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (h.moment(2).unwrap() - 9.0).sqrt();
        assert!((mean - 3.0).abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn scaled_density_moments() {
        let h = triangle();
        let s = h.scaled(2.5).unwrap();
        for j in 1..=4u32 {
            let expected = 2.5f64.powi(j as i32) * h.moment(j).unwrap();
            assert!(((s.moment(j).unwrap() - expected) / expected).abs() < 1e-12);
        }
    }

    #[test]
    fn s2_family_burst_mean_grows_with_gamma1() {
        let fam = presets::feedback_family(Scaling::S2);
        let m = fam.instantiate(100.0).unwrap();
        assert_eq!(m.jump, JumpDensity::exponential(50.0).unwrap());
        assert_eq!(m.rate, fam.base.rate);
        assert_eq!(m.params.lambda2, 2.0);
    }

    #[test]
    fn s1_family_scales_rate() {
        let c = 0.3;
        let base = BurstModel::new(
            ModelParams::new(1.0, 1.0, 2.0).unwrap(),
            BurstRate::constant(c).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let m = ScalingFamily::new(Scaling::S1, base).instantiate(10.0).unwrap();
        assert!((m.rate.as_constant().unwrap() - 10.0 * c).abs() < 1e-15);
        assert_eq!(m.jump.mean(), 1.0);
    }

    #[test]
    fn s3_family_scales_translation() {
        let base = BurstModel::new(
            ModelParams::new(1.0, 1.0, 2.0).unwrap(),
            BurstRate::constant(1.0).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let m = ScalingFamily::new(Scaling::S3, base).instantiate(50.0).unwrap();
        assert_eq!(m.params.lambda2, 100.0);
    }

    #[test]
    fn scaling_parses() {
        assert_eq!("s2".parse::<Scaling>().unwrap(), Scaling::S2);
        assert!("S4".parse::<Scaling>().is_err());
    }

    proptest! {
        #[test]
        fn hill_rate_stays_within_bounds(
            phi0 in 0.1f64..10.0, k in 0.1f64..5.0, a in 0.1f64..5.0, b in 0.1f64..5.0,
            n in 0.5f64..6.0, y in 0.0f64..50.0,
        ) {
            let rate = BurstRate::hill(phi0, k, a, b, n).unwrap();
            let v = rate.eval(y).unwrap();
            let slack = 1e-12 * rate.upper_bound();
            prop_assert!(v >= rate.lower_bound() - slack && v <= rate.upper_bound() + slack);
            prop_assert!(rate.lower_bound() > 0.0);
        }

        #[test]
        fn protein_mean_is_invariant_along_families(
            g_a in 0.05f64..500.0, g_b in 0.05f64..500.0, phi in 0.1f64..10.0, b in 0.1f64..5.0,
            fam in prop_oneof![Just(Scaling::S1), Just(Scaling::S2), Just(Scaling::S3)],
        ) {
            let base = BurstModel::new(
                ModelParams::new(1.0, 1.3, 2.0).unwrap(),
                BurstRate::constant(phi).unwrap(),
                JumpDensity::exponential(b).unwrap(),
            ).unwrap();
            let fam = ScalingFamily::new(fam, base);
            let (_, ya) = fam.instantiate(g_a).unwrap().stationary_means().unwrap();
            let (_, yb) = fam.instantiate(g_b).unwrap().stationary_means().unwrap();
            prop_assert!(((ya - yb) / ya).abs() < 1e-12);
        }
    }
}
