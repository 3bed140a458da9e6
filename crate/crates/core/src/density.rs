//! Density-level tools for the protein marginal: histograms, the closed-form
//! stationary density of the reduced bursting process, a finite-volume
//! solver for its density equation
//!
//! ```text
//! ∂v/∂t = ∂/∂y[γ₂ y v] + ∫₀^y φ(z) v(z) h̄(y − z) dz − φ(y) v(y)
//! ```
//!
//! and `L¹`/`L²`/`L∞` distances between binned densities.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JumpDensity, JumpKind, RateKind};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::reduced::ReducedJumpModel;

/// Piecewise-constant density on uniform bins over `[0, y_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub y_max: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(y_max: f64, values: Vec<f64>) -> Result<Self> {
        crate::error::ensure_positive("y_max", y_max)?;
        if values.is_empty() {
            return Err(Error::config("n_bins", "density grid needs at least one bin"));
        }
        Ok(Self { y_max, values })
    }

    pub fn zeros(y_max: f64, n_bins: usize) -> Result<Self> {
        Self::new(y_max, vec![0.0; n_bins])
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn dy(&self) -> f64 {
        self.y_max / self.values.len() as f64
    }

    pub fn left(&self, i: usize) -> f64 {
        i as f64 * self.dy()
    }

    pub fn right(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dy()
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dy()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dy()
    }

    pub fn mean(&self) -> f64 {
        (0..self.n_bins()).map(|i| self.center(i) * self.values[i]).sum::<f64>() * self.dy()
    }

    /// Rescales to unit mass.
    pub fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::numeric(format!("cannot normalize a density of mass {mass}")));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    }

    pub fn same_grid(&self, other: &DensityGrid) -> bool {
        self.n_bins() == other.n_bins() && (self.y_max - other.y_max).abs() <= 1e-12 * self.y_max
    }

    /// Conservative re-binning of `self` onto the bins of `target`.
    pub fn regrid_like(&self, target: &DensityGrid) -> DensityGrid {
        let mut out = vec![0.0; target.n_bins()];
        let dy = self.dy();
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (target.left(i), target.right(i));
            let first = (lo / dy).floor().max(0.0) as usize;
            let mut mass = 0.0;
            let mut j = first;
            while j < self.n_bins() && self.left(j) < hi {
                let overlap = hi.min(self.right(j)) - lo.max(self.left(j));
                if overlap > 0.0 {
                    mass += overlap * self.values[j];
                }
                j += 1;
            }
            *o = mass / target.dy();
        }
        DensityGrid {
            y_max: target.y_max,
            values: out,
        }
    }

    /// Writes `y_left,y_right,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y_left,y_right,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:?},{:?},{:?}", self.left(i), self.right(i), v)?;
        }
        w.flush()
    }
}

/// Normalized histogram plus the fraction of samples beyond `y_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub grid: DensityGrid,
    pub tail_mass: f64,
    pub n_samples: usize,
}

/// Histogram of `samples` on `n_bins` uniform bins over `[0, y_max]`,
/// normalized over the samples inside the range.
pub fn histogram(samples: &[f64], n_bins: usize, y_max: f64) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::config("samples", "histogram needs at least one sample"));
    }
    if n_bins == 0 {
        return Err(Error::config("n_bins", "must be at least 1"));
    }
    let mut grid = DensityGrid::zeros(y_max, n_bins)?;
    let dy = grid.dy();
    let mut inside = 0usize;
    for &s in samples {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("negative or NaN sample {s}")));
        }
        if s > y_max {
            continue;
        }
        let bin = ((s / dy) as usize).min(n_bins - 1);
        grid.values[bin] += 1.0;
        inside += 1;
    }
    if inside == 0 {
        return Err(Error::DegenerateHistogram {
            count: samples.len(),
            y_max,
        });
    }
    let norm = 1.0 / (inside as f64 * dy);
    grid.values.iter_mut().for_each(|v| *v *= norm);
    Ok(Histogram {
        grid,
        tail_mass: (samples.len() - inside) as f64 / samples.len() as f64,
        n_samples: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Linf => "Linf",
        }
    }
}

/// What to do when two densities live on different bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridPolicy {
    #[default]
    Error,
    /// Conservatively re-bin the second density onto the first one's bins.
    Regrid,
}

/// Distance between two binned densities.
pub fn density_distance(a: &DensityGrid, b: &DensityGrid, norm: Norm, policy: GridPolicy) -> Result<f64> {
    let regridded;
    let b = if a.same_grid(b) {
        b
    } else {
        match policy {
            GridPolicy::Error => {
                return Err(Error::GridMismatch(format!(
                    "{} bins on [0, {}] vs {} bins on [0, {}]",
                    a.n_bins(),
                    a.y_max,
                    b.n_bins(),
                    b.y_max
                )))
            }
            GridPolicy::Regrid => {
                regridded = b.regrid_like(a);
                &regridded
            }
        }
    };
    let dy = a.dy();
    let diffs = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum::<f64>() * dy,
        Norm::L2 => (diffs.map(|d| d * d).sum::<f64>() * dy).sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

/// Distance from a binned density to the bin averages of `law`.
pub fn distance_to_law(a: &DensityGrid, law: &StationaryLaw, norm: Norm) -> Result<f64> {
    let reference = law.bin_averages(a.y_max, a.n_bins())?;
    density_distance(a, &reference, norm, GridPolicy::Error)
}

/// Stationary density of the reduced bursting process with exponential
/// protein bursts of mean `b̄`:
///
/// ```text
/// v(y) = C · y^{α−1} · (A + B yⁿ)^β · e^{−y/b̄}
/// α = φ(0)/γ₂,   β = φ₀(K − B/A) / (n B γ₂)
/// ```
///
/// obtained from the stationary balance `γ₂ y v(y) = ∫₀^y φ(z) v(z) e^{−(y−z)/b̄} dz`.
/// A constant rate gives `β = 0`, i.e. a Gamma(`φ/γ₂`, `b̄`) law.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pub gamma2: f64,
    /// Exponent `α` of `y^{α−1}`.
    pub alpha: f64,
    /// `(A, B, n, β)` for a Hill rate.
    pub hill: Option<(f64, f64, f64, f64)>,
    /// `b̄`.
    pub scale: f64,
    /// `ln C`.
    pub log_norm: f64,
    rate: crate::model::BurstRate,
}

const LAW_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-12,
    max_intervals: 20_000,
};

impl StationaryLaw {
    /// `ln v(y) − ln C − (α−1) ln y`.
    fn log_smooth_unnormalized(&self, y: f64) -> f64 {
        let hill = match self.hill {
            Some((a, b, n, beta)) => beta * (a + b * y.powf(n)).ln(),
            None => 0.0,
        };
        hill - y / self.scale
    }

    /// `v(y) / y^{α−1}`, smooth on `[0, ∞)`.
    fn smooth(&self, y: f64) -> f64 {
        (self.log_norm + self.log_smooth_unnormalized(y)).exp()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        if y == 0.0 {
            return match self.alpha.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Greater) => 0.0,
                Some(std::cmp::Ordering::Equal) => self.smooth(0.0),
                _ => f64::INFINITY,
            };
        }
        (self.log_norm + (self.alpha - 1.0) * y.ln() + self.log_smooth_unnormalized(y)).exp()
    }

    /// `∫_lo^hi g(y) v(y) dy`. Near zero, `y^{α−1}` with `α < 1` is removed by
    /// the substitution `y = u^{1/α}`.
    pub fn integrate_with<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let alpha = self.alpha;
        if lo == 0.0 && alpha < 1.0 {
            let split = hi.min(self.scale);
            let u_max = split.powf(alpha);
            let head = integrate(
                |u: f64| {
                    let y = u.powf(1.0 / alpha);
                    g(y) * self.smooth(y) / alpha
                },
                0.0,
                u_max,
                LAW_TOL,
            )?
            .value;
            let rest = if hi > split {
                integrate(|y| g(y) * self.pdf(y), split, hi, LAW_TOL)?.value
            } else {
                0.0
            };
            return Ok(head + rest);
        }
        Ok(integrate(|y| g(y) * self.pdf(y), lo, hi, LAW_TOL)?.value)
    }

    /// `∫_y^∞ v`.
    pub fn tail_mass(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(1.0);
        }
        Ok(integrate_to_infinity(|z| self.pdf(z), y, LAW_TOL)?.value)
    }

    /// Smallest `y` (to 1% relative) whose upper tail mass is below `tail`.
    pub fn truncation_point(&self, tail: f64) -> Result<f64> {
        let mut hi = self.scale.max(1e-12);
        while self.tail_mass(hi)? > tail {
            hi *= 2.0;
            if hi > 1e12 * self.scale {
                return Err(Error::numeric("tail of stationary law does not decay"));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 0.01 * hi {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid)? > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Raw moment `∫ yʲ v`.
    pub fn moment(&self, j: u32) -> Result<f64> {
        let split = 50.0 * self.scale.max(1e-300);
        let body = self.integrate_with(|y| y.powi(j as i32), 0.0, split)?;
        let tail = integrate_to_infinity(|y| y.powi(j as i32) * self.pdf(y), split, LAW_TOL)?.value;
        Ok(body + tail)
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    pub fn variance(&self) -> Result<f64> {
        let m = self.mean()?;
        Ok(self.moment(2)? - m * m)
    }

    /// Cell averages of `v` on `n_bins` uniform bins over `[0, y_max]`.
    pub fn bin_averages(&self, y_max: f64, n_bins: usize) -> Result<DensityGrid> {
        let mut grid = DensityGrid::zeros(y_max, n_bins)?;
        let dy = grid.dy();
        for i in 0..n_bins {
            grid.values[i] = self.integrate_with(|_| 1.0, grid.left(i), grid.right(i))? / dy;
        }
        Ok(grid)
    }

    /// Residual of the stationary density equation at `y > 0`:
    /// `d/dy[γ₂ y v] + ∫₀^y φ(z) v(z) h̄(y−z) dz − φ(y) v(y)`.
    pub fn residual(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("residual evaluated at y = {y}")));
        }
        let v = self.pdf(y);
        // y·v'/v for the closed form.
        let hill_term = match self.hill {
            Some((a, b, n, beta)) => {
                let yn = y.powf(n);
                beta * n * b * yn / (a + b * yn)
            }
            None => 0.0,
        };
        let drift = self.gamma2 * v * (self.alpha + hill_term - y / self.scale);
        let b = self.scale;
        let gain = self.integrate_with(|z| self.rate.value(z) * (-(y - z) / b).exp() / b, 0.0, y)?;
        Ok(drift + gain - self.rate.value(y) * v)
    }

    /// Location of the density maximum on a coarse scan of `[0, 50 b̄]`.
    pub fn approximate_max(&self) -> f64 {
        let hi = 50.0 * self.scale;
        (1..=4096).map(|i| self.pdf(hi * i as f64 / 4096.0)).fold(0.0, f64::max)
    }
}

/// Closed-form stationary law of `m`. Requires exponential `h̄` and a Hill or
/// constant rate; other models fall back to [`steady_state`].
pub fn analytic_stationary(m: &ReducedJumpModel) -> Result<StationaryLaw> {
    let scale = match m.hbar.kind() {
        JumpKind::Exponential { mean } => *mean,
        JumpKind::Tabulated { .. } => {
            return Err(Error::Unsupported(
                "closed-form stationary law needs exponential bursts; use the density solver".into(),
            ))
        }
    };
    let (alpha, hill) = match m.rate.kind() {
        RateKind::Constant { phi0 } => (*phi0 / m.gamma2, None),
        RateKind::Hill { phi0, k, a, b, n } => {
            let beta = phi0 * (k - b / a) / (n * b * m.gamma2);
            (phi0 / (a * m.gamma2), Some((*a, *b, *n, beta)))
        }
        RateKind::Tabulated { .. } => {
            return Err(Error::Unsupported(
                "closed-form stationary law needs a Hill or constant rate; use the density solver".into(),
            ))
        }
    };
    if !(alpha > 0.0) {
        return Err(Error::Unsupported(
            "stationary law needs a positive burst rate at y = 0".into(),
        ));
    }
    let mut law = StationaryLaw {
        gamma2: m.gamma2,
        alpha,
        hill,
        scale,
        log_norm: 0.0,
        rate: m.rate.clone(),
    };
    // Shift by the log-maximum so the normalizing integral is O(1).
    let peak = law.approximate_max();
    if !(peak > 0.0 && peak.is_finite()) {
        law.log_norm = 0.0;
    } else {
        law.log_norm = -peak.ln();
    }
    let split = 50.0 * scale;
    let mass = law.integrate_with(|_| 1.0, 0.0, split)? + integrate_to_infinity(|y| law.pdf(y), split, LAW_TOL)?.value;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::numeric(format!(
            "stationary law normalization failed (mass {mass})"
        )));
    }
    law.log_norm -= mass.ln();
    Ok(law)
}

/// Cell-to-cell transfer probabilities of the jump kernel: a particle spread
/// uniformly over a cell and shifted by `Δ ~ h̄` lands `k` cells to the right
/// with probability `P_k = [G((k+1)δ) − 2G(kδ) + G((k−1)δ)]/δ`, where
/// `G(x) = ∫₀^x H̄`. The weights sum to one, so jumps conserve mass.
#[derive(Debug, Clone)]
enum JumpKernel {
    /// `P_k = P₁ q^{k−1}` for `k ≥ 1`.
    Geometric {
        p0: f64,
        p1: f64,
        q: f64,
        leak: Vec<f64>,
    },
    Tabulated {
        p: Vec<f64>,
        leak: Vec<f64>,
    },
}

impl JumpKernel {
    fn new(hbar: &JumpDensity, dy: f64, n: usize) -> Result<Self> {
        match hbar.kind() {
            JumpKind::Exponential { mean } => {
                let r = dy / mean;
                let q = (-r).exp();
                // 1 − (b/δ)(1 − e^{−r}), with the cancellation handled by exp_m1.
                let p0 = 1.0 + (-r).exp_m1() / r;
                // (b/δ) e^{−r} (e^{r} − 2 + e^{−r}) = (b/δ) e^{−r} · 4 sinh²(r/2).
                let s = (0.5 * r).sinh();
                let p1 = q * 4.0 * s * s / r;
                // Source cell j keeps Σ_{k ≤ n−1−j} P_k on the grid.
                let leak = (0..n)
                    .map(|j| {
                        let m = (n - 1 - j) as i32;
                        (1.0 - p0 - p1 * (1.0 - q.powi(m)) / (1.0 - q)).max(0.0)
                    })
                    .collect();
                Ok(Self::Geometric { p0, p1, q, leak })
            }
            JumpKind::Tabulated { .. } => {
                let cdf_integral = |x: f64| -> Result<f64> {
                    if x <= 0.0 {
                        return Ok(0.0);
                    }
                    Ok(integrate(|s| hbar.cdf(s), 0.0, x, Tolerance::new(1e-15, 1e-13))?.value)
                };
                let g: Vec<f64> = (0..=n + 1)
                    .map(|k| cdf_integral(k as f64 * dy))
                    .collect::<Result<_>>()?;
                let p = (0..n)
                    .map(|k| {
                        let prev = if k == 0 { 0.0 } else { g[k - 1] };
                        ((g[k + 1] - 2.0 * g[k] + prev) / dy).max(0.0)
                    })
                    .collect::<Vec<f64>>();
                let mut kept = 0.0;
                let mut leak = vec![0.0; n];
                for j in (0..n).rev() {
                    kept += p[n - 1 - j];
                    leak[j] = (1.0 - kept).max(0.0);
                }
                Ok(Self::Tabulated { p, leak })
            }
        }
    }

    /// Adds `Σ_j f_j P_{i−j}` to `gain`, routing mass that would leave the
    /// grid into the last cell.
    fn convolve(&self, f: &[f64], gain: &mut [f64]) {
        let n = f.len();
        let leak = match self {
            JumpKernel::Geometric { p0, p1, q, leak } => {
                let mut running = 0.0;
                for i in 0..n {
                    if i > 0 {
                        running = q * running + p1 * f[i - 1];
                    }
                    gain[i] += p0 * f[i] + running;
                }
                leak
            }
            JumpKernel::Tabulated { p, leak } => {
                for (j, &fj) in f.iter().enumerate() {
                    if fj == 0.0 {
                        continue;
                    }
                    for (g, pk) in gain[j..].iter_mut().zip(p) {
                        *g += fj * pk;
                    }
                }
                leak
            }
        };
        gain[n - 1] += f.iter().zip(leak).map(|(fj, l)| fj * l).sum::<f64>();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    /// Fraction of the stability limit used as the time step.
    pub cfl: f64,
    /// Requested step; reduced (with a warning) if it violates the limit.
    pub dt: Option<f64>,
    /// Allowed `|mass(t) − mass(0)|` per unit time.
    pub mass_tolerance: f64,
    /// Minimum cells per mean burst size.
    pub min_cells_per_burst: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            dt: None,
            mass_tolerance: 1e-6,
            min_cells_per_burst: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    /// `(t, v(t))` at every requested output time (and the final time).
    pub snapshots: Vec<(f64, DensityGrid)>,
    pub dt: f64,
    pub steps: u64,
}

impl PdeSolution {
    pub fn last(&self) -> &DensityGrid {
        &self.snapshots.last().expect("at least the initial snapshot").1
    }
}

/// Method-of-lines discretization of the reduced density equation.
#[derive(Debug, Clone)]
pub struct DensitySolver {
    gamma2: f64,
    rates: Vec<f64>,
    kernel: JumpKernel,
    n: usize,
    y_max: f64,
    dt_limit: f64,
}

impl DensitySolver {
    pub fn new(m: &ReducedJumpModel, y_max: f64, n_bins: usize, opts: &PdeOptions) -> Result<Self> {
        let probe = DensityGrid::zeros(y_max, n_bins)?;
        let dy = probe.dy();
        let cells_per_burst = m.hbar.mean() / dy;
        if cells_per_burst < opts.min_cells_per_burst {
            return Err(Error::config(
                "n_bins",
                format!(
                    "grid resolves the mean burst with {cells_per_burst:.1} cells; need at least {}",
                    opts.min_cells_per_burst
                ),
            ));
        }
        let rates: Vec<f64> = (0..n_bins).map(|i| m.rate.value(probe.center(i))).collect();
        // Forward Euler stays positive while dt·(γ₂ i + φ_i) ≤ 1 in every cell.
        let stiffest = (0..n_bins).map(|i| m.gamma2 * i as f64 + rates[i]).fold(0.0, f64::max);
        Ok(Self {
            gamma2: m.gamma2,
            rates,
            kernel: JumpKernel::new(&m.hbar, dy, n_bins)?,
            n: n_bins,
            y_max,
            dt_limit: if stiffest > 0.0 { 1.0 / stiffest } else { f64::INFINITY },
        })
    }

    pub fn stable_dt(&self) -> f64 {
        self.dt_limit
    }

    /// Right-hand side `L v` of the semi-discrete system.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        // Upwind flux γ₂ y v at the face y = i·δ (velocity points to the left):
        // dv_i/dt = γ₂[(i+1) v_{i+1} − i v_i].
        let n = self.n;
        let mut f = vec![0.0; n];
        self.apply_with(v, out, &mut f);
    }

    fn apply_with(&self, v: &[f64], out: &mut [f64], f: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let inflow = if i + 1 < n { (i + 1) as f64 * v[i + 1] } else { 0.0 };
            f[i] = v[i] * self.rates[i];
            out[i] = self.gamma2 * (inflow - i as f64 * v[i]) - f[i];
        }
        self.kernel.convolve(f, out);
    }

    fn check_grid(&self, v: &DensityGrid) -> Result<()> {
        if v.n_bins() != self.n || (v.y_max - self.y_max).abs() > 1e-12 * self.y_max {
            return Err(Error::GridMismatch(
                "initial density does not match the solver grid".into(),
            ));
        }
        Ok(())
    }

    /// Explicit Euler stepping from `v0` to `horizon`; snapshots are taken at
    /// each time in `outputs` (sorted, within `(0, horizon]`) and at the end.
    pub fn solve(&self, v0: &DensityGrid, horizon: f64, outputs: &[f64], opts: &PdeOptions) -> Result<PdeSolution> {
        self.check_grid(v0)?;
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::config("horizon", format!("must be nonnegative, got {horizon}")));
        }
        let limit = opts.cfl * self.dt_limit;
        let dt = match opts.dt {
            Some(dt) if dt > limit => {
                log::warn!("requested step {dt} violates the stability limit; using {limit}");
                limit
            }
            Some(dt) if dt > 0.0 => dt,
            Some(dt) => return Err(Error::config("dt", format!("must be positive, got {dt}"))),
            None => limit,
        };
        let mass0 = v0.mass();
        let dy = v0.dy();
        let mut v = v0.values.clone();
        let mut rhs = vec![0.0; self.n];
        let mut scratch = vec![0.0; self.n];
        let mut t = 0.0;
        let mut steps = 0u64;
        let mut snapshots = vec![(0.0, v0.clone())];
        let mut targets: Vec<f64> = outputs.iter().copied().filter(|&o| o > 0.0 && o < horizon).collect();
        targets.push(horizon);
        for target in targets {
            while t < target {
                let h = dt.min(target - t);
                self.apply_with(&v, &mut rhs, &mut scratch);
                for (vi, ri) in v.iter_mut().zip(&rhs) {
                    *vi += h * ri;
                }
                t = if target - t <= dt { target } else { t + h };
                steps += 1;
            }
            let grid = DensityGrid {
                y_max: self.y_max,
                values: v.clone(),
            };
            if snapshots.last().map(|s| s.0) != Some(t) {
                snapshots.push((t, grid));
            }
        }
        let drift = (v.iter().sum::<f64>() * dy - mass0).abs();
        if drift > opts.mass_tolerance * horizon.max(1.0) {
            return Err(Error::Numeric {
                message: format!("mass drifted by {drift:e} over t = {horizon}"),
                residual: Some(drift),
            });
        }
        Ok(PdeSolution { snapshots, dt, steps })
    }

    /// Steady state of the semi-discrete system, reached by time stepping
    /// until `‖L v‖₁ < tol`.
    pub fn steady_state(&self, v0: &DensityGrid, tol: f64, max_time: f64) -> Result<DensityGrid> {
        self.check_grid(v0)?;
        let dt = 0.9 * self.dt_limit;
        if !dt.is_finite() {
            return Err(Error::Unsupported(
                "steady state of a model without drift or jumps".into(),
            ));
        }
        let dy = v0.dy();
        let mut v = v0.values.clone();
        let mut rhs = vec![0.0; self.n];
        let mut scratch = vec![0.0; self.n];
        let mut t = 0.0;
        let check_every = ((0.05 / dt).ceil() as u64).max(1);
        let mut step = 0u64;
        loop {
            self.apply_with(&v, &mut rhs, &mut scratch);
            if step % check_every == 0 {
                let norm = rhs.iter().map(|r| r.abs()).sum::<f64>() * dy;
                if norm < tol {
                    break;
                }
                if t > max_time {
                    return Err(Error::Numeric {
                        message: format!("density solver did not reach a steady state by t = {t}"),
                        residual: Some(norm),
                    });
                }
            }
            for (vi, ri) in v.iter_mut().zip(&rhs) {
                *vi += dt * ri;
            }
            t += dt;
            step += 1;
        }
        let mut grid = DensityGrid {
            y_max: self.y_max,
            values: v,
        };
        grid.normalize()?;
        Ok(grid)
    }
}

/// Solves the reduced density equation on the grid of `v0`.
pub fn solve_density_pde(
    v0: &DensityGrid,
    horizon: f64,
    m: &ReducedJumpModel,
    opts: &PdeOptions,
) -> Result<PdeSolution> {
    DensitySolver::new(m, v0.y_max, v0.n_bins(), opts)?.solve(v0, horizon, &[], opts)
}

/// Stationary density on `n_bins` cells over `[0, y_max]`, from the solver.
pub fn steady_state(m: &ReducedJumpModel, y_max: f64, n_bins: usize, tol: f64) -> Result<DensityGrid> {
    let solver = DensitySolver::new(m, y_max, n_bins, &PdeOptions::default())?;
    let mut start = DensityGrid::new(y_max, vec![1.0; n_bins])?;
    start.normalize()?;
    solver.steady_state(&start, tol, 1e4 / m.gamma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, BurstRate};

    fn feedback_reduced() -> ReducedJumpModel {
        ReducedJumpModel::from_model(&presets::feedback_model()).unwrap()
    }

    #[test]
    fn histogram_of_a_point_mass() {
        let h = histogram(&[0.35; 10], 10, 1.0).unwrap();
        let occupied: Vec<usize> = (0..10).filter(|&i| h.grid.values[i] > 0.0).collect();
        assert_eq!(occupied, vec![3]);
        assert!((h.grid.values[3] - 1.0 / h.grid.dy()).abs() < 1e-12);
        assert_eq!(h.tail_mass, 0.0);
    }

    #[test]
    fn histogram_tail_and_errors() {
        let h = histogram(&[0.5, 1.5, 2.5, 3.5], 4, 2.0).unwrap();
        assert_eq!(h.tail_mass, 0.5);
        assert!((h.grid.mass() - 1.0).abs() < 1e-12);
        assert!(matches!(
            histogram(&[5.0, 6.0], 4, 2.0),
            Err(Error::DegenerateHistogram { count: 2, .. })
        ));
        assert!(histogram(&[], 4, 2.0).is_err());
        assert!(matches!(histogram(&[-1.0], 4, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn distances_of_extreme_pairs() {
        let a = DensityGrid::new(2.0, vec![1.0, 0.0]).unwrap();
        let b = DensityGrid::new(2.0, vec![0.0, 1.0]).unwrap();
        for norm in Norm::ALL {
            assert_eq!(density_distance(&a, &a, norm, GridPolicy::Error).unwrap(), 0.0);
        }
        assert_eq!(density_distance(&a, &b, Norm::L1, GridPolicy::Error).unwrap(), 2.0);
        assert_eq!(density_distance(&a, &b, Norm::Linf, GridPolicy::Error).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_grids() {
        let a = DensityGrid::new(2.0, vec![0.5; 4]).unwrap();
        let b = DensityGrid::new(2.0, vec![0.5; 2]).unwrap();
        assert!(matches!(
            density_distance(&a, &b, Norm::L1, GridPolicy::Error),
            Err(Error::GridMismatch(_))
        ));
        assert!(density_distance(&a, &b, Norm::L1, GridPolicy::Regrid).unwrap() < 1e-15);
    }

    #[test]
    fn feedback_law_shape() {
        let law = analytic_stationary(&feedback_reduced()).unwrap();
        assert!((law.alpha - 1.25).abs() < 1e-15);
        let (_, _, _, beta) = law.hill.unwrap();
        assert!((beta - 15.0 / 16.0).abs() < 1e-15);
        assert_eq!(law.pdf(0.0), 0.0);
        let total = law.integrate_with(|_| 1.0, 0.0, 60.0).unwrap() + law.tail_mass(60.0).unwrap();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn feedback_law_residual_vanishes() {
        let law = analytic_stationary(&feedback_reduced()).unwrap();
        let peak = law.approximate_max();
        for i in 1..=64 {
            let y = 0.25 * i as f64;
            let r = law.residual(y).unwrap();
            assert!(r.abs() < 1e-6 * peak, "residual {r} at y = {y}");
        }
    }

    #[test]
    fn singular_law_is_normalized() {
        // α = 0.5 < 1: density blows up at zero but stays integrable.
        let m = ReducedJumpModel::new(
            2.0,
            BurstRate::constant(1.0).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let law = analytic_stationary(&m).unwrap();
        assert_eq!(law.pdf(0.0), f64::INFINITY);
        let grid = law.bin_averages(40.0, 400).unwrap();
        assert!((grid.mass() - 1.0).abs() < 1e-8);
        assert!((law.mean().unwrap() - 0.5).abs() < 1e-9);
        assert!(law.residual(0.3).unwrap().abs() < 1e-8);
    }

    #[test]
    fn unsupported_models() {
        let tab = JumpDensity::tabulated(1.0, vec![0.0, 1.0, 0.0]).unwrap();
        let m = ReducedJumpModel::new(1.0, BurstRate::constant(1.0).unwrap(), tab).unwrap();
        assert!(matches!(analytic_stationary(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn truncation_point_bounds_tail() {
        let law = analytic_stationary(&feedback_reduced()).unwrap();
        let y = law.truncation_point(1e-6).unwrap();
        assert!(law.tail_mass(y).unwrap() <= 1e-6);
        assert!(y > 15.0 && y < 40.0, "{y}");
    }

    #[test]
    fn pure_drift_conserves_mass() {
        let m = ReducedJumpModel::new(
            1.0,
            BurstRate::constant(0.0).unwrap(),
            JumpDensity::exponential(1.0).unwrap(),
        )
        .unwrap();
        let mut v0 = DensityGrid::new(
            10.0,
            (0..400)
                .map(|i| if (200..240).contains(&i) { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        v0.normalize().unwrap();
        let sol = solve_density_pde(&v0, 3.0, &m, &PdeOptions::default()).unwrap();
        let v = sol.last();
        assert!((v.mass() - 1.0).abs() < 1e-12);
        // Mean position decays like e^{-γ₂ t} up to first-order numerical drift.
        assert!(v.mean() < v0.mean() * 0.1);
        assert!(v.values.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn jumps_conserve_mass_exactly() {
        let m = feedback_reduced();
        let solver = DensitySolver::new(&m, 20.0, 400, &PdeOptions::default()).unwrap();
        let v: Vec<f64> = (0..400).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; 400];
        solver.apply(&v, &mut out);
        let net: f64 = out.iter().sum();
        assert!(net.abs() < 1e-10 * v.iter().sum::<f64>(), "{net}");
    }

    #[test]
    fn tabulated_kernel_matches_exponential_kernel() {
        // Fine tabulation of Exponential(1) on [0, 30].
        let dx = 0.005;
        let values: Vec<f64> = (0..=6000).map(|i| (-(i as f64) * dx).exp()).collect();
        let tab = JumpDensity::tabulated_normalized(dx, values).unwrap();
        let exp = JumpDensity::exponential(1.0).unwrap();
        let n = 100;
        let dy = 0.05;
        let f: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.1).cos().abs()).collect();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        JumpKernel::new(&exp, dy, n).unwrap().convolve(&f, &mut a);
        JumpKernel::new(&tab, dy, n).unwrap().convolve(&f, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = feedback_reduced();
        assert!(matches!(
            DensitySolver::new(&m, 30.0, 100, &PdeOptions::default()),
            Err(Error::Config { .. })
        ));
    }
}
