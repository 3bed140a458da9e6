//! Exact event-driven simulation of the bursting model.
//!
//! Between bursts both equations are linear and are advanced in closed form.
//! Burst times have the state-dependent intensity `φ(Y(t))`; they are drawn
//! by thinning against the constant majorant `sup φ`, which yields exactly
//! the survival law `exp(-∫ φ(Y(s)) ds)`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
pub use crate::model::BurstModel;
use crate::model::{JumpDensity, ModelParams};
use crate::rng::RngStream;

/// Default cap on thinning proposals for a single jump.
pub const DEFAULT_MAX_PROPOSALS: u64 = 1_000_000_000;

/// Relative gap `|γ₁ − γ₂| / max(γ₁, γ₂)` below which the confluent flow
/// formula is used.
pub const CONFLUENT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State2D {
    pub t: f64,
    /// mRNA concentration.
    pub x: f64,
    /// Protein concentration.
    pub y: f64,
}

impl State2D {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// A state carrying its own time stamp.
pub trait Timed: Copy {
    fn time(&self) -> f64;
}

impl Timed for State2D {
    #[inline]
    fn time(&self) -> f64 {
        self.t
    }
}

/// `(e^{-γ₂ dt} − e^{-γ₁ dt}) / (γ₁ − γ₂)`, evaluated without cancellation.
#[inline]
fn translation_kernel(gamma1: f64, gamma2: f64, dt: f64) -> f64 {
    let delta = gamma1 - gamma2;
    let decay2 = (-gamma2 * dt).exp();
    if delta.abs() < CONFLUENT_THRESHOLD * gamma1.max(gamma2) {
        // Confluent limit dt·e^{-γ₂dt}, with the leading corrections in δ·dt.
        let z = delta * dt;
        dt * decay2 * (1.0 - 0.5 * z + z * z / 6.0)
    } else {
        -decay2 * (-delta * dt).exp_m1() / delta
    }
}

/// Advances the burst-free dynamics by `dt ≥ 0` in closed form.
#[inline]
pub fn flow(s: State2D, dt: f64, p: &ModelParams) -> State2D {
    let x = s.x * (-p.gamma1 * dt).exp();
    let y = s.y * (-p.gamma2 * dt).exp() + p.lambda2 * s.x * translation_kernel(p.gamma1, p.gamma2, dt);
    State2D { t: s.t + dt, x, y }
}

/// Adds one burst `ΔX ~ h` to the mRNA coordinate.
#[inline]
pub fn apply_jump<R: Rng + ?Sized>(s: State2D, h: &JumpDensity, rng: &mut R) -> State2D {
    State2D {
        x: s.x + h.sample(rng),
        ..s
    }
}

/// Piecewise-deterministic dynamics: a flow, a bounded jump intensity and a
/// jump kernel. The thinning engine below is written once against this trait.
pub trait Pdmp: Sync {
    type State: Timed;

    fn flow(&self, s: &Self::State, dt: f64) -> Self::State;
    fn intensity(&self, s: &Self::State) -> f64;
    /// Majorant of [`Pdmp::intensity`] over the state space.
    fn intensity_bound(&self) -> f64;
    fn jump<R: Rng + ?Sized>(&self, s: &Self::State, rng: &mut R) -> Self::State;
}

impl Pdmp for BurstModel {
    type State = State2D;

    #[inline]
    fn flow(&self, s: &State2D, dt: f64) -> State2D {
        flow(*s, dt, &self.params)
    }

    #[inline]
    fn intensity(&self, s: &State2D) -> f64 {
        self.rate.value(s.y)
    }

    fn intensity_bound(&self) -> f64 {
        self.rate.upper_bound()
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, s: &State2D, rng: &mut R) -> State2D {
        apply_jump(*s, &self.jump, rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ThinningOptions {
    pub max_proposals: u64,
}

impl Default for ThinningOptions {
    fn default() -> Self {
        Self {
            max_proposals: DEFAULT_MAX_PROPOSALS,
        }
    }
}

/// Result of searching for the next jump before a deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextEvent<S> {
    /// A jump was accepted; `state` is the pre-jump state at the jump time.
    Jump { state: S, proposals: u64 },
    /// No jump before the deadline; `state` is the state at the deadline.
    Deadline { state: S, proposals: u64 },
}

/// Thinning: propose candidate times at rate `intensity_bound`, flow to each
/// and accept with probability `intensity / intensity_bound`.
pub fn next_event<D: Pdmp, R: Rng + ?Sized>(
    model: &D,
    start: &D::State,
    deadline: f64,
    rng: &mut R,
    opts: ThinningOptions,
) -> Result<NextEvent<D::State>> {
    let bound = model.intensity_bound();
    let mut current = *start;
    let mut proposals = 0u64;
    if bound <= 0.0 {
        if deadline.is_finite() {
            let state = model.flow(&current, deadline - current.time());
            return Ok(NextEvent::Deadline { state, proposals });
        }
        return Err(Error::Domain(
            "burst rate is identically zero; no jump will occur".into(),
        ));
    }
    loop {
        let wait: f64 = Exp1.sample(rng);
        let wait = wait / bound;
        if current.time() + wait > deadline {
            let state = model.flow(&current, deadline - current.time());
            return Ok(NextEvent::Deadline { state, proposals });
        }
        current = model.flow(&current, wait);
        proposals += 1;
        let u: f64 = rng.random();
        if u * bound < model.intensity(&current) {
            return Ok(NextEvent::Jump {
                state: current,
                proposals,
            });
        }
        if proposals >= opts.max_proposals {
            return Err(Error::SafetyCap {
                proposals,
                time: current.time(),
            });
        }
    }
}

/// Waiting time to the next burst and the (pre-jump) state at that time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpTime {
    pub wait: f64,
    pub state: State2D,
    pub proposals: u64,
}

pub fn next_jump_time<R: Rng + ?Sized>(
    model: &BurstModel,
    s0: State2D,
    rng: &mut R,
    opts: ThinningOptions,
) -> Result<JumpTime> {
    match next_event(model, &s0, f64::INFINITY, rng, opts)? {
        NextEvent::Jump { state, proposals } => Ok(JumpTime {
            wait: state.t - s0.t,
            state,
            proposals,
        }),
        NextEvent::Deadline { .. } => unreachable!("deadline is infinite"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Jump,
    Obs,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Jump => "jump",
            Event::Obs => "obs",
        }
    }
}

/// Recorded path: the state right after every jump and at every requested
/// observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub events: Vec<Event>,
    pub jump_count: u64,
    pub proposal_count: u64,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            events: Vec::new(),
            jump_count: 0,
            proposal_count: 0,
        }
    }
}

impl<S: Timed> Trajectory<S> {
    fn push(&mut self, s: S, event: Event) {
        self.times.push(s.time());
        self.states.push(s);
        self.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub type TrajectorySample = Trajectory<State2D>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub jumps: u64,
    pub proposals: u64,
    pub end: f64,
}

/// Core event loop. Observation times must be sorted and lie in
/// `[start.time(), start.time() + horizon]`; each observation is obtained by
/// flowing from the most recent event, and `on_record` receives observations
/// and post-jump states in time order.
pub fn run_pdmp<D, R, F>(
    model: &D,
    start: D::State,
    horizon: f64,
    observations: &[f64],
    rng: &mut R,
    opts: ThinningOptions,
    mut on_record: F,
) -> Result<RunStats>
where
    D: Pdmp,
    R: Rng + ?Sized,
    F: FnMut(&D::State, Event),
{
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(
            "horizon",
            format!("must be positive and finite, got {horizon}"),
        ));
    }
    let t0 = start.time();
    let end = t0 + horizon;
    if observations.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("observations", "observation times must be sorted"));
    }
    if let (Some(&first), Some(&last)) = (observations.first(), observations.last()) {
        if first < t0 || last > end {
            return Err(Error::config(
                "observations",
                format!("observation times must lie in [{t0}, {end}]"),
            ));
        }
    }
    let mut obs = observations.iter().copied().peekable();
    let mut anchor = start;
    let mut stats = RunStats {
        jumps: 0,
        proposals: 0,
        end,
    };
    loop {
        let next = next_event(model, &anchor, end, rng, opts)?;
        let (limit, proposals) = match &next {
            NextEvent::Jump { state, proposals } => (state.time(), *proposals),
            NextEvent::Deadline { proposals, .. } => (f64::INFINITY, *proposals),
        };
        stats.proposals += proposals;
        while let Some(&t_obs) = obs.peek() {
            if t_obs >= limit {
                break;
            }
            obs.next();
            on_record(&model.flow(&anchor, t_obs - anchor.time()), Event::Obs);
        }
        match next {
            NextEvent::Jump { state, .. } => {
                // An observation exactly at the jump time is represented by the jump row.
                while obs.peek() == Some(&limit) {
                    obs.next();
                }
                anchor = model.jump(&state, rng);
                stats.jumps += 1;
                on_record(&anchor, Event::Jump);
            }
            NextEvent::Deadline { .. } => return Ok(stats),
        }
    }
}

/// Simulates `model` on `[s0.t, s0.t + horizon]`, recording every jump and
/// the given observation times.
pub fn simulate<D: Pdmp, R: Rng + ?Sized>(
    model: &D,
    s0: D::State,
    horizon: f64,
    observations: &[f64],
    rng: &mut R,
    opts: ThinningOptions,
) -> Result<Trajectory<D::State>> {
    let mut traj = Trajectory::default();
    let stats = run_pdmp(model, s0, horizon, observations, rng, opts, |s, e| traj.push(*s, e))?;
    traj.jump_count = stats.jumps;
    traj.proposal_count = stats.proposals;
    Ok(traj)
}

/// State at time `s0.t + horizon`.
pub fn state_at<D: Pdmp, R: Rng + ?Sized>(model: &D, s0: D::State, horizon: f64, rng: &mut R) -> Result<D::State> {
    if horizon == 0.0 {
        return Ok(s0);
    }
    let end = s0.time() + horizon;
    let mut last = s0;
    run_pdmp(model, s0, horizon, &[end], rng, ThinningOptions::default(), |s, e| {
        if e == Event::Obs {
            last = *s;
        }
    })?;
    Ok(last)
}

/// Default burn-in: twenty protein relaxation times.
pub fn default_burn_in(params: &ModelParams) -> f64 {
    20.0 / params.gamma2
}

/// Default sampling window: ten majorant events per requested sample.
pub fn default_window(n_samples: usize, intensity_bound: f64) -> f64 {
    10.0 * n_samples as f64 / intensity_bound.max(f64::MIN_POSITIVE)
}

/// Samples the process at `n_samples` i.i.d. uniform times in
/// `[s0.t + burn_in, s0.t + burn_in + window]`. The returned states are in
/// time order.
pub fn stationary_samples<D: Pdmp, R: Rng + ?Sized>(
    model: &D,
    s0: D::State,
    n_samples: usize,
    burn_in: f64,
    window: f64,
    rng: &mut R,
) -> Result<Vec<D::State>> {
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::config(
            "window",
            format!("must be positive and finite, got {window}"),
        ));
    }
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::config(
            "burn_in",
            format!("must be nonnegative and finite, got {burn_in}"),
        ));
    }
    let start = s0.time() + burn_in;
    let mut times: Vec<f64> = (0..n_samples).map(|_| start + window * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n_samples);
    run_pdmp(
        model,
        s0,
        burn_in + window,
        &times,
        rng,
        ThinningOptions::default(),
        |s, e| {
            if e == Event::Obs {
                out.push(*s);
            }
        },
    )?;
    // Samples coinciding with a jump time (probability zero) are re-read
    // from the trajectory by the caller's histogram; keep the count exact.
    if out.len() != n_samples {
        return Err(Error::numeric(format!(
            "collected {} of {n_samples} stationary samples",
            out.len()
        )));
    }
    Ok(out)
}

/// Runs `n` independent replicas in parallel. Replica `i` receives stream
/// `RngStream::block_id(block, i)`; results come back ordered by replica.
pub fn ensemble<T, F>(seed: u64, block: u32, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(RngStream) -> Result<T> + Sync + Send,
{
    if n > u32::MAX as usize {
        return Err(Error::config("replicas", "too many replicas for one block"));
    }
    (0..n as u32)
        .into_par_iter()
        .map(|i| f(RngStream::new(seed, RngStream::block_id(block, i))))
        .collect()
}

/// Writes `t,x,y,event` rows.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &TrajectorySample) -> io::Result<()> {
    writeln!(w, "t,x,y,event")?;
    for (s, e) in traj.states.iter().zip(&traj.events) {
        writeln!(w, "{:?},{:?},{:?},{}", s.t, s.x, s.y, e.as_str())?;
    }
    w.flush()
}
