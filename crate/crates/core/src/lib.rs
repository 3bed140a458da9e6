//! Simulation and numerical verification toolkit for a two-stage bursting
//! gene-expression model.
//!
//! mRNA `X` is produced in bursts (a compound Poisson process whose rate
//! `φ(Y)` depends on the protein level) and degrades at rate `γ₁`; protein
//! `Y` is translated from mRNA at rate `λ₂` and degrades at rate `γ₂`:
//!
//! ```text
//! dX/dt = -γ₁ X + Ṅ(h, φ(Y))
//! dY/dt = -γ₂ Y + λ₂ X
//! ```
//!
//! The crate provides
//!
//! * [`model`]: parameters, feedback rate functions and burst-size laws, plus
//!   the three families that keep protein levels fixed as `γ₁ → ∞`;
//! * [`simulator`]: exact event-driven simulation (closed-form flow between
//!   bursts, thinning for state-dependent burst times);
//! * [`reduced`]: the one-dimensional limits (deterministic ODE or protein
//!   bursting process) obtained by eliminating mRNA;
//! * [`moments`]: generator-derived moment equations and Monte Carlo moment
//!   estimators with `γ₁`-scaling fits;
//! * [`density`]: histograms, the closed-form stationary density of the
//!   reduced bursting process, a finite-volume solver for its density
//!   equation, and `L¹`/`L²`/`L∞` comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod model;
pub mod moments;
pub mod ode;
pub mod quadrature;
pub mod reduced;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use density::{DensityGrid, Histogram, Norm, StationaryLaw};
pub use error::{Error, Result};
pub use model::{BurstRate, JumpDensity, ModelParams, RateKind, Scaling, ScalingFamily};
pub use moments::{MomentEstimate, MomentVector, ScalingReport};
pub use reduced::{ReducedJumpModel, ReducedOde};
pub use rng::RngStream;
pub use simulator::{BurstModel, State2D, TrajectorySample};
