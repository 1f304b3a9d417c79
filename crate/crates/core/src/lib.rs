//! Optimal two-sided reflection for ergodic singular control of
//! one-dimensional diffusions.
//!
//! The crate computes the optimal reflection barriers `(a*, b*)` and the
//! optimal long-run average reward `lambda*` for a controlled diffusion
//! `dX = mu(X) dt + sigma(X) dW + d(xi) - d(eta)` with running reward `h`,
//! per-unit harvest reward `c1` and per-unit injection cost `c2`, and then
//! cross-validates the answer three independent ways:
//!
//! - an HJB variational-inequality certificate built from the barriers
//!   ([`hjb`]),
//! - Monte Carlo simulation of the reflected state with local-time
//!   accounting ([`sim`]),
//! - a vanishing-discount sweep whose scaled values `r V_r` must approach
//!   `lambda*` ([`discounted`]).
//!
//! Built-in model families live in [`models`]; the scale/speed machinery in
//! [`diffusion`]; the barrier optimizer in [`barrier`].

pub mod barrier;
pub mod diffusion;
pub mod discounted;
pub mod error;
pub mod hjb;
pub mod models;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod sim;

pub use barrier::{BarrierPair, BarrierSolution, CaseTag, SolveMethod, SolveOpts, SweepResult};
pub use diffusion::{
    check_assumptions, find_peaks_and_b0, pi, AssumptionFlags, DiffusionModel, PiIndex,
    RewardModel, ScaleSpeedCache, ShapeReport, Violation,
};
pub use discounted::{AbelianRow, AbelianTable, DiscountedSolution, ShootOutcome};
pub use error::{Error, Result};
pub use hjb::{GridSpec, HjbGridSolution, HjbReport, TolSpec};
pub use models::{GbmParams, PowerReward, VerhulstPearlParams};
pub use quad::QuadOpts;
pub use sim::{Barriers, SimConfig, SimEstimate};
