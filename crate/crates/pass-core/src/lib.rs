// Validation writes `!(x > 0.0)` instead of `x <= 0.0` so NaN fails too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Core models for pinching-antenna systems: waveguide-fed antennas that
//! radiate where a dielectric element pinches the guide.
//!
//! The crate is organised bottom-up:
//!
//! - [`coupling`]: power exchange at a single pinching element and along
//!   coupler chains, including the equal and proportional sharing models.
//! - [`geometry`]: waveguide layouts, antenna offsets and radio constants.
//! - [`channel`]: line-of-sight channel coefficients, composite per-user
//!   channels, feed architectures and SINR evaluation.
//! - [`placement`]: single-user antenna placement on one waveguide,
//!   continuous and grid-constrained, plus array-gain sweeps.
//! - [`beamforming`]: minimum-power multiuser beamforming, joint
//!   placement/beamforming descent and conventional-array baselines.

pub mod beamforming;
pub mod channel;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod placement;

pub use beamforming::{
    baseline_conventional_mimo, baseline_massive_mimo_hybrid, joint_min_power, min_power_precoder,
    power_vs_sinr_sweep, Activation, BeamformingSolution, JointOutcome, JointProblem,
    PrecoderOutcome, PrecoderSolution, SweepRow, SweepSetup, SweepSystem,
};
pub use channel::{
    channel_matrix, composite_channel, effective_channel, pa_coefficient, sinr, ChannelMatrix,
    FeedArchitecture,
};
pub use coupling::{
    cascade, coupled_power, equal_power_coupler_chain, length_for_fraction, power_profile,
    CouplerSpec, PowerModel, PowerProfile,
};
pub use error::{Error, Result};
pub use geometry::{PinchConfig, RadioParams, WaveguideLayout, SPEED_OF_LIGHT};
pub use placement::{
    array_gain_sweep, optimize_continuous, optimize_discrete, power_gradient, received_power,
    AlignmentMode, ArrayGainRow, CandidateGrid, PlacementMode, PlacementResult,
};
