//! Energy-efficient joint beamforming and antenna-tilt optimization for
//! coordinated multi-cell downlink.
//!
//! The stack, bottom-up:
//!
//! * [`pattern`]: parametric 3D sector-antenna gain.
//! * [`scenario`]: hexagonal layout, random user drops, angles of arrival.
//! * [`channel`]: pathloss, shadowing and Rayleigh channel vectors.
//! * [`objective`]: SINR, rates, EE, and the surrogate objectives `G` and `H`.
//! * [`wmmse`]: inner block-coordinate solver at fixed tilts.
//! * [`tiltsearch`]: AoA clustering and tilt grid scans.
//! * [`dinkelbach`]: bisection on the EE parameter around the joint solver.
//! * [`harness`]: Monte-Carlo experiments, CSV output and configuration.

pub mod channel;
pub mod dinkelbach;
pub mod error;
pub mod harness;
pub mod objective;
pub mod pattern;
pub mod scenario;
pub mod seed;
pub mod tiltsearch;
pub mod wmmse;

pub use error::{Error, Result};
