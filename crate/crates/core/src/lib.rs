//! Simulation and certification toolkit for input-to-state stable bilateral
//! teleoperation.
//!
//! The crate couples a master and a slave manipulator through either an
//! instantaneous dynamic-interconnection controller or a proxy-mediated
//! architecture that tolerates bounded time-varying transmission delays.
//! Controller gains are mechanically certified against the closed-loop
//! stability conditions, and simulated trajectories are checked against the
//! exponential decay bounds and the invariant/attractive position-error sets
//! that the certificate predicts.
//!
//! Module map:
//! - [`dynamics`]: planar-arm Euler-Lagrange model and sampled bound constants
//! - [`controllers`]: both control laws, sliding surfaces, mismatch terms
//! - [`delay_channel`]: bounded time-varying delay profiles and signal history
//! - [`certification`]: gain-condition checking and derived decay constants
//! - [`simulator`]: fixed-step RK4 integration of the coupled system
//! - [`analysis`]: Lyapunov evaluation, decay/set/ISS estimate checks
//! - [`suite`]: predefined scenario matrices used by the CLI and tests
//! - [`cli`]: command-line front end (certify / run / suite)
//!
//! Certify, simulate and check one scenario:
//!
//! ```
//! use teleop_core::{analysis, simulator};
//!
//! let (entry, _) = teleop_core::suite::consistency_pair();
//! let mut scenario = entry.scenario;
//! scenario.duration = 1.0;
//!
//! let certificate = scenario.certify()?;
//! assert!(certificate.passed);
//!
//! let trace = simulator::run(&scenario, &certificate)?;
//! let report = analysis::analyze(&trace, &certificate, 0.01)?;
//! assert!(report.decay.pass);
//! # Ok::<(), teleop_core::Error>(())
//! ```

// `!(x > 0)` guards reject NaN, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certification;
pub mod cli;
pub mod controllers;
pub mod delay_channel;
pub mod diag;
pub mod dynamics;
pub mod error;
pub mod simulator;
pub mod suite;

pub use diag::Diag;
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
