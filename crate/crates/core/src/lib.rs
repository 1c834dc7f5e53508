//! # volising
//!
//! Functional interaction networks from traded volumes.
//!
//! Per-second traded volumes are turned into ±1 series by comparing the
//! volume traded in a sliding window of `dt` seconds with `chi` times the
//! stock's average over the same span. Pairwise couplings between stocks are
//! then estimated with three mean-field Ising estimators:
//!
//! - **equilibrium**: from equal-time correlations, undirected;
//! - **synchronous**: from correlations at a time lag `tau`, directed;
//! - **asynchronous**: from the slope of lagged correlations at zero lag,
//!   directed.
//!
//! The resulting matrices can be summarized (mean coupling strength,
//! histograms, spectrum, similarity between methods) and exported as
//! top-interaction networks. Synthetic Ising trajectories and synthetic
//! market volumes provide ground truth.
//!
//! ## Example
//!
//! ```
//! use volising::{binarize, infer, stats, synth};
//!
//! let grid = synth::synth_market_volumes(6, 2, 2_000, &[3, 3], 1.0, 7)?;
//! let spins = binarize::build_spin_matrix(&grid, binarize::MappingParams::new(20, 0.5))?;
//! let (spins, _dropped) = binarize::filter_degenerate(&spins)?;
//! let moments = stats::estimate_moments(&spins, &[20], Some(20))?;
//! let eq = infer::infer_equilibrium(&moments, 0.0)?;
//! let syn = infer::infer_synchronous(&moments, 20, 0.0)?;
//! assert_eq!(eq.j.nrows(), syn.j.nrows());
//! # Ok::<(), volising::Error>(())
//! ```

pub mod analyze;
pub mod binarize;
pub mod error;
pub mod infer;
pub mod ingest;
pub mod netexport;
pub mod stats;
pub mod synth;

pub use binarize::{MappingParams, SpinMatrix};
pub use error::{Error, Result};
pub use infer::{CouplingModel, Method};
pub use ingest::{TradeTick, VolumeGrid};
pub use stats::MomentSet;
pub use synth::IsingModel;
