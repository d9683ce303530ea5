//! Wave-based information integration engine.
//!
//! The crate is organized around a dense 2D multi-channel [`field::Field`]
//! and a small set of stencil operations. On top of that sit:
//!
//! - [`autodiff`]: a tape-based reverse-mode engine covering exactly the
//!   operator set the models need, so training happens without an external
//!   framework.
//! - [`drum`]: clamped wave-equation simulation (Verlet integration) and the
//!   square-drum eigenfrequency experiment.
//! - [`spectral`]: DFT spectra, Hilbert-transform instantaneous phase, and
//!   wavelength statistics.
//! - [`models`]: the oscillator network (NWM), conv-LSTM, CNN stack, U-Net,
//!   and the five time-series readouts.
//! - [`data`]: synthetic segmentation datasets (polygons, tetrominoes,
//!   multi-MNIST) and MNIST IDX ingestion.
//! - [`train`]: Adam, pixel-wise cross-entropy, segmentation metrics, the
//!   training loop and multi-seed sweeps.
//!
//! The `wavecli` binary wires these together behind a TOML-configured CLI.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod drum;
pub mod error;
pub mod field;
pub mod models;
pub mod spectral;
pub mod train;
pub mod wft;

pub use error::{Result, WaveError};
pub use field::{Field, Kernel3x3, PadMode, Real};
