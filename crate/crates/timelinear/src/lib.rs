//! Long-horizon time-series forecasting from a linear backbone plus a
//! calendar-timestamp forecaster.
//!
//! The model combines two branches inside a per-window normalization
//! wrapper:
//!
//! * a **linear backbone** mapping the normalized history of each variable
//!   directly to the forecast horizon, and
//! * **TimeSter**, a small network that forecasts purely from encoded
//!   calendar features (minute / hour / day-of-week / month / season), so
//!   periodic structure is predicted from the clock instead of inferred
//!   from noisy history.
//!
//! Branch outputs are blended with a fixed weight `beta` and denormalized
//! with the input window's statistics.
//!
//! The crate is self-contained: [`nncore`] is a small dense-tensor NN
//! library with exact reverse-mode gradients (verified against central
//! differences), [`data`] loads and splits timestamped CSVs, [`train`]
//! runs seeded mini-batch Adam with early stopping, and [`analysis`]
//! provides autocorrelation tooling for periodicity studies.
//!
//! Batch work is data-parallel via rayon when the default `parallel`
//! feature is enabled; results are bit-identical with the sequential
//! fallback because reductions happen over fixed-size chunks merged in a
//! fixed order (see [`exec`]).

pub mod analysis;
pub mod data;
mod error;
pub mod exec;
pub mod forecaster;
pub mod nncore;
pub mod timefeat;
pub mod timester;
pub mod train;

pub use error::{Error, Result};
