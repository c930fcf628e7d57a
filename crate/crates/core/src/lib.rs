//! Transmit-side FIR pre-distortion tuned against a frozen I/Q classifier.
//!
//! The crate covers the numeric substrate ([`signal`]), a synthetic radio link
//! ([`channel`], [`testbed`]), a small differentiable classifier ([`net`]), two
//! ways of fitting FIR taps to it ([`wop`] by nonlinear conjugate gradient,
//! [`fir_layer`] by training a filtering layer), receiver-side compensation
//! ([`compensation`]) and accuracy metrics ([`metrics`]).

pub mod channel;
pub mod compensation;
pub mod error;
pub mod fir_layer;
pub mod iqfile;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod signal;
pub mod testbed;
pub mod wop;

pub use error::{Error, Result};
pub use net::{Architecture, Example, MicroNet, Objective, TrainConfig, TrainReport};
pub use signal::{dft, epsilon_of, fir_apply, fir_apply_with, idft, BoundaryMode, FirTaps, IqSequence, Spectrum, C64};
