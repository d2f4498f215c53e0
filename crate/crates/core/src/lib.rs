//! Blind estimation of an instrument PSF core from transit observations.
//!
//! A black occulting disk in front of a bright scene gives pixels whose true
//! value is known to be zero. Light found there after imaging is blur plus
//! noise, which constrains the filter. The engine alternates a sparse
//! image step (primal–dual) with a simplex-constrained filter step (APG),
//! stopping on residual whiteness.

pub mod blind;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod nonblind;
pub mod prox;
pub mod simkit;
pub mod solvers;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{DiskGeometry, ExpandedDomain, FilterEstimate, ImagePatch};
pub use wavelet::{CoefficientSets, WaveletDictionary};
