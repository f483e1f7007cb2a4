//! Decay dynamics of a dissipative two-level system under repeated
//! quantum non-demolition measurements and phase-modulation pulses.
//!
//! Units: `ħ = k_B = 1`, frequencies in units of the transition frequency
//! `ω_eg`, times in `1/ω_eg`.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bathcorr;
pub mod error;
pub mod eta;
pub mod measurement;
pub mod oracle;
pub mod quad;
pub mod rateq;
pub mod shorttime;
pub mod spectra;

pub use bathcorr::{BathState, Branch, ComplexKernel};
pub use error::{Error, Result};
pub use measurement::{ApparatusModel, Factors, MeasurementSchedule, Window};
pub use rateq::{PopulationTrace, RatePair, Scheme};
pub use shorttime::ShortTimeQuery;
pub use spectra::{SpectralDensity, SpectrumKind};
