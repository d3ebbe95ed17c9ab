//! Linear ultrastrong-coupling cavity optomechanics.
//!
//! A levitated particle scattering tweezer light into a cavity couples its
//! motion linearly to the cavity field, `H = Omega_x b^dag b + Delta a^dag a
//! + g (a + a^dag)(b + b^dag)`. This crate computes the linear response and
//! spectra of that model, its normal modes and stability, the coupling rates
//! of a physical setup, simulates the Langevin dynamics, and fits measured or
//! synthetic spectra for the coupling rate.

pub mod coupling;
pub mod error;
pub mod fitting;
pub mod io;
pub mod params;
pub mod polaritons;
pub mod response;
pub mod simulate;
pub mod spectrum;
pub mod stability;

pub use error::{Error, Result};
pub use params::{ComplexFrequency, ModelParams, PhysicalSetup, Validate};
pub use polaritons::{BranchScan, PolaritonPair};
pub use spectrum::SpectrumGrid;
pub use fitting::{FitProblem, FitResult};
pub use simulate::{SimConfig, TimeTrace};
pub use stability::StabilityMap;
