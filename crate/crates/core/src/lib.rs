//! Strong-coupling expansion of a spin-½ particle coupled to a pseudoscalar
//! meson field, evaluated on a discrete momentum lattice.
//!
//! The pipeline runs `modes → meanfield → constraints → oscillator →
//! spectrum`; `oracle` diagonalizes the fixed-source model exactly for
//! comparison. Everything numeric is generic over [`Real`]; the `*64`
//! aliases below cover the common case.

pub mod constraints;
pub mod error;
pub mod meanfield;
pub mod modes;
pub mod oracle;
pub mod oscillator;
pub mod scalar;
pub mod spectrum;

pub use constraints::{ConstraintSet, Generator, GeneratorKind, IterationOptions, NTilde};
pub use error::{Error, Result, Stage};
pub use meanfield::{DriftProfile, MeanField};
pub use modes::{build_mode_lattice, FormFactor, Mode, ModeFunction, ModeLattice, SourceKind, SourceProfile};
pub use oracle::{ComparisonReport, FockBasis, OracleModel, OracleOptions};
pub use oscillator::{FluctuationOptions, NormalModes, QuadraticForm, ZeroModePolicy};
pub use scalar::{Real, Reduction};
pub use spectrum::{Drift, ProfileChoice, SpectrumConfig, SpectrumRow, SpectrumTable, SpinQuantumNumbers};

pub type ModeLattice64 = ModeLattice<f64>;
pub type ModeLattice32 = ModeLattice<f32>;
pub type MeanField64 = MeanField<f64>;
pub type ConstraintSet64 = ConstraintSet<f64>;
pub type QuadraticForm64 = QuadraticForm<f64>;
pub type NormalModes64 = NormalModes<f64>;
pub type SpectrumConfig64 = SpectrumConfig<f64>;
pub type SpectrumTable64 = SpectrumTable<f64>;
pub type OracleModel64 = OracleModel<f64>;
pub type ComparisonReport64 = ComparisonReport<f64>;
