use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to attribute failures in assembled runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Modes,
    MeanField,
    Constraints,
    Oscillator,
    Spectrum,
    Oracle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Modes => "modes",
            Stage::MeanField => "meanfield",
            Stage::Constraints => "constraints",
            Stage::Oscillator => "oscillator",
            Stage::Spectrum => "spectrum",
            Stage::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty lattice: cutoff {cutoff} is below the smallest momentum {min_momentum}")]
    EmptyLattice { cutoff: f64, min_momentum: f64 },

    #[error("drift velocity |c| = {speed} is outside the admissible range |c| < 1")]
    VelocityOutOfRange { speed: f64 },

    #[error("momentum unreachable at this cutoff: |P| = {target} exceeds the branch maximum {max}")]
    MomentumUnreachable { target: f64, max: f64 },

    #[error("singular constraint Gram matrix: {0}")]
    SingularGram(String),

    #[error("fixed-point iteration did not converge in {iterations} steps (contraction ratio {ratio})")]
    NonConvergence { iterations: usize, ratio: f64 },

    #[error("unstable fluctuation spectrum: restricted eigenvalue {eigenvalue} < 0")]
    UnstableSpectrum { eigenvalue: f64 },

    #[error("zero mode in fluctuation spectrum: restricted eigenvalue {eigenvalue}")]
    ZeroMode { eigenvalue: f64 },

    #[error("Fock basis of {size} states exceeds the cap of {cap}")]
    BasisTooLarge { size: usize, cap: usize },

    #[error("invalid quantum numbers j = {j}, m = {m}")]
    InvalidQuantumNumbers { j: String, m: String },

    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// Stage the error was attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
