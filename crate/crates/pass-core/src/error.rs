use thiserror::Error;

/// Errors shared by every layer of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric or structural parameter failed its domain check.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A requested radiated fraction exceeds what a single coupler can
    /// extract. `stage` is the first offending coupler in a chain (1-based),
    /// or `None` when the request concerned a standalone coupler.
    #[error("target fraction {target} is unreachable: maximum coupling efficiency is {max_efficiency}")]
    UnreachableFraction {
        target: f64,
        max_efficiency: f64,
        stage: Option<usize>,
    },

    /// A user position coincides with a radiating element, so the
    /// free-space range (and the channel model with it) blows up.
    #[error("user position coincides with an antenna position")]
    ZeroRange,

    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// An antenna array does not fit on the waveguide it was asked to use.
    #[error(
        "{n_antennas} antennas at {spacing} m spacing need {required} m of waveguide, only {available} m available"
    )]
    ApertureTooLong {
        n_antennas: usize,
        spacing: f64,
        required: f64,
        available: f64,
    },

    /// A discrete placement request asked for more antennas than there are
    /// candidate positions.
    #[error("requested {requested} antennas but only {available} candidate positions exist")]
    NotEnoughCandidates { requested: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }
}
