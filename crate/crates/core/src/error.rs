use thiserror::Error;

/// Errors raised by the measure layer, the protocols and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed interval [{lo}, {hi}): endpoints must satisfy 0 <= lo <= hi <= 1")]
    MalformedInterval { lo: f64, hi: f64 },

    #[error("malformed query: {0}")]
    MalformedQuery(String),

    #[error("insufficient measure: requested {requested}, slice is worth {available}")]
    InsufficientMeasure { requested: f64, available: f64 },

    #[error("cannot restrict a valuation to an empty piece")]
    EmptySupport,

    #[error("player index {index} out of range for {players} players")]
    InvalidPlayer { index: usize, players: usize },

    #[error("malformed valuation: {0}")]
    MalformedValuation(String),

    #[error("malformed entitlements: {0}")]
    MalformedEntitlements(String),

    #[error("infeasible instance: {0}")]
    InfeasibleInstance(String),

    #[error("infeasible protocol state: {0}")]
    InfeasibleState(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("no slack left for rational rounding (slack {slack})")]
    NoSlack { slack: f64 },

    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error("round limit of {max_rounds} reached without termination")]
    NonTermination {
        max_rounds: usize,
        trace: Box<crate::algo2::Trace>,
    },

    #[error("all valuations are identical; strict fairness is impossible")]
    AllIdentical,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("separation too weak: {0}")]
    SeparationTooWeak(String),

    #[error("invalid tolerances: {0}")]
    InvalidTolerances(String),

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("inner division failed for player {player} at depth {depth}: {source}")]
    Refinement {
        player: usize,
        depth: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn input(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input rather than a solver defect.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::MalformedInterval { .. }
            | Error::MalformedQuery(_)
            | Error::MalformedValuation(_)
            | Error::MalformedEntitlements(_)
            | Error::InfeasibleInstance(_)
            | Error::InvalidTolerances(_)
            | Error::AllIdentical
            | Error::ResourceLimit(_)
            | Error::Input { .. }
            | Error::Io { .. } => true,
            Error::Refinement { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
