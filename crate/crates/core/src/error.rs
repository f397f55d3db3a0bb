use thiserror::Error;

use crate::model::MeasureKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants carry enough context (population, stratum, line/column) for a
/// caller to point at the offending input without re-deriving it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // data model
    #[error("empty cell: population {population}, stratum {stratum}, arm a={arm}")]
    EmptyCell {
        population: String,
        stratum: String,
        arm: u8,
    },
    #[error("{kind} is undefined: {reason}")]
    UndefinedMeasure {
        kind: MeasureKind,
        reason: &'static str,
    },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
    #[error("duplicate covariate {0:?}")]
    DuplicateCovariate(String),
    #[error("covariates do not match: expected [{expected}], found [{found}]")]
    CovariateMismatch { expected: String, found: String },
    #[error("unknown covariate {0:?}")]
    UnknownCovariate(String),
    #[error("unknown population {0:?}")]
    UnknownPopulation(String),
    #[error("count overflow")]
    CountOverflow,

    // input formats
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),

    // diagrams
    #[error("diagram contains a cycle through {0}")]
    Cycle(String),
    #[error("role error: {0}")]
    Role(String),
    #[error("selection node is downstream of treatment: {0}")]
    SelectionAfterTreatment(String),
    #[error("selection node {0} has incoming edges")]
    SelectionNotRoot(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("candidate {0} is not a baseline node (it descends from treatment or is a role node)")]
    NonBaselineCandidate(String),
    #[error("latent node {0} cannot be conditioned on")]
    LatentConditioning(String),

    // standardization
    #[error("{0} is not collapsible; use predicted-risk standardization instead")]
    NonCollapsibleMeasure(MeasureKind),
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),
    #[error("predicted risk {value} in stratum {stratum} is outside [0, 1]")]
    RiskOutOfRange { stratum: String, value: f64 },
    #[error("positivity violation: target strata without source support: {}", .strata.join("; "))]
    PositivityViolation { strata: Vec<String> },
    #[error("conditioning event {event} has probability 0 in population {population}")]
    ZeroBaselineRisk {
        population: String,
        event: &'static str,
    },

    // COST parameters
    #[error("degenerate baseline: {event} has probability 0 in population {population}, stratum {stratum}")]
    DegenerateBaseline {
        population: String,
        stratum: String,
        event: &'static str,
    },
    #[error("monotonicity ({direction}) contradicted by risks r1={risk1}, r0={risk0}")]
    MonotonicityContradicted {
        direction: &'static str,
        risk1: f64,
        risk0: f64,
    },

    // logistic model
    #[error("separation detected: coefficient {coefficient} reached {value}")]
    SeparationDetected { coefficient: String, value: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("fit did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    // oracle generation
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("model too large: {nodes} nodes (limit {limit})")]
    TooLarge { nodes: usize, limit: usize },
    #[error("exact arithmetic overflow: {0}")]
    Overflow(String),
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    /// True for failures meaning the target quantity is not identified from
    /// the supplied inputs (as opposed to malformed inputs).
    pub fn is_identification_failure(&self) -> bool {
        matches!(
            self,
            Error::EmptyCell { .. }
                | Error::UndefinedMeasure { .. }
                | Error::RiskOutOfRange { .. }
                | Error::PositivityViolation { .. }
                | Error::ZeroBaselineRisk { .. }
                | Error::DegenerateBaseline { .. }
                | Error::MonotonicityContradicted { .. }
                | Error::SeparationDetected { .. }
                | Error::RankDeficient
                | Error::NotConverged(_)
        )
    }
}
