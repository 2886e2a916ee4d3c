use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },

    #[error("{0} must be nonempty")]
    EmptySet(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("enumeration budget exceeded: need {needed}, budget {budget}")]
    BudgetExceeded { needed: String, budget: String },

    #[error("Følner set F_{n} unavailable (sequence cap {cap})")]
    IndexUnavailable { n: u64, cap: u64 },

    #[error("pattern window too small: {0}")]
    InsufficientWindow(String),

    #[error("tile index scan exhausted after {found:?}: {failed} at index {index}")]
    PrefixExhausted {
        found: Vec<u64>,
        index: u64,
        failed: String,
    },

    #[error("no translate nests tile {0} inside tile {next}", next = .0 + 1)]
    NoNestingTranslate(usize),

    #[error("certificate failure in {stage}: {detail}")]
    Certificate { stage: String, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tolerance {tol} not achieved (max deviation {achieved}, largest translate fraction {largest_translate})")]
    InfeasibleTolerance {
        achieved: f64,
        tol: f64,
        largest_translate: f64,
    },

    #[error("infeasible moment constraint: c = {c} exceeds max φ = {max} on the support")]
    Infeasible { c: f64, max: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("thickened windows of pieces {0} and {1} overlap")]
    ThickenedOverlap(usize, usize),

    #[error("symbol {0} has zero probability")]
    ZeroProbability(usize),

    #[error("support points {0} and {1} share a partition cell")]
    DuplicateCell(usize, usize),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used by the command-line runner for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Certificate,
    Budget,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::BudgetExceeded { .. } => ErrorKind::Budget,
            Error::Certificate { .. }
            | Error::Precondition(_)
            | Error::InfeasibleTolerance { .. }
            | Error::NoNestingTranslate(_)
            | Error::PrefixExhausted { .. } => ErrorKind::Certificate,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn budget(needed: impl ToString, budget: impl ToString) -> Error {
        Error::BudgetExceeded {
            needed: needed.to_string(),
            budget: budget.to_string(),
        }
    }
}
