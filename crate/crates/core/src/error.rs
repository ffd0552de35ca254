use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("matrix unit ({p},{q}) out of range at site {site} of size {size}")]
    IndexOutOfRange {
        site: usize,
        p: usize,
        q: usize,
        size: usize,
    },
    #[error("operands live over different fields")]
    FieldMismatch,
    #[error("operands live over different site shapes")]
    ShapeMismatch,
    #[error("support {support:?} is not contained in {sites:?}")]
    SupportNotContained {
        support: Vec<usize>,
        sites: Vec<usize>,
    },
    #[error("element is not invertible")]
    NotInvertible,
    #[error("element does not centralize site {0}")]
    NotInCentralizer(usize),
    #[error("element is not idempotent")]
    NotIdempotent,
    #[error("characteristic divides the size {size} of site {site}")]
    CharacteristicDividesSize { site: usize, size: usize },
    #[error("shifting site {site} by {offset} leaves the index set")]
    ShiftOutOfRange { site: usize, offset: i64 },
    #[error("label ({p},{q}) does not fit site {site} of size {size} after shifting")]
    ShapeMismatchAtShiftedSite {
        site: usize,
        p: usize,
        q: usize,
        size: usize,
    },
    #[error("invalid sparse system: {0}")]
    InvalidSystem(String),
    #[error("not a derivation: {0}")]
    NotADerivation(String),
    #[error("invalid endomorphism: {0}")]
    InvalidEndomorphism(String),
    #[error("support of {0} exceeds the source truncation")]
    SupportExceedsSource(String),
    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),
    #[error("no invertible conjugator found within {budget} candidates; try a larger field")]
    NoConjugatorFound { budget: usize },
    #[error("invalid conjugator sequence: {0}")]
    InvalidSequence(String),
    #[error("element {index} has support outside site {site}")]
    WrongSupport { index: usize, site: usize },
    #[error("invalid affine family: {0}")]
    InvalidFamily(String),
    #[error("result is not finitary")]
    NotFinitaryResult,
}
