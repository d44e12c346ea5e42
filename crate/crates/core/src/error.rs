use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid interval ({a}, {b})")]
    InvalidInterval { a: f64, b: f64 },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("one-sided derivatives of order {order} disagree at breakpoint {x}; request a side")]
    BreakpointNonSmooth { x: f64, order: usize },
    #[error("derivative order {0} exceeds the configured maximum")]
    OrderTooHigh(usize),
    #[error("image {step} of the interval degenerated to a point")]
    DegenerateOrbit { step: usize },
    #[error("image {step} of the interval wraps the whole circle")]
    WrapsCircle { step: usize },
    #[error("smooth piece {piece} is numerically flat near x = {x}")]
    HiddenFlatRegion { piece: usize, x: f64 },
    #[error("tangency order mismatch: declared {declared}, measured {measured}")]
    OrderMismatch { declared: u32, measured: u32 },
    #[error("rotation enclosures at t = 0 and t = 1- do not straddle the target")]
    NotBracketed,
    #[error("continued fraction terminates after {terms} terms; target is rational")]
    RationalDetected { terms: usize },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("operator output failed validation: {0}")]
    InvariantRegression(String),
    #[error("containment lost: {0}")]
    ContainmentLost(String),
    #[error("flat interval length {l} must exceed 4 * eps = {bound}")]
    LengthTooSmall { l: f64, bound: f64 },
    #[error("preimage interval is degenerate")]
    PreimageEmpty,
    #[error("no hit within {budget} iterations; raise the hit budget (--max-hit), an irrational target cannot miss")]
    HitBudgetExceeded { budget: usize },
    #[error("approach side {found} differs from the side {expected} the operator produces")]
    SideMismatch { found: String, expected: String },
    #[error("stage {stage} output fails condition(s) {conditions}")]
    StageRegression { stage: usize, conditions: String },
    #[error("inverse branch ambiguous at depth {depth}: preimage endpoint inside a flat piece")]
    InverseBranchAmbiguous { depth: usize },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Variant name, for messages that must name the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "Parse",
            Error::InvalidInterval { .. } => "InvalidInterval",
            Error::InvalidDescriptor(_) => "InvalidDescriptor",
            Error::Precondition(_) => "Precondition",
            Error::BreakpointNonSmooth { .. } => "BreakpointNonSmooth",
            Error::OrderTooHigh(_) => "OrderTooHigh",
            Error::DegenerateOrbit { .. } => "DegenerateOrbit",
            Error::WrapsCircle { .. } => "WrapsCircle",
            Error::HiddenFlatRegion { .. } => "HiddenFlatRegion",
            Error::OrderMismatch { .. } => "OrderMismatch",
            Error::NotBracketed => "NotBracketed",
            Error::RationalDetected { .. } => "RationalDetected",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::InvariantRegression(_) => "InvariantRegression",
            Error::ContainmentLost(_) => "ContainmentLost",
            Error::LengthTooSmall { .. } => "LengthTooSmall",
            Error::PreimageEmpty => "PreimageEmpty",
            Error::HitBudgetExceeded { .. } => "HitBudgetExceeded",
            Error::SideMismatch { .. } => "SideMismatch",
            Error::StageRegression { .. } => "StageRegression",
            Error::InverseBranchAmbiguous { .. } => "InverseBranchAmbiguous",
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
