use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Numeric failures carry enough context to be turned into a per-row error
/// code by the sweep runner (see [`Error::code`]).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown jet variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate jet variable `{0}`")]
    DuplicateVariable(String),
    #[error("jet variable `{0}` has cap 0 and cannot carry a unit term")]
    CapTooSmall(String),
    #[error("jet shapes differ")]
    ShapeMismatch,
    #[error("jet constant term is zero; {0} is singular")]
    SingularConstantTerm(&'static str),
    #[error("multi-index {index:?} exceeds caps {caps:?}")]
    IndexOutOfCaps { index: Vec<usize>, caps: Vec<usize> },

    #[error("parameter `{name}` = {value} outside {allowed}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        allowed: &'static str,
    },
    #[error("target mean photon number {target} is below the floor {floor} set by m")]
    InfeasibleTarget { target: f64, floor: f64 },
    #[error("target mean photon number {target} is not reachable with r <= {r_max}")]
    BracketExceeded { target: f64, r_max: f64 },
    #[error("Fock cutoff {cutoff} leaves tail probability {tail:e}")]
    CutoffTooSmall { cutoff: usize, tail: f64 },

    #[error("denominator {what} vanishes")]
    DegenerateDenominator { what: &'static str },
    #[error("parity signal is constant in phi")]
    DegenerateSignal,
    #[error("state has zero mean and zero variance")]
    DegenerateState,
    #[error("{what} has imaginary residue {residue:e}")]
    ImaginaryResidue { what: &'static str, residue: f64 },
    #[error("normal equations for the Kerr purification are singular (det {det:e})")]
    SingularNormalEquations { det: f64 },
    #[error("moment set violates {0}")]
    InvalidMoments(&'static str),
    #[error("phase optimisation window ({lo}, {hi}) is invalid")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("beam splitter block {block} drifted from unitarity by {drift:e}")]
    UnitarityDrift { block: usize, drift: f64 },
    #[error("loss channel changed the trace by {drift:e}")]
    TraceDrift { drift: f64 },

    #[error("no preset for figure {0}")]
    UnknownFigure(u32),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("invalid sweep: {0}")]
    SpecInvalid(String),
}

impl Error {
    /// Short stable identifier written to the `error` column of sweep output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownVariable(_) => "UnknownVariable",
            Error::DuplicateVariable(_) => "DuplicateVariable",
            Error::CapTooSmall(_) => "CapTooSmall",
            Error::ShapeMismatch => "ShapeMismatch",
            Error::SingularConstantTerm(_) => "SingularConstantTerm",
            Error::IndexOutOfCaps { .. } => "IndexOutOfCaps",
            Error::ParamOutOfRange { .. } => "ParamOutOfRange",
            Error::InfeasibleTarget { .. } => "InfeasibleTarget",
            Error::BracketExceeded { .. } => "BracketExceeded",
            Error::CutoffTooSmall { .. } => "CutoffTooSmall",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::DegenerateSignal => "DegenerateSignal",
            Error::DegenerateState => "DegenerateState",
            Error::ImaginaryResidue { .. } => "ImaginaryResidue",
            Error::SingularNormalEquations { .. } => "SingularNormalEquations",
            Error::InvalidMoments(_) => "InvalidMoments",
            Error::InvalidWindow { .. } => "InvalidWindow",
            Error::UnitarityDrift { .. } => "UnitarityDrift",
            Error::TraceDrift { .. } => "TraceDrift",
            Error::UnknownFigure(_) => "UnknownFigure",
            Error::SchemaViolation { .. } => "SchemaViolation",
            Error::SpecInvalid(_) => "SpecInvalid",
        }
    }

    /// True for errors caused by the request rather than by the numerics.
    pub fn is_spec_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownFigure(_)
                | Error::SchemaViolation { .. }
                | Error::SpecInvalid(_)
                | Error::ParamOutOfRange { .. }
                | Error::InfeasibleTarget { .. }
                | Error::BracketExceeded { .. }
        )
    }
}
