use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is singular: pivot {pivot} has magnitude {magnitude:.3e} (threshold {threshold:.3e})")]
    SingularMatrix {
        pivot: usize,
        magnitude: f64,
        threshold: f64,
    },
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported constellation size {size} for {family}")]
    UnsupportedSize { family: &'static str, size: usize },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("code `{0}` carries no column-cancellation spec")]
    MissingCcSpec(String),
    #[error("code `{0}` columns are not in column-cancellation order; call cc_ordered() first")]
    NotCcOrdered(String),
    #[error("enumeration of {size} items exceeds the cap of {cap}")]
    CodebookTooLarge { size: u128, cap: u128 },
    #[error("unitary has an eigenvalue of multiplicity {multiplicity} > floor(M/2) = {limit}")]
    EigMultiplicityViolation { multiplicity: usize, limit: usize },
    #[error("effective channel is rank deficient (|r_ii| = {pivot:.3e})")]
    RankDeficient { pivot: f64 },
    #[error("no full-rank commutator exists: eigenvalue multiplicity {multiplicity} > {limit}")]
    Infeasible { multiplicity: usize, limit: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("channel redraw limit hit after {attempts} singular draws")]
    RngPathology { attempts: usize },
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
