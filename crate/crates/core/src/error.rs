use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn fmt_modes(modes: &[(f64, f64)]) -> String {
    modes
        .iter()
        .map(|(re, im)| format!("{re:+.6}{im:+.6}i"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigenvalue iteration failed to converge on a {order}x{order} matrix")]
    EigenFailure { order: usize },

    #[error("pair is not controllable; rank drops at [{}]", fmt_modes(.modes))]
    UncontrollablePair { modes: Vec<(f64, f64)> },

    #[error("pole assignment is numerically ill-conditioned (best pole error {pole_error:e})")]
    IllConditionedAssignment { pole_error: f64 },

    #[error("bad pole set: {0}")]
    BadPoleSet(String),

    #[error("pair is not stabilizable; frozen modes [{}]", fmt_modes(.frozen))]
    NotStabilizable { frozen: Vec<(f64, f64)> },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ragged data: {0}")]
    RaggedData(String),

    #[error("missing channel `{0}`")]
    MissingChannel(&'static str),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("nesting condition violated: residual {residual:e} exceeds {bound:e}")]
    NestingViolated { residual: f64, bound: f64 },

    #[error("target data Zp has rank {rank}, expected full row rank {rows}")]
    RankDeficientZp { rank: usize, rows: usize },

    #[error("insufficient excitation: {0}")]
    Excitation(String),

    #[error("row selection reached rank {reached} of {target}; singular values {singular_values:?}")]
    SelectionFailure {
        target: usize,
        reached: usize,
        singular_values: Vec<f64>,
    },

    #[error("pencil condition fails on the original target; no augmentation can help")]
    Step1Failed,

    #[error("augmented pair is not controllable; rank drops at [{}]", fmt_modes(.modes))]
    Step3Failed { modes: Vec<(f64, f64)> },

    #[error("(A, C) is not observable; rank drops at [{}]", fmt_modes(.modes))]
    NotObservable { modes: Vec<(f64, f64)> },

    #[error("data equation residual {residual:e} exceeds {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },

    #[error("design disagrees with the model: relation residual {relation_residual:e}, pole error {pole_error:e}")]
    OracleMismatch {
        relation_residual: f64,
        pole_error: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
