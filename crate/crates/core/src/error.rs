use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WgsError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("phase-index mode {mode} requires periodic boundaries on every axis")]
    SymmetryRequiresPbc { mode: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `(i - A)` could not be inverted while forming a Cayley transform.
    #[error("Cayley transform is singular at site class {class}")]
    SingularCayley { class: usize },

    /// The unnormalized reduced density matrix has zero (or non-finite) trace.
    #[error("degenerate state: reduced density matrix trace is {trace}")]
    DegenerateState { trace: f64 },

    #[error("dimension cap exceeded: {dim} > {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl WgsError {
    /// True for errors raised while evaluating the objective (not caller bugs).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self,
            WgsError::SingularCayley { .. } | WgsError::DegenerateState { .. } | WgsError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, WgsError>;
