use alloc::string::String;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("failed to build a connected graph after {attempts} attempts")]
    ConnectivityRetriesExhausted { attempts: usize },

    #[error("tape does not match the current network (parameters changed since forward)")]
    StaleTape,

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("NaN detected in GW solver at outer iteration {outer_iter}")]
    SolverNan { outer_iter: usize },

    #[error("style score {value} outside [0, 1]")]
    StyleScoreOutOfRange { value: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
