use thiserror::Error;

/// Errors raised by problem construction, simulation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coefficient `{coefficient}` is not finite at {input}")]
    Evaluation { coefficient: String, input: String },

    #[error("unknown catalog problem `{0}`")]
    UnknownProblem(String),

    #[error("catalog problem `{problem}` requires parameter `{key}`")]
    MissingParam { problem: String, key: String },

    #[error("non-finite state on path {path} at step {step}")]
    Simulation { path: usize, step: usize },

    #[error(
        "infeasible discretization at time index {time_index}, node {node} (x = {x}): \
         probability {probability} outside [0, 1]; use a larger n_space or a smaller dt"
    )]
    InfeasibleDiscretization {
        time_index: usize,
        node: usize,
        x: f64,
        probability: f64,
    },

    #[error("regression at step {step} is rank deficient even after ridge regularization")]
    Conditioning { step: usize },

    #[error(
        "backward solution diverged at step {step}; dt*(mu + alpha*mu2) = {stiffness} is too large"
    )]
    Divergence { step: usize, stiffness: f64 },

    #[error(
        "implicit driver step is not a contraction: dt*(mu + alpha*mu2) = {stiffness} >= {limit}; \
         refine the time grid"
    )]
    StepSize { stiffness: f64, limit: f64 },

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("fixed-point iteration did not converge at time index {time_index} after {iterations} iterations")]
    FixedPoint {
        time_index: usize,
        iterations: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported diagnostic: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("alpha = {alpha}: {source}")]
    AtAlpha {
        alpha: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_alpha(self, alpha: f64) -> Self {
        Error::AtAlpha {
            alpha,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Evaluation { .. } => "evaluation",
            Error::UnknownProblem(_) => "unknown_problem",
            Error::MissingParam { .. } => "missing_param",
            Error::Simulation { .. } => "simulation",
            Error::InfeasibleDiscretization { .. } => "infeasible_discretization",
            Error::Conditioning { .. } => "conditioning",
            Error::Divergence { .. } => "divergence",
            Error::StepSize { .. } => "step_size",
            Error::Stability(_) => "stability",
            Error::FixedPoint { .. } => "fixed_point",
            Error::Shape(_) => "shape",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::AtAlpha { source, .. } => source.kind(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
