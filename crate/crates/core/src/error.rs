use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tail mass on [{r1}, {r2}) is not finite")]
    MeasureDivergence { r1: f64, r2: f64 },

    #[error("no threshold below {upper} carries mass {target}: measure too thin near zero")]
    ThresholdInfeasible { upper: f64, target: f64 },

    #[error("jump region {index} has mass {mass}, expected {expected}")]
    KernelInconsistent {
        index: usize,
        mass: f64,
        expected: f64,
    },

    #[error("control component {coordinate} = {value} at step {step} is outside {{0}} ∪ [{delta0}, {cap}] in absolute value")]
    ControlRange {
        step: usize,
        coordinate: usize,
        value: f64,
        delta0: f64,
        cap: f64,
    },

    #[error("state left the finite range at step {step}")]
    NumericalBlowup { step: usize },

    #[error("{aborted} of {total} paths blew up (limit 0.1%)")]
    TooManyBlowups { aborted: usize, total: usize },

    #[error("grid infeasible: {0}")]
    GridInfeasible(String),

    #[error("non-finite value in slice {slice}")]
    SolverBlowup { slice: usize },

    #[error("explicit scheme not monotone: dt * rate = {courant} > 1 at node {node}")]
    CflViolation { node: usize, courant: f64 },

    #[error("unknown recipe `{name}`; valid recipes: {valid}")]
    UnknownRecipe { name: String, valid: String },

    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

/// One problem found while reading a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    format!("invalid config:\n  {}", lines.join("\n  "))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
