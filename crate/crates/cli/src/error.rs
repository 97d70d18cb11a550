use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error(transparent)]
    Core(#[from] fpmeasure::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use fpmeasure::Error as E;
        match self {
            CliError::Config { .. } | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Parse(_) | E::InvalidProblem(_) | E::NotC2(_) | E::DensityFormat(_) | E::Io(_) => EXIT_CONFIG,
                E::NonUnique { .. } | E::Positivity { .. } | E::Solver(_) | E::NonPositiveMass(_) => EXIT_SOLVER,
                _ => EXIT_CHECK,
            },
        }
    }

    /// Short machine-readable tag for the summary record.
    pub fn kind(&self) -> &'static str {
        use fpmeasure::Error as E;
        match self {
            CliError::Config { .. } => "config",
            CliError::Output { .. } => "output",
            CliError::Core(e) => match e {
                E::Parse(_) => "parse",
                E::Eval(_) => "evaluation",
                E::InvalidProblem(_) => "invalid_problem",
                E::Precondition(_) => "precondition",
                E::NotC2(_) => "not_c2",
                E::NonUnique { .. } => "non_unique",
                E::Positivity { .. } => "positivity",
                E::Solver(_) => "solver",
                E::NonPositiveMass(_) => "non_positive_mass",
                E::IrregularLevel { .. } => "irregular_level",
                E::ClassificationMismatch { .. } => "classification_mismatch",
                E::DensityFormat(_) => "density_format",
                E::Io(_) => "io",
            },
        }
    }
}
