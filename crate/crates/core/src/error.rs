use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report, grouped by the exit class the CLI maps it to.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at `{key}`{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    ConfigKey {
        key: String,
        line: Option<usize>,
        msg: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("evaluation error at byte {offset}: {msg}")]
    Eval { offset: usize, msg: String },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:.3e}): {msg}")]
    Solver {
        iterations: usize,
        residual: f64,
        msg: String,
    },

    #[error("loss of coercivity: Schur complement m'K^-1 m = {schur:.3e}; the iterate left the basin of the Newton linearization (try the mixing driver)")]
    Coercivity { schur: f64 },

    #[error("no convergence after {iterations} iterations (last update {last_update:.3e}): {hint}")]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        hint: String,
    },

    #[error("Newton iteration diverged at step {step}: residual history {history:?}")]
    Divergence { step: usize, history: Vec<f64> },

    #[error("mixing stagnated: theta fell below {theta_min:.3e} with resi(new) = {resi_new:.6e} > resi(old) = {resi_old:.6e}")]
    Stagnation {
        theta_min: f64,
        resi_old: f64,
        resi_new: f64,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_level(self, level: usize) -> Self {
        match self {
            e @ Error::AtLevel { .. } => e,
            e => Error::AtLevel {
                level,
                source: Box::new(e),
            },
        }
    }

    /// Strips level context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 2 configuration, 3 non-convergence, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_)
            | Error::ConfigKey { .. }
            | Error::Domain(_)
            | Error::Usage(_)
            | Error::Syntax { .. }
            | Error::Eval { .. } => 2,
            Error::Resource(_) => 4,
            _ => 3,
        }
    }
}

impl From<faer::sparse::FaerError> for Error {
    fn from(e: faer::sparse::FaerError) -> Self {
        Error::Resource(format!("sparse factorization: {e:?}"))
    }
}
