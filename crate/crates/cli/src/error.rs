use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("reference error: {0}")]
    Reference(String),

    #[error("{context}: {source}")]
    Within {
        context: String,
        #[source]
        source: leakmix::Error,
    },

    #[error(transparent)]
    Core(#[from] leakmix::Error),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

/// Wraps a library error with the name of what was being built.
pub fn within(context: String) -> impl FnOnce(leakmix::Error) -> CliError {
    move |source| CliError::Within { context, source }
}

impl CliError {
    /// 2 parse, 3 validation or reference, 4 size guard, 5 solver, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Reference(_) => 3,
            CliError::Within { source, .. } | CliError::Core(source) => core_code(source),
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "parse",
            3 => "validation",
            4 => "size-guard",
            5 => "solver",
            _ => "error",
        }
    }
}

fn core_code(e: &leakmix::Error) -> i32 {
    use leakmix::Error::*;
    match e {
        Syntax(_) => 2,
        SizeGuard { .. } => 4,
        Solver(_) | NonConvergence { .. } => 5,
        Internal(_) => 1,
        Validation(_) | SeparatorClash(_) | DimensionMismatch(_) | DomainMismatch(_) | Misalignment(_)
        | InfeasibleSupport { .. } | RowSum { .. } => 3,
    }
}
