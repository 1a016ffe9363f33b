//! Maps every error to the scripting contract: exit 2 for configuration and
//! schema problems, exit 1 for runtime failures.

use std::fmt::Display;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, Failure>;

pub fn usage(message: impl Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

pub fn runtime(message: impl Display) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.to_string(),
    }
}

impl From<plslab_core::Error> for Failure {
    fn from(e: plslab_core::Error) -> Failure {
        use plslab_core::Error;
        // I/O problems and broken numeric preconditions are runtime failures;
        // everything else means the inputs or their shapes were wrong.
        let code = match &e {
            Error::Io(_) | Error::Contract(_) => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        runtime(e)
    }
}
