//! Process exit codes by error class.

use std::fmt;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Ceremony or relying-party rejection.
    Rejected = 1,
    Usage = 2,
    /// Unreadable or malformed input, or a local I/O failure.
    Input = 3,
    /// The relying party could not be reached or answered garbage.
    Transport = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.class as u8)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Tags any error with an exit class.
pub trait ClassifyExt<T> {
    fn class(self, class: Class) -> CliResult<T>;

    fn input(self) -> CliResult<T>
    where
        Self: Sized,
    {
        self.class(Class::Input)
    }

    fn transport(self) -> CliResult<T>
    where
        Self: Sized,
    {
        self.class(Class::Transport)
    }
}

impl<T, E: Into<anyhow::Error>> ClassifyExt<T> for Result<T, E> {
    fn class(self, class: Class) -> CliResult<T> {
        self.map_err(|e| Failure {
            class,
            error: e.into(),
        })
    }
}

pub fn fail<T>(class: Class, error: anyhow::Error) -> CliResult<T> {
    Err(Failure { class, error })
}
