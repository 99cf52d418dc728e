//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical.

use std::fmt;

use wearec::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// What the command was doing when an error surfaced; decides the exit code
/// for error kinds that do not imply one themselves.
#[derive(Clone, Copy, Debug)]
pub enum Stage {
    Config,
    Data,
    Run,
}

pub fn classify(err: Error, stage: Stage) -> Failure {
    let message = err.to_string();
    match (&err, stage) {
        (Error::Numerical(_), _) => Failure::numerical(message),
        (Error::Data(_), _) => Failure::data(message),
        (Error::Config(_) | Error::Checkpoint(_), _) => Failure::usage(message),
        (_, Stage::Data) => Failure::data(message),
        (_, Stage::Config | Stage::Run) => Failure::usage(message),
    }
}

pub trait At<T> {
    fn at(self, stage: Stage) -> Result<T, Failure>;
}

impl<T> At<T> for wearec::Result<T> {
    fn at(self, stage: Stage) -> Result<T, Failure> {
        self.map_err(|e| classify(e, stage))
    }
}
