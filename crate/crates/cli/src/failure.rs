//! Errors tagged with the exit code they should produce.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Other,
    Ingest,
    Fit,
    Config,
}

impl Stage {
    pub fn exit_code(self) -> u8 {
        match self {
            Stage::Other => 1,
            Stage::Ingest => 2,
            Stage::Fit => 3,
            Stage::Config => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub stage: Stage,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            stage: Stage::Other,
            error,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> CmdResult<T> {
        self.map_err(|e| Failure {
            stage,
            error: e.into(),
        })
    }
}
