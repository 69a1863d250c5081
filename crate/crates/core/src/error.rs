use std::path::PathBuf;

use crate::instance::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("unknown arc {0:?}")]
    UnknownArc(String),

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("invalid generator parameters: {0}")]
    GeneratorParams(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("rejected start: {}", .0.join("; "))]
    RejectedStart(Vec<String>),

    #[error("{0}")]
    Unsupported(String),

    #[error("enumeration budget exceeded: {needed} candidates > budget {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("no incumbent available")]
    NoIncumbent,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
