use thiserror::Error;

use crate::model::{JobId, TaskId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("job {job} rejected: {reason}")]
    Admission { job: JobId, reason: String },

    #[error("task {task} violates the bound preconditions: {reason}")]
    BoundPrecondition { task: TaskId, reason: String },

    #[error("job {0} has not completed")]
    Incomplete(JobId),

    #[error("empty job set")]
    EmptyJobSet,

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
