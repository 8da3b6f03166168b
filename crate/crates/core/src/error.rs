use thiserror::Error;

use crate::metric::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cluster")]
    EmptyCluster,

    #[error("cluster not splittable: {0} point(s)")]
    NotSplittable(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("point {0} is not in the skeleton")]
    NotInSkeleton(usize),

    #[error("measure not normalized: total mass {0}")]
    MeasureNotNormalized(f64),

    #[error("invalid metric space: {}", summarize(.0))]
    InvalidSpace(Vec<Violation>),

    #[error("no schedule entry for level {0}")]
    MissingScheduleLevel(i64),

    #[error("parse error at line {line}, field {field}: {message}")]
    Parse {
        line: usize,
        field: usize,
        message: String,
    },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(4).map(|v| v.to_string()).collect();
    let mut s = shown.join("; ");
    if violations.len() > 4 {
        s.push_str(&format!("; and {} more", violations.len() - 4));
    }
    s
}
