use thiserror::Error;

use crate::graph::{LinkId, Vertex};

#[derive(Debug, Error)]
pub enum Error {
    #[error("outgoing turning ratios of link {link} sum to {sum}, expected 1")]
    RowSum { link: LinkId, sum: f64 },

    #[error("non-exit link {0} has no outgoing edges")]
    DanglingLink(LinkId),

    #[error("unknown link {0}")]
    UnknownLink(Vertex),

    #[error("duplicate link id {0}")]
    DuplicateLink(LinkId),

    #[error("invalid link {link}: {reason}")]
    InvalidLink { link: LinkId, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("demand group `{0}` has no links")]
    EmptyGroup(&'static str),

    #[error("no path from link {from} to link {to}")]
    NoPath { from: LinkId, to: LinkId },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
