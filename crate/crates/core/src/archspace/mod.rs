//! Search spaces, architectures and architecture encodings.

mod arch;
mod encoding;
mod proxies;
mod space;

use std::path::Path;

pub use arch::{
    content_id, flatten_encoding, random_architecture, random_architecture_with, read_arch_jsonl,
    write_arch_jsonl, Architecture, SlotGraph, Violation,
};
pub use encoding::{concat_caz, load_encoding_table, read_encoding_csv, EncodingKind, EncodingTable};
pub use proxies::{graph_proxies, PARAMS_FEATURE, PROXY_DIM, PROXY_NAMES};
pub use space::{OpCategory, OpInfo, SearchSpace, SpaceKind, FBNET, NB201};

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("invalid architecture: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown search space {0:?}")]
    UnknownSpace(String),
    #[error("encoding width mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite encoding value {0}")]
    NonFiniteValue(String),
    #[error("encoding tables disagree on arch_id {0:?}")]
    KeyMismatch(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ArchError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        ArchError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn csv(e: csv::Error) -> Self {
        ArchError::Io {
            path: "<csv>".into(),
            message: e.to_string(),
        }
    }
}

/// Builds the graph-proxy table for a set of architectures.
pub fn proxy_table(archs: &[Architecture], space: &SearchSpace) -> Result<EncodingTable, ArchError> {
    let mut t = EncodingTable::new(EncodingKind::Zcp, PROXY_DIM);
    for a in archs {
        t.insert(a.arch_id(), graph_proxies(a, space)?)?;
    }
    Ok(t)
}
