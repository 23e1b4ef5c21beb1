//! JSON encoding of instances.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::graph::{FactorGraph, GraphError, InstanceSpec};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn instance_from_json<T: Real>(text: &str) -> Result<FactorGraph<T>, IoError> {
    let spec: InstanceSpec<T> = serde_json::from_str(text)?;
    Ok(FactorGraph::new(spec)?)
}

pub fn instance_to_json<T: Real>(graph: &FactorGraph<T>) -> String {
    let mut s = serde_json::to_string_pretty(graph.spec()).expect("instance serialises");
    s.push('\n');
    s
}

pub fn read_instance<T: Real>(path: impl AsRef<Path>) -> Result<FactorGraph<T>, IoError> {
    let text = read_text(path)?;
    instance_from_json(&text)
}

pub fn write_instance<T: Real>(path: impl AsRef<Path>, graph: &FactorGraph<T>) -> Result<(), IoError> {
    write_text(path, &instance_to_json(graph))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String, IoError> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|source| IoError::Fs {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| IoError::Fs {
        path: path.display().to_string(),
        source,
    })
}
