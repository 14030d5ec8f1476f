use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate target: variance of y_t is zero")]
    DegenerateTarget,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn in_layer(self, layer: usize) -> Self {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }

    /// True for errors caused by reading or decoding dataset files.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Format { .. } | Error::Io { .. } => true,
            Error::Trial { source, .. } | Error::Layer { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    /// True for errors in the experiment configuration.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidValue(_) => true,
            Error::Trial { source, .. } | Error::Layer { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
