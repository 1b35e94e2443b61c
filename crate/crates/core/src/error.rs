use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Which optimization pass an event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pass {
    Shape,
    Color,
}

impl Pass {
    pub fn as_str(self) -> &'static str {
        match self {
            Pass::Shape => "shape",
            Pass::Color => "color",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is invalid (unknown layer, bad weights, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// The objective became NaN or infinite. `snapshot` holds the parameters
    /// of the last iterate that produced a finite loss: velocity components,
    /// or interleaved RGB in export units for the color pass.
    #[error("non-finite loss in the {pass} pass of frame {frame} at iteration {iteration}")]
    NonFinite {
        pass: Pass,
        frame: usize,
        iteration: usize,
        snapshot: Vec<f64>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
