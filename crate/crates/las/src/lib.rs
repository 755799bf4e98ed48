//! File formats, audio front end, training and decoding pipelines and the
//! command line around [`las_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod frontend;
pub mod pipeline;

pub use error::{Error, Result};
