//! Core library: feature storage, class profiling, explanation parsing,
//! grounding, hierarchy morphing, trainable heads and the query loop.

pub mod error;
pub mod feature_store;
pub mod grounding;
pub mod heads;
pub mod morph;
pub mod pair;
pub mod parser;
pub mod profiler;
pub mod session;

pub use error::{Error, Result};
pub use pair::ClassPair;
