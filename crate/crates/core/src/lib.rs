//! Acoustic word embeddings learned jointly from audio–text and audio–audio
//! contrastive objectives, plus the word-discrimination and spoken term
//! detection evaluation used to measure them.

pub mod config;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod frontend;
pub mod gradcheck;
pub mod losses;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
