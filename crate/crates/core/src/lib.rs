//! Unsupervised fault detection for multichannel sensor logs with dense and
//! LSTM autoencoders.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod method;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod synthplant;
pub mod training;

pub use error::{Error, Result};
