//! Memory-augmented recurrent networks (stack RNN, stack LSTM, a fixed-size
//! rotating memory) trained on formal-language sequence prediction tasks.

pub mod diffcore;
pub mod error;
pub mod experiment;
pub mod langs;
pub mod models;
pub mod trainer;

pub use error::{Error, Result};
