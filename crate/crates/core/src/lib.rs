pub mod error;
pub mod io;
pub mod nnet;
pub mod optim;
pub mod pipeline;
pub mod sarima;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
