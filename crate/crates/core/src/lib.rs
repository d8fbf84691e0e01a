pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod expr;
pub mod graph;
pub mod losses;
pub mod model;
pub mod motion;
pub mod numcore;
pub mod par;
pub mod spotting;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use expr::ExprType;
