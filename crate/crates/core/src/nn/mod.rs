//! Dense math, the tanh MLP with hand-written backpropagation, Adam, gradient
//! checking and parameter checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod params;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{ForwardCache, MlpNet};
pub use params::{ParamVector, Segment};
