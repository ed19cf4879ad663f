//! Mesh-free PDE solving with neural networks trained on finite-volume
//! flux residuals.

pub mod autodiff;
pub mod bench;
pub mod divest;
mod linalg;
pub mod loss;
pub mod network;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod train;
