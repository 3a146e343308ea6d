//! Numerical substrate for the neural profilers: matrices, a one-hidden-layer
//! network with per-facet softmax heads, manual backpropagation, ADAM, and a
//! finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod network;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, Differentiable, GradCheckConfig, GradCheckReport};
pub use loss::{masked_cross_entropy, softmax};
pub use matrix::Matrix;
pub use network::{Activation, Dense, FacetNetwork, ForwardPass};
