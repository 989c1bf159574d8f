//! Simulation of a two-photon-stabilized cat-qubit memory: Fock-space
//! operators, master-equation integration, device models, Wigner tomography,
//! gates, squeezing and state reconstruction.

pub mod device;
pub mod error;
pub mod fock;
pub mod gates;
pub mod lindblad;
pub mod reconstruct;
pub mod scalar;
pub mod squeeze;
pub mod wigner;

pub use error::{Error, Result};

pub type Complex = scalar::C<f64>;
pub type Operator = fock::Operator<f64>;
pub type PureState = fock::PureState<f64>;
pub type DensityMatrix = fock::DensityMatrix<f64>;
pub type LindbladModel = lindblad::LindbladModel<f64>;
pub type Trajectory = lindblad::Trajectory<f64>;
