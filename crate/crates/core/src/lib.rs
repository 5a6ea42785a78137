//! Data-driven existence certificates and synthesis of target output
//! controllers for discrete-time LTI systems
//!
//! ```text
//! x(t+1) = A x(t) + B u(t),   y(t) = C x(t),   z(t) = F x(t)
//! ```
//!
//! Everything on the data path works from recorded input/state trajectories
//! only. The [`simulator`] module carries a known plant and serves as the
//! model-based oracle for cross-checks.
//!
//! The numerical core is generic over the scalar through [`Real`]; the
//! aliases below fix it to `f64`, which is what the CLI and the acceptance
//! suite use.

pub mod augmentation;
pub mod error;
pub mod existence;
pub mod numerics;
pub mod observer;
pub mod scalar;
mod serde_mat;
pub mod simulator;
pub mod synthesis;
pub mod trajectory;

pub use error::{Error, Result};
pub use numerics::{Region, RankTolerance};
pub use scalar::Real;

/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
/// Complex scalar used for poles and eigenvalues.
pub type Complex = nalgebra::Complex<f64>;

pub type PoleSet = numerics::PoleSet<f64>;
pub type TrajectoryDataset = trajectory::TrajectoryDataset<f64>;
pub type DataPartition = trajectory::DataPartition<f64>;
pub type HankelBlock = trajectory::HankelBlock<f64>;
pub type ExistenceReport = existence::ExistenceReport;
pub type DataPair = existence::DataPair<f64>;
pub type ControllerDesign = synthesis::ControllerDesign<f64>;
pub type AugmentationResult = augmentation::AugmentationResult<f64>;
pub type AugmentedDesign = augmentation::AugmentedDesign<f64>;
pub type ObserverDesign = observer::ObserverDesign<f64>;
pub type ClosedLoopSpec = observer::ClosedLoopSpec<f64>;
pub type PlantModel = simulator::PlantModel<f64>;
pub type SimulationTrace = simulator::SimulationTrace<f64>;
