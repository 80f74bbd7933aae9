//! Passive dynamical networks on graphs and their dual network optimization problems.
//!
//! The core is generic over the scalar type ([`Scalar`], implemented for `f32`
//! and `f64`); the aliases below fix it to `f64`.

// `!(x > 0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod graph;
pub mod linalg;
pub mod optimizer;
pub mod relations;
pub mod scalar;
pub mod simulator;
pub mod systems;
pub mod traffic;

use thiserror::Error;

pub use scalar::Scalar;

/// Any error raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Relation(#[from] relations::RelationError),
    #[error(transparent)]
    System(#[from] systems::SystemError),
    #[error(transparent)]
    Simulation(#[from] simulator::SimError),
    #[error(transparent)]
    Optimizer(#[from] optimizer::OptimizerError),
    #[error("trajectory did not settle within horizon {horizon}")]
    NotSettled { horizon: f64 },
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
}

pub type Relation = relations::MonotoneRelation<f64>;
pub type Integral = relations::ConvexIntegral<f64>;
pub type Node = systems::NodeSystem<f64>;
pub type Controller = systems::EdgeController<f64>;
pub type Network = simulator::NetworkModel<f64>;
pub type Program = optimizer::NetworkProgram<f64>;
pub type Report = optimizer::SolutionReport<f64>;

/// Library version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
