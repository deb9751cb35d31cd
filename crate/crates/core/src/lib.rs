//! Connectivity restoration for UAV swarms after unexpected destructions.
//!
//! The numeric core (channel, graphs, virtual graphs, GCO/GCN) is generic over
//! [`Scalar`]; meta-learning and the swarm simulator work in `f64`.

pub mod channel;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod meta;
pub mod scalar;
pub mod scene;
pub mod seed;
pub mod sim;
pub mod vrg;

pub use channel::{ChannelParams, LinkPredicate};
pub use error::{Error, Result};
pub use gcn::{GcnHyper, GcnOutput, GcnParams, GcoConfig};
pub use graph::{RuavGraph, TopologyMatrix};
pub use meta::{MetaConfig, MetaParamStore};
pub use scalar::{Scalar, Vec3};
pub use scene::SceneBounds;

pub type Topology = TopologyMatrix<f64>;
pub type Graph = RuavGraph<f64>;
pub type Channel = ChannelParams<f64>;
pub type Link = LinkPredicate<f64>;
pub type Params = GcnParams<f64>;
pub type Hyper = GcnHyper<f64>;
