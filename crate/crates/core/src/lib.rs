//! Stealthy node-injection attacks on graph neural networks.
//!
//! An actor-critic generator injects one node and one edge per step into a
//! target's neighbourhood. Injected features are pulled towards the local
//! feature manifold with an entropic optimal-transport loss, and a GIN
//! discriminator with an InfoGAN-style latent head keeps the injected
//! structure consistent with the clean graph.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by tests and the CLI.

pub mod discriminator;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod generator;
pub mod graph;
pub mod nn;
pub mod rl;
pub mod scalar;
pub mod sparse;
pub mod stealth;
pub mod victim;

pub use error::{Error, Result};
pub use graph::{load_graph, DataSplit, FeatureSpace, Graph, SubgraphView};
pub use scalar::Scalar;

pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type VictimModel64 = victim::VictimModel<f64>;
pub type VictimModel32 = victim::VictimModel<f32>;
pub type Janus64 = rl::Janus<f64>;
pub type Janus32 = rl::Janus<f32>;
pub type Trainer64 = rl::Trainer<f64>;
pub type Trainer32 = rl::Trainer<f32>;
pub type Generator64 = generator::Generator<f64>;
pub type Generator32 = generator::Generator<f32>;
pub type Discriminator64 = discriminator::Discriminator<f64>;
pub type Discriminator32 = discriminator::Discriminator<f32>;
