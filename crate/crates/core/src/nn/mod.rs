//! Differentiable building blocks shared by the victim, generator,
//! critic and discriminator.

pub mod gradcheck;
pub mod gumbel;
pub mod layers;
pub mod loss;
pub mod params;
pub mod tape;

pub use gradcheck::grad_check;
pub use gumbel::{gumbel_softmax, gumbel_softmax_sample, gumbel_top_k, sample_gumbel};
pub use layers::{gcl_forward, gin_layer_forward, mlp_forward, Activation, GcnStack, GinLayer, Linear, Mlp, NodeInput};
pub use loss::{smooth_l1, smooth_l1_var};
pub use params::{Adam, Bound, ParamBlock, ParamId};
pub use tape::{Tape, Var};
