//! Small-tensor numerics: two-layer policies and value networks with manual
//! reverse-mode gradients, SGD, seeded randomness and text checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod value;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::Mlp;
pub use optim::sgd_step;
pub use policy::{
    log_prob_and_grads, policy_forward, sample_action, softmax, Action, ActionDistribution,
    ActionSpace, Body, Head, Linear, LogProbGrads, PolicyParams, LOG_STD_MAX, LOG_STD_MIN,
};
pub use rng::Rng;
pub use value::{value_forward_and_grad, ValueParams};
