//! Pareto set learning for multi-objective MDPs: a hypernet maps a
//! preference over objectives to the parameters of a Gaussian policy.

pub mod cli;
pub mod envs;
pub mod error;
pub mod hypernet;
pub mod io;
pub mod metrics;
pub mod momdp;
pub mod nn;
pub mod optim;
pub mod ppo;
pub mod rollout;
pub mod trainer;

pub use error::{Error, Result};
