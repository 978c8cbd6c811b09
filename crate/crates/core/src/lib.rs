//! Online learning of Gaussian-process state-space models with a recursive,
//! square-root filter over the joint state and inducing values.

pub mod belief;
pub mod bench;
pub mod error;
pub mod filter;
pub mod hypopt;
pub mod kernel;
pub mod models;
pub mod oracle;
pub mod verify;

pub use belief::{AugmentedBelief, BeliefBlocks, BeliefSnapshot};
pub use error::{Error, Result};
pub use filter::{Filter, FilterConfig, StepReport};
pub use kernel::Hyperparameters;
