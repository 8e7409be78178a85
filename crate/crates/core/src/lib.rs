//! Risk-sensitive and adversarially robust tabular Q-learning.

pub mod bimatrix;
pub mod cli;
pub mod egt;
pub mod envs;
pub mod error;
pub mod eval;
pub mod model;
pub mod multi_agent;
pub mod numeric;
pub mod policy;
pub mod rng;
pub mod single_agent;
pub mod table;
pub mod utility;

pub use error::{Error, Result};
pub use rng::RandomStream;
pub use table::{ActionId, CountTable, JointQTable, QTable, StateId};
pub use utility::UtilityParams;
