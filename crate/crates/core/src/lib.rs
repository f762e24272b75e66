pub mod conditioning;
pub mod distribution;
pub mod error;
pub mod expr;
pub mod measures;
pub mod multiagent;
pub mod penalty;
pub mod planner;
pub mod policy;
pub mod report;
pub mod scenario;
pub mod variables;
pub mod worldmodel;

pub use error::{Error, ErrorClass, Result};
