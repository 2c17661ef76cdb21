//! Program money: currency units that carry and execute their own policy.

pub mod crypto;
pub mod fiscal;
pub mod markets;
pub mod metrics;
pub mod money;
pub mod policy;
pub mod rate;
pub mod scenario;
pub mod registry;
pub mod report;
pub mod sim;
pub mod supply;
