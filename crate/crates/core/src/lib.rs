//! Routing policies trained to maximize the probability of arriving on time
//! over networks with correlated Gaussian travel times.

pub mod eval;
pub mod network;
pub mod oracle;
pub mod policy;
pub mod seed;
pub mod tensor;
pub mod trainer;
