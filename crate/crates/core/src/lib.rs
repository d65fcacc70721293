pub mod network;
pub mod planner;
pub mod policy;
pub mod sim;
pub mod scaling;
pub mod experiment;
