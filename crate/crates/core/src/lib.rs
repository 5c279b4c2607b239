//! Full-stack design space exploration for distributed ML training and
//! inference systems.

pub mod schema;
pub mod sim;
pub mod workload;
pub mod agents;
pub mod objective;
pub mod harness;
