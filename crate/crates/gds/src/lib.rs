//! Host-side tooling around `gds-core`: dataset trees, the edge-to-cloud
//! report protocol, the alert service, evaluation IO and the edge runner.

pub mod backends;
pub mod dataset;
pub mod edge;
pub mod evalio;
pub mod imaging;
pub mod proto;
pub mod server;
