//! Distributed multi-agent actor-critic training where each agent's critic
//! and policy see only its one-hop proximity neighborhood.
//!
//! Modules follow the data flow of a run: [`proximity`] builds the d-disk
//! graph, [`envs`] simulates local interactions, [`nn`] holds the function
//! approximators, [`learner`] trains one agent, [`coordinator`] drives the
//! central controller over a transport, [`baseline`] is the centralized
//! comparison, and [`oracle`] checks the underlying claims exactly.

pub mod baseline;
pub mod coordinator;
pub mod envs;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod proximity;
pub mod seed;

pub use error::{Error, Result};
