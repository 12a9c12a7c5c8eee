//! Consumer search duopoly with hold-up: demands, best responses, price
//! equilibria, comparative statics and a Monte Carlo cross-check.

pub mod cli;
pub mod demand;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod firm;
pub mod market;
pub mod quad;
pub mod report;
pub mod sim;
pub mod variants;

mod kernel;

pub use error::{Error, Result};
