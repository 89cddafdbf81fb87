//! Scenario files, trace output and plotting around the `vtube` library.

pub mod commands;
pub mod output;
pub mod plot;
pub mod scenario;
