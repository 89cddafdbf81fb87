pub mod geometry;
pub mod controller;
pub mod potentials;
pub mod simulator;
pub mod verification;
