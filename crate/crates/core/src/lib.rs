//! Stochastic compression of self-organizing particle systems on the
//! triangular lattice: the local asynchronous algorithm, its Markov chain,
//! exact small-system analysis and a constructive ergodicity normalizer.

pub mod async_engine;
pub mod configuration;
pub mod dynamics;
pub mod exactsolver;
pub mod harness;
pub mod lattice;
pub mod normalizer;

pub use configuration::{ConfigError, Configuration, PerimeterWalk};
pub use lattice::{Cell, Direction};
