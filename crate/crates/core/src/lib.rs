//! Query-type enumeration, grounding, exact answering and evaluation for
//! existential first-order queries over knowledge graphs.
//!
//! The pipeline is: [`enumerate`] abstract query graphs, [`ground`] them
//! against a [`kg::KgPair`], answer them exactly with the [`solver`], run a
//! [`reasoner`] to rank candidate entities and score the rankings with [`eval`].

pub mod config;
pub mod enumerate;
pub mod error;
pub mod eval;
pub mod ground;
pub mod io;
pub mod kg;
pub mod query;
pub mod reasoner;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
