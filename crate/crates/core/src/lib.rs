//! Meta-optimization of heuristics for combinatorial optimization.
//!
//! The crate is organised around the two nested searches of the method:
//!
//! * an *inner loop* where an optimizer program evolves task heuristics
//!   (node selectors, penalty updaters, edge indicators, bin scorers) that
//!   plug into the evaluation engines in [`harnesses`];
//! * an *outer loop* ([`metaloop`]) where the best optimizer so far generates
//!   new optimizers, which are scored by how well they improve heuristics
//!   across several tasks ([`scoring`]).
//!
//! Generated code is either bound to a built-in native rule
//! ([`harnesses::rules`], [`optimizers`]) or executed by an external worker
//! process over the length-prefixed protocol in [`sandbox`].

pub mod cli;
pub mod executor;
pub mod harnesses;
pub mod instances;
pub mod llm;
pub mod matrix;
pub mod metaloop;
pub mod optimizers;
pub mod population;
pub mod rng;
pub mod sandbox;
pub mod scoring;
