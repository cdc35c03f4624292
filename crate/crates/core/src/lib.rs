//! Single-leader multi-follower games: follower equilibria, KKT/MPCC
//! reformulation, multiplier polytopes, constraint qualifications and
//! grid-based optimality oracles.
#![no_std]
// With std linked for tests, float methods resolve inherently and `Float` imports go unused.
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

pub mod config;
pub mod corpus;
pub mod cq;
pub mod expr;
pub mod gnep;
pub mod linalg;
pub mod model;
pub mod mpcc;
pub mod multipliers;
pub mod nep;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod verify;

pub use config::Config;
