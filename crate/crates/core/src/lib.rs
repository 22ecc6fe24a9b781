//! Separation-rank analysis of unnormalized multi-head self-attention
//! networks: grid-tensor rank measurement, analytic bounds, lower-bound
//! witness constructions and architecture audits.
//!
//! The numeric core is generic over [`numerics::Scalar`] (`f32`, `f64`);
//! exact counts use arbitrary-precision integers.

pub mod bounds;
pub mod model;
pub mod numerics;
pub mod septensor;
pub mod witness;
pub mod audit;
pub mod cli;

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type NetworkSpec64 = model::NetworkSpec<f64>;
pub type NetworkSpec32 = model::NetworkSpec<f32>;
