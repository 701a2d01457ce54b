//! Generalized backward doubly stochastic differential equations with
//! reflection, the stochastic flows that turn them into deterministic-noise
//! equations, and Monte Carlo estimators for the SPDEs they represent.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod acceptance;
pub mod calculus;
pub mod catalog;
pub mod coefficients;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod field;
pub mod flow;
pub mod grid;
pub mod hypotheses;
pub mod reflected;
pub mod regression;
pub mod report;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod suite;
pub mod transform;
