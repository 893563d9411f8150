//! Treed hazards: Bayesian survival trees with a latent Gaussian-process
//! hazard in every terminal node.
//!
//! The covariate space is partitioned by a binary tree; within each leaf the
//! hazard is piecewise constant on a shared time grid and its log follows a
//! zero-mean Gaussian process with the exponential kernel. The per-leaf
//! marginal likelihood is approximated by a Laplace expansion around the
//! Newton mode, which lets a reversible-jump sampler (grow / prune / change
//! / swap moves, parallel tempering across an inverse-temperature ladder)
//! explore the posterior over trees directly.

pub mod cli;
pub mod config;
pub mod data;
pub mod node_model;
pub mod optim;
pub mod posterior;
pub mod sampler;
pub mod simgen;
pub mod tree;
pub mod tridiag;
