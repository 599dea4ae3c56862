//! Mutual information, entropy and KL divergence estimation from diffusion
//! score functions.

pub mod baselines;
pub mod data;
pub mod estimators;
pub mod nn;
pub mod score;
pub mod tasks;
pub mod sde;
