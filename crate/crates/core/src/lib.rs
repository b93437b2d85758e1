//! Latent factor rating prediction with implicit feedback, user age and item
//! genre attributes, plus the tooling to evaluate and analyse it on MovieLens.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod eval;
pub mod features;
pub mod model;
pub mod train;
