//! Simulation of distributed hybrid-beamforming MIMO links: channel
//! generation, precoder/combiner design, detection, Monte Carlo BER
//! campaigns and diversity-gain analysis.

pub mod analysis;
pub mod arrays;
pub mod beamforming;
pub mod channel;
pub mod detect;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod orderstats;
pub mod rng;

pub use error::{Error, Result};
