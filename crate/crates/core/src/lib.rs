//! Conditional diffusion sampling with a restoration prior.
//!
//! The sampler draws from `p(x0 | y)` on a linear inverse problem
//! `y = A x0 + sigma_y n` by running a reverse diffusion whose `x0`
//! estimate fuses a restorer's output with a denoiser's output. Reverse
//! steps before the activation step `tau` are collapsed into a single merged
//! Gaussian kernel.

pub mod costmodel;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;

pub use error::{DpirError, Result};
pub use schedule::{NoiseSchedule, VarianceParam};
pub mod verify;
