//! Per-coding-block perceptual QP maps for raw 4:4:4 video, plus a small
//! intra transform-coding harness and BD-Rate metrics to compare policies.
//!
//! The crate is organised along the processing pipeline:
//!
//! - [`video_io`]: headerless planar 4:4:4 frame IO and synthetic frame
//!   generation,
//! - [`partition`]: tiling a picture into fixed-size coding blocks and their
//!   four sub-blocks,
//! - [`activity`]: sub-block pixel variances and normalized spatial
//!   activities,
//! - [`qp_policy`]: QP/QStep conversion and the per-block QP policies
//!   (`fcpq`, `adaptiveqp`, `uniform`),
//! - [`codec_sim`]: transform/quantize/reconstruct harness producing rate
//!   proxies and PSNR,
//! - [`metrics`]: Bjøntegaard Delta Rate between two RD curves.

pub mod activity;
pub mod codec_sim;
mod error;
pub mod metrics;
pub mod partition;
pub mod qp_policy;
pub mod video_io;

pub use error::{Error, Result};
