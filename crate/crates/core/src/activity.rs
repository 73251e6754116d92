//! Spatial activity measures: sub-block pixel variances, per-block
//! activities, and picture-level normalization.
//!
//! A coding block's activity is `1 + min` of its four sub-block population
//! variances. Activities are normalized against the picture mean `t` with a
//! strength-controlled scaling factor `f`:
//!
//! ```text
//! f = 2^(A/6)
//! normalized = (f * act + t) / (act + f * t)      in (1/f, f)
//! ```

use crate::partition::{CuGrid, Rect, sub_blocks};
use crate::video_io::{FrameBuffer, PlaneRef};
use crate::{Error, Result};

/// Population variance of the samples in `region`, i.e. `sum((x - mean)^2) / m`.
///
/// Sums are accumulated in 64-bit integers, which is exact for 12-bit
/// samples over any supported block size; only the final division rounds.
pub fn block_variance(plane: &PlaneRef<'_>, region: &Rect) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut sum: u64 = 0;
    let mut sum_sq: u64 = 0;
    for y in region.y..region.y + region.h {
        for &s in &plane.row(y)[region.x..region.x + region.w] {
            let v = s as u64;
            sum += v;
            sum_sq += v * v;
        }
    }
    let m = region.area() as u64;
    // var = (m * sum_sq - sum^2) / m^2, numerator exact in u64
    let numerator = m * sum_sq - sum * sum;
    Ok(numerator as f64 / (m as f64 * m as f64))
}

/// Variances of the region's sub-blocks (one value when degenerate).
pub fn sub_block_variances(plane: &PlaneRef<'_>, region: &Rect) -> Result<Vec<f64>> {
    sub_blocks(region)
        .iter()
        .map(|rect| block_variance(plane, rect))
        .collect()
}

/// Non-normalized spatial activity of one coding block:
/// `1 + min(sub-block variances)`.
pub fn cb_activity(plane: &PlaneRef<'_>, region: &Rect) -> Result<f64> {
    let variances = sub_block_variances(plane, region)?;
    let min = variances.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(1.0 + min)
}

/// Arithmetic mean of the per-block activities of one picture.
pub fn picture_mean_activity(activities: &[f64]) -> Result<f64> {
    if activities.is_empty() {
        return Err(Error::EmptyActivityList);
    }
    Ok(activities.iter().sum::<f64>() / activities.len() as f64)
}

/// Activity scaling factor `f = 2^(A/6)` for strength `A >= 1`.
pub fn scaling_factor(strength: u32) -> f64 {
    debug_assert!(strength >= 1);
    2f64.powf(strength as f64 / 6.0)
}

/// Maps an activity into `(1/f, f)` relative to the picture mean. Equals 1
/// exactly when `activity == picture_mean`.
pub fn normalize_activity(activity: f64, picture_mean: f64, f: f64) -> f64 {
    debug_assert!(activity >= 1.0 && picture_mean >= 1.0 && f > 1.0);
    (f * activity + picture_mean) / (activity + f * picture_mean)
}

/// First analysis pass over a frame: per-block activities for all three
/// channels plus the per-channel picture means.
#[derive(Debug, Clone)]
pub struct PictureActivity {
    /// Per coding block, `[C0, C1, C2]` activities in grid raster order.
    pub activities: Vec<[f64; 3]>,
    /// Per-channel mean activity over the picture.
    pub mean: [f64; 3],
}

impl PictureActivity {
    pub fn cb_count(&self) -> usize {
        self.activities.len()
    }
}

pub fn analyze_frame(frame: &FrameBuffer, grid: &CuGrid) -> Result<PictureActivity> {
    let mut activities = vec![[0f64; 3]; grid.len()];
    let mut mean = [0f64; 3];
    for channel in 0..3 {
        let plane = frame.plane(channel);
        let mut per_channel = Vec::with_capacity(grid.len());
        for (i, region) in grid.regions().iter().enumerate() {
            let act = cb_activity(&plane, region)?;
            activities[i][channel] = act;
            per_channel.push(act);
        }
        mean[channel] = picture_mean_activity(&per_channel)?;
    }
    Ok(PictureActivity { activities, mean })
}
