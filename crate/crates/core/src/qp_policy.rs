//! QP selection per coding block.
//!
//! Three policies share the same activity analysis:
//!
//! - `fcpq`: each channel's blocks get offsets from that channel's own
//!   normalized activity,
//! - `adaptiveqp`: the C0 (luma) offset is applied to all three channels of
//!   the block,
//! - `uniform`: every block keeps the base QP.
//!
//! Offsets are `ceil(6 * log2(normalized activity))`, bounded by the
//! strength `A` through the normalization, and the resulting QPs are
//! clamped to `[0, 51]`.

use std::io::Write;
use std::str::FromStr;

use crate::activity::{analyze_frame, normalize_activity, scaling_factor};
use crate::partition::CuGrid;
use crate::video_io::FrameBuffer;
use crate::{Error, Result};

pub const QP_MIN: i32 = 0;
pub const QP_MAX: i32 = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Fcpq,
    AdaptiveQp,
    Uniform,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fcpq => "fcpq",
            Policy::AdaptiveQp => "adaptiveqp",
            Policy::Uniform => "uniform",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fcpq" => Ok(Policy::Fcpq),
            "adaptiveqp" => Ok(Policy::AdaptiveQp),
            "uniform" => Ok(Policy::Uniform),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

/// Quantization step size for a QP: `2^((qp - 4) / 6)`.
pub fn qp_to_qstep(qp: i32) -> f64 {
    2f64.powf((qp - 4) as f64 / 6.0)
}

/// Inverse mapping `ceil(6 * log2(qstep)) + 4`.
pub fn qstep_to_qp(qstep: f64) -> Result<i32> {
    if !qstep.is_finite() || qstep <= 0.0 {
        return Err(Error::NonPositiveQStep(qstep));
    }
    Ok(ceil_six_log2(qstep) + 4)
}

/// `ceil(6 * log2(x))`, snapping values within 1e-9 of an integer first so
/// that exact powers of `2^(1/6)` survive the float log/pow roundtrip.
fn ceil_six_log2(x: f64) -> i32 {
    let v = 6.0 * x.log2();
    let nearest = v.round();
    if (v - nearest).abs() < 1e-9 {
        nearest as i32
    } else {
        v.ceil() as i32
    }
}

/// Raw offset and clamped QP for one block and channel.
pub fn perceptual_qp(base_qp: i32, normalized_activity: f64) -> Result<(i32, i32)> {
    if !normalized_activity.is_finite() || normalized_activity <= 0.0 {
        return Err(Error::NonPositiveActivity(normalized_activity));
    }
    let offset = ceil_six_log2(normalized_activity);
    let qp = (base_qp + offset).clamp(QP_MIN, QP_MAX);
    Ok((offset, qp))
}

/// Per-block QP decision: raw and normalized activities, offsets before
/// clamping, and the final QPs, all indexed `[C0, C1, C2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpAssignment {
    pub activity: [f64; 3],
    pub normalized: [f64; 3],
    pub offset: [i32; 3],
    pub qp: [i32; 3],
}

/// QPs for every coding block of one frame under one policy.
#[derive(Debug, Clone)]
pub struct QpMap {
    pub policy: Policy,
    pub base_qp: i32,
    pub strength: u32,
    pub frame_index: usize,
    pub cu_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub assignments: Vec<QpAssignment>,
}

impl QpMap {
    pub fn qp(&self, cb_index: usize, channel: usize) -> i32 {
        self.assignments[cb_index].qp[channel]
    }
}

/// Two-pass QP map computation: activity analysis over the whole picture,
/// then per-block offsets under `policy`.
pub fn compute_qp_map(
    frame: &FrameBuffer,
    grid: &CuGrid,
    base_qp: i32,
    strength: u32,
    policy: Policy,
    frame_index: usize,
) -> Result<QpMap> {
    if grid.width != frame.width() || grid.height != frame.height() {
        return Err(Error::QpMapMismatch(format!(
            "grid is {}x{}, frame is {}x{}",
            grid.width,
            grid.height,
            frame.width(),
            frame.height()
        )));
    }
    let analysis = analyze_frame(frame, grid)?;
    let f = scaling_factor(strength);

    let mut assignments = Vec::with_capacity(grid.len());
    for cb in &analysis.activities {
        let mut normalized = [0f64; 3];
        for channel in 0..3 {
            normalized[channel] = normalize_activity(cb[channel], analysis.mean[channel], f);
        }
        let mut offset = [0i32; 3];
        let mut qp = [base_qp.clamp(QP_MIN, QP_MAX); 3];
        match policy {
            Policy::Fcpq => {
                for channel in 0..3 {
                    let (off, q) = perceptual_qp(base_qp, normalized[channel])?;
                    offset[channel] = off;
                    qp[channel] = q;
                }
            }
            Policy::AdaptiveQp => {
                let (off, q) = perceptual_qp(base_qp, normalized[0])?;
                offset = [off; 3];
                qp = [q; 3];
            }
            Policy::Uniform => {}
        }
        assignments.push(QpAssignment { activity: *cb, normalized, offset, qp });
    }

    Ok(QpMap {
        policy,
        base_qp,
        strength,
        frame_index,
        cu_size: grid.cu_size,
        cols: grid.cols,
        rows: grid.rows,
        assignments,
    })
}

/// One CSV/JSON row of a QP map.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QpMapRow {
    pub frame: usize,
    pub cb_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub l: f64,
    pub b: f64,
    pub r: f64,
    #[serde(rename = "L")]
    pub l_norm: f64,
    #[serde(rename = "B")]
    pub b_norm: f64,
    #[serde(rename = "R")]
    pub r_norm: f64,
    pub off_y: i32,
    pub off_cb: i32,
    pub off_cr: i32,
    pub qp_y: i32,
    pub qp_cb: i32,
    pub qp_cr: i32,
}

pub const QP_MAP_CSV_HEADER: &str =
    "frame,cb_index,x,y,w,h,l,b,r,L,B,R,off_y,off_cb,off_cr,qp_y,qp_cb,qp_cr";

/// Flattens a map into rows; `grid` supplies the block geometry.
pub fn qp_map_rows(map: &QpMap, grid: &CuGrid) -> Result<Vec<QpMapRow>> {
    if grid.len() != map.assignments.len() || grid.cu_size != map.cu_size {
        return Err(Error::QpMapMismatch(format!(
            "map has {} blocks of size {}, grid has {} of size {}",
            map.assignments.len(),
            map.cu_size,
            grid.len(),
            grid.cu_size
        )));
    }
    Ok(map
        .assignments
        .iter()
        .zip(grid.regions())
        .enumerate()
        .map(|(cb_index, (a, rect))| QpMapRow {
            frame: map.frame_index,
            cb_index,
            x: rect.x,
            y: rect.y,
            w: rect.w,
            h: rect.h,
            l: a.activity[0],
            b: a.activity[1],
            r: a.activity[2],
            l_norm: a.normalized[0],
            b_norm: a.normalized[1],
            r_norm: a.normalized[2],
            off_y: a.offset[0],
            off_cb: a.offset[1],
            off_cr: a.offset[2],
            qp_y: a.qp[0],
            qp_cb: a.qp[1],
            qp_cr: a.qp[2],
        })
        .collect())
}

/// Scientific notation with 10 significant digits; round-trips any activity
/// value the pipeline produces.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.9e}")
}

/// Writes a QP-map CSV: `# metadata` line, header, then one row per block.
pub fn write_qp_map_csv(
    out: &mut impl Write,
    metadata: &str,
    rows: &[QpMapRow],
) -> std::io::Result<()> {
    writeln!(out, "# {metadata}")?;
    writeln!(out, "{QP_MAP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.cb_index,
            r.x,
            r.y,
            r.w,
            r.h,
            fmt_full(r.l),
            fmt_full(r.b),
            fmt_full(r.r),
            fmt_full(r.l_norm),
            fmt_full(r.b_norm),
            fmt_full(r.r_norm),
            r.off_y,
            r.off_cb,
            r.off_cr,
            r.qp_y,
            r.qp_cb,
            r.qp_cr
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::build_grid;
    use crate::video_io::{SynthPattern, synth_frame};
    use proptest::prelude::*;

    #[test]
    fn qstep_values() {
        assert_eq!(qp_to_qstep(4), 1.0);
        assert_eq!(qp_to_qstep(10), 2.0);
        assert_eq!(qp_to_qstep(22), 8.0);
    }

    #[test]
    fn qstep_to_qp_values() {
        assert_eq!(qstep_to_qp(1.0).unwrap(), 4);
        assert_eq!(qstep_to_qp(10.0).unwrap(), 24); // ceil(19.93...) + 4
        assert!(matches!(qstep_to_qp(0.0), Err(Error::NonPositiveQStep(_))));
        assert!(matches!(qstep_to_qp(-2.0), Err(Error::NonPositiveQStep(_))));
    }

    #[test]
    fn qp_qstep_roundtrip_identity() {
        for qp in QP_MIN..=QP_MAX {
            assert_eq!(qstep_to_qp(qp_to_qstep(qp)).unwrap(), qp, "qp {qp}");
        }
    }

    #[test]
    fn offsets_from_activity() {
        assert_eq!(perceptual_qp(30, 1.0).unwrap(), (0, 30));
        // 6 * log2(1.5) = 3.5098 -> ceil 4
        assert_eq!(perceptual_qp(30, 1.5).unwrap(), (4, 34));
        assert!(matches!(perceptual_qp(30, 0.0), Err(Error::NonPositiveActivity(_))));
    }

    #[test]
    fn offsets_near_normalization_bounds() {
        // A = 6 so activities live in (0.5, 2).
        let just_under_two = 2.0 - 1e-6;
        assert_eq!(perceptual_qp(37, just_under_two).unwrap(), (6, 43));
        let just_over_half = 0.5 + 1e-6;
        let (off, qp) = perceptual_qp(37, just_over_half).unwrap();
        assert_eq!(off, -5);
        assert!((31..=37).contains(&qp));
    }

    #[test]
    fn clamping_to_qp_range() {
        assert_eq!(perceptual_qp(50, 1.9).unwrap().1, QP_MAX);
        assert_eq!(perceptual_qp(2, 0.51).unwrap().1, QP_MIN);
    }

    fn noise_frame(seed: u64) -> FrameBuffer {
        let noise = SynthPattern::Noise { ranges: [(0, 1023), (200, 700), (0, 400)] };
        synth_frame(96, 64, 10, &noise, seed, 0).unwrap()
    }

    #[test]
    fn constant_frame_keeps_base_qp_under_all_policies() {
        let frame = FrameBuffer::filled(64, 64, 10, [512, 100, 900]).unwrap();
        let grid = build_grid(64, 64, 16).unwrap();
        for policy in [Policy::Fcpq, Policy::AdaptiveQp, Policy::Uniform] {
            let map = compute_qp_map(&frame, &grid, 27, 6, policy, 0).unwrap();
            for a in &map.assignments {
                assert_eq!(a.offset, [0; 3], "{policy}");
                assert_eq!(a.qp, [27; 3], "{policy}");
            }
        }
    }

    #[test]
    fn adaptiveqp_copies_luma_to_all_channels() {
        let frame = noise_frame(11);
        let grid = build_grid(96, 64, 32).unwrap();
        let map = compute_qp_map(&frame, &grid, 32, 6, Policy::AdaptiveQp, 0).unwrap();
        for a in &map.assignments {
            assert_eq!(a.qp[0], a.qp[1]);
            assert_eq!(a.qp[0], a.qp[2]);
            assert_eq!(a.offset[0], a.offset[1]);
        }
    }

    #[test]
    fn fcpq_luma_equals_adaptiveqp_luma() {
        for seed in 0..5 {
            let frame = noise_frame(seed);
            let grid = build_grid(96, 64, 32).unwrap();
            let fcpq = compute_qp_map(&frame, &grid, 32, 6, Policy::Fcpq, 0).unwrap();
            let aqp = compute_qp_map(&frame, &grid, 32, 6, Policy::AdaptiveQp, 0).unwrap();
            for (f, a) in fcpq.assignments.iter().zip(&aqp.assignments) {
                assert_eq!(f.qp[0], a.qp[0]);
                assert_eq!(f.offset[0], a.offset[0]);
            }
        }
    }

    #[test]
    fn adaptiveqp_is_blind_to_chroma_variance() {
        // Flat C0 with noisy chroma: the baseline applies zero offsets
        // everywhere, fcpq does not.
        let pattern = SynthPattern::HalfSplit(
            Box::new(SynthPattern::Noise { ranges: [(512, 512), (480, 543), (480, 543)] }),
            Box::new(SynthPattern::Noise { ranges: [(512, 512), (0, 1023), (0, 1023)] }),
        );
        let frame = synth_frame(128, 64, 10, &pattern, 4, 0).unwrap();
        let grid = build_grid(128, 64, 64).unwrap();
        let aqp = compute_qp_map(&frame, &grid, 32, 6, Policy::AdaptiveQp, 0).unwrap();
        assert!(aqp.assignments.iter().all(|a| a.offset == [0; 3]));
        let fcpq = compute_qp_map(&frame, &grid, 32, 6, Policy::Fcpq, 0).unwrap();
        // Low-variance half gets negative chroma offsets, noisy half positive.
        assert!(fcpq.assignments[0].offset[1] < 0);
        assert!(fcpq.assignments[1].offset[1] > 0);
        assert_eq!(fcpq.assignments[0].offset[0], 0);
        assert_eq!(fcpq.assignments[1].offset[0], 0);
    }

    #[test]
    fn noisy_luma_flat_chroma_raises_all_channels_under_adaptiveqp() {
        let pattern = SynthPattern::HalfSplit(
            Box::new(SynthPattern::Noise { ranges: [(480, 543), (512, 512), (512, 512)] }),
            Box::new(SynthPattern::Noise { ranges: [(0, 1023), (512, 512), (512, 512)] }),
        );
        let frame = synth_frame(128, 64, 10, &pattern, 4, 0).unwrap();
        let grid = build_grid(128, 64, 64).unwrap();
        let map = compute_qp_map(&frame, &grid, 32, 6, Policy::AdaptiveQp, 0).unwrap();
        let noisy = &map.assignments[1];
        assert!(noisy.offset[0] > 0);
        assert_eq!(noisy.offset[0], noisy.offset[1]);
        assert_eq!(noisy.offset[0], noisy.offset[2]);
    }

    #[test]
    fn fcpq_channels_are_independent() {
        let base = SynthPattern::Noise { ranges: [(0, 1023), (100, 500), (300, 900)] };
        let frame_a = synth_frame(96, 64, 10, &base, 7, 0).unwrap();
        // Rebuild with a different C1 plane only.
        let planes = [
            frame_a.plane_data(0).to_vec(),
            synth_frame(96, 64, 10, &SynthPattern::Noise { ranges: [(0, 80); 3] }, 8, 0)
                .unwrap()
                .plane_data(1)
                .to_vec(),
            frame_a.plane_data(2).to_vec(),
        ];
        let frame_b = FrameBuffer::new(96, 64, 10, planes).unwrap();
        let grid = build_grid(96, 64, 32).unwrap();
        let map_a = compute_qp_map(&frame_a, &grid, 32, 6, Policy::Fcpq, 0).unwrap();
        let map_b = compute_qp_map(&frame_b, &grid, 32, 6, Policy::Fcpq, 0).unwrap();
        for (a, b) in map_a.assignments.iter().zip(&map_b.assignments) {
            assert_eq!(a.qp[0], b.qp[0]);
            assert_eq!(a.qp[2], b.qp[2]);
        }
        assert!(map_a.assignments.iter().zip(&map_b.assignments).any(|(a, b)| a.qp[1] != b.qp[1]));
    }

    #[test]
    fn csv_rows_match_grid_geometry() {
        let frame = noise_frame(1);
        let grid = build_grid(96, 64, 64).unwrap();
        let map = compute_qp_map(&frame, &grid, 22, 6, Policy::Fcpq, 3).unwrap();
        let rows = qp_map_rows(&map, &grid).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[1].x, rows[1].w, rows[1].h), (64, 32, 64));
        assert_eq!(rows[0].frame, 3);

        let mut buf = Vec::new();
        write_qp_map_csv(&mut buf, "test meta", &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# test meta");
        assert_eq!(lines.next().unwrap(), QP_MAP_CSV_HEADER);
        assert_eq!(lines.count(), 2);
    }

    proptest! {
        #[test]
        fn offset_bound_holds(
            act in 1.0f64..300_000.0,
            mean in 1.0f64..300_000.0,
            strength in 1u32..=12,
        ) {
            let f = scaling_factor(strength);
            let norm = normalize_activity(act, mean, f);
            let (off, qp) = perceptual_qp(32, norm).unwrap();
            prop_assert!(off.unsigned_abs() <= strength, "off {off} strength {strength}");
            prop_assert!((QP_MIN..=QP_MAX).contains(&qp));
        }

        #[test]
        fn within_frame_monotonicity(
            mut acts in proptest::collection::vec(1.0f64..300_000.0, 2..40),
            mean in 1.0f64..300_000.0,
        ) {
            let f = scaling_factor(6);
            acts.sort_by(f64::total_cmp);
            let offsets: Vec<i32> = acts
                .iter()
                .map(|&a| perceptual_qp(32, normalize_activity(a, mean, f)).unwrap().0)
                .collect();
            for pair in offsets.windows(2) {
                prop_assert!(pair[0] <= pair[1]);
            }
        }
    }
}
