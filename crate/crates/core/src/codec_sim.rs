//! Simplified intra-only transform coding harness.
//!
//! Each coding block of each channel is mid-level shifted, transformed with
//! an orthonormal type-II DCT of the block's actual size, quantized with the
//! block's QStep, and reconstructed. The rate proxy per channel is the
//! zero-order empirical entropy of the frame's quantized levels; there is no
//! prediction and no entropy coder, so absolute bit counts are not
//! comparable to a real encoder, but the relative ranking of QP policies is.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use crate::partition::build_grid;
use crate::qp_policy::{Policy, QpMap, fmt_full, qp_to_qstep};
use crate::video_io::{FrameBuffer, max_sample_value};
use crate::{Error, Result};

/// Orthonormal DCT-II basis for size `n`, row-major `[k * n + i]`.
fn dct_basis(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut basis = vec![0f64; n * n];
            let norm0 = (1.0 / n as f64).sqrt();
            let norm = (2.0 / n as f64).sqrt();
            for k in 0..n {
                let scale = if k == 0 { norm0 } else { norm };
                for i in 0..n {
                    let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64
                        / (2.0 * n as f64);
                    basis[k * n + i] = scale * angle.cos();
                }
            }
            Arc::new(basis)
        })
        .clone()
}

fn forward_1d(basis: &[f64], n: usize, input: &[f64], output: &mut [f64]) {
    for k in 0..n {
        let row = &basis[k * n..(k + 1) * n];
        output[k] = row.iter().zip(input).map(|(b, x)| b * x).sum();
    }
}

fn inverse_1d(basis: &[f64], n: usize, input: &[f64], output: &mut [f64]) {
    for (i, out) in output.iter_mut().enumerate() {
        *out = (0..n).map(|k| basis[k * n + i] * input[k]).sum();
    }
}

/// Mid-level shift followed by a separable orthonormal DCT-II over the
/// block's actual `w` x `h` extent. Row-major in, row-major out.
pub fn transform_block(samples: &[u16], w: usize, h: usize, bit_depth: u8) -> Vec<f64> {
    assert_eq!(samples.len(), w * h);
    let mid = (1u32 << (bit_depth - 1)) as f64;
    let mut data: Vec<f64> = samples.iter().map(|&s| s as f64 - mid).collect();
    apply_2d(&mut data, w, h, forward_1d);
    data
}

/// Inverse of [`transform_block`]; returns real-valued samples with the
/// mid-level offset restored, not yet rounded or clamped.
pub fn inverse_transform_block(coeffs: &[f64], w: usize, h: usize, bit_depth: u8) -> Vec<f64> {
    assert_eq!(coeffs.len(), w * h);
    let mid = (1u32 << (bit_depth - 1)) as f64;
    let mut data = coeffs.to_vec();
    apply_2d(&mut data, w, h, inverse_1d);
    for v in &mut data {
        *v += mid;
    }
    data
}

fn apply_2d(data: &mut [f64], w: usize, h: usize, pass: fn(&[f64], usize, &[f64], &mut [f64])) {
    let basis_w = dct_basis(w);
    let basis_h = dct_basis(h);
    let mut scratch = vec![0f64; w.max(h)];
    for y in 0..h {
        let row = &mut data[y * w..(y + 1) * w];
        pass(&basis_w, w, row, &mut scratch[..w]);
        row.copy_from_slice(&scratch[..w]);
    }
    let mut column = vec![0f64; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        pass(&basis_h, h, &column, &mut scratch[..h]);
        for y in 0..h {
            data[y * w + x] = scratch[y];
        }
    }
}

/// Uniform quantization with round-half-away-from-zero:
/// `level = sign(c) * floor(|c| / qstep + 0.5)`.
pub fn quantize_urq(coeffs: &[f64], qstep: f64) -> Vec<i32> {
    debug_assert!(qstep > 0.0);
    coeffs
        .iter()
        .map(|&c| {
            let magnitude = (c.abs() / qstep + 0.5).floor();
            (if c < 0.0 { -magnitude } else { magnitude }) as i32
        })
        .collect()
}

/// Uniform reconstruction at `level * qstep`.
pub fn dequantize(levels: &[i32], qstep: f64) -> Vec<f64> {
    debug_assert!(qstep > 0.0);
    levels.iter().map(|&l| l as f64 * qstep).collect()
}

/// Peak signal-to-noise ratio in dB; `INFINITY` when the planes are equal.
pub fn psnr(original: &[u16], reconstructed: &[u16], bit_depth: u8) -> f64 {
    assert_eq!(original.len(), reconstructed.len());
    let sq_err: f64 = original
        .iter()
        .zip(reconstructed)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    psnr_from_sq_err(sq_err, original.len() as u64, bit_depth)
}

fn psnr_from_sq_err(sq_err: f64, samples: u64, bit_depth: u8) -> f64 {
    if sq_err == 0.0 {
        return f64::INFINITY;
    }
    let peak = max_sample_value(bit_depth) as f64;
    let mse = sq_err / samples as f64;
    10.0 * (peak * peak / mse).log10()
}

/// Rate/distortion summary of a simulation at one base QP.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub policy: Policy,
    pub base_qp: i32,
    /// Per-channel entropy-proxy bits.
    pub bits: [f64; 3],
    /// Per-channel PSNR in dB, `INFINITY` for a lossless channel.
    pub psnr: [f64; 3],
}

impl RdPoint {
    pub fn total_bits(&self) -> f64 {
        self.bits.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct FrameStats {
    bits: [f64; 3],
    sq_err: [f64; 3],
    plane_samples: u64,
}

/// Accumulates per-frame simulations into a sequence-level [`RdPoint`]:
/// bits are summed over frames and PSNR is computed from the pooled squared
/// error.
#[derive(Debug)]
pub struct RdAccumulator {
    policy: Policy,
    base_qp: i32,
    bit_depth: u8,
    bits: [f64; 3],
    sq_err: [f64; 3],
    samples: u64,
}

impl RdAccumulator {
    pub fn new(policy: Policy, base_qp: i32, bit_depth: u8) -> Self {
        RdAccumulator {
            policy,
            base_qp,
            bit_depth,
            bits: [0.0; 3],
            sq_err: [0.0; 3],
            samples: 0,
        }
    }

    /// Simulates one frame and folds it in; returns the reconstruction.
    pub fn add_frame(&mut self, frame: &FrameBuffer, map: &QpMap) -> Result<FrameBuffer> {
        let (stats, recon) = simulate_frame_stats(frame, map)?;
        for channel in 0..3 {
            self.bits[channel] += stats.bits[channel];
            self.sq_err[channel] += stats.sq_err[channel];
        }
        self.samples += stats.plane_samples;
        Ok(recon)
    }

    pub fn rd_point(&self) -> RdPoint {
        let psnr = std::array::from_fn(|ch| {
            psnr_from_sq_err(self.sq_err[ch], self.samples, self.bit_depth)
        });
        RdPoint { policy: self.policy, base_qp: self.base_qp, bits: self.bits, psnr }
    }
}

/// Runs the transform/quantize/reconstruct pipeline for one frame under one
/// QP map.
pub fn simulate_frame(frame: &FrameBuffer, map: &QpMap) -> Result<(RdPoint, FrameBuffer)> {
    let (stats, recon) = simulate_frame_stats(frame, map)?;
    let psnr = std::array::from_fn(|ch| {
        psnr_from_sq_err(stats.sq_err[ch], stats.plane_samples, frame.bit_depth())
    });
    Ok((
        RdPoint { policy: map.policy, base_qp: map.base_qp, bits: stats.bits, psnr },
        recon,
    ))
}

fn simulate_frame_stats(frame: &FrameBuffer, map: &QpMap) -> Result<(FrameStats, FrameBuffer)> {
    let grid = build_grid(frame.width(), frame.height(), map.cu_size)?;
    if grid.cols != map.cols || grid.rows != map.rows || grid.len() != map.assignments.len() {
        return Err(Error::QpMapMismatch(format!(
            "map covers {}x{} blocks of size {}, frame needs {}x{}",
            map.cols, map.rows, map.cu_size, grid.cols, grid.rows
        )));
    }

    let bit_depth = frame.bit_depth();
    let peak = max_sample_value(bit_depth);
    let mut stats = FrameStats {
        plane_samples: (frame.width() * frame.height()) as u64,
        ..FrameStats::default()
    };
    let mut recon_planes: [Vec<u16>; 3] =
        std::array::from_fn(|_| vec![0u16; frame.width() * frame.height()]);

    for (channel, out_plane) in recon_planes.iter_mut().enumerate() {
        let plane = frame.plane(channel);
        let mut histogram: BTreeMap<i32, u64> = BTreeMap::new();
        for (cb_index, region) in grid.regions().iter().enumerate() {
            let qstep = qp_to_qstep(map.qp(cb_index, channel));
            let mut block = Vec::with_capacity(region.area());
            for y in region.y..region.y + region.h {
                block.extend_from_slice(&plane.row(y)[region.x..region.x + region.w]);
            }
            let coeffs = transform_block(&block, region.w, region.h, bit_depth);
            let levels = quantize_urq(&coeffs, qstep);
            for &level in &levels {
                *histogram.entry(level).or_insert(0) += 1;
            }
            let reconstructed =
                inverse_transform_block(&dequantize(&levels, qstep), region.w, region.h, bit_depth);
            for (offset, value) in reconstructed.iter().enumerate() {
                let x = region.x + offset % region.w;
                let y = region.y + offset / region.w;
                let sample = value.round().clamp(0.0, peak as f64) as u16;
                out_plane[y * frame.width() + x] = sample;
                let d = block[offset] as f64 - sample as f64;
                stats.sq_err[channel] += d * d;
            }
        }
        stats.bits[channel] = histogram_bits(&histogram);
    }

    let recon = FrameBuffer::new(frame.width(), frame.height(), bit_depth, recon_planes)?;
    Ok((stats, recon))
}

/// Total zero-order entropy in bits of a level stream given its histogram:
/// `sum(count * -log2(count / total))`.
fn histogram_bits(histogram: &BTreeMap<i32, u64>) -> f64 {
    let total: u64 = histogram.values().sum();
    if total == 0 {
        return 0.0;
    }
    let log_total = (total as f64).log2();
    histogram
        .values()
        .map(|&count| count as f64 * (log_total - (count as f64).log2()))
        .sum()
}

/// One row of the RD-point CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RdRecord {
    pub policy: String,
    pub base_qp: i32,
    pub bits_c0: f64,
    pub bits_c1: f64,
    pub bits_c2: f64,
    pub total_bits: f64,
    pub psnr_c0: f64,
    pub psnr_c1: f64,
    pub psnr_c2: f64,
}

impl From<&RdPoint> for RdRecord {
    fn from(point: &RdPoint) -> Self {
        RdRecord {
            policy: point.policy.name().to_string(),
            base_qp: point.base_qp,
            bits_c0: point.bits[0],
            bits_c1: point.bits[1],
            bits_c2: point.bits[2],
            total_bits: point.total_bits(),
            psnr_c0: point.psnr[0],
            psnr_c1: point.psnr[1],
            psnr_c2: point.psnr[2],
        }
    }
}

impl RdRecord {
    pub fn bits(&self, channel: usize) -> f64 {
        [self.bits_c0, self.bits_c1, self.bits_c2][channel]
    }

    pub fn psnr(&self, channel: usize) -> f64 {
        [self.psnr_c0, self.psnr_c1, self.psnr_c2][channel]
    }
}

pub const RD_CSV_HEADER: &str =
    "policy,base_qp,bits_c0,bits_c1,bits_c2,total_bits,psnr_c0,psnr_c1,psnr_c2";

pub fn write_rd_csv(out: &mut impl Write, metadata: &str, records: &[RdRecord]) -> std::io::Result<()> {
    writeln!(out, "# {metadata}")?;
    writeln!(out, "{RD_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.base_qp,
            fmt_full(r.bits_c0),
            fmt_full(r.bits_c1),
            fmt_full(r.bits_c2),
            fmt_full(r.total_bits),
            fmt_full(r.psnr_c0),
            fmt_full(r.psnr_c1),
            fmt_full(r.psnr_c2)
        )?;
    }
    Ok(())
}

/// Reads an RD-point CSV written by [`write_rd_csv`]; `#` lines are skipped.
pub fn read_rd_csv(path: impl AsRef<Path>) -> Result<Vec<RdRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let malformed = |line: usize, reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut records = Vec::new();
    let mut saw_header = false;
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != RD_CSV_HEADER {
                return Err(malformed(line_no, format!("unexpected header {line:?}")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(malformed(line_no, format!("expected 9 fields, got {}", fields.len())));
        }
        let float = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .map_err(|e| malformed(line_no, format!("field {}: {e}", idx + 1)))
        };
        records.push(RdRecord {
            policy: fields[0].to_string(),
            base_qp: fields[1]
                .parse()
                .map_err(|e| malformed(line_no, format!("base_qp: {e}")))?,
            bits_c0: float(2)?,
            bits_c1: float(3)?,
            bits_c2: float(4)?,
            total_bits: float(5)?,
            psnr_c0: float(6)?,
            psnr_c1: float(7)?,
            psnr_c2: float(8)?,
        });
    }
    if !saw_header {
        return Err(malformed(0, "missing header row".into()));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::build_grid;
    use crate::qp_policy::compute_qp_map;
    use crate::video_io::{SynthPattern, synth_frame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mid_level_block_transforms_to_zero() {
        let block = vec![512u16; 64];
        let coeffs = transform_block(&block, 8, 8, 10);
        assert!(coeffs.iter().all(|&c| c.abs() < 1e-9));
    }

    #[test]
    fn transform_roundtrip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(w, h) in &[(8usize, 8usize), (16, 4), (5, 7), (1, 9), (64, 56)] {
            let block: Vec<u16> = (0..w * h).map(|_| rng.gen_range(0..=1023)).collect();
            let coeffs = transform_block(&block, w, h, 10);

            let pixel_energy: f64 = block.iter().map(|&s| (s as f64 - 512.0).powi(2)).sum();
            let coeff_energy: f64 = coeffs.iter().map(|&c| c * c).sum();
            assert!(
                (pixel_energy - coeff_energy).abs() <= 1e-6 * pixel_energy.max(1.0),
                "{w}x{h} energy {pixel_energy} vs {coeff_energy}"
            );

            let back = inverse_transform_block(&coeffs, w, h, 10);
            for (orig, rec) in block.iter().zip(&back) {
                assert!((*orig as f64 - rec).abs() < 1e-9, "{w}x{h}");
            }
        }
    }

    #[test]
    fn quantizer_rounding_rule() {
        assert_eq!(quantize_urq(&[0.0], 3.0), vec![0]);
        assert_eq!(quantize_urq(&[7.5, -7.5], 5.0), vec![2, -2]);
        assert_eq!(quantize_urq(&[7.4, -7.4], 5.0), vec![1, -1]);
        // integer coefficients at qstep 1 pass through
        assert_eq!(quantize_urq(&[3.0, -11.0, 0.0], 1.0), vec![3, -11, 0]);
    }

    #[test]
    fn dequantize_and_error_bound() {
        assert_eq!(dequantize(&[3], 8.0), vec![24.0]);
        assert_eq!(dequantize(&[0, 0], 5.0), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let qstep = rng.gen_range(0.1..50.0);
            let coeffs: Vec<f64> = (0..256).map(|_| rng.gen_range(-2000.0..2000.0)).collect();
            let levels = quantize_urq(&coeffs, qstep);
            let back = dequantize(&levels, qstep);
            for (c, r) in coeffs.iter().zip(&back) {
                assert!((c - r).abs() <= qstep / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn psnr_basics() {
        assert_eq!(psnr(&[1, 2, 3], &[1, 2, 3], 10), f64::INFINITY);
        // all samples off by the full peak
        assert_eq!(psnr(&[0, 0], &[255, 255], 8), 0.0);
        // 10-bit planes off by one everywhere
        let orig = vec![500u16; 64];
        let recon = vec![501u16; 64];
        let expected = 60.197_512_674_243_2;
        assert!((psnr(&orig, &recon, 10) - expected).abs() < 1e-9);
    }

    #[test]
    fn entropy_of_constant_stream_is_zero() {
        let mut hist = BTreeMap::new();
        hist.insert(0, 4096u64);
        assert_eq!(histogram_bits(&hist), 0.0);
        // two equiprobable symbols: one bit each
        let mut hist = BTreeMap::new();
        hist.insert(0, 8u64);
        hist.insert(1, 8u64);
        assert_eq!(histogram_bits(&hist), 16.0);
    }

    #[test]
    fn flat_frame_simulates_lossless_and_zero_bits() {
        let frame = FrameBuffer::filled(32, 32, 10, [512, 512, 512]).unwrap();
        let grid = build_grid(32, 32, 16).unwrap();
        let map = compute_qp_map(&frame, &grid, 37, 6, Policy::Uniform, 0).unwrap();
        let (point, recon) = simulate_frame(&frame, &map).unwrap();
        assert_eq!(point.bits, [0.0; 3]);
        assert_eq!(point.psnr, [f64::INFINITY; 3]);
        assert_eq!(recon, frame);
    }

    #[test]
    fn rd_curve_is_strictly_monotone_on_noise() {
        let noise = SynthPattern::Noise { ranges: [(0, 1023); 3] };
        let frame = synth_frame(128, 128, 10, &noise, 17, 0).unwrap();
        let grid = build_grid(128, 128, 64).unwrap();
        let mut points = Vec::new();
        for qp in [22, 27, 32, 37] {
            let map = compute_qp_map(&frame, &grid, qp, 6, Policy::Uniform, 0).unwrap();
            let (point, _) = simulate_frame(&frame, &map).unwrap();
            points.push(point);
        }
        for pair in points.windows(2) {
            assert!(pair[0].total_bits() > pair[1].total_bits());
            for ch in 0..3 {
                assert!(pair[0].psnr[ch] > pair[1].psnr[ch]);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let noise = SynthPattern::Noise { ranges: [(0, 1023), (100, 800), (30, 400)] };
        let frame = synth_frame(96, 64, 10, &noise, 9, 0).unwrap();
        let grid = build_grid(96, 64, 32).unwrap();
        let map = compute_qp_map(&frame, &grid, 27, 6, Policy::Fcpq, 0).unwrap();
        let (a, recon_a) = simulate_frame(&frame, &map).unwrap();
        let (b, recon_b) = simulate_frame(&frame, &map).unwrap();
        assert_eq!(recon_a, recon_b);
        for ch in 0..3 {
            assert_eq!(a.bits[ch].to_bits(), b.bits[ch].to_bits());
            assert_eq!(a.psnr[ch].to_bits(), b.psnr[ch].to_bits());
        }
    }

    #[test]
    fn mismatched_map_is_rejected() {
        let frame = FrameBuffer::filled(64, 64, 10, [512; 3]).unwrap();
        let other = FrameBuffer::filled(128, 128, 10, [512; 3]).unwrap();
        let grid = build_grid(128, 128, 64).unwrap();
        let map = compute_qp_map(&other, &grid, 27, 6, Policy::Uniform, 0).unwrap();
        assert!(matches!(simulate_frame(&frame, &map), Err(Error::QpMapMismatch(_))));
    }

    #[test]
    fn accumulator_pools_bits_and_error() {
        let noise = SynthPattern::Noise { ranges: [(0, 1023); 3] };
        let grid = build_grid(64, 64, 32).unwrap();
        let mut acc = RdAccumulator::new(Policy::Uniform, 32, 10);
        let mut bits_sum = 0.0;
        for idx in 0..3 {
            let frame = synth_frame(64, 64, 10, &noise, 5, idx).unwrap();
            let map = compute_qp_map(&frame, &grid, 32, 6, Policy::Uniform, idx).unwrap();
            let (point, _) = simulate_frame(&frame, &map).unwrap();
            bits_sum += point.total_bits();
            acc.add_frame(&frame, &map).unwrap();
        }
        let pooled = acc.rd_point();
        assert!((pooled.total_bits() - bits_sum).abs() < 1e-9);
        assert!(pooled.psnr[0].is_finite());
    }

    #[test]
    fn rd_csv_roundtrip() {
        let record = RdRecord {
            policy: "fcpq".into(),
            base_qp: 27,
            bits_c0: 123.456,
            bits_c1: 0.0,
            bits_c2: 99999.125,
            total_bits: 100_122.581,
            psnr_c0: 41.25,
            psnr_c1: f64::INFINITY,
            psnr_c2: 38.0,
        };
        let mut buf = Vec::new();
        write_rd_csv(&mut buf, "meta line", std::slice::from_ref(&record)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rd.csv");
        std::fs::write(&path, &buf).unwrap();
        let back = read_rd_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].policy, "fcpq");
        assert_eq!(back[0].base_qp, 27);
        assert!(back[0].psnr_c1.is_infinite());
        assert!((back[0].bits_c2 - 99999.125).abs() < 1e-6);
    }

    #[test]
    fn malformed_rd_csv_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            format!("# meta\n{RD_CSV_HEADER}\nfcpq,22,1,2,3,6,40,41\n"),
        )
        .unwrap();
        match read_rd_csv(&path).unwrap_err() {
            Error::MalformedCsv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
