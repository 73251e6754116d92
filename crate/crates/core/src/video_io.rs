//! Raw headerless planar 4:4:4 frame IO and synthetic frame generation.
//!
//! File layout is frame-major with plane order C0, C1, C2. Samples wider
//! than 8 bits are stored as little-endian 16-bit words with the high bits
//! zero. There is no container or header; geometry comes from a
//! [`VideoDescriptor`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const SUPPORTED_BIT_DEPTHS: [u8; 3] = [8, 10, 12];

/// Channel semantics of the three planes. The byte layout is identical for
/// both: C0 carries Y or G, C1 carries Cb or B, C2 carries Cr or R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    YCbCr,
    Gbr,
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ycbcr" => Ok(ColorSpace::YCbCr),
            "gbr" | "rgb" => Ok(ColorSpace::Gbr),
            other => Err(Error::InvalidSynthSpec(format!(
                "unknown color space {other:?} (expected ycbcr or gbr)"
            ))),
        }
    }
}

impl std::fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColorSpace::YCbCr => write!(f, "ycbcr"),
            ColorSpace::Gbr => write!(f, "gbr"),
        }
    }
}

/// Geometry and layout of a raw 4:4:4 file.
#[derive(Debug, Clone, Copy)]
pub struct VideoDescriptor {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub frame_count: usize,
    pub color_space: ColorSpace,
}

impl VideoDescriptor {
    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 { 2 } else { 1 }
    }

    /// Size of one frame on disk: three full-resolution planes.
    pub fn frame_bytes(&self) -> u64 {
        3 * self.width as u64 * self.height as u64 * self.bytes_per_sample() as u64
    }

    pub fn file_bytes(&self) -> u64 {
        self.frame_count as u64 * self.frame_bytes()
    }
}

/// One 4:4:4 picture: three equally sized planes of unsigned samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    bit_depth: u8,
    planes: [Vec<u16>; 3],
}

impl FrameBuffer {
    /// Builds a frame, checking the bit depth, plane sizes and sample range.
    pub fn new(width: usize, height: usize, bit_depth: u8, planes: [Vec<u16>; 3]) -> Result<Self> {
        if !SUPPORTED_BIT_DEPTHS.contains(&bit_depth) {
            return Err(Error::UnsupportedBitDepth(bit_depth));
        }
        let max = max_sample_value(bit_depth);
        for (channel, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::FrameDescriptorMismatch {
                    index: 0,
                    reason: format!(
                        "plane {channel} has {} samples, expected {}",
                        plane.len(),
                        width * height
                    ),
                });
            }
            if let Some(offset) = plane.iter().position(|&s| s > max) {
                return Err(Error::SampleOutOfRange {
                    frame: 0,
                    channel,
                    offset,
                    value: plane[offset],
                    bit_depth,
                });
            }
        }
        Ok(FrameBuffer { width, height, bit_depth, planes })
    }

    /// Frame with each plane filled by a single value.
    pub fn filled(width: usize, height: usize, bit_depth: u8, values: [u16; 3]) -> Result<Self> {
        let planes = values.map(|v| vec![v; width * height]);
        FrameBuffer::new(width, height, bit_depth, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_sample_value(&self) -> u16 {
        max_sample_value(self.bit_depth)
    }

    pub fn plane(&self, channel: usize) -> PlaneRef<'_> {
        PlaneRef {
            samples: &self.planes[channel],
            width: self.width,
            height: self.height,
        }
    }

    pub fn plane_data(&self, channel: usize) -> &[u16] {
        &self.planes[channel]
    }
}

/// Borrowed view of one plane.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRef<'a> {
    samples: &'a [u16],
    width: usize,
    height: usize,
}

impl<'a> PlaneRef<'a> {
    pub fn from_raw(samples: &'a [u16], width: usize, height: usize) -> Self {
        assert_eq!(samples.len(), width * height);
        PlaneRef { samples, width, height }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn row(&self, y: usize) -> &'a [u16] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.samples[y * self.width + x]
    }

    pub fn samples(&self) -> &'a [u16] {
        self.samples
    }
}

pub fn max_sample_value(bit_depth: u8) -> u16 {
    (1u32 << bit_depth) as u16 - 1
}

/// Reads all frames described by `descriptor`. The file size must match the
/// descriptor exactly and every sample must be within the bit-depth range.
pub fn read_frames(path: impl AsRef<Path>, descriptor: &VideoDescriptor) -> Result<Vec<FrameBuffer>> {
    let path = path.as_ref();
    if !SUPPORTED_BIT_DEPTHS.contains(&descriptor.bit_depth) {
        return Err(Error::UnsupportedBitDepth(descriptor.bit_depth));
    }
    let actual = std::fs::metadata(path)?.len();
    let expected = descriptor.file_bytes();
    if actual != expected {
        return Err(Error::FileSizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
            frames: descriptor.frame_count,
            frame_bytes: descriptor.frame_bytes(),
        });
    }

    let mut reader = BufReader::new(File::open(path)?);
    let plane_len = descriptor.width * descriptor.height;
    let bps = descriptor.bytes_per_sample();
    let max = max_sample_value(descriptor.bit_depth);
    let mut raw = vec![0u8; plane_len * bps];

    let mut frames = Vec::with_capacity(descriptor.frame_count);
    for frame_idx in 0..descriptor.frame_count {
        let mut planes: [Vec<u16>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (channel, plane) in planes.iter_mut().enumerate() {
            reader.read_exact(&mut raw)?;
            let mut samples = Vec::with_capacity(plane_len);
            if bps == 1 {
                samples.extend(raw.iter().map(|&b| b as u16));
            } else {
                samples.extend(
                    raw.chunks_exact(2)
                        .map(|pair| u16::from_le_bytes([pair[0], pair[1]])),
                );
            }
            if let Some(offset) = samples.iter().position(|&s| s > max) {
                return Err(Error::SampleOutOfRange {
                    frame: frame_idx,
                    channel,
                    offset,
                    value: samples[offset],
                    bit_depth: descriptor.bit_depth,
                });
            }
            *plane = samples;
        }
        frames.push(FrameBuffer {
            width: descriptor.width,
            height: descriptor.height,
            bit_depth: descriptor.bit_depth,
            planes,
        });
    }
    Ok(frames)
}

/// Writes frames in the raw layout. Inverse of [`read_frames`]: a written
/// file reads back bit-exactly under the same descriptor.
pub fn write_frames(
    path: impl AsRef<Path>,
    frames: &[FrameBuffer],
    descriptor: &VideoDescriptor,
) -> Result<()> {
    if frames.len() != descriptor.frame_count {
        return Err(Error::FrameDescriptorMismatch {
            index: frames.len(),
            reason: format!(
                "descriptor expects {} frames, got {}",
                descriptor.frame_count,
                frames.len()
            ),
        });
    }
    for (index, frame) in frames.iter().enumerate() {
        if frame.width != descriptor.width
            || frame.height != descriptor.height
            || frame.bit_depth != descriptor.bit_depth
        {
            return Err(Error::FrameDescriptorMismatch {
                index,
                reason: format!(
                    "frame is {}x{} {}-bit, descriptor says {}x{} {}-bit",
                    frame.width,
                    frame.height,
                    frame.bit_depth,
                    descriptor.width,
                    descriptor.height,
                    descriptor.bit_depth
                ),
            });
        }
    }

    let mut writer = BufWriter::new(File::create(path)?);
    let bps = descriptor.bytes_per_sample();
    for frame in frames {
        for plane in &frame.planes {
            if bps == 1 {
                let bytes: Vec<u8> = plane.iter().map(|&s| s as u8).collect();
                writer.write_all(&bytes)?;
            } else {
                let mut bytes = Vec::with_capacity(plane.len() * 2);
                for &s in plane {
                    bytes.extend_from_slice(&s.to_le_bytes());
                }
                writer.write_all(&bytes)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Deterministic synthetic frame content.
///
/// `HalfSplit` divides the current horizontal extent at its midpoint and
/// applies the left pattern to `[x0, mid)` and the right one to `[mid, x1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthPattern {
    /// One value per channel.
    Constant([u16; 3]),
    /// Alternating `low`/`high` tiles of side `tile`, same on all channels.
    Checkerboard { low: u16, high: u16, tile: usize },
    /// Per-channel uniform noise, inclusive ranges.
    Noise { ranges: [(u16, u16); 3] },
    /// Left/right halves with independent patterns.
    HalfSplit(Box<SynthPattern>, Box<SynthPattern>),
}

impl SynthPattern {
    /// The committed test fixture: flat C0 at mid level, chroma planes split
    /// into a low-variance noise half and a full-range noise half.
    pub fn flat_luma_noisy_chroma(bit_depth: u8) -> SynthPattern {
        let mid = 1u16 << (bit_depth - 1);
        let span = 1u16 << (bit_depth - 3);
        let lo = (mid - span, mid + span - 1);
        let hi = (0, max_sample_value(bit_depth));
        SynthPattern::HalfSplit(
            Box::new(SynthPattern::Noise { ranges: [(mid, mid), lo, lo] }),
            Box::new(SynthPattern::Noise { ranges: [(mid, mid), hi, hi] }),
        )
    }

    /// Parses the CLI spec grammar. Values are validated against `bit_depth`.
    ///
    /// ```text
    /// spec   := "constant(v0,v1,v2)"
    ///         | "checker(low,high,tile)"
    ///         | "noise(l0..h0,l1..h1,l2..h2)"
    ///         | "split(spec,spec)"
    ///         | "flat-luma-noisy-chroma"
    /// ```
    pub fn parse(spec: &str, bit_depth: u8) -> Result<SynthPattern> {
        if !SUPPORTED_BIT_DEPTHS.contains(&bit_depth) {
            return Err(Error::UnsupportedBitDepth(bit_depth));
        }
        let pattern = parse_spec(spec.trim(), bit_depth)?;
        pattern.validate(bit_depth)?;
        Ok(pattern)
    }

    /// Checks that every literal value fits the bit depth and that ranges
    /// and tile sizes are well formed.
    pub fn validate(&self, bit_depth: u8) -> Result<()> {
        let max = max_sample_value(bit_depth);
        let check = |v: u16| -> Result<()> {
            if v > max {
                Err(Error::SynthValueOutOfRange { value: v as u32, bit_depth })
            } else {
                Ok(())
            }
        };
        match self {
            SynthPattern::Constant(values) => values.iter().copied().try_for_each(check),
            SynthPattern::Checkerboard { low, high, tile } => {
                check(*low)?;
                check(*high)?;
                if *tile == 0 {
                    return Err(Error::InvalidSynthSpec("checker tile must be >= 1".into()));
                }
                Ok(())
            }
            SynthPattern::Noise { ranges } => {
                for &(lo, hi) in ranges {
                    check(lo)?;
                    check(hi)?;
                    if lo > hi {
                        return Err(Error::InvalidSynthSpec(format!(
                            "noise range {lo}..{hi} is empty"
                        )));
                    }
                }
                Ok(())
            }
            SynthPattern::HalfSplit(left, right) => {
                left.validate(bit_depth)?;
                right.validate(bit_depth)
            }
        }
    }

    fn sample(&self, channel: usize, x: usize, y: usize, x0: usize, x1: usize, rng: &mut ChaCha8Rng) -> u16 {
        match self {
            SynthPattern::Constant(values) => values[channel],
            SynthPattern::Checkerboard { low, high, tile } => {
                if (x / tile + y / tile).is_multiple_of(2) { *low } else { *high }
            }
            SynthPattern::Noise { ranges } => {
                let (lo, hi) = ranges[channel];
                if lo == hi { lo } else { rng.gen_range(lo..=hi) }
            }
            SynthPattern::HalfSplit(left, right) => {
                let mid = x0 + (x1 - x0) / 2;
                if x < mid {
                    left.sample(channel, x, y, x0, mid, rng)
                } else {
                    right.sample(channel, x, y, mid, x1, rng)
                }
            }
        }
    }
}

/// Generates one frame. A given `(pattern, seed, frame_index)` triple always
/// produces the same frame; distinct frame indices use distinct RNG streams.
pub fn synth_frame(
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: &SynthPattern,
    seed: u64,
    frame_index: usize,
) -> Result<FrameBuffer> {
    pattern.validate(bit_depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);

    let mut planes: [Vec<u16>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (channel, plane) in planes.iter_mut().enumerate() {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(pattern.sample(channel, x, y, 0, width, &mut rng));
            }
        }
        *plane = samples;
    }
    FrameBuffer::new(width, height, bit_depth, planes)
}

fn parse_spec(s: &str, bit_depth: u8) -> Result<SynthPattern> {
    let bad = |msg: String| Error::InvalidSynthSpec(msg);
    if s == "flat-luma-noisy-chroma" {
        return Ok(SynthPattern::flat_luma_noisy_chroma(bit_depth));
    }
    let (head, args) = match s.find('(') {
        Some(open) if s.ends_with(')') => (&s[..open], &s[open + 1..s.len() - 1]),
        _ => return Err(bad(format!("cannot parse {s:?}"))),
    };
    let parts = split_top_level(args);
    match head {
        "constant" => {
            let v = parse_ints::<3>(&parts, "constant")?;
            Ok(SynthPattern::Constant(v))
        }
        "checker" => {
            let v = parse_ints::<3>(&parts, "checker")?;
            Ok(SynthPattern::Checkerboard { low: v[0], high: v[1], tile: v[2] as usize })
        }
        "noise" => {
            if parts.len() != 3 {
                return Err(bad(format!("noise needs 3 ranges, got {}", parts.len())));
            }
            let mut ranges = [(0u16, 0u16); 3];
            for (i, part) in parts.iter().enumerate() {
                let (lo, hi) = part
                    .split_once("..")
                    .ok_or_else(|| bad(format!("noise range {part:?} is not lo..hi")))?;
                ranges[i] = (parse_u16(lo)?, parse_u16(hi)?);
            }
            Ok(SynthPattern::Noise { ranges })
        }
        "split" => {
            if parts.len() != 2 {
                return Err(bad(format!("split needs 2 sub-specs, got {}", parts.len())));
            }
            Ok(SynthPattern::HalfSplit(
                Box::new(parse_spec(parts[0], bit_depth)?),
                Box::new(parse_spec(parts[1], bit_depth)?),
            ))
        }
        other => Err(bad(format!("unknown pattern {other:?}"))),
    }
}

/// Splits on commas that are not nested inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(s[start..].trim());
    parts
}

fn parse_u16(s: &str) -> Result<u16> {
    s.trim()
        .parse::<u16>()
        .map_err(|e| Error::InvalidSynthSpec(format!("bad integer {s:?}: {e}")))
}

fn parse_ints<const N: usize>(parts: &[&str], what: &str) -> Result<[u16; N]> {
    if parts.len() != N {
        return Err(Error::InvalidSynthSpec(format!(
            "{what} needs {N} values, got {}",
            parts.len()
        )));
    }
    let mut out = [0u16; N];
    for (i, part) in parts.iter().enumerate() {
        out[i] = parse_u16(part)?;
    }
    Ok(out)
}
