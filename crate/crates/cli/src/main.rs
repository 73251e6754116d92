//! `fcpq` command line: QP-map analysis, RD simulation, BD-rate comparison
//! and fixture synthesis for raw 4:4:4 video.
//!
//! Every command is deterministic for a given flag set and input bytes; all
//! CSV outputs start with a `#` metadata line recording the flags. Exit
//! codes: 0 success, 1 usage error, 2 data error.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, error::ErrorKind};

use fcpq_core::activity::sub_block_variances;
use fcpq_core::codec_sim::{RdAccumulator, RdRecord, read_rd_csv, write_rd_csv};
use fcpq_core::metrics::{RdCurve, bd_rate};
use fcpq_core::partition::build_grid;
use fcpq_core::qp_policy::{Policy, QpMapRow, compute_qp_map, fmt_full, qp_map_rows, write_qp_map_csv};
use fcpq_core::video_io::{
    ColorSpace, FrameBuffer, SynthPattern, VideoDescriptor, read_frames, synth_frame, write_frames,
};

#[derive(Parser)]
#[command(name = "fcpq", version, about = "Per-block perceptual QP analysis for raw 4:4:4 video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a per-block QP map for each frame and write it as CSV
    Analyze(AnalyzeArgs),
    /// Run the coding harness over a QP ladder and emit one RD row per QP
    Simulate(SimulateArgs),
    /// Compare two RD-point CSVs and report per-channel BD-rate
    Bdrate(BdrateArgs),
    /// Generate a deterministic raw 4:4:4 clip from a pattern spec
    Synth(SynthArgs),
}

#[derive(Args)]
struct GeometryArgs {
    /// Picture width in pixels
    #[arg(long)]
    width: usize,
    /// Picture height in pixels
    #[arg(long)]
    height: usize,
    /// Sample bit depth (8, 10 or 12)
    #[arg(long, default_value_t = 10, value_parser = parse_bit_depth)]
    bit_depth: u8,
    /// Number of frames
    #[arg(long)]
    frames: usize,
}

#[derive(Args)]
struct AnalysisArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Channel semantics of the three planes
    #[arg(long, default_value = "ycbcr", value_parser = parse_color_space)]
    color_space: ColorSpace,
    /// Coding block size (16, 32 or 64)
    #[arg(long, default_value_t = 64, value_parser = parse_cu_size)]
    cu_size: usize,
    /// Offset strength A; offsets stay within [-A, A]
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=24))]
    strength: u32,
    /// QP policy: fcpq, adaptiveqp or uniform
    #[arg(long, default_value = "fcpq", value_parser = parse_policy)]
    policy: Policy,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Raw headerless planar 4:4:4 input file
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Base QP before perceptual adjustment
    #[arg(long, value_parser = clap::value_parser!(i32).range(0..=51))]
    qp: i32,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Also dump per-sub-block variances to this CSV
    #[arg(long)]
    activity_csv: Option<PathBuf>,
    /// Mirror the rows as JSON lines next to the CSV
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Raw headerless planar 4:4:4 input file
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Base QPs to simulate, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "22,27,32,37",
        value_parser = clap::value_parser!(i32).range(0..=51)
    )]
    qps: Vec<i32>,
    /// Output RD-point CSV path
    #[arg(long)]
    out: PathBuf,
    /// Write reconstructed clips (one raw file per QP) into this directory
    #[arg(long)]
    recon_dir: Option<PathBuf>,
    /// Mirror the rows as JSON lines next to the CSV
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BdrateArgs {
    /// RD-point CSV of the anchor run
    #[arg(long)]
    anchor: PathBuf,
    /// RD-point CSV of the test run
    #[arg(long)]
    test: PathBuf,
    /// Channel to compare, or all three
    #[arg(long, default_value = "all", value_parser = parse_channel)]
    channel: Channel,
    /// Write the report CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Pattern spec, e.g. constant(512,512,512), checker(0,1023,4),
    /// noise(0..1023,0..1023,0..1023), split(a,b), flat-luma-noisy-chroma
    #[arg(long)]
    spec: String,
    /// RNG seed for noise patterns
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output raw file path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    C0,
    C1,
    C2,
    All,
}

impl Channel {
    fn indices(self) -> &'static [usize] {
        match self {
            Channel::C0 => &[0],
            Channel::C1 => &[1],
            Channel::C2 => &[2],
            Channel::All => &[0, 1, 2],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Channel::C0 => "c0",
            Channel::C1 => "c1",
            Channel::C2 => "c2",
            Channel::All => "all",
        }
    }
}

fn parse_bit_depth(s: &str) -> Result<u8, String> {
    match s.parse::<u8>() {
        Ok(b) if fcpq_core::video_io::SUPPORTED_BIT_DEPTHS.contains(&b) => Ok(b),
        _ => Err(format!("bit depth must be 8, 10 or 12, got {s:?}")),
    }
}

fn parse_cu_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(c) if fcpq_core::partition::SUPPORTED_CU_SIZES.contains(&c) => Ok(c),
        _ => Err(format!("cu size must be 16, 32 or 64, got {s:?}")),
    }
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: fcpq_core::Error| e.to_string())
}

fn parse_color_space(s: &str) -> Result<ColorSpace, String> {
    s.parse().map_err(|e: fcpq_core::Error| e.to_string())
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    match s.to_ascii_lowercase().as_str() {
        "c0" => Ok(Channel::C0),
        "c1" => Ok(Channel::C1),
        "c2" => Ok(Channel::C2),
        "all" => Ok(Channel::All),
        other => Err(format!("channel must be c0, c1, c2 or all, got {other:?}")),
    }
}

/// Runtime failures split by exit code: bad flag values or combinations
/// exit 1, data and IO problems exit 2.
enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        CliError::Data(err.into())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bdrate(args) => cmd_bdrate(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn descriptor(geometry: &GeometryArgs, color_space: ColorSpace) -> VideoDescriptor {
    VideoDescriptor {
        width: geometry.width,
        height: geometry.height,
        bit_depth: geometry.bit_depth,
        frame_count: geometry.frames,
        color_space,
    }
}

fn analysis_metadata(cmd: &str, input: &Path, args: &AnalysisArgs, extra: &str) -> String {
    let g = &args.geometry;
    let mut meta = format!(
        "fcpq {cmd} input={} width={} height={} bit_depth={} frames={} color_space={} \
         cu_size={} strength={} policy={}",
        input.display(),
        g.width,
        g.height,
        g.bit_depth,
        g.frames,
        args.color_space,
        args.cu_size,
        args.strength,
        args.policy
    );
    if !extra.is_empty() {
        let _ = write!(meta, " {extra}");
    }
    meta
}

fn create_out(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        CliError::Data(anyhow::anyhow!("cannot create {}: {e}", path.display()))
    })?))
}

fn write_jsonl<T: serde::Serialize>(
    csv_path: &Path,
    metadata: &str,
    rows: &[T],
) -> Result<(), CliError> {
    let path = csv_path.with_extension("jsonl");
    let mut out = create_out(&path)?;
    writeln!(out, "{}", serde_json::json!({ "meta": metadata }))?;
    for row in rows {
        writeln!(out, "{}", serde_json::to_string(row).map_err(anyhow::Error::from)?)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let desc = descriptor(&args.analysis.geometry, args.analysis.color_space);
    let frames = read_frames(&args.input, &desc)?;
    let grid = build_grid(desc.width, desc.height, args.analysis.cu_size)?;

    let metadata = analysis_metadata(
        "analyze",
        &args.input,
        &args.analysis,
        &format!("qp={} out={}", args.qp, args.out.display()),
    );

    let mut rows: Vec<QpMapRow> = Vec::new();
    for (index, frame) in frames.iter().enumerate() {
        let map = compute_qp_map(frame, &grid, args.qp, args.analysis.strength, args.analysis.policy, index)?;
        rows.extend(qp_map_rows(&map, &grid)?);
    }

    let mut out = create_out(&args.out)?;
    write_qp_map_csv(&mut out, &metadata, &rows)?;
    out.flush()?;
    if args.json {
        write_jsonl(&args.out, &metadata, &rows)?;
    }
    if let Some(activity_path) = &args.activity_csv {
        write_activity_csv(activity_path, &metadata, &frames, &grid)?;
    }
    Ok(())
}

fn write_activity_csv(
    path: &Path,
    metadata: &str,
    frames: &[FrameBuffer],
    grid: &fcpq_core::partition::CuGrid,
) -> Result<(), CliError> {
    let mut out = create_out(path)?;
    writeln!(out, "# {metadata}")?;
    write!(out, "frame,cb_index,x,y,w,h")?;
    for ch in 0..3 {
        for d in 1..=4 {
            write!(out, ",var_c{ch}_d{d}")?;
        }
    }
    writeln!(out)?;
    for (frame_idx, frame) in frames.iter().enumerate() {
        for (cb_index, region) in grid.regions().iter().enumerate() {
            write!(
                out,
                "{frame_idx},{cb_index},{},{},{},{}",
                region.x, region.y, region.w, region.h
            )?;
            for channel in 0..3 {
                let variances = sub_block_variances(&frame.plane(channel), region)?;
                for d in 0..4 {
                    match variances.get(d) {
                        Some(v) => write!(out, ",{}", fmt_full(*v))?,
                        None => write!(out, ",")?,
                    }
                }
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.qps.is_empty() {
        return Err(CliError::Usage("--qps needs at least one QP".into()));
    }
    let desc = descriptor(&args.analysis.geometry, args.analysis.color_space);
    let frames = read_frames(&args.input, &desc)?;
    let grid = build_grid(desc.width, desc.height, args.analysis.cu_size)?;

    let qps_str = args.qps.iter().map(i32::to_string).collect::<Vec<_>>().join(",");
    let metadata = analysis_metadata(
        "simulate",
        &args.input,
        &args.analysis,
        &format!("qps={qps_str} out={}", args.out.display()),
    );

    if let Some(dir) = &args.recon_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut records = Vec::with_capacity(args.qps.len());
    for &qp in &args.qps {
        let mut acc = RdAccumulator::new(args.analysis.policy, qp, desc.bit_depth);
        let mut recon_frames = Vec::new();
        for (index, frame) in frames.iter().enumerate() {
            let map =
                compute_qp_map(frame, &grid, qp, args.analysis.strength, args.analysis.policy, index)?;
            let recon = acc.add_frame(frame, &map)?;
            if args.recon_dir.is_some() {
                recon_frames.push(recon);
            }
        }
        if let Some(dir) = &args.recon_dir {
            let name = format!("recon_{}_qp{qp}.raw", args.analysis.policy);
            write_frames(dir.join(name), &recon_frames, &desc)?;
        }
        records.push(RdRecord::from(&acc.rd_point()));
    }

    let mut out = create_out(&args.out)?;
    write_rd_csv(&mut out, &metadata, &records)?;
    out.flush()?;
    if args.json {
        write_jsonl(&args.out, &metadata, &records)?;
    }
    Ok(())
}

const BD_REPORT_HEADER: &str = "channel,anchor,test,bd_rate_percent,overlap_lo,overlap_hi,note";

fn cmd_bdrate(args: BdrateArgs) -> Result<(), CliError> {
    let anchor_records = read_rd_csv(&args.anchor)?;
    let test_records = read_rd_csv(&args.test)?;
    if anchor_records.is_empty() || test_records.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("RD CSV contains no data rows")));
    }

    let metadata = format!(
        "fcpq bdrate anchor={} test={} channel={} rate=total_bits fit=cubic-log10-rate",
        args.anchor.display(),
        args.test.display(),
        args.channel.name()
    );

    let mut lines = Vec::new();
    for &channel in args.channel.indices() {
        let label = |records: &[RdRecord]| {
            let mut policies: Vec<&str> = records.iter().map(|r| r.policy.as_str()).collect();
            policies.dedup();
            policies.join("+")
        };
        let curve = |records: &[RdRecord]| -> Result<RdCurve, fcpq_core::Error> {
            RdCurve::new(records.iter().map(|r| (r.total_bits, r.psnr(channel))).collect())
        };
        let outcome = curve(&anchor_records)
            .and_then(|a| curve(&test_records).map(|t| (a, t)))
            .and_then(|(a, t)| bd_rate(&a, &t));
        let row = match outcome {
            Ok(report) => format!(
                "c{channel},{},{},{},{},{},{}",
                label(&anchor_records),
                label(&test_records),
                fmt_full(report.bd_rate_percent),
                fmt_full(report.overlap.0),
                fmt_full(report.overlap.1),
                report.warnings.join("; ")
            ),
            Err(err) => format!(
                "c{channel},{},{},,,,{}",
                label(&anchor_records),
                label(&test_records),
                err.to_string().replace(',', ";")
            ),
        };
        lines.push(row);
    }

    match &args.out {
        Some(path) => {
            let mut out = create_out(path)?;
            writeln!(out, "# {metadata}")?;
            writeln!(out, "{BD_REPORT_HEADER}")?;
            for line in &lines {
                writeln!(out, "{line}")?;
            }
            out.flush()?;
        }
        None => {
            println!("# {metadata}");
            println!("{BD_REPORT_HEADER}");
            for line in &lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let pattern = SynthPattern::parse(&args.spec, args.geometry.bit_depth)
        .map_err(|e| CliError::Usage(format!("--spec: {e}")))?;
    let desc = descriptor(&args.geometry, ColorSpace::YCbCr);
    let frames: Vec<FrameBuffer> = (0..args.geometry.frames)
        .map(|index| {
            synth_frame(
                desc.width,
                desc.height,
                desc.bit_depth,
                &pattern,
                args.seed,
                index,
            )
        })
        .collect::<Result<_, _>>()?;
    write_frames(&args.out, &frames, &desc)?;
    Ok(())
}
