use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dfvio::bench::{run_bench, BenchConfig};
use dfvio::config::{parse_lengths, Mode, PipelineConfig, TrackerKind};
use dfvio::dataset::{load_sequence, synth_generate, write_sequence, Sequence, SynthConfig};
use dfvio::eval::{format_report, read_tum, relative_error_csv, relative_translation_error, rmse};
use dfvio::pipeline::{run_sequence, write_outputs};

#[derive(Parser, Debug)]
#[command(name = "dfvio", version, about = "Downfacing visual-inertial odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline on a sequence directory.
    Run(RunArgs),
    /// Time the trackers over their displacement settings.
    Bench(BenchArgs),
    /// Score a TUM trajectory against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic sequence.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    sequence: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tracker: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for estimate.tum, timing.csv and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated relative-error lengths in meters.
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long)]
    search_radius: Option<usize>,
    /// Only process the first N frames.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BenchTarget {
    Both,
    Px4flow,
    Orb,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BenchTarget::Both)]
    tracker: BenchTarget,
    /// Comma-separated PX4FLOW search radii.
    #[arg(long)]
    search_radius: Option<String>,
    /// Comma-separated ORB displacement gates in pixels.
    #[arg(long)]
    max_displacement: Option<String>,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    estimate: PathBuf,
    ground_truth: PathBuf,
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for metrics.csv and relative_errors.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Square,
    Turns,
    Translation,
    Hover,
}

#[derive(Args, Debug)]
struct SynthArgs {
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Square)]
    preset: Preset,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Truncate to N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Also write stand-in SuperPoint tensors.
    #[arg(long)]
    superpoint: bool,
}

fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = &args.tracker {
        cfg.tracker = t.parse::<TrackerKind>()?;
    }
    if let Some(m) = &args.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(l) = &args.lengths {
        cfg.eval.lengths_m = parse_lengths(l)?;
    }
    if let Some(r) = args.search_radius {
        cfg.flow.search_radius = r;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Keep the first `n` frames and the sensor data up to the last kept frame.
fn truncate(seq: &mut Sequence, n: usize) {
    if n == 0 || n >= seq.frames.len() {
        return;
    }
    seq.frames.truncate(n);
    let end = seq.frames[n - 1].timestamp;
    seq.imu.retain(|s| s.timestamp <= end);
    seq.tof.retain(|s| s.timestamp <= end);
    seq.ground_truth.retain(|p| p.timestamp <= end);
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = pipeline_config(&args)?;
    let mut seq = load_sequence(&args.sequence)?;
    if let Some(n) = args.frames {
        truncate(&mut seq, n);
    }
    let out = run_sequence(&seq, &cfg)?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&out, dir)?;
    }
    let s = &out.stats;
    println!(
        "{} {} frames {}  motions {}  updates {} (rejected {})  height updates {}",
        cfg.tracker, cfg.mode, s.frames, s.valid_motions, s.applied_updates, s.rejected_updates, s.height_updates
    );
    if let Some(m) = &out.metrics {
        print!("{}", format_report(Some(&m.rmse), &m.relative));
        println!(
            "final error     {:.4} m over {:.3} m ({:.3} %)",
            m.final_position_error_m,
            m.path_length_m,
            100.0 * m.final_position_error_m / m.path_length_m
        );
    } else if let Some(e) = &out.metrics_error {
        eprintln!("metrics unavailable: {e}");
    }
    Ok(())
}

fn list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().ok().with_context(|| format!("invalid {what} {s:?}")))
        .collect()
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut cfg = BenchConfig {
        frames: args.frames,
        repeats: args.repeats,
        seed: args.seed,
        ..BenchConfig::default()
    };
    if let Some(r) = &args.search_radius {
        cfg.radii = list(r, "search radius")?;
    }
    if let Some(d) = &args.max_displacement {
        cfg.displacements = list(d, "displacement")?;
    }
    match args.tracker {
        BenchTarget::Px4flow => cfg.displacements.clear(),
        BenchTarget::Orb => cfg.radii.clear(),
        BenchTarget::Both => {}
    }
    let report = run_bench(&cfg)?;
    print!("{}", report.to_csv());
    print!("{}", report.summary());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        report.write_csv(&dir.join("bench.csv"))?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(l) = &args.lengths {
        cfg.eval.lengths_m = parse_lengths(l)?;
    }
    let est = read_tum(&args.estimate)?;
    let gt = read_tum(&args.ground_truth)?;
    let e = &cfg.eval;
    // a short or degenerate prefix leaves the relative errors usable
    let fit = match rmse(&est, &gt, e.align_window_s, e.max_dt) {
        Ok(r) => Some(r),
        Err(err) => {
            eprintln!("RMSE unavailable: {err}");
            None
        }
    };
    let rows = relative_translation_error(&est, &gt, &e.lengths_m, e.max_dt)?;
    print!("{}", format_report(fit.as_ref(), &rows));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let rte = dir.join("relative_errors.csv");
        std::fs::write(&rte, relative_error_csv(&rows)).with_context(|| format!("writing {}", rte.display()))?;
        if let Some(r) = &fit {
            let path = dir.join("metrics.csv");
            let csv = format!("metric,value\nrmse_m,{}\nerror_std_m,{}\npairs,{}\nalignment_scale,{}\n", r.rmse, r.std, r.pairs, r.alignment.scale);
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match args.preset {
        Preset::Square => SynthConfig::square(args.seed),
        Preset::Turns => SynthConfig::turns(args.seed),
        Preset::Translation => SynthConfig::translation(args.seed),
        Preset::Hover => SynthConfig::hover(args.seed, 10.0),
    };
    cfg.texture.seed = args.seed;
    cfg.superpoint_proxy = args.superpoint;
    if let Some(n) = args.frames {
        if n == 0 {
            bail!("--frames must be at least 1");
        }
        cfg.duration = cfg.duration.min((n - 1) as f64 / cfg.frame_rate);
    }
    let seq = synth_generate(&cfg)?;
    write_sequence(&seq, &args.out)?;
    println!("wrote {} frames to {}", seq.frames.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
