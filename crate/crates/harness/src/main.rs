use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use panoblend::{Algorithm, BlendParams};
use panoblend_harness::bench::{run_benchmark, write_report, RunOptions};
use panoblend_harness::manifest::load_manifest;
use panoblend_harness::synth::{load_spec, synth_scene, write_scene};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "panoblend", version, about = "Blend and benchmark multi-stream panoramic video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blend every frame of a scene and report timings.
    Blend(BlendArgs),
    /// Generate a synthetic scene from a TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct BlendArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// fb, mbb, mvcb, cpb, msb, mpb or none
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = panoblend::gradient::DEFAULT_SPACING)]
    spline_spacing: usize,
    #[arg(long, default_value_t = panoblend::gradient::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = panoblend::metrics::DEFAULT_ALPHA)]
    alpha: f64,
    /// Membrane processing order as stream indices, anchor first.
    #[arg(long, value_delimiter = ',')]
    anchor_order: Option<Vec<usize>>,
    /// Score each frame's bleeding degree.
    #[arg(long)]
    metrics: bool,
    /// Also write per-frame bleeding maps (needs --metrics and --out).
    #[arg(long)]
    dump_bleeding: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache file for mean value coordinate tables.
    #[arg(long)]
    mvc_cache: Option<PathBuf>,
}

fn blend(args: BlendArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    if args.threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    let anchor_order = match &args.anchor_order {
        Some(ix) => Some(manifest.positions_of(ix)?),
        None => None,
    };
    let params = BlendParams {
        levels: args.levels,
        spline_spacing: args.spline_spacing,
        epsilon: args.epsilon,
        anchor_order,
        mvc_cache: args.mvc_cache,
        ..BlendParams::default()
    };
    let opts = RunOptions {
        threads: args.threads,
        metrics: args.metrics,
        alpha: args.alpha,
        out_dir: args.out,
        dump_bleeding: args.dump_bleeding,
        seed: args.seed,
        ..RunOptions::default()
    };
    let (report, _) = run_benchmark(&manifest, args.algorithm, &params, &opts)
        .with_context(|| format!("blending {}", manifest.path.display()))?;
    if let Some(path) = &args.report {
        write_report(&report, path)?;
    }
    eprintln!(
        "{}: {} frames, layout {:.1} ms, precompute {:.1} ms, median blend {:.2} ms, peak {} MB",
        report.algorithm,
        report.frames.len(),
        report.layout_ms,
        report.precompute_ms,
        report.median_blend_ms(),
        report.peak_mb().map_or("?".into(), |m| format!("{m:.0}")),
    );
    if let Some(d) = report.averaged_degree {
        eprintln!("averaged bleeding degree {d:.4}");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Blend(args) => blend(args),
        Command::Synth { spec, out } => {
            let spec = load_spec(&spec)?;
            let scene = synth_scene(&spec)?;
            let path = write_scene(&scene, &out)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}
