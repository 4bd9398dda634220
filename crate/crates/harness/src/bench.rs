//! Benchmark runs: scene-level precomputation once, per-frame blend timing,
//! optional bleeding scores, frame and report output.

use crate::error::{io_err, HarnessError, Result};
use crate::io::{save_frame, save_map};
use crate::manifest::{load_scene, scene_layout, SceneManifest};
use panoblend::metrics::{bleeding_map, energy_map, DEFAULT_ALPHA, DEFAULT_DELTA};
use panoblend::model::frames_at;
use panoblend::{prepare, Algorithm, BlendParams, Frame, MappedStream, SeamLayout};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Worker threads for the blend; `None` uses the global pool.
    pub threads: Option<usize>,
    pub metrics: bool,
    pub alpha: f64,
    pub delta: f64,
    /// Where output frames (and bleeding maps) go; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    pub dump_bleeding: bool,
    /// Echoed into the report; blending itself is deterministic.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            metrics: false,
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
            out_dir: None,
            dump_bleeding: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub blend_ms: f64,
    pub peak_mb: Option<f64>,
    pub threshold: Option<f64>,
    pub a_h: Option<usize>,
    pub e_h: Option<f64>,
    pub bleeding_degree: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub width: usize,
    pub height: usize,
    pub streams: usize,
    pub params: BlendParams,
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub layout_ms: f64,
    pub precompute_ms: f64,
    pub frames: Vec<FrameRecord>,
    pub averaged_degree: Option<f64>,
}

impl RunReport {
    pub fn median_blend_ms(&self) -> f64 {
        let mut t: Vec<f64> = self.frames.iter().map(|f| f.blend_ms).collect();
        t.sort_by(f64::total_cmp);
        let n = t.len();
        if n == 0 {
            0.0
        } else if n % 2 == 1 {
            t[n / 2]
        } else {
            0.5 * (t[n / 2 - 1] + t[n / 2])
        }
    }

    pub fn peak_mb(&self) -> Option<f64> {
        self.frames.iter().filter_map(|f| f.peak_mb).reduce(f64::max)
    }
}

/// Peak resident set size of this process in MB (Linux only). Sampled at
/// frame boundaries, so it is an approximation of the true peak.
pub fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

/// Blends every frame of in-memory streams. `frame_offset` is added to the
/// frame numbers used in the report and output file names.
pub fn run_blend(
    streams: &[MappedStream],
    layout: &SeamLayout,
    algorithm: Algorithm,
    params: &BlendParams,
    opts: &RunOptions,
    frame_offset: usize,
) -> Result<(RunReport, Vec<Frame>)> {
    if streams.is_empty() {
        return Err(panoblend::BlendError::Structural("no streams".into()).into());
    }
    let frame_count = streams[0].frames.len();
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    in_pool(opts.threads, || {
        let t0 = Instant::now();
        let blender = prepare(algorithm, layout, params)?;
        let precompute_ms = t0.elapsed().as_secs_f64() * 1e3;
        let mut records = Vec::with_capacity(frame_count);
        let mut outputs = Vec::with_capacity(frame_count);
        let mut degrees = Vec::new();
        for t in 0..frame_count {
            let number = t + frame_offset;
            let frames = frames_at(streams, t).map_err(|source| HarnessError::Frame { frame: number, source })?;
            let start = Instant::now();
            let out = blender
                .blend(&frames)
                .map_err(|source| HarnessError::Frame { frame: number, source })?;
            let blend_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut rec = FrameRecord {
                frame: number,
                blend_ms,
                peak_mb: peak_rss_mb(),
                threshold: None,
                a_h: None,
                e_h: None,
                bleeding_degree: None,
            };
            if opts.metrics {
                let energy = energy_map(&out.offset, Some(layout.coverage()))?;
                let b = bleeding_map(&energy, opts.alpha, opts.delta)?;
                rec.threshold = Some(b.threshold.map_or(0.0, |t| t.value));
                rec.a_h = Some(b.a_h);
                rec.e_h = Some(b.e_h);
                rec.bleeding_degree = Some(b.degree);
                degrees.push(b.degree);
                if let (true, Some(dir)) = (opts.dump_bleeding, &opts.out_dir) {
                    let max = b.bleeding.iter().cloned().fold(0.0, f64::max);
                    save_map(
                        &dir.join(format!("bleeding_{number:05}.png")),
                        layout.width(),
                        layout.height(),
                        &b.bleeding,
                        max,
                    )?;
                }
            }
            if let Some(dir) = &opts.out_dir {
                save_frame(&dir.join(format!("frame_{number:05}.png")), &out.frame)?;
            }
            records.push(rec);
            outputs.push(out.frame);
        }
        let averaged_degree = (!degrees.is_empty()).then(|| degrees.iter().sum::<f64>() / degrees.len() as f64);
        let report = RunReport {
            algorithm,
            width: layout.width(),
            height: layout.height(),
            streams: streams.len(),
            params: params.clone(),
            alpha: opts.alpha,
            delta: opts.delta,
            seed: opts.seed,
            threads: opts.threads,
            layout_ms: 0.0,
            precompute_ms,
            frames: records,
            averaged_degree,
        };
        Ok((report, outputs))
    })?
}

/// Loads a manifest's frames (untimed), computes or reads the seam layout
/// and runs [`run_blend`].
pub fn run_benchmark(
    manifest: &SceneManifest,
    algorithm: Algorithm,
    params: &BlendParams,
    opts: &RunOptions,
) -> Result<(RunReport, Vec<Frame>)> {
    let scene = load_scene(manifest)?;
    let t0 = Instant::now();
    let layout = scene_layout(manifest, &scene.masks)?;
    let layout_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (mut report, frames) = run_blend(&scene.streams, &layout, algorithm, params, opts, manifest.frame_range[0])?;
    report.layout_ms = layout_ms;
    Ok((report, frames))
}

/// One record per frame, header row first.
pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "frame",
        "algorithm",
        "width",
        "height",
        "streams",
        "blend_ms",
        "precompute_ms",
        "layout_ms",
        "peak_mb",
        "levels",
        "spline_spacing",
        "epsilon",
        "alpha",
        "delta",
        "anchor_order",
        "threads",
        "seed",
        "threshold",
        "a_h",
        "e_h",
        "bleeding_degree",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    let p = &report.params;
    let anchor = p
        .anchor_order
        .as_ref()
        .map(|o| o.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    for f in &report.frames {
        w.write_record([
            f.frame.to_string(),
            report.algorithm.to_string(),
            report.width.to_string(),
            report.height.to_string(),
            report.streams.to_string(),
            format!("{:.3}", f.blend_ms),
            format!("{:.3}", report.precompute_ms),
            format!("{:.3}", report.layout_ms),
            opt(f.peak_mb.map(|m| format!("{m:.1}"))),
            opt(p.levels.map(|l| l.to_string())),
            p.spline_spacing.to_string(),
            p.epsilon.to_string(),
            report.alpha.to_string(),
            report.delta.to_string(),
            anchor.clone(),
            opt(report.threads.map(|t| t.to_string())),
            report.seed.to_string(),
            opt(f.threshold.map(|v| v.to_string())),
            opt(f.a_h.map(|v| v.to_string())),
            opt(f.e_h.map(|v| v.to_string())),
            opt(f.bleeding_degree.map(|v| v.to_string())),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
