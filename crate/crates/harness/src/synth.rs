//! Deterministic synthetic multi-stream scenes: one procedural texture seen
//! through overlapping per-stream masks, with optional per-stream intensity
//! offsets and content shifts that misalign neighbouring streams.

use crate::error::{io_err, HarnessError, Result};
use crate::io::{save_frame, save_mask};
use crate::manifest::{ManifestFile, StreamEntry};
use panoblend::{Frame, MappedStream, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrangement {
    /// Side-by-side vertical strips.
    #[default]
    Strips,
    /// Stream 1 across the top, the others as strips below it.
    Rig,
}

fn default_overlap() -> f64 {
    0.2
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub streams: usize,
    /// Overlap band width as a fraction of a stream's width (or height).
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    #[serde(default)]
    pub arrangement: Arrangement,
    /// Intensity added to each stream; missing entries are 0.
    #[serde(default)]
    pub offsets: Vec<f64>,
    /// Horizontal content shift between consecutive streams, in pixels.
    #[serde(default)]
    pub shift: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub frames: usize,
    /// Horizontal pan per frame, in pixels.
    #[serde(default = "one")]
    pub motion: usize,
}

impl SynthSpec {
    pub fn new(width: usize, height: usize, streams: usize) -> Self {
        Self {
            width,
            height,
            streams,
            overlap: default_overlap(),
            arrangement: Arrangement::Strips,
            offsets: Vec::new(),
            shift: 0,
            seed: 0,
            frames: 1,
            motion: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("panorama {}x{} is too small", self.width, self.height));
        }
        let min_streams = match self.arrangement {
            Arrangement::Strips => 2,
            Arrangement::Rig => 3,
        };
        if self.streams < min_streams {
            return bad(format!("{:?} needs at least {min_streams} streams", self.arrangement));
        }
        if !(self.overlap > 0.0 && self.overlap <= 0.5) {
            return bad(format!("overlap {} is outside (0, 0.5]", self.overlap));
        }
        if self.offsets.len() > self.streams {
            return bad(format!("{} offsets for {} streams", self.offsets.len(), self.streams));
        }
        if self.offsets.iter().any(|o| !o.is_finite()) {
            return bad("offsets must be finite".into());
        }
        if self.frames == 0 {
            return bad("at least one frame".into());
        }
        Ok(())
    }

    pub fn offset(&self, stream: usize) -> f64 {
        self.offsets.get(stream).copied().unwrap_or(0.0)
    }
}

/// Sum of random sinusoids plus sharp-edged slanted bars, values within
/// [0.1, 0.9]. The bars are steep, so their edges run along vertical seams
/// for a stretch and cross horizontal ones; a small horizontal misalignment
/// then shows up as a jump along the seam.
#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<[f64; 5]>,
    bars: Vec<Bar>,
}

#[derive(Debug, Clone)]
struct Bar {
    centre: (f64, f64),
    dir: (f64, f64),
    half_len: f64,
    half_width: f64,
    colour: [f64; 3],
}

impl Texture {
    fn new(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..12)
            .map(|_| {
                [
                    rng.gen_range(0.005..0.08),
                    rng.gen_range(0.005..0.08),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.02..0.06),
                    rng.gen_range(0.0..3.0f64).floor(),
                ]
            })
            .collect();
        let (w, h) = (width as f64, height as f64);
        let bars = (0..40)
            .map(|_| {
                let mut angle = rng.gen_range(60.0..88.0f64).to_radians();
                if rng.gen_bool(0.5) {
                    angle = std::f64::consts::PI - angle;
                }
                let c = [rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3)];
                let dark = rng.gen_bool(0.5);
                Bar {
                    centre: (rng.gen_range(0.2..0.8) * w, rng.gen_range(0.2..0.8) * h),
                    dir: (angle.cos(), angle.sin()),
                    half_len: rng.gen_range(0.25..0.5) * w.hypot(h),
                    half_width: rng.gen_range(0.01..0.03) * w.min(h) + 1.0,
                    colour: c.map(|v| if dark { -0.25 - v } else { 0.25 + v }),
                }
            })
            .collect();
        Self { waves, bars }
    }

    fn value(&self, x: f64, y: f64, c: usize) -> f64 {
        let mut v = 0.5;
        for w in &self.waves {
            let gain = if w[4] as usize == c { 1.5 } else { 0.75 };
            v += gain * w[3] * (w[0] * x + w[1] * y + w[2]).sin();
        }
        for b in &self.bars {
            let (dx, dy) = (x - b.centre.0, y - b.centre.1);
            let along = dx * b.dir.0 + dy * b.dir.1;
            let across = dy * b.dir.0 - dx * b.dir.1;
            if along.abs() < b.half_len && across.abs() < b.half_width {
                v += b.colour[c];
            }
        }
        v.clamp(0.1, 0.9)
    }
}

pub fn synth_masks(spec: &SynthSpec) -> Result<Vec<Mask>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let strips = |n: usize, y0: usize| -> Vec<Mask> {
        let sw = w as f64 / (n as f64 - (n as f64 - 1.0) * spec.overlap);
        let step = sw * (1.0 - spec.overlap);
        (0..n)
            .map(|i| {
                let a = (i as f64 * step).round() as usize;
                let b = if i + 1 == n { w } else { (i as f64 * step + sw).round() as usize };
                Mask::from_fn(w, h, |x, y| y >= y0 && x >= a && x < b)
            })
            .collect()
    };
    Ok(match spec.arrangement {
        Arrangement::Strips => strips(spec.streams, 0),
        Arrangement::Rig => {
            let yb = 0.4 * h as f64;
            let half = spec.overlap * yb / (2.0 - spec.overlap);
            let top_end = (yb + half).round() as usize;
            let bottom_start = (yb - half).round() as usize;
            let mut v = vec![Mask::from_fn(w, h, |_, y| y < top_end)];
            v.extend(strips(spec.streams - 1, bottom_start));
            v
        }
    })
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub spec: SynthSpec,
    pub streams: Vec<MappedStream>,
    pub masks: Vec<Mask>,
    /// The unshifted, unoffset texture per frame.
    pub truth: Vec<Frame>,
}

fn par_frame(w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64 + Sync) -> Frame {
    let mut data = vec![0.0; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = f(i / 3, y, i % 3);
        }
    });
    Frame::new(w, h, 3, data).expect("buffer matches dimensions")
}

pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene> {
    let masks = synth_masks(spec)?;
    let tex = Texture::new(spec.seed, spec.width, spec.height);
    let (w, h) = (spec.width, spec.height);
    let pan = |t: usize| (t * spec.motion) as f64;
    let truth: Vec<Frame> = (0..spec.frames)
        .map(|t| par_frame(w, h, |x, y, c| tex.value(x as f64 + pan(t), y as f64, c)))
        .collect();
    let streams = masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let dx = (spec.shift * i) as f64;
            let off = spec.offset(i);
            let frames = (0..spec.frames)
                .map(|t| {
                    par_frame(w, h, |x, y, c| {
                        if m.get(x, y) {
                            tex.value(x as f64 + pan(t) - dx, y as f64, c) + off
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            MappedStream::new(frames, m.clone(), i + 1)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SynthScene {
        spec: spec.clone(),
        streams,
        masks,
        truth,
    })
}

/// Writes frames, masks, ground truth and `manifest.toml` under `dir`.
pub fn write_scene(scene: &SynthScene, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let digits = scene.spec.frames.saturating_sub(1).to_string().len().max(4);
    let hashes = "#".repeat(digits);
    let mut entries = Vec::new();
    for (s, mask) in scene.streams.iter().zip(&scene.masks) {
        let sub = format!("stream{}", s.stream_index);
        let sdir = dir.join(&sub);
        std::fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
        save_mask(&sdir.join("mask.png"), mask)?;
        for (t, f) in s.frames.iter().enumerate() {
            save_frame(&sdir.join(format!("frame_{t:0digits$}.png")), f)?;
        }
        entries.push(StreamEntry {
            index: s.stream_index,
            frames: format!("{sub}/frame_{hashes}.png"),
            mask: format!("{sub}/mask.png"),
        });
    }
    let tdir = dir.join("truth");
    std::fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
    for (t, f) in scene.truth.iter().enumerate() {
        save_frame(&tdir.join(format!("frame_{t:0digits$}.png")), f)?;
    }
    let manifest = ManifestFile {
        width: scene.spec.width,
        height: scene.spec.height,
        frame_range: [0, scene.spec.frames - 1],
        layout: None,
        streams: entries,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let spec: SynthSpec = toml::from_str(&text).map_err(|e| HarnessError::Spec(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}
