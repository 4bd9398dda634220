//! Bleeding measure on offset maps: how much strong offset energy spreads
//! beyond the average level of the high-energy area.
//!
//! Energies are expressed in 8-bit intensity units. Maps whose largest
//! energy is below one intensity level carry no visible offset and score 0.

use crate::error::{BlendError, Result};
use crate::model::{Mask, OffsetMap};
use serde::Serialize;

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_DELTA: f64 = 1e-6;
pub const HISTOGRAM_BINS: usize = 256;
/// Offsets are on a [0, 1] intensity scale; energies are reported x255.
pub const ENERGY_SCALE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ChannelReduction {
    #[default]
    Mean,
    Max,
}

/// Per-pixel offset magnitude; pixels outside `valid` are ignored by all
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl EnergyMap {
    pub fn max(&self) -> f64 {
        self.valid_values().fold(0.0, f64::max)
    }

    fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(&e, _)| e)
    }
}

pub fn energy_map(offset: &OffsetMap, coverage: Option<&Mask>) -> Result<EnergyMap> {
    energy_map_with(offset, coverage, ChannelReduction::Mean)
}

pub fn energy_map_with(offset: &OffsetMap, coverage: Option<&Mask>, reduction: ChannelReduction) -> Result<EnergyMap> {
    let (w, h, c) = (offset.width(), offset.height(), offset.channels());
    let valid = match coverage {
        Some(m) if m.dims() != (w, h) => {
            return Err(BlendError::structural("coverage mask and offset map differ in size"))
        }
        Some(m) => m.data().to_vec(),
        None => vec![true; w * h],
    };
    let values = offset
        .data()
        .chunks_exact(c)
        .map(|px| {
            let e = match reduction {
                ChannelReduction::Mean => px.iter().map(|v| v.abs()).sum::<f64>() / c as f64,
                ChannelReduction::Max => px.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            };
            e * ENERGY_SCALE
        })
        .collect();
    Ok(EnergyMap {
        width: w,
        height: h,
        values,
        valid,
    })
}

/// Otsu split of a histogram over `[0, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    /// First bin of the upper class.
    pub bin: usize,
    /// Lower edge of that bin.
    pub value: f64,
    pub max: f64,
}

impl Threshold {
    pub fn is_high(&self, e: f64) -> bool {
        bin_of(e, self.max) >= self.bin
    }
}

fn bin_of(v: f64, max: f64) -> usize {
    ((v / max * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Threshold maximising between-class variance; the lowest wins ties.
pub fn otsu_threshold(values: &[f64]) -> Result<Threshold> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() || max == min || max <= 0.0 || min < 0.0 || !max.is_finite() {
        return Err(BlendError::DegenerateInput(
            "threshold needs at least two distinct non-negative values".into(),
        ));
    }
    let mut hist = [0usize; HISTOGRAM_BINS];
    for &v in values {
        hist[bin_of(v, max)] += 1;
    }
    let n = values.len() as f64;
    let total: f64 = hist.iter().enumerate().map(|(b, &k)| b as f64 * k as f64).sum();
    let (mut count0, mut sum0) = (0usize, 0.0);
    let mut best = (-1.0f64, 1);
    for t in 1..HISTOGRAM_BINS {
        count0 += hist[t - 1];
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let count1 = values.len() - count0;
        let score = if count0 == 0 || count1 == 0 {
            0.0
        } else {
            let m0 = sum0 / count0 as f64;
            let m1 = (total - sum0) / count1 as f64;
            (count0 as f64 / n) * (count1 as f64 / n) * (m0 - m1) * (m0 - m1)
        };
        // relative margin so rounding never overturns an exact tie
        if score > best.0 + 1e-12 * best.0.abs().max(1e-300) {
            best = (score, t);
        }
    }
    Ok(Threshold {
        bin: best.1,
        value: best.1 as f64 * max / HISTOGRAM_BINS as f64,
        max,
    })
}

/// Bleeding statistics of one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameBleeding {
    pub threshold: Option<Threshold>,
    /// Number of pixels in the high-energy class.
    pub a_h: usize,
    /// Total energy of the high-energy class.
    pub e_h: f64,
    #[serde(skip)]
    pub bleeding: Vec<f64>,
    /// Sum of squared bleeding values.
    pub degree: f64,
}

/// `B(p) = max(0, e(p) - alpha * E_h / (A_h + delta))` over valid pixels,
/// zero elsewhere.
pub fn bleeding_map(energy: &EnergyMap, alpha: f64, delta: f64) -> Result<FrameBleeding> {
    if !(alpha >= 0.0 && alpha.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
        return Err(BlendError::parameter(format!(
            "alpha must be >= 0 and delta > 0 (got {alpha}, {delta})"
        )));
    }
    let n = energy.values.len();
    let none = FrameBleeding {
        threshold: None,
        a_h: 0,
        e_h: 0.0,
        bleeding: vec![0.0; n],
        degree: 0.0,
    };
    if energy.max() < 1.0 {
        return Ok(none);
    }
    let valid: Vec<f64> = energy.valid_values().collect();
    let t = match otsu_threshold(&valid) {
        Ok(t) => t,
        Err(BlendError::DegenerateInput(_)) => return Ok(none),
        Err(e) => return Err(e),
    };
    let mut a_h = 0usize;
    let mut e_h = 0.0;
    for e in energy.valid_values() {
        if t.is_high(e) {
            a_h += 1;
            e_h += e;
        }
    }
    let shrink = alpha * e_h / (a_h as f64 + delta);
    let mut degree = 0.0;
    let bleeding = energy
        .values
        .iter()
        .zip(&energy.valid)
        .map(|(&e, &ok)| {
            let b = if ok { (e - shrink).max(0.0) } else { 0.0 };
            degree += b * b;
            b
        })
        .collect();
    Ok(FrameBleeding {
        threshold: Some(t),
        a_h,
        e_h,
        bleeding,
        degree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleedingReport {
    pub alpha: f64,
    pub delta: f64,
    pub frames: Vec<FrameBleeding>,
    pub averaged_degree: f64,
}

/// Scores a sequence of offset maps and averages the per-frame degrees.
pub fn bleeding_degree(offsets: &[OffsetMap], coverage: Option<&Mask>, alpha: f64, delta: f64) -> Result<BleedingReport> {
    if offsets.is_empty() {
        return Err(BlendError::parameter("no offset maps to score"));
    }
    let frames = offsets
        .iter()
        .map(|o| bleeding_map(&energy_map(o, coverage)?, alpha, delta))
        .collect::<Result<Vec<_>>>()?;
    let averaged_degree = frames.iter().map(|f| f.degree).sum::<f64>() / frames.len() as f64;
    Ok(BleedingReport {
        alpha,
        delta,
        frames,
        averaged_degree,
    })
}
