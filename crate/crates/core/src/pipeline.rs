//! One interface over all blenders: scene-level precomputation once, then
//! per-frame blending that also yields an offset map for scoring.

use crate::compose::{compose_frames, offset_from_composite};
use crate::direct::{default_levels, feather_blend_frames, MultibandBlender};
use crate::error::{BlendError, Result};
use crate::gradient::{MpbSolver, MsbPlan, SplineBasis, DEFAULT_EPSILON, DEFAULT_SPACING};
use crate::membrane::{MembraneBlender, MembraneMethod};
use crate::model::{Frame, OffsetMap};
use crate::seams::{feather_weights, SeamLayout, WeightMaps};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Trimmed composite without blending.
    None,
    Fb,
    Mbb,
    Mvcb,
    Cpb,
    Msb,
    Mpb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::None,
        Algorithm::Fb,
        Algorithm::Mbb,
        Algorithm::Mvcb,
        Algorithm::Cpb,
        Algorithm::Msb,
        Algorithm::Mpb,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::None => "none",
            Algorithm::Fb => "fb",
            Algorithm::Mbb => "mbb",
            Algorithm::Mvcb => "mvcb",
            Algorithm::Cpb => "cpb",
            Algorithm::Msb => "msb",
            Algorithm::Mpb => "mpb",
        }
    }

    /// Whether the method computes an offset map directly (otherwise the
    /// offset is taken as output minus the trimmed composite).
    pub fn has_explicit_offset(self) -> bool {
        matches!(self, Algorithm::Mvcb | Algorithm::Cpb | Algorithm::Msb)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = BlendError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| BlendError::parameter(format!("unknown algorithm {s:?}")))
    }
}

/// Tunables for every method; each blender reads only its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    /// Pyramid levels for multi-band blending; `None` picks from the size.
    pub levels: Option<usize>,
    /// Feather ramp half-width in pixels; `None` picks from the overlaps.
    pub feather_radius: Option<f64>,
    pub spline_spacing: usize,
    pub spline_basis: SplineBasis,
    pub epsilon: f64,
    /// Region processing order for the membrane methods (0-based; first is
    /// the anchor).
    pub anchor_order: Option<Vec<usize>>,
    /// Boundary sampling tolerance for mean value coordinates.
    pub mvc_tolerance: Option<f64>,
    /// Reuse mean value coordinate tables from this file when they match.
    #[serde(skip)]
    pub mvc_cache: Option<PathBuf>,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            levels: None,
            feather_radius: None,
            spline_spacing: DEFAULT_SPACING,
            spline_basis: SplineBasis::Bilinear,
            epsilon: DEFAULT_EPSILON,
            anchor_order: None,
            mvc_tolerance: None,
            mvc_cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blended {
    pub frame: Frame,
    pub offset: OffsetMap,
}

pub trait Blender: Send + Sync {
    fn algorithm(&self) -> Algorithm;
    fn layout(&self) -> &SeamLayout;
    fn blend(&self, frames: &[&Frame]) -> Result<Blended>;
}

fn implicit(frame: Frame, frames: &[&Frame], layout: &SeamLayout) -> Result<Blended> {
    let offset = offset_from_composite(&frame, frames, layout)?;
    Ok(Blended { frame, offset })
}

struct Plain(SeamLayout);

impl Blender for Plain {
    fn algorithm(&self) -> Algorithm {
        Algorithm::None
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        let frame = compose_frames(frames, &self.0)?;
        let offset = OffsetMap::zeros(frame.width(), frame.height(), frame.channels());
        Ok(Blended { frame, offset })
    }
}

struct Feather(SeamLayout, WeightMaps);

impl Blender for Feather {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Fb
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        implicit(feather_blend_frames(frames, &self.1)?, frames, &self.0)
    }
}

struct Multiband(SeamLayout, MultibandBlender);

impl Blender for Multiband {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Mbb
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        implicit(self.1.blend(frames)?, frames, &self.0)
    }
}

struct Membrane(SeamLayout, MembraneBlender);

impl Blender for Membrane {
    fn algorithm(&self) -> Algorithm {
        match self.1.method() {
            MembraneMethod::Mvc => Algorithm::Mvcb,
            MembraneMethod::ConvPyramid => Algorithm::Cpb,
        }
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        let (frame, offset) = self.1.blend(frames)?;
        Ok(Blended { frame, offset })
    }
}

struct Spline(SeamLayout, MsbPlan);

impl Blender for Spline {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Msb
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        let (frame, offset) = self.1.blend(frames)?;
        Ok(Blended { frame, offset })
    }
}

struct Screened(SeamLayout, MpbSolver, f64);

impl Blender for Screened {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Mpb
    }
    fn layout(&self) -> &SeamLayout {
        &self.0
    }
    fn blend(&self, frames: &[&Frame]) -> Result<Blended> {
        implicit(self.1.blend(frames, &self.0, self.2)?, frames, &self.0)
    }
}

/// Does all scene-level work for `algorithm` (weights, pyramids of masks,
/// coordinate tables, factorizations, transform plans).
pub fn prepare(algorithm: Algorithm, layout: &SeamLayout, params: &BlendParams) -> Result<Box<dyn Blender>> {
    let l = layout.clone();
    Ok(match algorithm {
        Algorithm::None => Box::new(Plain(l)),
        Algorithm::Fb => {
            let w = feather_weights(layout.masks(), layout, params.feather_radius)?;
            Box::new(Feather(l, w))
        }
        Algorithm::Mbb => {
            let levels = params.levels.unwrap_or_else(|| default_levels(layout.width(), layout.height()));
            Box::new(Multiband(l, MultibandBlender::new(layout, levels)?))
        }
        Algorithm::Mvcb => {
            let order = params.anchor_order.as_deref();
            let b = match &params.mvc_cache {
                Some(path) => MembraneBlender::mvc_cached(layout, order, params.mvc_tolerance, path)?,
                None => MembraneBlender::new(layout, MembraneMethod::Mvc, order, params.mvc_tolerance)?,
            };
            Box::new(Membrane(l, b))
        }
        Algorithm::Cpb => {
            let b = MembraneBlender::new(layout, MembraneMethod::ConvPyramid, params.anchor_order.as_deref(), None)?;
            Box::new(Membrane(l, b))
        }
        Algorithm::Msb => Box::new(Spline(l, MsbPlan::new(layout, params.spline_spacing, params.spline_basis)?)),
        Algorithm::Mpb => {
            if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
                return Err(BlendError::parameter(format!("epsilon must be positive, got {}", params.epsilon)));
            }
            let solver = MpbSolver::new(layout.width(), layout.height())?;
            Box::new(Screened(l, solver, params.epsilon))
        }
    })
}
