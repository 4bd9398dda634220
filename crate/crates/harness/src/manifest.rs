//! Scene manifests (TOML). Paths are relative to the manifest's directory.
//!
//! ```toml
//! width = 1000
//! height = 500
//! frame_range = [0, 29]          # inclusive
//! layout = "labels.png"          # optional precomputed seams
//!
//! [[streams]]
//! index = 1
//! frames = "cam1/frame_####.png" # run of '#' = zero-padded frame number
//! mask = "cam1/mask.png"
//! ```

use crate::error::{io_err, HarnessError, Result};
use crate::io::{load_frame, load_labels, load_mask};
use panoblend::{compute_seams, MappedStream, Mask, SeamLayout};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub index: usize,
    pub frames: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub width: usize,
    pub height: usize,
    pub frame_range: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    pub streams: Vec<StreamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub frame_range: [usize; 2],
    pub layout: Option<PathBuf>,
    /// `(stream index, frame pattern, mask path)` with resolved paths.
    pub streams: Vec<(usize, PathBuf, PathBuf)>,
    pub warnings: Vec<String>,
}

/// Substitutes the first run of `#` in `pattern` with `frame`, zero-padded
/// to the run length.
pub fn frame_path(pattern: &Path, frame: usize) -> PathBuf {
    let s = pattern.to_string_lossy();
    let Some(start) = s.find('#') else {
        return pattern.to_path_buf();
    };
    let len = s[start..].chars().take_while(|&c| c == '#').count();
    PathBuf::from(format!("{}{:0len$}{}", &s[..start], frame, &s[start + len..]))
}

impl SceneManifest {
    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.frame_range[0]..=self.frame_range[1]
    }

    pub fn frame_count(&self) -> usize {
        self.frame_range[1] - self.frame_range[0] + 1
    }

    pub fn stream_indices(&self) -> Vec<usize> {
        self.streams.iter().map(|s| s.0).collect()
    }

    /// Converts 1-based stream indices into positions in manifest order.
    pub fn positions_of(&self, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|i| {
                self.streams.iter().position(|s| s.0 == *i).ok_or_else(|| self.err(format!("no stream with index {i}")))
            })
            .collect()
    }

    fn err(&self, message: String) -> HarnessError {
        HarnessError::Manifest {
            path: self.path.clone(),
            message,
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<SceneManifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |message: String| HarnessError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let file: ManifestFile = toml::from_str(&text).map_err(|e| fail(e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    if file.width == 0 || file.height == 0 {
        return Err(fail("panorama size must be positive".into()));
    }
    if file.streams.len() < 2 {
        return Err(fail(format!("need at least 2 streams, found {}", file.streams.len())));
    }
    if file.frame_range[0] > file.frame_range[1] {
        return Err(fail(format!("empty frame range {:?}", file.frame_range)));
    }
    let mut seen = HashSet::new();
    let mut warnings = Vec::new();
    let mut streams = Vec::new();
    for s in &file.streams {
        if !seen.insert(s.index) {
            return Err(fail(format!("duplicate stream index {}", s.index)));
        }
        let mask = dir.join(&s.mask);
        if !mask.is_file() {
            return Err(fail(format!("stream {}: mask {} not found", s.index, mask.display())));
        }
        let (mw, mh) = image::image_dimensions(&mask).map_err(|e| fail(format!("stream {}: {e}", s.index)))?;
        if (mw as usize, mh as usize) != (file.width, file.height) {
            return Err(fail(format!(
                "stream {}: mask is {mw}x{mh}, panorama is {}x{}",
                s.index, file.width, file.height
            )));
        }
        let pattern = dir.join(&s.frames);
        if !s.frames.contains('#') && file.frame_range[0] != file.frame_range[1] {
            warnings.push(format!("stream {}: frame pattern has no '#', every frame reads the same file", s.index));
        }
        for f in file.frame_range[0]..=file.frame_range[1] {
            let p = frame_path(&pattern, f);
            if !p.is_file() {
                return Err(fail(format!("stream {}: frame {} not found", s.index, p.display())));
            }
        }
        streams.push((s.index, pattern, mask));
    }
    let layout = match &file.layout {
        Some(l) => {
            let p = dir.join(l);
            if !p.is_file() {
                return Err(fail(format!("layout {} not found", p.display())));
            }
            Some(p)
        }
        None => None,
    };
    Ok(SceneManifest {
        path: path.to_path_buf(),
        width: file.width,
        height: file.height,
        frame_range: file.frame_range,
        layout,
        streams,
        warnings,
    })
}

/// Decoded scene: every stream with all frames in range.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub streams: Vec<MappedStream>,
    pub masks: Vec<Mask>,
}

pub fn load_scene(manifest: &SceneManifest) -> Result<LoadedScene> {
    let mut streams = Vec::new();
    let mut masks = Vec::new();
    for (index, pattern, mask_path) in &manifest.streams {
        let mask = load_mask(mask_path)?;
        let frames = manifest
            .frames()
            .map(|f| {
                let fr = load_frame(&frame_path(pattern, f))?;
                if fr.dims() != (manifest.width, manifest.height) {
                    return Err(manifest.err(format!("stream {index}: frame {f} is {:?}", fr.dims())));
                }
                Ok(fr)
            })
            .collect::<Result<Vec<_>>>()?;
        streams.push(MappedStream::new(frames, mask.clone(), *index)?);
        masks.push(mask);
    }
    Ok(LoadedScene { streams, masks })
}

/// Seam layout from the manifest's label map if given, else computed.
pub fn scene_layout(manifest: &SceneManifest, masks: &[Mask]) -> Result<SeamLayout> {
    match &manifest.layout {
        Some(p) => {
            let trimmed = load_labels(p, masks.len())?;
            Ok(SeamLayout::from_trimmed(masks.to_vec(), trimmed)?)
        }
        None => Ok(compute_seams(masks)?),
    }
}
