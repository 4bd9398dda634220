//! Frame and mask files. Frames are 8-bit RGB (PNG or binary PPM), masks
//! are 8-bit grayscale where values >= 128 mean covered.

use crate::error::{HarnessError, Result};
use image::{GrayImage, RgbImage};
use panoblend::{Frame, Mask};
use std::path::Path;

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> HarnessError + '_ {
    move |source| HarnessError::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(image_err(path))?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Frame::from_u8(w as usize, h as usize, 3, img.as_raw())?)
}

/// Rounds to nearest and clamps; format follows the extension.
pub fn save_frame(path: &Path, frame: &Frame) -> Result<()> {
    if frame.channels() != 3 {
        return Err(panoblend::BlendError::Structural(format!(
            "only RGB frames can be written, got {} channels",
            frame.channels()
        ))
        .into());
    }
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.to_u8())
        .expect("buffer matches dimensions");
    img.save(path).map_err(image_err(path))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(image_err(path))?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Mask::from_vec(
        w as usize,
        h as usize,
        img.as_raw().iter().map(|&v| v >= 128).collect(),
    )?)
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = mask.dims();
    let data = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(w as u32, h as u32, data)
        .expect("buffer matches dimensions")
        .save(path)
        .map_err(image_err(path))
}

/// Grayscale image of a non-negative map, scaled so `max` is white.
pub fn save_map(path: &Path, width: usize, height: usize, values: &[f64], max: f64) -> Result<()> {
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let data = values
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(width as u32, height as u32, data)
        .expect("buffer matches dimensions")
        .save(path)
        .map_err(image_err(path))
}

/// Label map with the stream position per pixel, 255 where uncovered.
pub fn save_labels(path: &Path, layout: &panoblend::SeamLayout) -> Result<()> {
    let (w, h) = layout.dims();
    let data = layout
        .label_map()
        .iter()
        .map(|&l| if l == panoblend::seams::UNCOVERED { 255 } else { l as u8 })
        .collect();
    GrayImage::from_raw(w as u32, h as u32, data)
        .expect("buffer matches dimensions")
        .save(path)
        .map_err(image_err(path))
}

/// Reads a label map written by [`save_labels`] as trimmed masks.
pub fn load_labels(path: &Path, streams: usize) -> Result<Vec<Mask>> {
    let img = image::open(path).map_err(image_err(path))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Ok((0..streams)
        .map(|s| Mask::from_fn(w, h, |x, y| raw[y * w + x] as usize == s))
        .collect())
}
