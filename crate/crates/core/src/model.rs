//! Image, mask and stream containers shared by every blender.
//!
//! Pixel data is stored row-major and channel-interleaved as `f64`. Frames
//! loaded from 8-bit sources are mapped to `[0, 1]` by `v / 255`; nothing is
//! clamped until [`Frame::to_rgb8`] is called for export.

use crate::error::{BlendError, Result};

/// A multi-channel real-valued image in panorama coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(BlendError::structural("frame must have at least one channel"));
        }
        if data.len() != width * height * channels {
            return Err(BlendError::structural(format!(
                "frame data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(BlendError::structural(format!("non-finite sample at index {i}")));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Frame {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds a frame from a per-pixel, per-channel function.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Frame {
            width,
            height,
            channels,
            data,
        }
    }

    /// Interleaved 8-bit samples, converted as `v / 255`.
    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Self::new(width, height, channels, data)
    }

    /// Export to interleaved 8-bit samples: clamp to `[0, 1]`, then round to nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub(crate) fn same_shape(&self, other_w: usize, other_h: usize, other_c: usize) -> bool {
        self.width == other_w && self.height == other_h && self.channels == other_c
    }

    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Frame {
            width,
            height,
            channels,
            data,
        }
    }
}

/// Binary coverage mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(BlendError::structural(format!(
                "mask data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Like [`Mask::get`] but `false` outside the image.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Inclusive-exclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            if let (Some(first), Some(last)) =
                (row.iter().position(|&b| b), row.iter().rposition(|&b| b))
            {
                bb = Some(match bb {
                    None => (first, y, last + 1, y + 1),
                    Some((x0, y0, x1, _)) => (x0.min(first), y0, x1.max(last + 1), y + 1),
                });
            }
        }
        bb
    }
}

/// Signed per-pixel correction added to a trimmed composite.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl OffsetMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        OffsetMap {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(BlendError::structural(format!(
                "offset data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(BlendError::structural("non-finite offset value"));
        }
        Ok(OffsetMap {
            width,
            height,
            channels,
            data,
        })
    }

    /// `a - b`, elementwise. Used to express direct blenders' output as an offset.
    pub fn difference(a: &Frame, b: &Frame) -> Result<Self> {
        if !a.same_shape(b.width(), b.height(), b.channels()) {
            return Err(BlendError::structural("difference of frames with different shapes"));
        }
        Ok(OffsetMap {
            width: a.width(),
            height: a.height(),
            channels: a.channels(),
            data: a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// One camera stream already warped into panorama coordinates.
#[derive(Debug, Clone)]
pub struct MappedStream {
    pub frames: Vec<Frame>,
    pub mask: Mask,
    /// 1-based stream number as used in manifests and reports.
    pub stream_index: usize,
}

impl MappedStream {
    pub fn new(frames: Vec<Frame>, mask: Mask, stream_index: usize) -> Result<Self> {
        for (t, f) in frames.iter().enumerate() {
            if f.dims() != mask.dims() {
                return Err(BlendError::structural(format!(
                    "stream {stream_index}: frame {t} is {}x{}, mask is {}x{}",
                    f.width(),
                    f.height(),
                    mask.width(),
                    mask.height()
                )));
            }
        }
        Ok(MappedStream {
            frames,
            mask,
            stream_index,
        })
    }

    pub fn frame(&self, index: usize) -> Result<&Frame> {
        self.frames.get(index).ok_or(BlendError::OutOfRange {
            what: "frame",
            index,
            len: self.frames.len(),
        })
    }
}

/// Collects frame `index` from every stream, checking shapes.
pub fn frames_at(streams: &[MappedStream], index: usize) -> Result<Vec<&Frame>> {
    let frames = streams
        .iter()
        .map(|s| s.frame(index))
        .collect::<Result<Vec<_>>>()?;
    check_frames(&frames)?;
    Ok(frames)
}

pub(crate) fn check_frames(frames: &[&Frame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| BlendError::structural("no streams"))?;
    for (i, f) in frames.iter().enumerate() {
        if !f.same_shape(first.width(), first.height(), first.channels()) {
            return Err(BlendError::structural(format!(
                "stream {i} frame shape {}x{}x{} differs from {}x{}x{}",
                f.width(),
                f.height(),
                f.channels(),
                first.width(),
                first.height(),
                first.channels()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_bad_length_and_nan() {
        assert!(Frame::new(2, 2, 3, vec![0.0; 11]).is_err());
        let mut d = vec![0.0; 12];
        d[5] = f64::NAN;
        assert!(Frame::new(2, 2, 3, d).is_err());
    }

    #[test]
    fn u8_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let f = Frame::from_u8(16, 16, 1, &bytes).unwrap();
        assert_eq!(f.get(1, 0, 0), 1.0 / 255.0);
        assert_eq!(f.to_u8(), bytes);
    }

    #[test]
    fn export_clamps_only_at_output() {
        let f = Frame::new(1, 1, 2, vec![-0.25, 1.5]).unwrap();
        assert_eq!(f.data(), &[-0.25, 1.5]);
        assert_eq!(f.to_u8(), vec![0, 255]);
    }

    #[test]
    fn mask_bbox() {
        let m = Mask::from_fn(10, 8, |x, y| (3..6).contains(&x) && (2..7).contains(&y));
        assert_eq!(m.bbox(), Some((3, 2, 6, 7)));
        assert_eq!(Mask::new(4, 4).bbox(), None);
    }

    #[test]
    fn stream_rejects_mismatched_frames() {
        let m = Mask::full(4, 4);
        assert!(MappedStream::new(vec![Frame::zeros(4, 3, 3)], m, 1).is_err());
    }
}
