//! Direct and offset-map composition of mapped streams.
//!
//! `P' = Σ M'_i P_i` (trimmed composite), `P = P' + P*`, and
//! `P* = Σ M'_i P*_i`.

use crate::error::{BlendError, Result};
use crate::model::{check_frames, frames_at, Frame, MappedStream, OffsetMap};
use crate::seams::SeamLayout;
use rayon::prelude::*;

pub(crate) fn check_layout(frames: &[&Frame], layout: &SeamLayout) -> Result<()> {
    check_frames(frames)?;
    if frames.len() != layout.stream_count() {
        return Err(BlendError::structural(format!(
            "{} streams for a layout of {} streams",
            frames.len(),
            layout.stream_count()
        )));
    }
    if frames[0].dims() != layout.dims() {
        return Err(BlendError::structural(format!(
            "frames are {}x{}, layout is {}x{}",
            frames[0].width(),
            frames[0].height(),
            layout.width(),
            layout.height()
        )));
    }
    Ok(())
}

/// Trimmed composite of one set of simultaneous frames.
pub fn compose_frames(frames: &[&Frame], layout: &SeamLayout) -> Result<Frame> {
    check_layout(frames, layout)?;
    let (w, h) = layout.dims();
    let c = frames[0].channels();
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            if let Some(l) = layout.label(x, y) {
                row[x * c..(x + 1) * c].copy_from_slice(frames[l].pixel(x, y));
            }
        }
    });
    Ok(Frame::from_parts(w, h, c, out))
}

/// `P - P'` for a blended frame, without materialising the composite.
pub fn offset_from_composite(blended: &Frame, frames: &[&Frame], layout: &SeamLayout) -> Result<OffsetMap> {
    check_layout(frames, layout)?;
    if !blended.same_shape(frames[0].width(), frames[0].height(), frames[0].channels()) {
        return Err(BlendError::structural("blended frame and streams differ in shape"));
    }
    let (w, h) = layout.dims();
    let c = blended.channels();
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        let src = &blended.data()[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            let px = &src[x * c..(x + 1) * c];
            let dst = &mut row[x * c..(x + 1) * c];
            match layout.label(x, y) {
                Some(l) => {
                    for ((d, p), q) in dst.iter_mut().zip(px).zip(frames[l].pixel(x, y)) {
                        *d = p - q;
                    }
                }
                None => dst.copy_from_slice(px),
            }
        }
    });
    OffsetMap::new(w, h, c, out)
}

/// `P'` for frame `frame_index`: each covered pixel copied from the stream
/// owning it in the trimmed layout; uncovered pixels are 0.
pub fn compose_trimmed(
    streams: &[MappedStream],
    layout: &SeamLayout,
    frame_index: usize,
) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    compose_frames(&frames, layout)
}

/// `P' + P*`, unclamped.
pub fn apply_offset(composite: &Frame, offset: &OffsetMap) -> Result<Frame> {
    if composite.width() != offset.width()
        || composite.height() != offset.height()
        || composite.channels() != offset.channels()
    {
        return Err(BlendError::structural(format!(
            "frame {}x{}x{} vs offset {}x{}x{}",
            composite.width(),
            composite.height(),
            composite.channels(),
            offset.width(),
            offset.height(),
            offset.channels()
        )));
    }
    let data = composite
        .data()
        .iter()
        .zip(offset.data())
        .map(|(a, b)| a + b)
        .collect();
    Ok(Frame::from_parts(
        composite.width(),
        composite.height(),
        composite.channels(),
        data,
    ))
}

/// Per-pixel selection of the offset of the stream owning that pixel.
pub fn combine_offsets(offsets: &[OffsetMap], layout: &SeamLayout) -> Result<OffsetMap> {
    if offsets.len() != layout.stream_count() {
        return Err(BlendError::structural(format!(
            "{} offsets for a layout of {} streams",
            offsets.len(),
            layout.stream_count()
        )));
    }
    let (w, h) = layout.dims();
    let c = offsets[0].channels();
    for (i, o) in offsets.iter().enumerate() {
        if o.width() != w || o.height() != h || o.channels() != c {
            return Err(BlendError::structural(format!("offset {i} has the wrong shape")));
        }
    }
    let mut out = OffsetMap::zeros(w, h, c);
    out.data_mut()
        .par_chunks_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                if let Some(l) = layout.label(x, y) {
                    row[x * c..(x + 1) * c].copy_from_slice(offsets[l].pixel(x, y));
                }
            }
        });
    Ok(out)
}
