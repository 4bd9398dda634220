//! Panoramic video blending under a shared offset-map formulation.
//!
//! Mapped streams are trimmed along fixed seams into a composite `P'`; every
//! blender either mixes the streams directly or produces an offset map `P*`
//! so that the output is `P' + P*`.

pub mod compose;
pub mod direct;
pub mod error;
pub mod gradient;
pub mod membrane;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seams;

pub use compose::{apply_offset, combine_offsets, compose_frames, compose_trimmed, offset_from_composite};
pub use error::{BlendError, Result};
pub use model::{Frame, MappedStream, Mask, OffsetMap};
pub use pipeline::{prepare, Algorithm, BlendParams, Blended, Blender};
pub use seams::{compute_seams, SeamLayout};
