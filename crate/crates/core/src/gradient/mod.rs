//! Gradient-domain blenders: multi-spline offsets fitted to seam jumps, and
//! a screened Poisson reconstruction of the whole panorama.

pub mod dct;
mod linalg;
mod poisson;
mod spline;

pub use poisson::{
    build_gradient_map, build_gradient_map_frames, divergence, mpb_blend, mpb_solve, GradientMap,
    MpbSolver, DEFAULT_EPSILON,
};
pub use spline::{
    msb_blend, msb_energy, msb_reconstruct, msb_solve, seam_gradients, seam_gradients_frames,
    MsbPlan, SeamGradients, SplineBasis, SplineGrid, DEFAULT_SPACING, DIRECT_SOLVE_LIMIT,
};
