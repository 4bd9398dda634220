use panoblend::gradient::{
    build_gradient_map_frames, divergence, msb_energy, msb_reconstruct, mpb_solve,
    seam_gradients_frames, GradientMap, MpbSolver, MsbPlan, SplineBasis, SplineGrid,
    DEFAULT_SPACING,
};
use panoblend::seams::compute_seams;
use panoblend::{compose_frames, Frame, Mask, OffsetMap, SeamLayout};
use panoblend_oracles::{neumann_laplacian, screened_poisson};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Frame {
    Frame::from_fn(w, h, c, |_, _, _| rng.gen_range(0.0..1.0))
}

fn plane(data: &[f64], c: usize, ch: usize) -> Vec<f64> {
    data.iter().skip(ch).step_by(c).copied().collect()
}

#[test]
fn cosine_solve_matches_dense_screened_poisson() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (w, h) = (16, 16);
    for trial in 0..4 {
        let img = random_frame(&mut rng, w, h, 2);
        let gx = OffsetMap::new(w, h, 2, (0..w * h * 2).map(|_| rng.gen_range(-0.2..0.2)).collect()).unwrap();
        let mut gy = OffsetMap::new(w, h, 2, (0..w * h * 2).map(|_| rng.gen_range(-0.2..0.2)).collect()).unwrap();
        // forward differences leaving the image do not exist
        let mut gx = gx;
        for y in 0..h {
            for c in 0..2 {
                gx.set(w - 1, y, c, 0.0);
            }
        }
        for x in 0..w {
            for c in 0..2 {
                gy.set(x, h - 1, c, 0.0);
            }
        }
        let laplacian = divergence(&gx, &gy);
        let gmap = GradientMap { gx, gy, laplacian };
        for eps in [1e-3, 1e-2, 1.0] {
            let p = mpb_solve(&img, &gmap, eps).unwrap();
            for ch in 0..2 {
                let i = plane(img.data(), 2, ch);
                let div = plane(gmap.laplacian.data(), 2, ch);
                let dense = screened_poisson(w, h, eps, &i, &div);
                let ours = plane(p.data(), 2, ch);
                let mae = ours.iter().zip(&dense).map(|(a, b)| (a - b).abs()).sum::<f64>() / (w * h) as f64;
                assert!(mae < 1e-6, "trial {trial} eps {eps}: MAE {mae}");
                // Euler-Lagrange residual
                let lap = neumann_laplacian(w, h, &ours);
                let worst = (0..w * h)
                    .map(|k| (eps * ours[k] - lap[k] - (eps * i[k] - div[k])).abs())
                    .fold(0.0, f64::max);
                assert!(worst < 1e-5, "residual {worst}");
            }
        }
        let p = mpb_solve(&img, &gmap, 1e6).unwrap();
        let mae = p.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.data().len() as f64;
        assert!(mae < 1e-3);
    }
}

fn pair_scene(w: usize, h: usize, shift: f64, seed: u64) -> (SeamLayout, Frame, Frame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = compute_seams(&[
        Mask::from_fn(w, h, |x, _| x < w / 2 + 6),
        Mask::from_fn(w, h, |x, _| x >= w / 2 - 6),
    ])
    .unwrap();
    let a = Frame::from_fn(w, h, 1, |x, y, _| 0.3 + 0.2 * ((x as f64 * 0.2).sin() * (y as f64 * 0.15).cos()) + rng.gen_range(0.0..0.02));
    let b = Frame::from_fn(w, h, 1, |x, y, _| a.get(x, y, 0) + shift);
    (layout, a, b)
}

#[test]
fn screened_poisson_moves_the_anchor_too() {
    let (layout, a, b) = pair_scene(48, 32, 0.3, 5);
    let solver = MpbSolver::new(48, 32).unwrap();
    let out = solver.blend(&[&a, &b], &layout, 0.01).unwrap();
    let composite = compose_frames(&[&a, &b], &layout).unwrap();
    let mut worst: f64 = 0.0;
    for y in 0..32 {
        for x in 0..48 {
            if layout.label(x, y) == Some(0) {
                worst = worst.max((out.get(x, y, 0) - composite.get(x, y, 0)).abs());
            }
        }
    }
    assert!(worst > 0.0);
}

#[test]
fn gradient_map_matches_direct_compositing() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, h) = (30, 20);
    let masks = vec![
        Mask::from_fn(w, h, |x, _| x < 18),
        Mask::from_fn(w, h, |x, y| x >= 12 && y < 14),
        Mask::from_fn(w, h, |x, y| x >= 12 && y >= 9),
    ];
    let layout = compute_seams(&masks).unwrap();
    let frames: Vec<Frame> = (0..3).map(|_| random_frame(&mut rng, w, h, 1)).collect();
    let refs: Vec<&Frame> = frames.iter().collect();
    let g = build_gradient_map_frames(&refs, &layout).unwrap();
    for y in 0..h {
        for x in 0..w {
            let owner = |x: usize, y: usize| layout.trimmed_masks().iter().position(|m| m.get(x, y));
            let diff = |qx: usize, qy: usize| {
                let i = owner(x, y)?;
                let s = if masks[i].get(qx, qy) {
                    i
                } else {
                    let j = owner(qx, qy)?;
                    if !masks[j].get(x, y) {
                        return None;
                    }
                    j
                };
                Some(frames[s].get(qx, qy, 0) - frames[s].get(x, y, 0))
            };
            let ex = if x + 1 < w { diff(x + 1, y).unwrap_or(0.0) } else { 0.0 };
            let ey = if y + 1 < h { diff(x, y + 1).unwrap_or(0.0) } else { 0.0 };
            assert_eq!(g.gx.get(x, y, 0), ex);
            assert_eq!(g.gy.get(x, y, 0), ey);
        }
    }
}

#[test]
fn seam_gradients_match_the_four_term_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (w, h) = (40, 30);
    let masks = vec![
        Mask::from_fn(w, h, |x, _| x < 24),
        Mask::from_fn(w, h, |x, y| x >= 16 && y < 20),
        Mask::from_fn(w, h, |x, y| x >= 16 && y >= 12),
    ];
    let layout = compute_seams(&masks).unwrap();
    let frames: Vec<Frame> = (0..3).map(|_| random_frame(&mut rng, w, h, 2)).collect();
    let refs: Vec<&Frame> = frames.iter().collect();
    let g = seam_gradients_frames(&refs, &layout).unwrap();
    let label = |x: usize, y: usize| layout.trimmed_masks().iter().position(|m| m.get(x, y)).unwrap();
    for y in 0..h {
        for x in 0..w {
            for c in 0..2 {
                let p = |s: usize, x: usize, y: usize| frames[s].get(x, y, c);
                let (la, lb) = (label(x, y), if x + 1 < w { label(x + 1, y) } else { label(x, y) });
                let ex = if la != lb {
                    (p(la, x, y) - p(lb, x, y) + p(la, x + 1, y) - p(lb, x + 1, y)) / 2.0
                } else {
                    0.0
                };
                assert_eq!(g.gx.get(x, y, c), ex);
                let lb = if y + 1 < h { label(x, y + 1) } else { la };
                let ey = if la != lb {
                    (p(la, x, y) - p(lb, x, y) + p(la, x, y + 1) - p(lb, x, y + 1)) / 2.0
                } else {
                    0.0
                };
                assert_eq!(g.gy.get(x, y, c), ey);
            }
        }
    }
}

#[test]
fn spline_evaluation_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (w, h, r) = (50, 37, 8);
    let layout = compute_seams(&[
        Mask::from_fn(w, h, |x, _| x < 30),
        Mask::from_fn(w, h, |x, _| x >= 20),
    ])
    .unwrap();
    let mut grid = SplineGrid::zeros(w, h, 2, 1, r, SplineBasis::Bilinear).unwrap();
    for v in grid.coeffs_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let off = msb_reconstruct(&grid, &layout).unwrap();
    let (kx, ky) = grid.lattice();
    let tent = |t: f64| (1.0 - t.abs() / r as f64).max(0.0);
    for y in 0..h {
        for x in 0..w {
            let l = layout.label(x, y).unwrap();
            let mut s = 0.0;
            for m in 0..ky {
                for k in 0..kx {
                    let (px, py) = grid.position(k, m);
                    s += grid.get(l, k, m)[0] * tent(x as f64 - px as f64) * tent(y as f64 - py as f64);
                }
            }
            assert!((off.get(x, y, 0) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_shift_gives_matching_offset_jump() {
    assert_eq!(DEFAULT_SPACING, 64);
    for (seed, c) in [(1u64, 0.1), (2, 0.3)] {
        let (layout, a, b) = pair_scene(64, 64, c, seed);
        let plan = MsbPlan::new(&layout, DEFAULT_SPACING, SplineBasis::Bilinear).unwrap();
        let grads = seam_gradients_frames(&[&a, &b], &layout).unwrap();
        let grid = plan.solve(&grads).unwrap();
        assert!(plan.normal_residual(&grid, &grads).unwrap() < 1e-8);
        let off = msb_reconstruct(&grid, &layout).unwrap();
        for y in 0..64 {
            for x in 0..63 {
                if layout.label(x, y) != layout.label(x + 1, y) {
                    let jump = off.get(x, y, 0) - off.get(x + 1, y, 0);
                    assert!((jump - c).abs() < 1e-3, "c={c} jump={jump}");
                }
            }
        }
    }
}

fn three_stream_scene(seed: u64, order: [usize; 3]) -> (SeamLayout, Vec<Frame>) {
    let (w, h) = (72, 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = [
        Mask::from_fn(w, h, |x, _| x < 30),
        Mask::from_fn(w, h, |x, _| x >= 22 && x < 54),
        Mask::from_fn(w, h, |x, _| x >= 46),
    ];
    let frames: Vec<Frame> = (0..3)
        .map(|i| {
            let base = 0.2 + 0.15 * i as f64;
            Frame::from_fn(w, h, 2, |x, y, c| base + 0.1 * ((x + 2 * y + c) as f64 * 0.1).sin() + rng.gen_range(0.0..0.05))
        })
        .collect();
    let layout = compute_seams(&order.map(|i| masks[i].clone())).unwrap();
    (layout, order.iter().map(|&i| frames[i].clone()).collect())
}

#[test]
fn solution_is_a_minimum_of_the_seam_energy() {
    let (layout, frames) = three_stream_scene(3, [0, 1, 2]);
    let refs: Vec<&Frame> = frames.iter().collect();
    let plan = MsbPlan::new(&layout, 16, SplineBasis::Bilinear).unwrap();
    let grads = seam_gradients_frames(&refs, &layout).unwrap();
    let grid = plan.solve(&grads).unwrap();
    assert!(plan.normal_residual(&grid, &grads).unwrap() < 1e-8);
    let energy = |g: &SplineGrid| msb_energy(&msb_reconstruct(g, &layout).unwrap(), &grads, &layout);
    let best = energy(&grid);
    let mut zero = grid.clone();
    zero.coeffs_mut().iter_mut().for_each(|v| *v = 0.0);
    assert!(best <= energy(&zero));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let mut g = grid.clone();
        for v in g.coeffs_mut() {
            *v += rng.gen_range(-0.01..0.01);
        }
        assert!(best <= energy(&g) + 1e-9);
    }
    // offsets are smooth inside each region
    let off = msb_reconstruct(&grid, &layout).unwrap();
    let (w, h) = layout.dims();
    for s in 0..3 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (kx, ky) = grid.lattice();
        for m in 0..ky {
            for k in 0..kx {
                for &v in grid.get(s, k, m) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let bound = (hi - lo) * SplineBasis::Bilinear.max_slope(16) + 1e-12;
        for y in 0..h {
            for x in 0..w - 1 {
                if layout.label(x, y) == Some(s) && layout.label(x + 1, y) == Some(s) {
                    for c in 0..2 {
                        assert!((off.get(x + 1, y, c) - off.get(x, y, c)).abs() <= bound);
                    }
                }
            }
        }
    }
}

#[test]
fn stream_order_does_not_matter() {
    let (layout, frames) = three_stream_scene(5, [0, 1, 2]);
    let refs: Vec<&Frame> = frames.iter().collect();
    let base = MsbPlan::new(&layout, 16, SplineBasis::Bilinear).unwrap().blend(&refs).unwrap().0;
    for order in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let (layout, frames) = three_stream_scene(5, order);
        let refs: Vec<&Frame> = frames.iter().collect();
        let out = MsbPlan::new(&layout, 16, SplineBasis::Bilinear).unwrap().blend(&refs).unwrap().0;
        for (a, b) in out.data().iter().zip(base.data()) {
            assert!((a - b).abs() < 1e-8, "{order:?}");
        }
    }
}
