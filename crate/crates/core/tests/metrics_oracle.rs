use panoblend::metrics::{bleeding_map, otsu_threshold, EnergyMap, DEFAULT_ALPHA, DEFAULT_DELTA};
use panoblend_oracles::{bleeding, otsu_exhaustive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full(w: usize, h: usize, values: Vec<f64>) -> EnergyMap {
    EnergyMap {
        width: w,
        height: h,
        valid: vec![true; values.len()],
        values,
    }
}

fn check(map: &EnergyMap, alpha: f64) {
    let ours = bleeding_map(map, alpha, DEFAULT_DELTA).unwrap();
    let (a_h, e_h, b, p_b) = bleeding(&map.values, alpha, DEFAULT_DELTA);
    assert_eq!(ours.a_h, a_h);
    assert_eq!(ours.e_h, e_h);
    assert_eq!(ours.bleeding, b);
    assert_eq!(ours.degree, p_b);
}

#[test]
fn matches_scalar_reimplementation_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..20 {
        let (w, h) = (rng.gen_range(10..60), rng.gen_range(10..60));
        let bg = rng.gen_range(0.0..5.0);
        let (px, py) = (rng.gen_range(0..w / 2), rng.gen_range(0..h / 2));
        let peak = rng.gen_range(10.0..120.0);
        let values = (0..w * h)
            .map(|p| {
                let (x, y) = (p % w, p / w);
                let d = ((x as f64 - px as f64).powi(2) + (y as f64 - py as f64).powi(2)).sqrt();
                bg * rng.gen_range(0.0..1.0) + peak * (-d / 4.0).exp()
            })
            .collect();
        let alpha = if i % 2 == 0 { DEFAULT_ALPHA } else { 0.5 };
        check(&full(w, h, values), alpha);
    }
}

#[test]
fn patch_on_background() {
    let values = (0..100 * 100)
        .map(|p| {
            let (x, y) = (p % 100, p / 100);
            if (40..50).contains(&x) && (40..50).contains(&y) {
                0.9 * 255.0
            } else {
                0.01 * 255.0
            }
        })
        .collect();
    check(&full(100, 100, values), DEFAULT_ALPHA);
}

#[test]
fn otsu_matches_exhaustive_search() {
    let mut values = vec![0.1; 900];
    values.extend(vec![0.9; 100]);
    assert_eq!(otsu_threshold(&values).unwrap().bin, otsu_exhaustive(&values, 256));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let v: Vec<f64> = (0..500)
            .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..0.4) })
            .collect();
        assert_eq!(otsu_threshold(&v).unwrap().bin, otsu_exhaustive(&v, 256));
    }
}
