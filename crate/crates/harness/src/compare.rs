//! Difference statistics between two frame sequences.

use panoblend::{BlendError, Frame};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiff {
    pub mae: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffStats {
    pub per_frame: Vec<FrameDiff>,
    /// Mean absolute difference over all samples of all frames.
    pub mae: f64,
    pub max_abs: f64,
}

pub fn compare_outputs(a: &[Frame], b: &[Frame]) -> Result<DiffStats, BlendError> {
    if a.len() != b.len() {
        return Err(BlendError::Structural(format!("{} frames vs {}", a.len(), b.len())));
    }
    let mut per_frame = Vec::with_capacity(a.len());
    let (mut sum, mut count, mut max_abs) = (0.0, 0usize, 0.0f64);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.dims() != y.dims() || x.channels() != y.channels() {
            return Err(BlendError::Structural(format!("frame {i}: shapes differ")));
        }
        let (mut s, mut m) = (0.0, 0.0f64);
        for (u, v) in x.data().iter().zip(y.data()) {
            let d = (u - v).abs();
            s += d;
            m = m.max(d);
        }
        let n = x.data().len();
        per_frame.push(FrameDiff {
            mae: if n == 0 { 0.0 } else { s / n as f64 },
            max_abs: m,
        });
        sum += s;
        count += n;
        max_abs = max_abs.max(m);
    }
    Ok(DiffStats {
        per_frame,
        mae: if count == 0 { 0.0 } else { sum / count as f64 },
        max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_shifted_sequences() {
        let a = vec![Frame::filled(4, 3, 3, 0.5); 2];
        assert_eq!(compare_outputs(&a, &a).unwrap().mae, 0.0);
        let b = vec![Frame::filled(4, 3, 3, 0.5 + 1.0 / 255.0); 2];
        let d = compare_outputs(&a, &b).unwrap();
        assert!((d.mae - 1.0 / 255.0).abs() < 1e-15);
        assert!(compare_outputs(&a, &b[..1]).is_err());
    }
}
