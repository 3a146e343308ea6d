use crate::error::{Error, Result};
use crate::store::Cell;

/// Numerically stable softmax. An empty input gives an empty output.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Categorical cross-entropy summed over facets with a known target and a
/// set mask bit: `Σ -ln z_i[target_i]` in nats.
pub fn masked_cross_entropy(z: &[Vec<f64>], targets: &[Cell], mask: &[bool]) -> Result<f64> {
    if z.len() != targets.len() || mask.len() != targets.len() {
        return Err(Error::Shape {
            context: "masked_cross_entropy",
            expected: format!("{} facets", z.len()),
            actual: format!("{} targets, {} mask bits", targets.len(), mask.len()),
        });
    }
    let mut loss = 0.0;
    for ((dist, target), &on) in z.iter().zip(targets).zip(mask) {
        let Some(t) = *target else { continue };
        if t as usize >= dist.len() {
            return Err(Error::TargetOutOfRange {
                index: t,
                size: dist.len(),
            });
        }
        if on {
            loss -= dist[t as usize].ln();
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_logits_are_uniform() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
        assert!(softmax(&[]).is_empty());
    }

    #[test]
    fn translation_invariant() {
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let perfect = vec![vec![0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(masked_cross_entropy(&perfect, &[Some(1), Some(0)], &[true, true]).unwrap(), 0.0);

        let uniform = vec![vec![0.25; 4]];
        let l = masked_cross_entropy(&uniform, &[Some(2)], &[true]).unwrap();
        assert_abs_diff_eq!(l, 1.386_294_361_119_890_6, epsilon = 1e-12);

        let z = vec![vec![0.5, 0.5], vec![0.25, 0.75]];
        let l = masked_cross_entropy(&z, &[Some(0), Some(0)], &[true, true]).unwrap();
        // ln 2 + ln 4
        assert_abs_diff_eq!(l, 2.079_441_541_679_835_7, epsilon = 1e-12);

        assert_eq!(masked_cross_entropy(&z, &[None, None], &[true, true]).unwrap(), 0.0);
        assert_eq!(masked_cross_entropy(&z, &[Some(0), Some(0)], &[false, false]).unwrap(), 0.0);
        assert!(matches!(
            masked_cross_entropy(&z, &[Some(2), None], &[true, true]),
            Err(Error::TargetOutOfRange { .. })
        ));
    }
}
