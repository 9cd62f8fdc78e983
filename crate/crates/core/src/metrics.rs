//! Accuracy, generalization gap, TwoNN intrinsic dimension and the
//! efficiency score EF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{squared_distance, Tensor};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label. Empty input gives 0.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, _) = logits.dims2()?;
    if n != labels.len() {
        return Err(Error::Dimension(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let hits = (0..n).filter(|&i| argmax(logits.row(i)) == labels[i]).count();
    Ok(hits as f64 / n as f64)
}

/// `train - test`; negative when the model does better on held-out data.
pub fn generalization_gap(train_acc: f64, test_acc: f64) -> f64 {
    train_acc - test_acc
}

/// TwoNN estimate `N / Σ ln(r₂/r₁)` over first and second nearest-neighbour
/// distances. Points that coincide with another are nudged by a `1e-12`
/// (relative) jitter first.
pub fn twonn_intrinsic_dimension(x: &Tensor) -> Result<f64> {
    let (n, d) = x.dims2()?;
    if n < 10 {
        return Err(Error::Estimation(format!("TwoNN needs at least 10 points, got {n}")));
    }
    if d == 0 {
        return Err(Error::Estimation("points have no coordinates".into()));
    }
    let mut pts: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    if pts.iter().all(|p| p == &pts[0]) {
        return Err(Error::Estimation("all points are identical".into()));
    }

    let scale = x.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x7770);
    let mut nn = nearest_two(&pts);
    for _ in 0..8 {
        let dup: Vec<usize> = (0..n).filter(|&i| nn[i].0 == 0.0).collect();
        if dup.is_empty() {
            break;
        }
        for i in dup {
            for v in pts[i].iter_mut() {
                *v += 1e-12 * scale * rng.gen_range(-1.0..1.0);
            }
        }
        nn = nearest_two(&pts);
    }

    let mut sum = 0.0;
    for &(r1, r2) in &nn {
        if r1 == 0.0 {
            return Err(Error::Estimation("duplicate points survive jitter".into()));
        }
        sum += 0.5 * (r2 / r1).ln();
    }
    if sum <= 0.0 {
        return Err(Error::Estimation("degenerate neighbour distances".into()));
    }
    Ok(n as f64 / sum)
}

/// Squared distances to the first and second nearest neighbours.
fn nearest_two(pts: &[Vec<f64>]) -> Vec<(f64, f64)> {
    fn offer(slot: &mut (f64, f64), d: f64) {
        if d < slot.0 {
            slot.1 = slot.0;
            slot.0 = d;
        } else if d < slot.1 {
            slot.1 = d;
        }
    }
    let n = pts.len();
    let mut out = vec![(f64::INFINITY, f64::INFINITY); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(&pts[i], &pts[j]);
            offer(&mut out[i], d);
            offer(&mut out[j], d);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyInputs {
    /// Best test accuracy `A*` in `[0, 1]`.
    pub best_accuracy: f64,
    /// Epoch index at which `A*` was first reached.
    pub epochs_to_best: usize,
    pub params: usize,
    pub intrinsic_dim: f64,
}

/// `EF = A*/(E*+1) · 1/(ln(P - ID + 1) + 1)`.
pub fn efficiency(e: &EfficiencyInputs) -> Result<f64> {
    let p = e.params as f64;
    if !e.intrinsic_dim.is_finite() || p < e.intrinsic_dim {
        return Err(Error::Domain(format!(
            "efficiency needs P >= ID, got P = {} and ID = {}",
            e.params, e.intrinsic_dim
        )));
    }
    if !(0.0..=1.0).contains(&e.best_accuracy) {
        return Err(Error::Domain(format!("accuracy {} outside [0, 1]", e.best_accuracy)));
    }
    let speed = e.best_accuracy / (e.epochs_to_best as f64 + 1.0);
    let size = 1.0 / ((p - e.intrinsic_dim + 1.0).ln() + 1.0);
    Ok(speed * size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_hot(labels: &[usize], c: usize) -> Tensor {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..c).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn accuracy_extremes() {
        let labels = vec![0, 3, 1, 2, 2];
        assert_eq!(accuracy(&one_hot(&labels, 4), &labels).unwrap(), 1.0);
        let shifted: Vec<usize> = labels.iter().map(|l| (l + 1) % 4).collect();
        assert_eq!(accuracy(&one_hot(&shifted, 4), &labels).unwrap(), 0.0);
        assert!(accuracy(&one_hot(&labels, 4), &labels[..2]).is_err());
    }

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let t = Tensor::zeros(&[2, 5]);
        assert_eq!(accuracy(&t, &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn random_logits_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let data = (0..n * 10).map(|_| rng.gen::<f64>()).collect();
        let logits = Tensor::new(vec![n, 10], data).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..10)).collect();
        let acc = accuracy(&logits, &labels).unwrap();
        assert!((acc - 0.1).abs() < 0.01, "{acc}");
    }

    #[test]
    fn gap_sign_convention() {
        assert!((generalization_gap(0.99, 0.97) - 0.02).abs() < 1e-12);
        assert_eq!(generalization_gap(0.5, 0.5), 0.0);
        assert!((generalization_gap(0.90, 0.95) + 0.05).abs() < 1e-12);
    }

    fn uniform(n: usize, d: usize, embed: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; n * embed];
        for i in 0..n {
            for j in 0..d {
                data[i * embed + j] = rng.gen::<f64>();
            }
        }
        Tensor::new(vec![n, embed], data).unwrap()
    }

    #[test]
    fn twonn_square_in_ten_dims() {
        let id = twonn_intrinsic_dimension(&uniform(2000, 2, 10, 1)).unwrap();
        assert!((1.6..=2.4).contains(&id), "{id}");
    }

    #[test]
    fn twonn_five_cube() {
        let id = twonn_intrinsic_dimension(&uniform(2000, 5, 5, 2)).unwrap();
        assert!((4.0..=6.0).contains(&id), "{id}");
    }

    #[test]
    fn twonn_line() {
        let id = twonn_intrinsic_dimension(&uniform(2000, 1, 3, 3)).unwrap();
        assert!((0.8..=1.2).contains(&id), "{id}");
    }

    #[test]
    fn twonn_ignores_padding_coordinates() {
        let a = twonn_intrinsic_dimension(&uniform(2000, 3, 3, 4)).unwrap();
        let b = twonn_intrinsic_dimension(&uniform(2000, 3, 8, 4)).unwrap();
        assert!((a - b).abs() / a < 0.05);
    }

    #[test]
    fn twonn_errors_and_duplicates() {
        assert!(matches!(
            twonn_intrinsic_dimension(&Tensor::full(&[20, 3], 1.5)),
            Err(Error::Estimation(_))
        ));
        assert!(twonn_intrinsic_dimension(&Tensor::zeros(&[5, 2])).is_err());
        // duplicated rows still give a finite estimate
        let base = uniform(200, 2, 2, 5);
        let mut rows: Vec<Vec<f64>> = (0..200).map(|i| base.row(i).to_vec()).collect();
        rows.extend((0..20).map(|i| base.row(i).to_vec()));
        let id = twonn_intrinsic_dimension(&Tensor::from_rows(&rows).unwrap()).unwrap();
        assert!(id.is_finite() && id > 0.0);
    }

    fn ef(a: f64, e: usize, p: usize, id: f64) -> f64 {
        efficiency(&EfficiencyInputs {
            best_accuracy: a,
            epochs_to_best: e,
            params: p,
            intrinsic_dim: id,
        })
        .unwrap()
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(ef(1.0, 0, 10, 10.0), 1.0);
        assert_eq!(ef(0.0, 4, 1000, 3.5), 0.0);
        let id = 10.0 - (std::f64::consts::E - 1.0);
        assert!((ef(0.95, 1, 10, id) - 0.2375).abs() < 1e-12);
        let below = EfficiencyInputs {
            best_accuracy: 0.9,
            epochs_to_best: 0,
            params: 5,
            intrinsic_dim: 6.0,
        };
        assert!(matches!(efficiency(&below), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn efficiency_is_monotone(a in 0.01f64..0.99, e in 0usize..50, p in 10usize..100_000, id in 0.5f64..10.0) {
            let base = ef(a, e, p, id);
            prop_assert!(base > 0.0 && base <= 1.0);
            prop_assert!(ef(a + 0.01, e, p, id) > base);
            prop_assert!(ef(a, e + 1, p, id) < base);
            prop_assert!(ef(a, e, p + 1, id) < base);
        }

        #[test]
        fn efficiency_equals_accuracy_at_optimum(a in 0.0f64..=1.0, p in 1usize..1000) {
            prop_assert!((ef(a, 0, p, p as f64) - a).abs() < 1e-15);
        }

        #[test]
        fn accuracy_is_permutation_invariant(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let a = accuracy(&Tensor::from_rows(&rows).unwrap(), &labels).unwrap();
            let prow: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let plab: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let b = accuracy(&Tensor::from_rows(&prow).unwrap(), &plab).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
