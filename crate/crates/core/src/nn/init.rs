use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard deviation of the spline-coefficient noise at initialization.
pub const COEFF_NOISE_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    KaimingNormal,
    KaimingUniform,
    Orthogonal,
}

impl Initialization {
    pub const ALL: [Initialization; 3] = [
        Initialization::KaimingNormal,
        Initialization::KaimingUniform,
        Initialization::Orthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Initialization::KaimingNormal => "kaiming-normal",
            Initialization::KaimingUniform => "kaiming-uniform",
            Initialization::Orthogonal => "orthogonal",
        }
    }

    /// Draws an `[rows × cols]` weight matrix whose fan-in is `cols`.
    pub fn weights<R: Rng + ?Sized>(self, rows: usize, cols: usize, rng: &mut R) -> Result<Tensor> {
        let shape = [rows, cols];
        match self {
            Initialization::KaimingNormal => kaiming_normal(&shape, cols, rng),
            Initialization::KaimingUniform => kaiming_uniform(&shape, cols, rng),
            Initialization::Orthogonal => orthogonal(&shape, rng),
        }
    }

    /// Zero-mean spline-coefficient noise with standard deviation
    /// [`COEFF_NOISE_STD`]; uniform schemes draw from the uniform law of the
    /// same variance.
    pub fn coeff_noise<R: Rng + ?Sized>(self, shape: &[usize], rng: &mut R) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = match self {
            Initialization::KaimingUniform => {
                let bound = COEFF_NOISE_STD * 3f64.sqrt();
                let u = Uniform::new_inclusive(-bound, bound);
                (0..n).map(|_| u.sample(rng)).collect()
            }
            _ => (0..n)
                .map(|_| COEFF_NOISE_STD * gaussian(rng))
                .collect::<Vec<f64>>(),
        };
        Tensor::new(shape.to_vec(), data)
    }
}

impl fmt::Display for Initialization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Initialization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Initialization::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown initialization `{s}`")))
    }
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn check_fan_in(fan_in: usize) -> Result<()> {
    if fan_in == 0 {
        return Err(Error::Parameter("fan_in must be >= 1".into()));
    }
    Ok(())
}

/// i.i.d. `N(0, 2/fan_in)`.
pub fn kaiming_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    check_fan_in(fan_in)?;
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| std * gaussian(rng))
        .collect::<Vec<f64>>();
    Tensor::new(shape.to_vec(), data)
}

/// i.i.d. uniform on `±sqrt(6/fan_in)`.
pub fn kaiming_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    check_fan_in(fan_in)?;
    let bound = (6.0 / fan_in as f64).sqrt();
    let u = Uniform::new_inclusive(-bound, bound);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| u.sample(rng)).collect())
}

/// Semi-orthogonal matrix from the QR factorisation of a Gaussian matrix,
/// with columns of `Q` flipped so that `diag(R) > 0`. Rows are orthonormal
/// when `rows <= cols`, columns otherwise.
pub fn orthogonal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let &[rows, cols] = shape else {
        return Err(Error::Parameter(format!(
            "orthogonal initialization needs a 2-D shape, got {shape:?}"
        )));
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("orthogonal shape must be non-empty".into()));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let gauss: Vec<f64> = (0..tall * short)
        .map(|_| gaussian(rng))
        .collect();
    let a = DMatrix::from_row_slice(tall, short, &gauss);
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let data: Vec<f64> = if rows >= cols {
        (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| q[(i, j)])
            .collect()
    } else {
        (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| q[(j, i)])
            .collect()
    };
    Tensor::new(vec![rows, cols], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(t: &Tensor) -> (f64, f64) {
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn kaiming_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = kaiming_normal(&[100_000], 2, &mut rng).unwrap();
        let (mean, std) = moments(&t);
        assert!((std - 1.0).abs() < 0.05, "std {std}");
        assert!(mean.abs() < 3.0 / (t.len() as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn kaiming_normal_is_reproducible() {
        let a = kaiming_normal(&[7, 5], 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = kaiming_normal(&[7, 5], 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(kaiming_normal(&[3], 0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn kaiming_uniform_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = kaiming_uniform(&[50_000], 6, &mut rng).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
        let (_, std) = moments(&t);
        // uniform on ±1 has std 1/sqrt(3)
        assert!((std - 1.0 / 3f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (r, c) in [(3, 7), (5, 5), (8, 3)] {
            let q = orthogonal(&[r, c], &mut rng).unwrap();
            let m = DMatrix::from_row_slice(r, c, q.data());
            let gram = if r <= c { &m * m.transpose() } else { m.transpose() * &m };
            let n = r.min(c);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn orthogonal_square_has_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal(&[5, 5], &mut rng).unwrap();
        let det = DMatrix::from_row_slice(5, 5, q.data()).determinant();
        assert!((det.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_rejects_non_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(orthogonal(&[4], &mut rng), Err(Error::Parameter(_))));
        assert!(orthogonal(&[2, 2, 2], &mut rng).is_err());
    }
}
