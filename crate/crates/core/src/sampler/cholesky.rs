//! Pivoted square-root factorization of a covariance matrix.
//!
//! Used as the independent oracle for the circulant and recursive samplers,
//! and for the small-grid locally stationary path.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Lower factor `L` (row-major `m × rank`) with `L Lᵀ = C` up to truncation.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    dim: usize,
    rank: usize,
    factor: Vec<f64>,
}

impl PivotedCholesky {
    /// Factorizes the row-major symmetric matrix `cov` of size `dim × dim`.
    pub fn new(cov: &[f64], dim: usize) -> Result<Self> {
        if cov.len() != dim * dim {
            return Err(Error::Factorization(format!(
                "expected {} entries, got {}",
                dim * dim,
                cov.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (cov[i * dim + j], cov[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Factorization(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
        let tol = 1e-10 * trace.max(f64::MIN_POSITIVE);
        let mut residual_diag: Vec<f64> = (0..dim).map(|i| cov[i * dim + i]).collect();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut used = vec![false; dim];
        for _ in 0..dim {
            let (pivot, &d) = residual_diag
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("unused index remains");
            if d < -tol {
                return Err(Error::Factorization(format!(
                    "matrix is indefinite (residual pivot {d:e})"
                )));
            }
            if d <= tol {
                break;
            }
            used[pivot] = true;
            let root = d.sqrt();
            let mut col = vec![0.0; dim];
            for i in 0..dim {
                if used[i] && i != pivot {
                    continue;
                }
                let mut v = cov[i * dim + pivot];
                for prev in &columns {
                    v -= prev[i] * prev[pivot];
                }
                col[i] = v / root;
            }
            for i in 0..dim {
                if !used[i] {
                    residual_diag[i] -= col[i] * col[i];
                }
            }
            residual_diag[pivot] = 0.0;
            columns.push(col);
        }
        // any remaining strongly negative residual means indefiniteness
        if let Some(d) = residual_diag
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(d, _)| *d)
            .find(|d| *d < -1e3 * tol)
        {
            return Err(Error::Factorization(format!(
                "matrix is indefinite (residual diagonal {d:e})"
            )));
        }
        let rank = columns.len();
        let mut factor = vec![0.0; dim * rank];
        for (k, col) in columns.iter().enumerate() {
            for i in 0..dim {
                factor[i * rank + k] = col[i];
            }
        }
        Ok(Self { dim, rank, factor })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend((0..self.rank).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (i, o) in out[..self.dim].iter_mut().enumerate() {
            let row = &self.factor[i * self.rank..(i + 1) * self.rank];
            *o = row.iter().zip(z.iter()).map(|(l, z)| l * z).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(f: &PivotedCholesky) -> Vec<f64> {
        let (m, r) = (f.dim, f.rank);
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                c[i * m + j] = (0..r).map(|k| f.factor[i * r + k] * f.factor[j * r + k]).sum();
            }
        }
        c
    }

    #[test]
    fn identity_has_full_rank() {
        let f = PivotedCholesky::new(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(f.rank(), 2);
    }

    #[test]
    fn all_ones_is_rank_one() {
        let f = PivotedCholesky::new(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(f.rank(), 1);
        let mut rng = crate::rng::RngStream::new(1, 1).rng();
        let mut out = [0.0; 2];
        let mut z = Vec::new();
        for _ in 0..10 {
            f.fill(&mut rng, &mut out, &mut z);
            assert_eq!(out[0], out[1]);
        }
    }

    #[test]
    fn reconstructs_exponential_covariance() {
        let m = 12;
        let cov: Vec<f64> = (0..m * m)
            .map(|k| (-((k / m) as f64 - (k % m) as f64).abs().powf(1.5) * 0.2).exp())
            .collect();
        let f = PivotedCholesky::new(&cov, m).unwrap();
        for (a, b) in reconstruct(&f).iter().zip(&cov) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(PivotedCholesky::new(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
        assert!(PivotedCholesky::new(&[1.0, 0.5, 0.2, 1.0], 2).is_err());
    }
}
