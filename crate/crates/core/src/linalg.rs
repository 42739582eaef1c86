//! Small dense helpers: symmetric eigenvalues by cyclic Jacobi rotations and
//! an LU solve with partial pivoting for the `N × N` correction systems.

use crate::error::{Error, Result};

/// Eigenvalues of the symmetric part of a square matrix, sorted ascending.
pub fn symmetric_eigenvalues(mat: &[Vec<f64>]) -> Vec<f64> {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (mat[i][j] + mat[j][i])).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// LU factorization with partial pivoting of a small dense matrix.
#[derive(Clone, Debug)]
pub struct SmallLu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl SmallLu {
    pub fn new(mat: &[Vec<f64>]) -> Result<Self> {
        let n = mat.len();
        let mut lu: Vec<Vec<f64>> = mat.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (piv, val) = (k..n)
                .map(|i| (i, lu[i][k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if val <= 1e-13 * scale || scale == 0.0 {
                return Err(Error::Hypothesis(format!(
                    "numerically singular {n}x{n} matrix (pivot {val:e})"
                )));
            }
            lu.swap(k, piv);
            perm.swap(k, piv);
            for i in k + 1..n {
                let f = lu[i][k] / lu[k][k];
                lu[i][k] = f;
                for j in k + 1..n {
                    lu[i][j] -= f * lu[k][j];
                }
            }
        }
        Ok(SmallLu { lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobi_matches_nalgebra_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..7);
            let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let spd: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                        .collect()
                })
                .collect();
            let ours = symmetric_eigenvalues(&spd);
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| spd[i][j]);
            let mut theirs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
            }
        }
    }

    #[test]
    fn small_lu_solves() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let lu = SmallLu::new(&a).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for (i, row) in a.iter().enumerate() {
            let r: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
            assert!((r - [3.0, 2.0, 4.0][i]).abs() < 1e-14);
        }
        assert!(SmallLu::new(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }
}
