//! Compressed sparse row matrices and the linear solvers: sparse LU for
//! moderate sizes, ILU(0)-preconditioned restarted GMRES beyond that.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row entry lists; duplicate columns are summed
    /// and explicit zeros dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < r.len() {
                let c = r[k].0;
                let mut v = 0.0;
                while k < r.len() && r[k].0 == c {
                    v += r[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .into_par_iter()
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `‖A − Aᵀ‖_max / ‖A‖_max`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.nrows)
            .into_par_iter()
            .map(|i| self.row(i).map(|(j, v)| (v - self.get(j, i)).abs()).fold(0.0f64, f64::max))
            .reduce(|| 0.0, f64::max);
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.nrows]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest unknown count solved by sparse LU.
    pub direct_threshold: usize,
    pub restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 20_000,
            direct_threshold: 200_000,
            restart: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveMethod {
    SparseLu,
    IluGmres,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub unknowns: usize,
    pub nnz: usize,
    pub iterations: usize,
    pub refinements: usize,
    pub relative_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

pub fn solve_linear(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.nrows;
    if b.len() != n {
        return Err(Error::Solver {
            reason: format!("right side has length {} for {n} unknowns", b.len()),
            history: vec![],
        });
    }
    if norm2(b) == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                method: SolveMethod::SparseLu,
                unknowns: n,
                nnz: a.nnz(),
                iterations: 0,
                refinements: 0,
                relative_residual: 0.0,
            },
        ));
    }
    if n <= opts.direct_threshold {
        solve_direct(a, b, opts)
    } else {
        solve_gmres(a, b, opts)
    }
}

fn solve_direct(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.nrows;
    let mut trip = Vec::with_capacity(a.nnz());
    for i in 0..n {
        for (j, v) in a.row(i) {
            trip.push(Triplet::new(i, j, v));
        }
    }
    let fail = |reason: String, history: Vec<f64>| Error::Solver { reason, history };
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| fail(format!("matrix construction: {e:?}"), vec![]))?;
    let lu = mat.sp_lu().map_err(|e| fail(format!("LU factorization: {e:?}"), vec![]))?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut m = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(m.as_mut());
        (0..n).map(|i| m[(i, 0)]).collect()
    };
    let mut x = solve(b);
    let mut history = vec![relative_residual(a, &x, b)];
    let mut refinements = 0;
    while *history.last().unwrap() > opts.tol && refinements < 3 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = solve(&r);
        x.iter_mut().zip(&dx).for_each(|(p, q)| *p += q);
        refinements += 1;
        history.push(relative_residual(a, &x, b));
    }
    let res = *history.last().unwrap();
    if !(res <= opts.tol) {
        return Err(fail(format!("sparse LU residual {res:e} above tolerance {:e}", opts.tol), history));
    }
    Ok((
        x,
        SolveReport {
            method: SolveMethod::SparseLu,
            unknowns: n,
            nnz: a.nnz(),
            iterations: 1,
            refinements,
            relative_residual: res,
        },
    ))
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Solver {
                    reason: format!("ILU(0): missing diagonal in row {i}"),
                    history: vec![],
                });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                pos[lu.col_idx[k]] = k;
            }
            for k in s..e {
                let c = lu.col_idx[k];
                if c >= i {
                    break;
                }
                let piv = lu.values[diag[c]];
                if piv == 0.0 {
                    return Err(Error::Solver {
                        reason: format!("ILU(0): zero pivot in row {c}"),
                        history: vec![],
                    });
                }
                let f = lu.values[k] / piv;
                lu.values[k] = f;
                for kk in diag[c] + 1..lu.row_ptr[c + 1] {
                    let p = pos[lu.col_idx[kk]];
                    if p != usize::MAX {
                        lu.values[p] -= f * lu.values[kk];
                    }
                }
            }
            for k in s..e {
                pos[lu.col_idx[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.lu.nrows;
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.values[k] * y[self.lu.col_idx[k]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[k] * y[self.lu.col_idx[k]];
            }
            y[i] = s / self.lu.values[self.diag[i]];
        }
        y
    }
}

fn solve_gmres(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.nrows;
    let pre = Ilu0::new(a)?;
    let nb = norm2(b);
    let m = opts.restart.max(2);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        history.push(beta / nb);
        if beta / nb <= opts.tol {
            break;
        }
        if iters >= opts.max_iter {
            return Err(Error::Solver {
                reason: format!("GMRES did not converge in {iters} iterations"),
                history,
            });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = pre.apply(&v[k]);
            let mut w = a.mul_vec(&zk);
            z.push(zk);
            for (j, vj) in v.iter().enumerate() {
                let d: f64 = w.iter().zip(vj).map(|(p, q)| p * q).sum();
                h[j][k] = d;
                w.iter_mut().zip(vj).for_each(|(p, q)| *p -= d * q);
            }
            let wn = norm2(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = if den == 0.0 { 1.0 } else { h[k][k] / den };
            sn[k] = if den == 0.0 { 0.0 } else { h[k + 1][k] / den };
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iters += 1;
            k_used = k + 1;
            if wn == 0.0 || g[k + 1].abs() / nb <= 0.5 * opts.tol || iters >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|t| t / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&z[j]).for_each(|(p, q)| *p += yj * q);
        }
    }
    Ok((
        x,
        SolveReport {
            method: SolveMethod::IluGmres,
            unknowns: n,
            nnz: a.nnz(),
            iterations: iters,
            refinements: 0,
            relative_residual: *history.last().unwrap(),
        },
    ))
}
