use rayon::prelude::*;

use super::solver::CsrMatrix;
use super::{FieldFn, MappedCoefficients, TransformedOperator};
use crate::error::{Error, Result};

/// Assembled Dirichlet problem. Boundary rows are identity rows and boundary
/// columns are moved to the right side, so self-adjoint operators give a
/// symmetric matrix.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Per unknown: true on Dirichlet rows.
    pub dirichlet: Vec<bool>,
}

impl LinearSystem {
    /// Imposed values on the Dirichlet rows, in unknown order.
    pub fn dirichlet_values(&self) -> Vec<(usize, f64)> {
        self.dirichlet
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(k, _)| (k, self.rhs[k]))
            .collect()
    }
}

fn assembly_error(node: usize, e: Error) -> Error {
    Error::Assembly {
        node,
        reason: e.to_string(),
    }
}

/// Second-order discretization of `J · L u = J · s` on the grid of `op`.
/// `boundary(node, x)` supplies the Dirichlet values.
pub fn assemble(
    op: &TransformedOperator,
    boundary: &(dyn Fn(usize, &[f64]) -> Vec<f64> + Sync),
    source: Option<&FieldFn>,
) -> Result<LinearSystem> {
    let g = &op.grid;
    let n = g.n;
    let nc = op.tensor.ncomp;
    let nodes = g.nodes();
    let lower = op.tensor.has_lower_order();

    let coef: Vec<MappedCoefficients> = (0..nodes)
        .into_par_iter()
        .map(|p| op.at(&g.y(p)).map_err(|e| assembly_error(p, e)))
        .collect::<Result<_>>()?;

    // faces[γ][p]: the N × N block M^{γγ} midway between p and p + e_γ
    let faces: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|gm| {
            (0..nodes)
                .into_par_iter()
                .map(|p| {
                    let m = g.multi(p);
                    if m[gm] + 1 == g.counts[gm] {
                        return Ok(Vec::new());
                    }
                    let mut f: Vec<f64> = m[..n].iter().map(|&v| v as f64).collect();
                    f[gm] += 0.5;
                    let mc = op.at(&g.y_of(&f)).map_err(|e| assembly_error(p, e))?;
                    Ok((0..nc * nc).map(|ij| mc.m[(ij * n + gm) * n + gm]).collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let bvals: Vec<Option<Vec<f64>>> = (0..nodes)
        .into_par_iter()
        .map(|p| {
            if !g.is_boundary(p) {
                return Ok(None);
            }
            let v = boundary(p, &coef[p].frame.x);
            if v.len() != nc || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Assembly {
                    node: p,
                    reason: format!("invalid Dirichlet value {v:?}"),
                });
            }
            Ok(Some(v))
        })
        .collect::<Result<_>>()?;

    let src: Vec<Option<Vec<f64>>> = match source {
        None => vec![None; nodes],
        Some(f) => (0..nodes)
            .into_par_iter()
            .map(|p| {
                if g.is_boundary(p) {
                    return Ok(None);
                }
                let v = f(&coef[p].frame.x);
                if v.len() != nc || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Assembly {
                        node: p,
                        reason: format!("invalid source value {v:?}"),
                    });
                }
                Ok(Some(v))
            })
            .collect::<Result<_>>()?,
    };

    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..nc * nodes)
        .into_par_iter()
        .map(|row| {
            let i = row / nodes;
            let p = row % nodes;
            if let Some(b) = &bvals[p] {
                return (vec![(row, 1.0)], b[i]);
            }
            let mut e: Vec<(usize, usize, f64)> = Vec::with_capacity(nc * (1 + 2 * n + 4 * n * n));
            for j in 0..nc {
                let ij = i * nc + j;
                for gm in 0..n {
                    let s = g.stride(gm);
                    let h = g.spacing(gm);
                    let fp = faces[gm][p][ij] / (h * h);
                    let fm = faces[gm][p - s][ij] / (h * h);
                    e.push((j, p + s, fp));
                    e.push((j, p - s, fm));
                    e.push((j, p, -(fp + fm)));
                    for k in 0..n {
                        if k == gm {
                            continue;
                        }
                        let sk = g.stride(k);
                        let c = 1.0 / (4.0 * h * g.spacing(k));
                        let mp = coef[p + s].m[(ij * n + gm) * n + k] * c;
                        let mm = coef[p - s].m[(ij * n + gm) * n + k] * c;
                        e.push((j, p + s + sk, mp));
                        e.push((j, p + s - sk, -mp));
                        e.push((j, p - s + sk, -mm));
                        e.push((j, p - s - sk, mm));
                    }
                    if lower {
                        let w = 1.0 / (2.0 * h);
                        e.push((j, p + s, coef[p + s].q[ij * n + gm] * w));
                        e.push((j, p - s, -coef[p - s].q[ij * n + gm] * w));
                        e.push((j, p + s, coef[p].c[ij * n + gm] * w));
                        e.push((j, p - s, -coef[p].c[ij * n + gm] * w));
                    }
                }
                if lower {
                    e.push((j, p, coef[p].d[ij]));
                }
            }
            let mut rhs = src[p].as_ref().map_or(0.0, |s| coef[p].frame.jac * s[i]);
            let mut kept = Vec::with_capacity(e.len());
            for (j, q, v) in e {
                match &bvals[q] {
                    Some(b) => rhs -= v * b[j],
                    None => kept.push((j * nodes + q, v)),
                }
            }
            (kept, rhs)
        })
        .collect();

    let mut dirichlet = vec![false; nc * nodes];
    for i in 0..nc {
        for p in 0..nodes {
            dirichlet[i * nodes + p] = bvals[p].is_some();
        }
    }
    let (entries, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(LinearSystem {
        matrix: CsrMatrix::from_rows(entries),
        rhs,
        dirichlet,
    })
}
