//! Finite differences on the straightened region.
//!
//! The map `x' = g(ξ)`, `x_n = h2(x') + t δ(x')` sends the box
//! `[−1, 1]^{n−1} × [0, 1]` onto the narrow region, with
//! `g(ξ) = 2 r0 sinh(βξ) / sinh β` (or `2 r0 ξ` when `β = 0`). In box
//! coordinates `y = (ξ, t)` the operator keeps its divergence form with
//! coefficients `M^{γκ} = J P_{γα} A^{αβ} P_{κβ}`, where `P = ∂y/∂x` and `J`
//! is the Jacobian of the map.

mod assemble;
pub mod solver;

use std::sync::Arc;

use rayon::prelude::*;

use crate::ansatz::{build_ansatz, AnsatzMode, BoundaryTraces};
use crate::coefficients::CoefficientTensor;
use crate::error::{Error, Result};
use crate::geometry::NarrowRegion;
use crate::jet::MAX_DIM;

pub use assemble::{assemble, LinearSystem};
pub use solver::{solve_linear, CsrMatrix, SolveMethod, SolveReport, SolverOptions};

/// A vector field given pointwise in physical coordinates.
pub type FieldFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    Uniform,
    Sinh(f64),
    /// Chooses `β` so that the spacing at `x' = 0` is at most `ε / 4`.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub tangential: usize,
    pub vertical: usize,
    pub grading: Grading,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            tangential: 257,
            vertical: 65,
            grading: Grading::Auto,
        }
    }
}

impl GridSpec {
    /// Scales the number of cells per axis by `f`.
    pub fn scaled(&self, f: f64) -> GridSpec {
        let s = |c: usize| (((c - 1) as f64 * f).round() as usize).max(2) + 1;
        GridSpec {
            tangential: s(self.tangential),
            vertical: s(self.vertical),
            ..*self
        }
    }
}

/// Uniform node lattice on the box, lexicographic with axis 0 fastest and the
/// vertical axis last. Unknowns are numbered component-major:
/// `dof = comp · nodes + node`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid {
    pub n: usize,
    pub counts: Vec<usize>,
    pub beta: f64,
    /// Tangential half-width `2 r0`.
    pub half_width: f64,
}

fn grading_for_spacing(ratio: f64) -> f64 {
    // β / sinh β = ratio
    if ratio >= 1.0 {
        return 0.0;
    }
    let f = |b: f64| b / b.sinh() - ratio;
    let (mut lo, mut hi) = (1e-8, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl BoxGrid {
    pub fn new(n: usize, counts: Vec<usize>, beta: f64, half_width: f64) -> Result<Self> {
        if counts.len() != n || counts.iter().any(|&c| c < 3) {
            return Err(Error::Configuration(format!("grid needs {n} axes with at least 3 nodes, got {counts:?}")));
        }
        if !(half_width > 0.0) || !(beta >= 0.0) {
            return Err(Error::Configuration("grid half-width must be positive and grading non-negative".into()));
        }
        Ok(BoxGrid {
            n,
            counts,
            beta,
            half_width,
        })
    }

    pub fn from_spec(spec: &GridSpec, region: &NarrowRegion) -> Result<Self> {
        let n = region.n;
        let hw = region.patch_radius();
        let mut counts = vec![spec.tangential; n - 1];
        counts.push(spec.vertical);
        let beta = match spec.grading {
            Grading::Uniform => 0.0,
            Grading::Sinh(b) => b,
            Grading::Auto => {
                let h_uniform = 2.0 * hw / (spec.tangential.max(3) - 1) as f64;
                grading_for_spacing(0.25 * region.epsilon / h_uniform)
            }
        };
        BoxGrid::new(n, counts, beta, hw)
    }

    /// Halves every spacing while keeping the map.
    pub fn refined(&self) -> BoxGrid {
        BoxGrid {
            counts: self.counts.iter().map(|c| (c - 1) * 2 + 1).collect(),
            ..self.clone()
        }
    }

    pub fn nodes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let len = if axis + 1 == self.n { 1.0 } else { 2.0 };
        len / (self.counts[axis] - 1) as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.counts[..axis].iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().enumerate().map(|(a, &i)| i * self.stride(a)).sum()
    }

    pub fn multi(&self, mut p: usize) -> [usize; MAX_DIM] {
        let mut m = [0; MAX_DIM];
        for a in 0..self.n {
            m[a] = p % self.counts[a];
            p /= self.counts[a];
        }
        m
    }

    pub fn is_boundary(&self, p: usize) -> bool {
        let m = self.multi(p);
        (0..self.n).any(|a| m[a] == 0 || m[a] + 1 == self.counts[a])
    }

    /// Box coordinates of a (possibly fractional) multi-index.
    pub fn y_of(&self, multi: &[f64]) -> [f64; MAX_DIM] {
        let mut y = [0.0; MAX_DIM];
        for a in 0..self.n {
            let h = self.spacing(a);
            y[a] = if a + 1 == self.n { multi[a] * h } else { -1.0 + multi[a] * h };
        }
        y
    }

    pub fn y(&self, p: usize) -> [f64; MAX_DIM] {
        let m = self.multi(p);
        let f: Vec<f64> = m.iter().map(|&v| v as f64).collect();
        self.y_of(&f)
    }

    /// `g(ξ)` and `g'(ξ)`.
    pub fn map_xi(&self, xi: f64) -> (f64, f64) {
        if self.beta == 0.0 {
            (self.half_width * xi, self.half_width)
        } else {
            let s = self.beta.sinh();
            (
                self.half_width * (self.beta * xi).sinh() / s,
                self.half_width * self.beta * (self.beta * xi).cosh() / s,
            )
        }
    }

    pub fn inverse_xi(&self, x: f64) -> f64 {
        if self.beta == 0.0 {
            x / self.half_width
        } else {
            (x / self.half_width * self.beta.sinh()).asinh() / self.beta
        }
    }

    /// Physical spacing of the tangential grid at `x' = 0`.
    pub fn center_spacing(&self) -> f64 {
        self.map_xi(0.0).1 * self.spacing(0)
    }

    pub fn frame(&self, region: &NarrowRegion, y: &[f64]) -> Result<Frame> {
        let n = self.n;
        let d = n - 1;
        let mut xp = vec![0.0; d];
        let mut gp = [1.0; MAX_DIM];
        for a in 0..d {
            let (v, s) = self.map_xi(y[a]);
            xp[a] = v;
            gp[a] = s;
        }
        let pj = region.profile_jets(&xp);
        let delta = pj.delta.value;
        if !(delta > 0.0) {
            return Err(Error::Hypothesis(format!("non-positive gap {delta} at {xp:?}")));
        }
        let t = y[d];
        let mut p = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..d {
            p[a][a] = 1.0 / gp[a];
            p[d][a] = -(pj.dh2[a].value + t * pj.ddelta[a].value) / delta;
        }
        p[d][d] = 1.0 / delta;
        let jac = gp[..d].iter().product::<f64>() * delta;
        let mut x = xp;
        x.push(pj.h2.value + t * delta);
        Ok(Frame { x, p, jac, delta })
    }

    pub fn node_x(&self, region: &NarrowRegion, p: usize) -> Result<Vec<f64>> {
        Ok(self.frame(region, &self.y(p))?.x)
    }
}

/// Local data of the box map at one point.
#[derive(Clone, Debug)]
pub struct Frame {
    pub x: Vec<f64>,
    /// `p[γ][α] = ∂y_γ / ∂x_α`
    pub p: [[f64; MAX_DIM]; MAX_DIM],
    pub jac: f64,
    pub delta: f64,
}

/// Coefficients of the straightened operator at one box point.
#[derive(Clone, Debug)]
pub struct MappedCoefficients {
    pub frame: Frame,
    /// `M^{γκ}_{ij}`, flattened `[i][j][γ][κ]`.
    pub m: Vec<f64>,
    /// `Q^γ_{ij} = J P_{γα} B^α_{ij}`, flattened `[i][j][γ]`.
    pub q: Vec<f64>,
    /// `J C^β_{ij} P_{κβ}`, flattened `[i][j][κ]`.
    pub c: Vec<f64>,
    /// `J D_{ij}`.
    pub d: Vec<f64>,
}

/// The operator `J · L` written in divergence form in box coordinates.
#[derive(Clone, Debug)]
pub struct TransformedOperator {
    pub tensor: CoefficientTensor,
    pub region: NarrowRegion,
    pub grid: BoxGrid,
}

pub fn transform_operator(tensor: &CoefficientTensor, region: &NarrowRegion, grid: &BoxGrid) -> Result<TransformedOperator> {
    if tensor.n != region.n || grid.n != region.n {
        return Err(Error::Configuration("tensor, region and grid disagree on the dimension".into()));
    }
    Ok(TransformedOperator {
        tensor: tensor.clone(),
        region: region.clone(),
        grid: grid.clone(),
    })
}

impl TransformedOperator {
    pub fn at(&self, y: &[f64]) -> Result<MappedCoefficients> {
        let n = self.grid.n;
        let nc = self.tensor.ncomp;
        let frame = self.grid.frame(&self.region, y)?;
        let p = &frame.p;
        let jac = frame.jac;
        let a = self.tensor.a_values(&frame.x);
        let mut m = vec![0.0; nc * nc * n * n];
        for i in 0..nc {
            for j in 0..nc {
                let base = (i * nc + j) * n * n;
                for g in 0..n {
                    for k in 0..n {
                        let mut s = 0.0;
                        for al in 0..n {
                            if p[g][al] == 0.0 {
                                continue;
                            }
                            for be in 0..n {
                                s += p[g][al] * a[base + al * n + be] * p[k][be];
                            }
                        }
                        m[base + g * n + k] = jac * s;
                    }
                }
            }
        }
        let (mut q, mut c, mut d) = (Vec::new(), Vec::new(), Vec::new());
        if self.tensor.has_lower_order() {
            let bv = self.tensor.b_values(&frame.x);
            let cv = self.tensor.c_values(&frame.x);
            q = vec![0.0; nc * nc * n];
            c = vec![0.0; nc * nc * n];
            for ij in 0..nc * nc {
                for g in 0..n {
                    q[ij * n + g] = jac * (0..n).map(|al| p[g][al] * bv[ij * n + al]).sum::<f64>();
                    c[ij * n + g] = jac * (0..n).map(|be| cv[ij * n + be] * p[g][be]).sum::<f64>();
                }
            }
            d = self.tensor.d_values(&frame.x).into_iter().map(|v| jac * v).collect();
        }
        let all_finite = m.iter().chain(&q).chain(&c).chain(&d).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Evaluation {
                point: frame.x.clone(),
                what: "transformed coefficients".into(),
            });
        }
        Ok(MappedCoefficients { frame, m, q, c, d })
    }
}

/// Dirichlet data on the lateral faces `|x'_a| = 2 r0`.
#[derive(Clone)]
pub enum LateralClosure {
    /// The corrected leading term.
    Ansatz,
    /// `φ v̄ + ψ (1 − v̄)`.
    Interpolant,
    Constant(Vec<f64>),
    /// A prescribed field, typically a manufactured solution.
    Exact(Arc<FieldFn>),
}

impl std::fmt::Debug for LateralClosure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LateralClosure::Ansatz => write!(f, "ansatz"),
            LateralClosure::Interpolant => write!(f, "interpolant"),
            LateralClosure::Constant(v) => write!(f, "constant{v:?}"),
            LateralClosure::Exact(_) => write!(f, "exact"),
        }
    }
}

impl LateralClosure {
    pub fn name(&self) -> &'static str {
        match self {
            LateralClosure::Ansatz => "ansatz",
            LateralClosure::Interpolant => "interpolant",
            LateralClosure::Constant(_) => "constant",
            LateralClosure::Exact(_) => "exact",
        }
    }
}

/// Grid solution of the system together with the map that produced it.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub grid: BoxGrid,
    pub region: NarrowRegion,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn node_value(&self, p: usize) -> Vec<f64> {
        let nodes = self.grid.nodes();
        (0..self.ncomp).map(|i| self.values[i * nodes + p]).collect()
    }

    /// Builds a field by sampling `f` at the nodes.
    pub fn sample(grid: &BoxGrid, region: &NarrowRegion, ncomp: usize, f: &FieldFn) -> Result<Self> {
        let nodes = grid.nodes();
        let per_node: Vec<Vec<f64>> = (0..nodes)
            .into_par_iter()
            .map(|p| grid.node_x(region, p).map(|x| f(&x)))
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; nodes * ncomp];
        for (p, v) in per_node.iter().enumerate() {
            for i in 0..ncomp {
                values[i * nodes + p] = v[i];
            }
        }
        Ok(DiscreteField {
            grid: grid.clone(),
            region: region.clone(),
            ncomp,
            values,
        })
    }

    /// Box-coordinate derivatives `∂U^i/∂y_γ` at a node: centered inside,
    /// second-order one-sided on the faces.
    pub fn grad_y(&self, p: usize) -> Vec<[f64; MAX_DIM]> {
        let g = &self.grid;
        let nodes = g.nodes();
        let m = g.multi(p);
        let mut out = vec![[0.0; MAX_DIM]; self.ncomp];
        for a in 0..g.n {
            let s = g.stride(a);
            let h = g.spacing(a);
            let c = g.counts[a];
            for (i, o) in out.iter_mut().enumerate() {
                let u = |q: usize| self.values[i * nodes + q];
                o[a] = if m[a] == 0 {
                    (-3.0 * u(p) + 4.0 * u(p + s) - u(p + 2 * s)) / (2.0 * h)
                } else if m[a] + 1 == c {
                    (3.0 * u(p) - 4.0 * u(p - s) + u(p - 2 * s)) / (2.0 * h)
                } else {
                    (u(p + s) - u(p - s)) / (2.0 * h)
                };
            }
        }
        out
    }

    /// `N × n` physical gradient at a node.
    pub fn node_gradient(&self, p: usize) -> Result<Vec<Vec<f64>>> {
        let frame = self.grid.frame(&self.region, &self.grid.y(p))?;
        Ok(to_physical(&self.grad_y(p), &frame, self.grid.n))
    }

    /// Box coordinates of a physical point.
    pub fn locate(&self, x: &[f64]) -> Result<[f64; MAX_DIM]> {
        let n = self.grid.n;
        let t = self.region.vbar(x)?;
        let mut y = [0.0; MAX_DIM];
        for a in 0..n - 1 {
            y[a] = self.grid.inverse_xi(x[a]);
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&y[a]) {
                return Err(Error::domain(x, "outside the grid"));
            }
        }
        y[n - 1] = t;
        Ok(y)
    }

    /// Multilinear interpolation weights of the cell containing `y`.
    fn stencil(&self, y: &[f64]) -> Vec<(usize, f64)> {
        let g = &self.grid;
        let n = g.n;
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..n {
            let origin = if a + 1 == n { 0.0 } else { -1.0 };
            let s = ((y[a] - origin) / g.spacing(a)).clamp(0.0, (g.counts[a] - 1) as f64);
            let i = (s.floor() as usize).min(g.counts[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        (0..1usize << n)
            .map(|corner| {
                let mut w = 1.0;
                let mut idx = [0usize; MAX_DIM];
                for a in 0..n {
                    let bit = (corner >> a) & 1;
                    idx[a] = base[a] + bit;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                (g.index(&idx[..n]), w)
            })
            .collect()
    }

    pub fn value_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.locate(x)?;
        let nodes = self.grid.nodes();
        let st = self.stencil(&y);
        Ok((0..self.ncomp)
            .map(|i| st.iter().map(|&(p, w)| w * self.values[i * nodes + p]).sum())
            .collect())
    }

    /// Gradient at an arbitrary point of the closed region: box derivatives
    /// are interpolated from the surrounding nodes and mapped back with the
    /// exact Jacobian at `x`.
    pub fn recover_gradient(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let y = self.locate(x)?;
        let n = self.grid.n;
        let st = self.stencil(&y);
        let mut gy = vec![[0.0; MAX_DIM]; self.ncomp];
        for &(p, w) in &st {
            if w == 0.0 {
                continue;
            }
            for (acc, v) in gy.iter_mut().zip(self.grad_y(p)) {
                for a in 0..n {
                    acc[a] += w * v[a];
                }
            }
        }
        let frame = self.grid.frame(&self.region, &y)?;
        Ok(to_physical(&gy, &frame, n))
    }

    /// Cells as `(lower corner multi-index, center in box coordinates)`.
    pub fn cells(&self) -> Vec<([usize; MAX_DIM], [f64; MAX_DIM])> {
        let g = &self.grid;
        let n = g.n;
        let total: usize = g.counts.iter().map(|c| c - 1).product();
        (0..total)
            .map(|mut k| {
                let mut m = [0usize; MAX_DIM];
                let mut f = [0.0; MAX_DIM];
                for a in 0..n {
                    m[a] = k % (g.counts[a] - 1);
                    k /= g.counts[a] - 1;
                    f[a] = m[a] as f64 + 0.5;
                }
                (m, g.y_of(&f[..n]))
            })
            .collect()
    }

    /// Value and box gradient at the center of the cell with lower corner `m`.
    pub fn cell_center(&self, m: &[usize]) -> (Vec<f64>, Vec<[f64; MAX_DIM]>) {
        let g = &self.grid;
        let n = g.n;
        let nodes = g.nodes();
        let mut val = vec![0.0; self.ncomp];
        let mut grad = vec![[0.0; MAX_DIM]; self.ncomp];
        let corners = 1usize << n;
        let w = 1.0 / corners as f64;
        for corner in 0..corners {
            let mut idx = [0usize; MAX_DIM];
            for a in 0..n {
                idx[a] = m[a] + ((corner >> a) & 1);
            }
            let p = g.index(&idx[..n]);
            for i in 0..self.ncomp {
                let u = self.values[i * nodes + p];
                val[i] += w * u;
                for a in 0..n {
                    let sign = if (corner >> a) & 1 == 1 { 1.0 } else { -1.0 };
                    grad[i][a] += sign * u * 2.0 * w / g.spacing(a);
                }
            }
        }
        (val, grad)
    }

    /// Discrete `L²` norm over the region by midpoint quadrature in box
    /// coordinates with the exact Jacobian.
    pub fn l2_norm(&self) -> Result<f64> {
        let vol: f64 = (0..self.grid.n).map(|a| self.grid.spacing(a)).product();
        let cells = self.cells();
        let s: f64 = cells
            .par_iter()
            .map(|(m, y)| {
                let frame = self.grid.frame(&self.region, y)?;
                let (v, _) = self.cell_center(m);
                Ok(v.iter().map(|a| a * a).sum::<f64>() * frame.jac * vol)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .sum();
        Ok(s.sqrt())
    }
}

pub(crate) fn to_physical(gy: &[[f64; MAX_DIM]], frame: &Frame, n: usize) -> Vec<Vec<f64>> {
    gy.iter()
        .map(|row| (0..n).map(|al| (0..n).map(|g| row[g] * frame.p[g][al]).sum()).collect())
        .collect()
}

/// Solves `L u = s` with Dirichlet values `boundary(x)` on every face of the
/// box. `source` defaults to zero.
pub fn solve_dirichlet(
    tensor: &CoefficientTensor,
    region: &NarrowRegion,
    grid: &BoxGrid,
    boundary: &(dyn Fn(usize, &[f64]) -> Vec<f64> + Sync),
    source: Option<&FieldFn>,
    opts: &SolverOptions,
) -> Result<(DiscreteField, SolveReport)> {
    let op = transform_operator(tensor, region, grid)?;
    let ls = assemble(&op, boundary, source)?;
    let (values, report) = solve_linear(&ls.matrix, &ls.rhs, opts)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            reason: "non-finite solution".into(),
            history: vec![report.relative_residual],
        });
    }
    Ok((
        DiscreteField {
            grid: grid.clone(),
            region: region.clone(),
            ncomp: tensor.ncomp,
            values,
        },
        report,
    ))
}

/// Full pipeline with `φ` on the top face, `ψ` on the bottom face and the
/// lateral closure elsewhere.
pub fn solve_bvp(
    tensor: &CoefficientTensor,
    region: &NarrowRegion,
    traces: &BoundaryTraces,
    lateral: &LateralClosure,
    grid: &BoxGrid,
    source: Option<&FieldFn>,
    opts: &SolverOptions,
) -> Result<(DiscreteField, SolveReport)> {
    let nc = tensor.ncomp;
    if traces.ncomp() != nc {
        return Err(Error::Configuration("trace and tensor component counts differ".into()));
    }
    if let LateralClosure::Constant(v) = lateral {
        if v.len() != nc {
            return Err(Error::Configuration("constant lateral data has the wrong length".into()));
        }
    }
    let ansatz = match lateral {
        LateralClosure::Ansatz => Some(build_ansatz(tensor, region, traces, AnsatzMode::Generic)?),
        LateralClosure::Interpolant => Some(build_ansatz(tensor, region, traces, AnsatzMode::Generic)?.uncorrected()),
        _ => None,
    };
    let last = grid.n - 1;
    let top = grid.counts[last] - 1;
    let boundary = |p: usize, x: &[f64]| -> Vec<f64> {
        let m = grid.multi(p);
        let xp = &x[..last];
        if m[last] == 0 {
            traces.psi_at(xp)
        } else if m[last] == top {
            traces.phi_at(xp)
        } else {
            match lateral {
                LateralClosure::Ansatz | LateralClosure::Interpolant => {
                    ansatz.as_ref().unwrap().value(x).unwrap_or_else(|_| vec![f64::NAN; nc])
                }
                LateralClosure::Constant(v) => v.clone(),
                LateralClosure::Exact(f) => f(x),
            }
        }
    };
    solve_dirichlet(tensor, region, grid, &boundary, source, opts)
}


/// A field given through jets, so that its derivatives are exact.
pub type JetFieldFn = dyn Fn(&[crate::jet::Jet]) -> Vec<crate::jet::Jet> + Send + Sync;

/// Pointwise values of a jet field.
pub fn jet_field_values(u: Arc<JetFieldFn>) -> Arc<FieldFn> {
    Arc::new(move |x: &[f64]| u(&crate::jet::Jet::seed(x)).iter().map(|j| j.value).collect())
}

/// Source `s = L[u*]` that makes `u*` the exact solution of `L u = s`.
pub fn manufactured_source(tensor: &CoefficientTensor, u: Arc<JetFieldFn>) -> Arc<FieldFn> {
    let t = tensor.clone();
    Arc::new(move |x: &[f64]| {
        let jets = u(&crate::jet::Jet::seed(x));
        t.apply(x, &jets)
    })
}

#[cfg(test)]
mod tests;
