//! Linear solvers for the constant-coefficient operators of the scheme.
//!
//! Every implicit solve in the time step (viscous Helmholtz problems for `u`
//! and `v`, the pressure Poisson problem, implicit pore-pressure diffusion)
//! has the form `(α I − β (Tx ⊕ Ty)) x = b` on a tensor-product set of
//! unknowns, where `Tx`, `Ty` are 1-D second-difference matrices whose end
//! rows encode the boundary condition. [`SeparableOperator`] applies such an
//! operator; [`FastDiagonalization`] inverts it directly by diagonalizing
//! `Ty` once and running a tridiagonal sweep in x per eigenmode. The solves
//! themselves go through preconditioned conjugate gradients ([`pcg`]) so the
//! residual is always measured against the operator, not the factorization.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// How a 1-D second-difference stencil closes at one end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndKind {
    /// Zero normal derivative: the missing neighbour equals the end value.
    Neumann,
    /// The neighbour is a known node value one spacing away.
    FaceDirichlet,
    /// The boundary sits half a spacing away; ghost value by reflection.
    GhostDirichlet,
}

impl EndKind {
    /// Extra diagonal weight contributed by the missing neighbour.
    fn coupling(self) -> f64 {
        match self {
            EndKind::Neumann => 0.0,
            EndKind::FaceDirichlet => 1.0,
            EndKind::GhostDirichlet => 2.0,
        }
    }
}

/// One direction of a tensor-product stencil.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub h: f64,
    pub lo: EndKind,
    pub hi: EndKind,
}

impl Axis {
    pub fn new(n: usize, h: f64, lo: EndKind, hi: EndKind) -> Self {
        Self { n, h, lo, hi }
    }

    /// Diagonal of `T` (the off-diagonal is `1/h²` everywhere).
    fn diagonal(&self) -> Vec<f64> {
        let ih2 = 1.0 / (self.h * self.h);
        (0..self.n)
            .map(|k| {
                let lo = if k == 0 { self.lo.coupling() } else { 1.0 };
                let hi = if k + 1 == self.n { self.hi.coupling() } else { 1.0 };
                -(lo + hi) * ih2
            })
            .collect()
    }

    fn singular(&self) -> bool {
        self.lo == EndKind::Neumann && self.hi == EndKind::Neumann
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix (implicit QL).
///
/// Returns eigenvalues and the eigenvector matrix stored row-major,
/// `vectors[row * n + k]` being component `row` of eigenvector `k`.
pub fn symmetric_tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    let mut z = vec![0.0; n * n];
    for k in 0..n {
        z[k * n + k] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in 0..n {
                        let zr = &mut z[row * n..row * n + n];
                        h = zr[i + 1];
                        zr[i + 1] = s * zr[i] + c * h;
                        zr[i] = c * zr[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    (d, z)
}

/// `α I − β (Tx ⊕ Ty)` on an `nx × ny` block of unknowns stored x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableOperator {
    pub alpha: f64,
    pub beta: f64,
    pub x: Axis,
    pub y: Axis,
}

impl SeparableOperator {
    pub fn new(alpha: f64, beta: f64, x: Axis, y: Axis) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Parameter("separable operator needs alpha, beta >= 0, not both zero"));
        }
        if x.n == 0 || y.n == 0 {
            return Err(Error::Parameter("separable operator needs unknowns"));
        }
        Ok(Self { alpha, beta, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when constants are in the null space.
    pub fn is_singular(&self) -> bool {
        self.alpha == 0.0 && self.x.singular() && self.y.singular()
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.x.n, self.y.n);
        debug_assert_eq!(x.len(), nx * ny);
        let (ihx2, ihy2) = (1.0 / (self.x.h * self.x.h), 1.0 / (self.y.h * self.y.h));
        let dx = self.x.diagonal();
        let dy = self.y.diagonal();
        let (a, b) = (self.alpha, self.beta);
        for i in 0..nx {
            let row = &x[i * ny..(i + 1) * ny];
            for j in 0..ny {
                let c = row[j];
                let mut lap = (dx[i] + dy[j]) * c;
                if i > 0 {
                    lap += x[(i - 1) * ny + j] * ihx2;
                }
                if i + 1 < nx {
                    lap += x[(i + 1) * ny + j] * ihx2;
                }
                if j > 0 {
                    lap += row[j - 1] * ihy2;
                }
                if j + 1 < ny {
                    lap += row[j + 1] * ihy2;
                }
                out[i * ny + j] = a * c - b * lap;
            }
        }
    }
}

/// Something that approximately inverts an operator.
pub trait Preconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal scaling.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(op: &SeparableOperator) -> Self {
        let dx = op.x.diagonal();
        let dy = op.y.diagonal();
        let mut inv_diag = Vec::with_capacity(op.len());
        for &a in &dx {
            for &b in &dy {
                inv_diag.push(1.0 / (op.alpha - op.beta * (a + b)));
            }
        }
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Direct inverse of a [`SeparableOperator`] by diagonalizing the y axis.
///
/// For a singular operator (pure Neumann Laplacian) it returns the
/// zero-mean solution of the projected right-hand side.
#[derive(Clone, Debug)]
pub struct FastDiagonalization {
    nx: usize,
    ny: usize,
    /// y eigenvectors, `q[j * ny + k]`.
    q: Vec<f64>,
    /// Thomas factors per (i, k): modified super-diagonal and inverse pivot.
    c_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
    off: f64,
    singular: bool,
}

impl FastDiagonalization {
    pub fn new(op: &SeparableOperator) -> Self {
        let (nx, ny) = (op.x.n, op.y.n);
        let ihy2 = 1.0 / (op.y.h * op.y.h);
        let ihx2 = 1.0 / (op.x.h * op.x.h);
        let (mu, q) = if ny == 1 {
            (op.y.diagonal(), vec![1.0])
        } else {
            symmetric_tridiagonal_eigen(&op.y.diagonal(), &vec![ihy2; ny - 1])
        };
        let singular = op.is_singular();
        // index of the (numerically) zero y-eigenvalue for the singular case
        let zero_mode = mu
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);

        let dx = op.x.diagonal();
        let off = -op.beta * ihx2;
        let mut c_mod = vec![0.0; nx * ny];
        let mut inv_pivot = vec![0.0; nx * ny];
        for k in 0..ny {
            let shift = op.alpha - op.beta * mu[k];
            for i in 0..nx {
                let mut diag = shift - op.beta * dx[i];
                if singular && k == zero_mode && i == 0 {
                    // pin the constant mode; exact for compatible data
                    diag += op.beta * ihx2.max(ihy2);
                }
                let pivot = if i == 0 {
                    diag
                } else {
                    diag - off * c_mod[(i - 1) * ny + k]
                };
                inv_pivot[i * ny + k] = 1.0 / pivot;
                c_mod[i * ny + k] = off / pivot;
            }
        }
        Self {
            nx,
            ny,
            q,
            c_mod,
            inv_pivot,
            off,
            singular,
        }
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(b.len(), nx * ny);
        // transform each vertical line into y-eigen coordinates
        let mut hat = vec![0.0; nx * ny];
        for i in 0..nx {
            let src = &b[i * ny..(i + 1) * ny];
            let dst = &mut hat[i * ny..(i + 1) * ny];
            for (j, &bij) in src.iter().enumerate() {
                let qrow = &self.q[j * ny..(j + 1) * ny];
                for (d, &qv) in dst.iter_mut().zip(qrow) {
                    *d += bij * qv;
                }
            }
        }
        // Thomas sweep in x, all modes at once
        for k in 0..ny {
            hat[k] *= self.inv_pivot[k];
        }
        for i in 1..nx {
            let (prev, cur) = hat.split_at_mut(i * ny);
            let prev = &prev[(i - 1) * ny..];
            let cur = &mut cur[..ny];
            let piv = &self.inv_pivot[i * ny..(i + 1) * ny];
            for k in 0..ny {
                cur[k] = (cur[k] - self.off * prev[k]) * piv[k];
            }
        }
        for i in (0..nx - 1).rev() {
            let (cur, next) = hat.split_at_mut((i + 1) * ny);
            let cur = &mut cur[i * ny..];
            let next = &next[..ny];
            let cm = &self.c_mod[i * ny..(i + 1) * ny];
            for k in 0..ny {
                cur[k] -= cm[k] * next[k];
            }
        }
        // back to physical coordinates
        for i in 0..nx {
            let src = &hat[i * ny..(i + 1) * ny];
            let dst = &mut x[i * ny..(i + 1) * ny];
            for (j, d) in dst.iter_mut().enumerate() {
                let qrow = &self.q[j * ny..(j + 1) * ny];
                *d = src.iter().zip(qrow).map(|(a, b)| a * b).sum();
            }
        }
        if self.singular {
            remove_mean(x);
        }
    }
}

impl Preconditioner for FastDiagonalization {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.solve(r, z);
    }
}

pub fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a converged [`pcg`] run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for an SPD (or consistent singular)
/// separable system. `x` holds the initial guess on entry. Stops when
/// `‖b − A x‖ ≤ rel_tol ‖b‖`; gives up after `10 n` iterations.
pub fn pcg(
    op: &SeparableOperator,
    precond: &impl Preconditioner,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    what: &'static str,
) -> Result<SolveStats> {
    let n = b.len();
    let singular = op.is_singular();
    let b_norm = libm::sqrt(dot(b, b));
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = libm::sqrt(dot(&r, &r)) / b_norm;
    if res <= rel_tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: res,
        });
    }
    let mut z = vec![0.0; n];
    precond.precondition(&r, &mut z);
    if singular {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n;
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver {
                what,
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = libm::sqrt(dot(&r, &r)) / b_norm;
        if res <= rel_tol {
            if singular {
                remove_mean(x);
            }
            return Ok(SolveStats {
                iterations: it,
                relative_residual: res,
            });
        }
        precond.precondition(&r, &mut z);
        if singular {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Solver {
        what,
        iterations: max_iter,
        residual: res,
    })
}
