//! Uniform Cartesian MAC grid, staggered field storage and the discrete
//! differential operators every other module is built from.
//!
//! Storage convention: `u` lives on vertical faces, `(nx+1) × ny`; `v` on
//! horizontal faces, `nx × (ny+1)`; scalars at cell centres, `nx × ny`.
//! Symmetric tensors keep their diagonal at cell centres and the single
//! off-diagonal entry at cell corners, `(nx+1) × (ny+1)`.
//!
//! All two-dimensional arrays are stored x-major, `data[i * n1 + j]`, so a
//! vertical line of values is contiguous.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Parameter("grid needs at least 4 cells in each direction"));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::Parameter("domain lengths must be positive and finite"));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }
    pub fn x_face(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }
    pub fn y_face(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }
}

/// Dense two-dimensional array, x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Array2 {
    n0: usize,
    n1: usize,
    data: Vec<f64>,
}

impl Array2 {
    pub fn zeros(n0: usize, n1: usize) -> Self {
        Self {
            n0,
            n1,
            data: vec![0.0; n0 * n1],
        }
    }

    pub fn from_fn(n0: usize, n1: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            for j in 0..n1 {
                data.push(f(i, j));
            }
        }
        Self { n0, n1, data }
    }

    pub fn from_vec(n0: usize, n1: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n0 * n1 {
            return Err(Error::Contract("array data length does not match its shape"));
        }
        Ok(Self { n0, n1, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
    pub fn dot(&self, other: &Array2) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

impl Index<(usize, usize)> for Array2 {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n0 && j < self.n1);
        &self.data[i * self.n1 + j]
    }
}

impl IndexMut<(usize, usize)> for Array2 {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n0 && j < self.n1);
        &mut self.data[i * self.n1 + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// One value per domain side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sides<T> {
    pub left: T,
    pub right: T,
    pub bottom: T,
    pub top: T,
}

impl<T: Copy> Sides<T> {
    pub fn all(value: T) -> Self {
        Self {
            left: value,
            right: value,
            bottom: value,
            top: value,
        }
    }

    pub fn get(&self, side: Side) -> T {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
}

/// Ghost-value rule for a quantity stored half a cell away from a side.
///
/// `Dirichlet(g)` reflects through the wall value, `ghost = 2g - interior`;
/// `Neumann` copies the interior value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Closure {
    Dirichlet(f64),
    Neumann,
}

impl Closure {
    #[inline]
    pub fn ghost(self, interior: f64) -> f64 {
        match self {
            Closure::Dirichlet(g) => 2.0 * g - interior,
            Closure::Neumann => interior,
        }
    }
}

/// Boundary rule for cell-centred scalars, one closure per side.
pub type ScalarBoundary = Sides<Closure>;

/// Tangential-velocity closure used when derivatives need values beyond a
/// wall: `left`/`right` apply to `v`, `bottom`/`top` to `u`.
pub type TangentialClosure = Sides<Closure>;

#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredVelocity {
    grid: Grid,
    u: Array2,
    v: Array2,
}

impl StaggeredVelocity {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: Array2::zeros(grid.nx + 1, grid.ny),
            v: Array2::zeros(grid.nx, grid.ny + 1),
        }
    }

    pub fn from_parts(grid: Grid, u: Array2, v: Array2) -> Result<Self> {
        if u.shape() != (grid.nx + 1, grid.ny) {
            return Err(Error::Contract("u must be (nx+1) x ny"));
        }
        if v.shape() != (grid.nx, grid.ny + 1) {
            return Err(Error::Contract("v must be nx x (ny+1)"));
        }
        Ok(Self { grid, u, v })
    }

    /// Samples `fu` at u-face centres and `fv` at v-face centres.
    pub fn from_fns(
        grid: Grid,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let u = Array2::from_fn(grid.nx + 1, grid.ny, |i, j| {
            fu(grid.x_face(i), grid.y_center(j))
        });
        let v = Array2::from_fn(grid.nx, grid.ny + 1, |i, j| {
            fv(grid.x_center(i), grid.y_face(j))
        });
        Self { grid, u, v }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn u(&self) -> &Array2 {
        &self.u
    }
    pub fn v(&self) -> &Array2 {
        &self.v
    }
    pub fn u_mut(&mut self) -> &mut Array2 {
        &mut self.u
    }
    pub fn v_mut(&mut self) -> &mut Array2 {
        &mut self.v
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }
    pub fn all_finite(&self) -> bool {
        self.u.all_finite() && self.v.all_finite()
    }

    /// `Σ (u·u' + v·v') hx hy` over all faces.
    pub fn inner(&self, other: &StaggeredVelocity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Contract("velocity fields live on different grids"));
        }
        Ok((self.u.dot(&other.u) + self.v.dot(&other.v)) * self.grid.cell_area())
    }

    /// `self + scale * other`, component-wise.
    pub fn axpy(&mut self, scale: f64, other: &StaggeredVelocity) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.u.data.iter_mut().zip(&other.u.data) {
            *a += scale * b;
        }
        for (a, b) in self.v.data.iter_mut().zip(&other.v.data) {
            *a += scale * b;
        }
    }

    /// `a * x + b * y` for two fields on the same grid.
    pub fn combine(a: f64, x: &StaggeredVelocity, b: f64, y: &StaggeredVelocity) -> Self {
        debug_assert_eq!(x.grid, y.grid);
        let mut out = x.clone();
        for (o, w) in out.u.data.iter_mut().zip(&y.u.data) {
            *o = a * *o + b * w;
        }
        for (o, w) in out.v.data.iter_mut().zip(&y.v.data) {
            *o = a * *o + b * w;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellScalar {
    grid: Grid,
    values: Array2,
}

impl CellScalar {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: Array2::zeros(grid.nx, grid.ny),
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let mut s = Self::zeros(grid);
        s.values.fill(value);
        s
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            grid,
            values: Array2::from_fn(grid.nx, grid.ny, |i, j| {
                f(grid.x_center(i), grid.y_center(j))
            }),
        }
    }

    pub fn from_array(grid: Grid, values: Array2) -> Result<Self> {
        if values.shape() != (grid.nx, grid.ny) {
            return Err(Error::Contract("cell scalar must be nx x ny"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &Array2 {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut Array2 {
        &mut self.values
    }
    pub fn min(&self) -> f64 {
        self.values.min()
    }
    pub fn max(&self) -> f64 {
        self.values.max()
    }

    pub fn inner(&self, other: &CellScalar) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Contract("scalar fields live on different grids"));
        }
        Ok(self.values.dot(&other.values) * self.grid.cell_area())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellScalar {
        let mut out = self.clone();
        out.values.data.iter_mut().for_each(|x| *x = f(*x));
        out
    }
}

/// A symmetric 2×2 tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymTensor {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    /// Full contraction `A:B`, counting the off-diagonal entry twice.
    #[inline]
    pub fn ddot(&self, other: &SymTensor) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    /// Frobenius norm `sqrt(A:A)`.
    #[inline]
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.ddot(self))
    }

    #[inline]
    pub fn scale(&self, s: f64) -> SymTensor {
        SymTensor::new(s * self.xx, s * self.yy, s * self.xy)
    }

    #[inline]
    pub fn add(&self, other: &SymTensor) -> SymTensor {
        SymTensor::new(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)
    }

    #[inline]
    pub fn sub(&self, other: &SymTensor) -> SymTensor {
        SymTensor::new(self.xx - other.xx, self.yy - other.yy, self.xy - other.xy)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    d11: Array2,
    d22: Array2,
    d12: Array2,
}

impl SymTensorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            d11: Array2::zeros(grid.nx, grid.ny),
            d22: Array2::zeros(grid.nx, grid.ny),
            d12: Array2::zeros(grid.nx + 1, grid.ny + 1),
        }
    }

    pub fn from_parts(grid: Grid, d11: Array2, d22: Array2, d12: Array2) -> Result<Self> {
        if d11.shape() != (grid.nx, grid.ny) || d22.shape() != (grid.nx, grid.ny) {
            return Err(Error::Contract("tensor diagonal must be nx x ny"));
        }
        if d12.shape() != (grid.nx + 1, grid.ny + 1) {
            return Err(Error::Contract("tensor off-diagonal must be (nx+1) x (ny+1)"));
        }
        Ok(Self { grid, d11, d22, d12 })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn d11(&self) -> &Array2 {
        &self.d11
    }
    pub fn d22(&self) -> &Array2 {
        &self.d22
    }
    pub fn d12(&self) -> &Array2 {
        &self.d12
    }
    pub fn d11_mut(&mut self) -> &mut Array2 {
        &mut self.d11
    }
    pub fn d22_mut(&mut self) -> &mut Array2 {
        &mut self.d22
    }
    pub fn d12_mut(&mut self) -> &mut Array2 {
        &mut self.d12
    }

    /// `S:T` integrated over the domain. Diagonal entries use the cell area;
    /// the off-diagonal entry is counted twice with trapezoidal corner weights.
    pub fn inner(&self, other: &SymTensorField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Contract("tensor fields live on different grids"));
        }
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let diag = self.d11.dot(&other.d11) + self.d22.dot(&other.d22);
        let mut off = 0.0;
        for i in 0..=nx {
            let wi = if i == 0 || i == nx { 0.5 } else { 1.0 };
            for j in 0..=ny {
                let wj = if j == 0 || j == ny { 0.5 } else { 1.0 };
                off += wi * wj * self.d12[(i, j)] * other.d12[(i, j)];
            }
        }
        Ok((diag + 2.0 * off) * self.grid.cell_area())
    }

    /// `|D|` at cell `(i, j)` with the off-diagonal averaged from four corners.
    pub fn cell_magnitude(&self, i: usize, j: usize) -> f64 {
        let d12 = 0.25
            * (self.d12[(i, j)] + self.d12[(i + 1, j)] + self.d12[(i, j + 1)] + self.d12[(i + 1, j + 1)]);
        SymTensor::new(self.d11[(i, j)], self.d22[(i, j)], d12).norm()
    }

    /// Cell-centred magnitudes for the whole field.
    pub fn cell_magnitudes(&self) -> CellScalar {
        let g = self.grid;
        CellScalar {
            grid: g,
            values: Array2::from_fn(g.nx, g.ny, |i, j| self.cell_magnitude(i, j)),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.d11.all_finite() && self.d22.all_finite() && self.d12.all_finite()
    }
}

/// Full tensors at every storage site: one per cell centre and one per corner.
///
/// Pointwise constitutive maps are applied site by site on these; the
/// storage form keeps the cells' diagonal and the corners' off-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensors {
    grid: Grid,
    pub cells: Vec<SymTensor>,
    pub corners: Vec<SymTensor>,
}

/// Scalars at every storage site, laid out like [`SiteTensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct SiteScalars {
    grid: Grid,
    pub cells: Vec<f64>,
    pub corners: Vec<f64>,
}

/// Average of the cell values adjacent to corner `(i, j)`.
fn corner_average(a: &Array2, i: usize, j: usize) -> f64 {
    let (nx, ny) = a.shape();
    let mut sum = 0.0;
    let mut count = 0.0;
    for ci in i.saturating_sub(1)..(i + 1).min(nx) {
        for cj in j.saturating_sub(1)..(j + 1).min(ny) {
            sum += a[(ci, cj)];
            count += 1.0;
        }
    }
    sum / count
}

impl SiteTensors {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            cells: vec![SymTensor::ZERO; grid.nx * grid.ny],
            corners: vec![SymTensor::ZERO; (grid.nx + 1) * (grid.ny + 1)],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Completes each storage site by interpolating the missing components.
    pub fn from_field(field: &SymTensorField) -> Self {
        let g = field.grid;
        let mut cells = Vec::with_capacity(g.nx * g.ny);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let xy = 0.25
                    * (field.d12[(i, j)]
                        + field.d12[(i + 1, j)]
                        + field.d12[(i, j + 1)]
                        + field.d12[(i + 1, j + 1)]);
                cells.push(SymTensor::new(field.d11[(i, j)], field.d22[(i, j)], xy));
            }
        }
        let mut corners = Vec::with_capacity((g.nx + 1) * (g.ny + 1));
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                corners.push(SymTensor::new(
                    corner_average(&field.d11, i, j),
                    corner_average(&field.d22, i, j),
                    field.d12[(i, j)],
                ));
            }
        }
        Self {
            grid: g,
            cells,
            corners,
        }
    }

    pub fn to_storage(&self) -> SymTensorField {
        let g = self.grid;
        let mut out = SymTensorField::zeros(g);
        for (k, t) in self.cells.iter().enumerate() {
            out.d11.data[k] = t.xx;
            out.d22.data[k] = t.yy;
        }
        for (k, t) in self.corners.iter().enumerate() {
            out.d12.data[k] = t.xy;
        }
        out
    }

    /// Largest site magnitude.
    pub fn max_norm(&self) -> f64 {
        self.cells
            .iter()
            .chain(&self.corners)
            .fold(0.0, |m, t| m.max(t.norm()))
    }
}

impl SiteScalars {
    pub fn from_cells(s: &CellScalar) -> Self {
        let g = s.grid;
        let mut corners = Vec::with_capacity((g.nx + 1) * (g.ny + 1));
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                corners.push(corner_average(&s.values, i, j));
            }
        }
        Self {
            grid: g,
            cells: s.values.data.clone(),
            corners,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn max(&self) -> f64 {
        self.cells
            .iter()
            .chain(&self.corners)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete divergence at cell centres.
pub fn divergence(vel: &StaggeredVelocity) -> CellScalar {
    let g = vel.grid;
    let (u, v) = (&vel.u, &vel.v);
    let values = Array2::from_fn(g.nx, g.ny, |i, j| {
        (u[(i + 1, j)] - u[(i, j)]) / g.hx + (v[(i, j + 1)] - v[(i, j)]) / g.hy
    });
    CellScalar { grid: g, values }
}

/// Symmetric part of the velocity gradient, `Dv = (∇v + ∇vᵀ)/2`.
///
/// Wall corners take `∂u/∂y` and `∂v/∂x` from ghost values built with
/// `closure`, so no-slip walls see a one-sided half-cell difference.
pub fn sym_gradient(vel: &StaggeredVelocity, closure: &TangentialClosure) -> SymTensorField {
    let g = vel.grid;
    let (nx, ny, hx, hy) = (g.nx, g.ny, g.hx, g.hy);
    let (u, v) = (&vel.u, &vel.v);
    let d11 = Array2::from_fn(nx, ny, |i, j| (u[(i + 1, j)] - u[(i, j)]) / hx);
    let d22 = Array2::from_fn(nx, ny, |i, j| (v[(i, j + 1)] - v[(i, j)]) / hy);
    let d12 = Array2::from_fn(nx + 1, ny + 1, |i, j| {
        let du_dy = if j == 0 {
            (u[(i, 0)] - closure.bottom.ghost(u[(i, 0)])) / hy
        } else if j == ny {
            (closure.top.ghost(u[(i, ny - 1)]) - u[(i, ny - 1)]) / hy
        } else {
            (u[(i, j)] - u[(i, j - 1)]) / hy
        };
        let dv_dx = if i == 0 {
            (v[(0, j)] - closure.left.ghost(v[(0, j)])) / hx
        } else if i == nx {
            (closure.right.ghost(v[(nx - 1, j)]) - v[(nx - 1, j)]) / hx
        } else {
            (v[(i, j)] - v[(i - 1, j)]) / hx
        };
        0.5 * (du_dy + dv_dx)
    });
    SymTensorField { grid: g, d11, d22, d12 }
}

/// Row-wise divergence of a symmetric tensor field, evaluated on interior
/// faces (boundary faces are left at zero). Negative adjoint of
/// [`sym_gradient`] for velocity fields supported away from the boundary.
pub fn div_tensor(s: &SymTensorField) -> StaggeredVelocity {
    let g = s.grid;
    let (nx, ny, hx, hy) = (g.nx, g.ny, g.hx, g.hy);
    let mut out = StaggeredVelocity::zeros(g);
    for i in 1..nx {
        for j in 0..ny {
            out.u[(i, j)] = (s.d11[(i, j)] - s.d11[(i - 1, j)]) / hx
                + (s.d12[(i, j + 1)] - s.d12[(i, j)]) / hy;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.v[(i, j)] = (s.d12[(i + 1, j)] - s.d12[(i, j)]) / hx
                + (s.d22[(i, j)] - s.d22[(i, j - 1)]) / hy;
        }
    }
    out
}

/// Five-point Laplacian of a cell-centred scalar with ghost values from `bc`.
pub fn laplacian_scalar(s: &CellScalar, bc: &ScalarBoundary) -> CellScalar {
    let g = s.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let a = &s.values;
    let values = Array2::from_fn(nx, ny, |i, j| {
        let c = a[(i, j)];
        let w = if i == 0 { bc.left.ghost(c) } else { a[(i - 1, j)] };
        let e = if i == nx - 1 { bc.right.ghost(c) } else { a[(i + 1, j)] };
        let so = if j == 0 { bc.bottom.ghost(c) } else { a[(i, j - 1)] };
        let n = if j == ny - 1 { bc.top.ghost(c) } else { a[(i, j + 1)] };
        (w - 2.0 * c + e) * ihx2 + (so - 2.0 * c + n) * ihy2
    });
    CellScalar { grid: g, values }
}

/// Face-centred pressure gradient on interior faces; zero on boundary faces.
pub fn gradient_p(p: &CellScalar) -> StaggeredVelocity {
    let g = p.grid;
    let (nx, ny) = (g.nx, g.ny);
    let a = &p.values;
    let mut out = StaggeredVelocity::zeros(g);
    for i in 1..nx {
        for j in 0..ny {
            out.u[(i, j)] = (a[(i, j)] - a[(i - 1, j)]) / g.hx;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.v[(i, j)] = (a[(i, j)] - a[(i, j - 1)]) / g.hy;
        }
    }
    out
}
