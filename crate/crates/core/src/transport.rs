//! Pore-fluid pressure transport, `∂t p_f + v·∇p_f − K Δp_f = 0`.
//!
//! One step is explicit first-order upwind advection followed by a
//! backward-Euler diffusion solve. Under `advective_cfl ≤ 1` the advection
//! update is a convex combination of neighbouring values and the diffusion
//! matrix is an M-matrix, so the step obeys a discrete maximum principle:
//! the new field stays within the range of the old field and the Dirichlet
//! data.

use alloc::vec;

use crate::linalg::{pcg, Axis, EndKind, FastDiagonalization, SeparableOperator};
use crate::mesh::{CellScalar, Closure, Grid, ScalarBoundary, StaggeredVelocity};
use crate::rheology::PhysicalParams;
use crate::{Error, Result};

/// Relative residual for the implicit diffusion solve.
pub const DIFFUSION_TOL: f64 = 1e-10;

/// Boundary data for `p_f`: Dirichlet values must be non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfBoundarySpec {
    sides: ScalarBoundary,
}

impl PfBoundarySpec {
    pub fn new(sides: ScalarBoundary) -> Result<Self> {
        for c in [sides.left, sides.right, sides.bottom, sides.top] {
            if let Closure::Dirichlet(g) = c {
                if !(g.is_finite() && g >= 0.0) {
                    return Err(Error::Parameter("p_f Dirichlet values must be finite and >= 0"));
                }
            }
        }
        Ok(Self { sides })
    }

    /// Homogeneous Dirichlet on every side.
    pub fn zero() -> Self {
        Self {
            sides: ScalarBoundary::all(Closure::Dirichlet(0.0)),
        }
    }

    pub fn sides(&self) -> &ScalarBoundary {
        &self.sides
    }

    /// Range spanned by the Dirichlet data, if any side is Dirichlet.
    pub fn dirichlet_range(&self) -> Option<(f64, f64)> {
        let s = &self.sides;
        [s.left, s.right, s.bottom, s.top]
            .iter()
            .filter_map(|c| match c {
                Closure::Dirichlet(g) => Some(*g),
                Closure::Neumann => None,
            })
            .fold(None, |acc, g| match acc {
                None => Some((g, g)),
                Some((lo, hi)) => Some((lo.min(g), hi.max(g))),
            })
    }
}

/// Clamp every cell into `[lo, hi]`.
pub fn truncate_initial(p: &CellScalar, lo: f64, hi: f64) -> Result<CellScalar> {
    if !(lo <= hi) {
        return Err(Error::Parameter("truncation needs lo <= hi"));
    }
    Ok(p.map(|x| x.clamp(lo, hi)))
}

/// `dt · max_cells (|u_c|/hx + |v_c|/hy)` with face velocities averaged to
/// cell centres.
pub fn advective_cfl(vel: &StaggeredVelocity, dt: f64) -> f64 {
    let g = vel.grid();
    let (u, v) = (vel.u(), vel.v());
    let mut worst: f64 = 0.0;
    for i in 0..g.nx() {
        for j in 0..g.ny() {
            let uc = 0.5 * (u[(i, j)] + u[(i + 1, j)]);
            let vc = 0.5 * (v[(i, j)] + v[(i, j + 1)]);
            worst = worst.max(uc.abs() / g.hx() + vc.abs() / g.hy());
        }
    }
    dt * worst
}

fn end_kind(c: Closure) -> EndKind {
    match c {
        Closure::Dirichlet(_) => EndKind::GhostDirichlet,
        Closure::Neumann => EndKind::Neumann,
    }
}

/// Upwind ghost: the boundary value itself, which keeps the update convex.
fn upwind_ghost(c: Closure, interior: f64) -> f64 {
    match c {
        Closure::Dirichlet(g) => g,
        Closure::Neumann => interior,
    }
}

/// Pore-pressure stepper with the diffusion factorization cached for one
/// `(grid, dt, K, bc)` combination.
#[derive(Clone, Debug)]
pub struct PfTransport {
    grid: Grid,
    bc: PfBoundarySpec,
    dt: f64,
    diffusivity: f64,
    op: SeparableOperator,
    solver: FastDiagonalization,
}

impl PfTransport {
    pub fn new(grid: Grid, bc: PfBoundarySpec, dt: f64, diffusivity: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter("dt must be positive"));
        }
        if !(diffusivity >= 0.0 && diffusivity.is_finite()) {
            return Err(Error::Parameter("diffusivity must be non-negative"));
        }
        let s = bc.sides();
        let op = SeparableOperator::new(
            1.0,
            diffusivity * dt,
            Axis::new(grid.nx(), grid.hx(), end_kind(s.left), end_kind(s.right)),
            Axis::new(grid.ny(), grid.hy(), end_kind(s.bottom), end_kind(s.top)),
        )?;
        let solver = FastDiagonalization::new(&op);
        Ok(Self {
            grid,
            bc,
            dt,
            diffusivity,
            op,
            solver,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bc(&self) -> &PfBoundarySpec {
        &self.bc
    }

    /// Advance `p_f` by one step with the advecting velocity `vel`.
    pub fn advance(&self, p_f: &CellScalar, vel: &StaggeredVelocity) -> Result<CellScalar> {
        let g = self.grid;
        if p_f.grid() != &g || vel.grid() != &g {
            return Err(Error::Contract("transport fields must share the stepper's grid"));
        }
        let cfl = advective_cfl(vel, self.dt);
        if cfl > 1.0 {
            return Err(Error::StepSize { cfl });
        }
        let (nx, ny, hx, hy, dt) = (g.nx(), g.ny(), g.hx(), g.hy(), self.dt);
        let s = self.bc.sides();
        let (u, v, p) = (vel.u(), vel.v(), p_f.values());

        let mut rhs = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let c = p[(i, j)];
                let w = if i == 0 { upwind_ghost(s.left, c) } else { p[(i - 1, j)] };
                let e = if i + 1 == nx { upwind_ghost(s.right, c) } else { p[(i + 1, j)] };
                let so = if j == 0 { upwind_ghost(s.bottom, c) } else { p[(i, j - 1)] };
                let n = if j + 1 == ny { upwind_ghost(s.top, c) } else { p[(i, j + 1)] };
                let uc = 0.5 * (u[(i, j)] + u[(i + 1, j)]);
                let vc = 0.5 * (v[(i, j)] + v[(i, j + 1)]);
                let adv = uc.max(0.0) * (c - w) / hx
                    + uc.min(0.0) * (e - c) / hx
                    + vc.max(0.0) * (c - so) / hy
                    + vc.min(0.0) * (n - c) / hy;
                rhs[i * ny + j] = c - dt * adv;
            }
        }

        // Dirichlet data enters the implicit Laplacian through reflected ghosts.
        let kdt = self.diffusivity * dt;
        let (ihx2, ihy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        if let Closure::Dirichlet(gv) = s.left {
            for j in 0..ny {
                rhs[j] += kdt * 2.0 * gv * ihx2;
            }
        }
        if let Closure::Dirichlet(gv) = s.right {
            for j in 0..ny {
                rhs[(nx - 1) * ny + j] += kdt * 2.0 * gv * ihx2;
            }
        }
        if let Closure::Dirichlet(gv) = s.bottom {
            for i in 0..nx {
                rhs[i * ny] += kdt * 2.0 * gv * ihy2;
            }
        }
        if let Closure::Dirichlet(gv) = s.top {
            for i in 0..nx {
                rhs[i * ny + ny - 1] += kdt * 2.0 * gv * ihy2;
            }
        }

        let mut out = p_f.clone();
        let x = out.values_mut().as_mut_slice();
        pcg(&self.op, &self.solver, &rhs, x, DIFFUSION_TOL, "pore-pressure diffusion")?;
        if !out.values().all_finite() {
            return Err(Error::Divergence {
                field: "p_f",
                step: 0,
            });
        }
        Ok(out)
    }
}

/// One transport step without a cached factorization.
pub fn advance_pf(
    p_f: &CellScalar,
    vel: &StaggeredVelocity,
    dt: f64,
    params: &PhysicalParams,
    bc: &PfBoundarySpec,
) -> Result<CellScalar> {
    PfTransport::new(*p_f.grid(), *bc, dt, params.diffusivity)?.advance(p_f, vel)
}
