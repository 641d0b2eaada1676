//! Velocity/pressure stepping: BDF2 in time with Adams–Bashforth (AB2)
//! convection, incremental pressure correction on the MAC grid, and the
//! Bingham stress from either the regularized map or a dual (Uzawa)
//! projection iteration.
//!
//! One step solves
//!
//! ```text
//! ρ (3v* − 4vⁿ + vⁿ⁻¹)/(2Δt) + ρ (2N(vⁿ) − N(vⁿ⁻¹)) = −∇pⁿ + η Δv* + div σ + f
//! Δφ = (3ρ/(2Δt)) div v*,   vⁿ⁺¹ = v* − (2Δt/(3ρ)) ∇φ,   pⁿ⁺¹ = pⁿ + φ
//! ```
//!
//! The first step after a start (or a change of Δt) uses backward Euler with
//! single-level explicit convection.
//!
//! Both yield modes write the stress as `σ = q λ` and repeat the predictor
//! while the multiplier is updated site by site from `z = λ + r Dv*`:
//!
//! * projection: `λ ← P(z)`, `P(A) = A/max(1,|A|)`, whose fixed points are
//!   the exact Bingham graph;
//! * regularized: `λ ← s z/|z|` with `s + r ε s/(1 − s) = |z|`, whose fixed
//!   points satisfy `λ = Dv/(|Dv| + ε)`.
//!
//! The loop stops when the largest multiplier increment drops below the
//! tolerance or after `max_iters` sweeps. The multiplier carries over between
//! steps, so a capped loop keeps iterating across time. An explicit
//! regularized stress is stable only for `Δt ≲ ρ ε h²/q`.

use alloc::vec::Vec;

use crate::linalg::{pcg, Axis, EndKind, FastDiagonalization, SeparableOperator};
use crate::mesh::{
    div_tensor, divergence, gradient_p, sym_gradient, CellScalar, Closure, Grid, SiteScalars,
    SiteTensors, Sides, StaggeredVelocity, SymTensor, SymTensorField, TangentialClosure,
};
use crate::rheology::{exact_stress, regularized_stress_unchecked, solid_pressure_field, yield_field, PhysicalParams, SolidPressure};
use crate::{Error, Result};

/// Relative residual of the viscous Helmholtz solves.
pub const HELMHOLTZ_TOL: f64 = 1e-10;
/// Relative residual of the pressure Poisson solve.
pub const POISSON_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocitySide {
    NoSlip,
    FreeSlip,
    /// Parabolic inflow profile; left side only.
    Inflow,
    /// Zero normal gradient with global flux correction; right side only.
    Outflow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityBoundarySpec {
    sides: Sides<VelocitySide>,
    inflow_peak: f64,
}

impl VelocityBoundarySpec {
    pub fn new(sides: Sides<VelocitySide>, inflow_peak: f64) -> Result<Self> {
        use VelocitySide::*;
        if matches!(sides.right, Inflow) || matches!(sides.bottom, Inflow | Outflow) || matches!(sides.top, Inflow | Outflow) {
            return Err(Error::Config("inflow is supported on the left side only"));
        }
        if matches!(sides.left, Outflow) {
            return Err(Error::Config("outflow is supported on the right side only"));
        }
        if sides.left == Inflow && sides.right != Outflow {
            return Err(Error::Config("an inflow side needs the right side to be an outflow"));
        }
        if !inflow_peak.is_finite() {
            return Err(Error::Parameter("inflow peak velocity must be finite"));
        }
        Ok(Self { sides, inflow_peak })
    }

    /// Poiseuille inflow on the left, free outflow on the right, no-slip walls.
    pub fn channel(inflow_peak: f64) -> Self {
        Self {
            sides: Sides {
                left: VelocitySide::Inflow,
                right: VelocitySide::Outflow,
                bottom: VelocitySide::NoSlip,
                top: VelocitySide::NoSlip,
            },
            inflow_peak,
        }
    }

    /// The same wall condition on all four sides.
    pub fn closed(wall: VelocitySide) -> Result<Self> {
        if !matches!(wall, VelocitySide::NoSlip | VelocitySide::FreeSlip) {
            return Err(Error::Config("closed boxes need wall conditions"));
        }
        Ok(Self {
            sides: Sides::all(wall),
            inflow_peak: 0.0,
        })
    }

    pub fn sides(&self) -> &Sides<VelocitySide> {
        &self.sides
    }

    pub fn inflow_peak(&self) -> f64 {
        self.inflow_peak
    }

    pub fn has_inflow(&self) -> bool {
        self.sides.left == VelocitySide::Inflow
    }

    pub fn has_outflow(&self) -> bool {
        self.sides.right == VelocitySide::Outflow
    }

    /// Inflow profile `4 U y (L − y) / L²`, zero at both walls.
    pub fn inflow_u(&self, y: f64, ly: f64) -> f64 {
        4.0 * self.inflow_peak * y * (ly - y) / (ly * ly)
    }

    /// Ghost rule for tangential velocity at each side.
    pub fn tangential_closure(&self) -> TangentialClosure {
        let pick = |s: VelocitySide| match s {
            VelocitySide::NoSlip | VelocitySide::Inflow => Closure::Dirichlet(0.0),
            VelocitySide::FreeSlip | VelocitySide::Outflow => Closure::Neumann,
        };
        Sides {
            left: pick(self.sides.left),
            right: pick(self.sides.right),
            bottom: pick(self.sides.bottom),
            top: pick(self.sides.top),
        }
    }

    /// Writes the prescribed normal velocities into `vel`.
    pub fn apply_normal_values(&self, vel: &mut StaggeredVelocity) {
        let g = *vel.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let u = vel.u_mut();
        for j in 0..ny {
            u[(0, j)] = if self.has_inflow() {
                self.inflow_u(g.y_center(j), g.ly())
            } else {
                0.0
            };
            if !self.has_outflow() {
                u[(nx, j)] = 0.0;
            }
        }
        let v = vel.v_mut();
        for i in 0..nx {
            v[(i, 0)] = 0.0;
            v[(i, ny)] = 0.0;
        }
    }

    /// Steady plane-Poiseuille field matching the inflow everywhere.
    pub fn poiseuille_field(&self, grid: Grid) -> StaggeredVelocity {
        StaggeredVelocity::from_fns(grid, |_, y| self.inflow_u(y, grid.ly()), |_, _| 0.0)
    }

    fn u_axes(&self, g: &Grid) -> (Axis, Axis) {
        let hi = if self.has_outflow() {
            EndKind::Neumann
        } else {
            EndKind::FaceDirichlet
        };
        let wall = |s: VelocitySide| match s {
            VelocitySide::FreeSlip => EndKind::Neumann,
            _ => EndKind::GhostDirichlet,
        };
        (
            Axis::new(g.nx() - 1, g.hx(), EndKind::FaceDirichlet, hi),
            Axis::new(g.ny(), g.hy(), wall(self.sides.bottom), wall(self.sides.top)),
        )
    }

    fn v_axes(&self, g: &Grid) -> (Axis, Axis) {
        let side = |s: VelocitySide| match s {
            VelocitySide::NoSlip | VelocitySide::Inflow => EndKind::GhostDirichlet,
            VelocitySide::FreeSlip | VelocitySide::Outflow => EndKind::Neumann,
        };
        (
            Axis::new(g.nx(), g.hx(), side(self.sides.left), side(self.sides.right)),
            Axis::new(g.ny() - 1, g.hy(), EndKind::FaceDirichlet, EndKind::FaceDirichlet),
        )
    }

    fn p_axes(&self, g: &Grid) -> (Axis, Axis) {
        let hi = if self.has_outflow() {
            EndKind::GhostDirichlet
        } else {
            EndKind::Neumann
        };
        (
            Axis::new(g.nx(), g.hx(), EndKind::Neumann, hi),
            Axis::new(g.ny(), g.hy(), EndKind::Neumann, EndKind::Neumann),
        )
    }
}

/// How the Bingham stress enters the momentum balance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StressMode {
    /// No yield stress at all (σ ≡ 0).
    Newtonian,
    /// Fixed points satisfy `σ = q D/(|D| + ε)`.
    Regularized { eps: f64 },
    /// Fixed points satisfy `σ:D = q|D|`, `|σ| ≤ q`.
    Projection,
}

impl StressMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StressMode::Regularized { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(Error::Parameter("regularization eps must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Multiplier iteration shared by both yield modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualIteration {
    /// Step `r` applied to `Dv` in multiplier units.
    pub r: f64,
    pub max_iters: usize,
    /// Bound on the largest multiplier increment.
    pub tol: f64,
}

impl Default for DualIteration {
    fn default() -> Self {
        Self {
            r: 1.0,
            max_iters: 1,
            tol: 1e-8,
        }
    }
}

impl DualIteration {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            Err(Error::Parameter("Uzawa step r must be positive"))
        } else if self.max_iters == 0 {
            Err(Error::Parameter("Uzawa max_iters must be at least 1"))
        } else if !(self.tol > 0.0) {
            Err(Error::Parameter("Uzawa tolerance must be positive"))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumSettings {
    pub mode: StressMode,
    /// Include the convective term.
    pub convection: bool,
    pub dual: DualIteration,
}

impl Default for MomentumSettings {
    fn default() -> Self {
        Self {
            mode: StressMode::Regularized { eps: 1e-3 },
            convection: true,
            dual: DualIteration::default(),
        }
    }
}

/// Everything carried from one step to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState {
    pub v_n: StaggeredVelocity,
    pub v_nm1: StaggeredVelocity,
    pub p: CellScalar,
    /// Constitutive stress of `v_n` (regularized law, or the exact graph
    /// selection with `q λ` where `Dv = 0`), storage form.
    pub sigma: SymTensorField,
    /// Dual multiplier at every storage site, `|λ| ≤ 1`.
    pub lambda: SiteTensors,
    pub t: f64,
    pub step_index: usize,
    /// Step size of the last completed step; BDF2 requires it unchanged.
    pub last_dt: Option<f64>,
}

impl MomentumState {
    pub fn new(v0: StaggeredVelocity) -> Self {
        let g = *v0.grid();
        Self {
            v_nm1: v0.clone(),
            v_n: v0,
            p: CellScalar::zeros(g),
            sigma: SymTensorField::zeros(g),
            lambda: SiteTensors::zeros(g),
            t: 0.0,
            step_index: 0,
            last_dt: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.v_n.grid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeOrder {
    Bdf1,
    Bdf2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub order: TimeOrder,
    pub uzawa_iterations: usize,
    pub uzawa_converged: bool,
    /// Largest multiplier increment of the last Uzawa sweep.
    pub uzawa_increment: f64,
    pub divergence_max: f64,
}

/// `(w·∇)w` in divergence form on interior faces.
pub fn convection(w: &StaggeredVelocity, closure: &TangentialClosure) -> StaggeredVelocity {
    let g = *w.grid();
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let (u, v) = (w.u(), w.v());
    let u_at = |i: usize, j: isize| -> f64 {
        if j < 0 {
            closure.bottom.ghost(u[(i, 0)])
        } else if j as usize >= ny {
            closure.top.ghost(u[(i, ny - 1)])
        } else {
            u[(i, j as usize)]
        }
    };
    let v_at = |i: isize, j: usize| -> f64 {
        if i < 0 {
            closure.left.ghost(v[(0, j)])
        } else if i as usize >= nx {
            closure.right.ghost(v[(nx - 1, j)])
        } else {
            v[(i as usize, j)]
        }
    };
    let mut out = StaggeredVelocity::zeros(g);
    for i in 1..nx {
        for j in 0..ny {
            let ue = 0.5 * (u[(i, j)] + u[(i + 1, j)]);
            let uw = 0.5 * (u[(i - 1, j)] + u[(i, j)]);
            let jj = j as isize;
            let un = 0.5 * (u_at(i, jj) + u_at(i, jj + 1));
            let us = 0.5 * (u_at(i, jj - 1) + u_at(i, jj));
            let vn = 0.5 * (v[(i - 1, j + 1)] + v[(i, j + 1)]);
            let vs = 0.5 * (v[(i - 1, j)] + v[(i, j)]);
            out.u_mut()[(i, j)] = (ue * ue - uw * uw) / hx + (un * vn - us * vs) / hy;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let vn = 0.5 * (v[(i, j)] + v[(i, j + 1)]);
            let vs = 0.5 * (v[(i, j - 1)] + v[(i, j)]);
            let ii = i as isize;
            let ve = 0.5 * (v_at(ii, j) + v_at(ii + 1, j));
            let vw = 0.5 * (v_at(ii - 1, j) + v_at(ii, j));
            let ue = 0.5 * (u[(i + 1, j - 1)] + u[(i + 1, j)]);
            let uw = 0.5 * (u[(i, j - 1)] + u[(i, j)]);
            out.v_mut()[(i, j)] = (ue * ve - uw * vw) / hx + (vn * vn - vs * vs) / hy;
        }
    }
    out
}

/// Adams–Bashforth extrapolation `2N(vⁿ) − N(vⁿ⁻¹)` of the convective term.
pub fn ab2_convection(
    v_n: &StaggeredVelocity,
    v_nm1: &StaggeredVelocity,
    closure: &TangentialClosure,
) -> StaggeredVelocity {
    StaggeredVelocity::combine(2.0, &convection(v_n, closure), -1.0, &convection(v_nm1, closure))
}

/// Regularized stress at every storage site of `d`.
pub fn regularized_sites(q: &SiteScalars, d: &SiteTensors, eps: f64) -> SiteTensors {
    let mut out = d.clone();
    for (s, (dd, qq)) in out.cells.iter_mut().zip(d.cells.iter().zip(&q.cells)) {
        *s = regularized_stress_unchecked(*qq, dd, eps);
    }
    for (s, (dd, qq)) in out.corners.iter_mut().zip(d.corners.iter().zip(&q.corners)) {
        *s = regularized_stress_unchecked(*qq, dd, eps);
    }
    out
}

/// Pointwise regularized stress `q D(v)/(|D(v)| + ε)`, storage form.
pub fn bingham_update_regularized(
    q: &SiteScalars,
    v: &StaggeredVelocity,
    closure: &TangentialClosure,
    eps: f64,
) -> Result<SymTensorField> {
    if !(eps > 0.0) {
        return Err(Error::Parameter("regularization eps must be positive"));
    }
    if q.grid() != v.grid() {
        return Err(Error::Contract("yield and velocity live on different grids"));
    }
    let d = SiteTensors::from_field(&sym_gradient(v, closure));
    Ok(regularized_sites(q, &d, eps).to_storage())
}

/// Exact Bingham stress of `v`: `q D/|D|` where `D ≠ 0`, and `q λ` on
/// sites where the strain rate vanishes.
pub fn bingham_graph_stress(
    q: &SiteScalars,
    v: &StaggeredVelocity,
    closure: &TangentialClosure,
    lambda: &SiteTensors,
) -> Result<SymTensorField> {
    if q.grid() != v.grid() || lambda.grid() != v.grid() {
        return Err(Error::Contract("multiplier, yield and velocity grids differ"));
    }
    let d = SiteTensors::from_field(&sym_gradient(v, closure));
    let mut out = d.clone();
    let sites = out
        .cells
        .iter_mut()
        .zip(d.cells.iter().zip(&lambda.cells).zip(&q.cells))
        .chain(out.corners.iter_mut().zip(d.corners.iter().zip(&lambda.corners).zip(&q.corners)));
    for (s, ((dd, l), qq)) in sites {
        *s = if dd.norm() > 0.0 { exact_stress(*qq, dd) } else { l.scale(*qq) };
    }
    Ok(out.to_storage())
}

/// `P(A) = A / max(1, |A|)`.
#[inline]
pub fn project_unit_ball(a: &SymTensor) -> SymTensor {
    let n = a.norm();
    if n > 1.0 {
        a.scale(1.0 / n)
    } else {
        *a
    }
}

/// Result of one multiplier update.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionUpdate {
    /// `q λ'` in storage form.
    pub sigma: SymTensorField,
    pub lambda: SiteTensors,
    /// Largest `|λ' − λ|` over sites with positive yield.
    pub max_increment: f64,
}

/// Resolvent of the regularized dual: `s z/|z|` with
/// `s + re s/(1 − s) = |z|`, `re = r ε`. Reduces to [`project_unit_ball`]
/// as `re → 0`.
#[inline]
pub fn prox_regularized(z: &SymTensor, re: f64) -> SymTensor {
    let m = z.norm();
    if m == 0.0 {
        return *z;
    }
    let b = 1.0 + re + m;
    let s = 2.0 * m / (b + libm::sqrt(b * b - 4.0 * m));
    z.scale(s / m)
}

/// One Uzawa update `λ' = P(λ + r Dv)` at every site, `σ' = q λ'`.
pub fn bingham_update_projection(
    q: &SiteScalars,
    v_iter: &StaggeredVelocity,
    closure: &TangentialClosure,
    lambda: &SiteTensors,
    r: f64,
) -> Result<ProjectionUpdate> {
    dual_update(q, v_iter, closure, lambda, r, project_unit_ball)
}

/// One update `λ' = prox(λ + r Dv)` whose fixed points are the regularized
/// stress `σ = q D/(|D| + ε)`.
pub fn bingham_update_regularized_dual(
    q: &SiteScalars,
    v_iter: &StaggeredVelocity,
    closure: &TangentialClosure,
    lambda: &SiteTensors,
    r: f64,
    eps: f64,
) -> Result<ProjectionUpdate> {
    if !(eps > 0.0) {
        return Err(Error::Parameter("regularization eps must be positive"));
    }
    let re = r * eps;
    dual_update(q, v_iter, closure, lambda, r, |z| prox_regularized(z, re))
}

fn dual_update(
    q: &SiteScalars,
    v_iter: &StaggeredVelocity,
    closure: &TangentialClosure,
    lambda: &SiteTensors,
    r: f64,
    resolvent: impl Fn(&SymTensor) -> SymTensor,
) -> Result<ProjectionUpdate> {
    if !(r > 0.0) {
        return Err(Error::Parameter("Uzawa step r must be positive"));
    }
    if q.grid() != v_iter.grid() || lambda.grid() != v_iter.grid() {
        return Err(Error::Contract("multiplier, yield and velocity grids differ"));
    }
    let d = SiteTensors::from_field(&sym_gradient(v_iter, closure));
    let mut next = lambda.clone();
    let mut stress = lambda.clone();
    let mut max_increment: f64 = 0.0;
    let sites = next
        .cells
        .iter_mut()
        .zip(stress.cells.iter_mut())
        .zip(lambda.cells.iter().zip(&d.cells).zip(&q.cells))
        .chain(
            next.corners
                .iter_mut()
                .zip(stress.corners.iter_mut())
                .zip(lambda.corners.iter().zip(&d.corners).zip(&q.corners)),
        );
    for ((l_new, s_new), ((l_old, dd), qq)) in sites {
        *l_new = resolvent(&l_old.add(&dd.scale(r)));
        *s_new = l_new.scale(*qq);
        if *qq > 0.0 {
            max_increment = max_increment.max(l_new.sub(l_old).norm());
        }
    }
    Ok(ProjectionUpdate {
        sigma: stress.to_storage(),
        lambda: next,
        max_increment,
    })
}

/// Sum of `(x_{k+1} − x_k)²/h²` along a line plus the end contributions.
fn line_energy(line: impl Iterator<Item = f64>, h: f64, lo: (EndKind, f64), hi: (EndKind, f64)) -> f64 {
    let ih2 = 1.0 / (h * h);
    let end = |kind: EndKind, g: f64, x: f64| match kind {
        EndKind::Neumann => 0.0,
        EndKind::FaceDirichlet => (x - g) * (x - g) * ih2,
        EndKind::GhostDirichlet => 2.0 * (x - g) * (x - g) * ih2,
    };
    let mut first = None;
    let mut prev: Option<f64> = None;
    let mut sum = 0.0;
    for x in line {
        if let Some(p) = prev {
            sum += (x - p) * (x - p) * ih2;
        } else {
            first = Some(x);
        }
        prev = Some(x);
    }
    match (first, prev) {
        (Some(f), Some(l)) => sum + end(lo.0, lo.1, f) + end(hi.0, hi.1, l),
        _ => sum,
    }
}

/// Factorized operators for one `(Δt, order)` pair.
#[derive(Clone, Debug)]
struct Operators {
    dt: f64,
    order: TimeOrder,
    /// Leading BDF coefficient times density over Δt.
    alpha: f64,
    u_op: SeparableOperator,
    u_fast: FastDiagonalization,
    v_op: SeparableOperator,
    v_fast: FastDiagonalization,
}

/// Velocity/pressure stepper for one grid, boundary set and parameter set.
#[derive(Clone, Debug)]
pub struct MomentumSolver {
    grid: Grid,
    bc: VelocityBoundarySpec,
    params: PhysicalParams,
    settings: MomentumSettings,
    closure: TangentialClosure,
    ps: CellScalar,
    p_op: SeparableOperator,
    p_fast: FastDiagonalization,
    ops: Option<Operators>,
}

impl MomentumSolver {
    pub fn new(
        grid: Grid,
        bc: VelocityBoundarySpec,
        params: PhysicalParams,
        settings: MomentumSettings,
    ) -> Result<Self> {
        params.validate()?;
        settings.mode.validate()?;
        settings.dual.validate()?;
        let ps = solid_pressure_field(grid, &params);
        let (px, py) = bc.p_axes(&grid);
        let p_op = SeparableOperator::new(0.0, 1.0, px, py)?;
        let p_fast = FastDiagonalization::new(&p_op);
        Ok(Self {
            grid,
            bc,
            params,
            settings,
            closure: bc.tangential_closure(),
            ps,
            p_op,
            p_fast,
            ops: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn bc(&self) -> &VelocityBoundarySpec {
        &self.bc
    }
    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }
    pub fn settings(&self) -> &MomentumSettings {
        &self.settings
    }
    pub fn closure(&self) -> &TangentialClosure {
        &self.closure
    }
    pub fn solid_pressure(&self) -> &CellScalar {
        &self.ps
    }

    /// Yield stress at the storage sites for a given pore pressure.
    pub fn yield_sites(&self, p_f: &CellScalar) -> Result<(CellScalar, SiteScalars)> {
        let q = yield_field(p_f, &self.ps, &self.params)?;
        let sites = SiteScalars::from_cells(&q);
        Ok((q, sites))
    }

    fn operators(&mut self, dt: f64, order: TimeOrder) -> Result<&Operators> {
        let stale = match &self.ops {
            Some(o) => o.dt != dt || o.order != order,
            None => true,
        };
        if stale {
            let coeff = match order {
                TimeOrder::Bdf1 => 1.0,
                TimeOrder::Bdf2 => 1.5,
            };
            let alpha = self.params.rho * coeff / dt;
            let beta = self.params.eta;
            let (ux, uy) = self.bc.u_axes(&self.grid);
            let (vx, vy) = self.bc.v_axes(&self.grid);
            let u_op = SeparableOperator::new(alpha, beta, ux, uy)?;
            let v_op = SeparableOperator::new(alpha, beta, vx, vy)?;
            self.ops = Some(Operators {
                dt,
                order,
                alpha,
                u_fast: FastDiagonalization::new(&u_op),
                v_fast: FastDiagonalization::new(&v_op),
                u_op,
                v_op,
            });
        }
        Ok(self.ops.as_ref().expect("operators just built"))
    }

    /// Order the next step would use.
    pub fn next_order(state: &MomentumState, dt: f64) -> TimeOrder {
        if state.step_index > 0 && state.last_dt == Some(dt) {
            TimeOrder::Bdf2
        } else {
            TimeOrder::Bdf1
        }
    }

    /// Right-hand side of the predictor without the stress, on the
    /// unknown faces (u first, then v).
    fn base_rhs(
        &self,
        state: &MomentumState,
        f: &StaggeredVelocity,
        dt: f64,
        order: TimeOrder,
    ) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let rho = self.params.rho;
        let eta = self.params.eta;
        let (hist, conv) = match order {
            TimeOrder::Bdf1 => {
                let mut h = state.v_n.clone();
                let s = rho / dt;
                h.u_mut().as_mut_slice().iter_mut().for_each(|x| *x *= s);
                h.v_mut().as_mut_slice().iter_mut().for_each(|x| *x *= s);
                let c = if self.settings.convection {
                    convection(&state.v_n, &self.closure)
                } else {
                    StaggeredVelocity::zeros(g)
                };
                (h, c)
            }
            TimeOrder::Bdf2 => {
                let h = StaggeredVelocity::combine(2.0 * rho / dt, &state.v_n, -0.5 * rho / dt, &state.v_nm1);
                let c = if self.settings.convection {
                    ab2_convection(&state.v_n, &state.v_nm1, &self.closure)
                } else {
                    StaggeredVelocity::zeros(g)
                };
                (h, c)
            }
        };
        let gp = gradient_p(&state.p);

        let mut ru = Vec::with_capacity((nx - 1) * ny);
        for i in 1..nx {
            for j in 0..ny {
                ru.push(hist.u()[(i, j)] - rho * conv.u()[(i, j)] - gp.u()[(i, j)] + f.u()[(i, j)]);
            }
        }
        let mut rv = Vec::with_capacity(nx * (ny - 1));
        for i in 0..nx {
            for j in 1..ny {
                rv.push(hist.v()[(i, j)] - rho * conv.v()[(i, j)] - gp.v()[(i, j)] + f.v()[(i, j)]);
            }
        }
        // known normal velocity on the left face enters the x-stencil of u
        let ihx2 = 1.0 / (g.hx() * g.hx());
        if self.bc.has_inflow() {
            for j in 0..ny {
                ru[j] += eta * self.bc.inflow_u(g.y_center(j), g.ly()) * ihx2;
            }
        }
        (ru, rv)
    }

    /// Gather the unknown faces of a velocity field.
    fn unknowns(&self, vel: &StaggeredVelocity) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let u = vel.u().as_slice();
        let ux = u[ny..nx * ny].to_vec();
        let mut vx = Vec::with_capacity(nx * (ny - 1));
        for i in 0..nx {
            vx.extend_from_slice(&vel.v().as_slice()[i * (ny + 1) + 1..i * (ny + 1) + ny]);
        }
        (ux, vx)
    }

    /// Build a full field from unknowns and the boundary conditions.
    fn assemble(&self, ux: &[f64], vx: &[f64]) -> StaggeredVelocity {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut out = StaggeredVelocity::zeros(g);
        out.u_mut().as_mut_slice()[ny..nx * ny].copy_from_slice(ux);
        for i in 0..nx {
            out.v_mut().as_mut_slice()[i * (ny + 1) + 1..i * (ny + 1) + ny]
                .copy_from_slice(&vx[i * (ny - 1)..(i + 1) * (ny - 1)]);
        }
        self.bc.apply_normal_values(&mut out);
        if self.bc.has_outflow() {
            let u = out.u_mut();
            for j in 0..ny {
                u[(nx, j)] = u[(nx - 1, j)];
            }
            let q_in: f64 = (0..ny).map(|j| u[(0, j)]).sum::<f64>() * g.hy();
            let q_out: f64 = (0..ny).map(|j| u[(nx, j)]).sum::<f64>() * g.hy();
            let shift = (q_in - q_out) / g.ly();
            for j in 0..ny {
                u[(nx, j)] += shift;
            }
        }
        out
    }

    fn solve_predictor(
        &mut self,
        dt: f64,
        order: TimeOrder,
        base: &(Vec<f64>, Vec<f64>),
        sigma: &SymTensorField,
        guess: &StaggeredVelocity,
    ) -> Result<StaggeredVelocity> {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let div_s = div_tensor(sigma);
        let mut bu = base.0.clone();
        let du = &div_s.u().as_slice()[ny..nx * ny];
        for (b, d) in bu.iter_mut().zip(du) {
            *b += d;
        }
        let mut bv = base.1.clone();
        for i in 0..nx {
            let dv = &div_s.v().as_slice()[i * (ny + 1) + 1..i * (ny + 1) + ny];
            for (b, d) in bv[i * (ny - 1)..(i + 1) * (ny - 1)].iter_mut().zip(dv) {
                *b += d;
            }
        }
        let (mut xu, mut xv) = self.unknowns(guess);
        let ops = self.operators(dt, order)?;
        pcg(&ops.u_op, &ops.u_fast, &bu, &mut xu, HELMHOLTZ_TOL, "u Helmholtz")?;
        pcg(&ops.v_op, &ops.v_fast, &bv, &mut xv, HELMHOLTZ_TOL, "v Helmholtz")?;
        Ok(self.assemble(&xu, &xv))
    }

    /// Velocity predictor for a given stress forcing: the implicit viscous
    /// solve of the BDF2 (or bootstrap BDF1) momentum balance, before the
    /// pressure projection.
    pub fn predict_velocity(
        &mut self,
        state: &MomentumState,
        sigma_force: &SymTensorField,
        f: &StaggeredVelocity,
        dt: f64,
    ) -> Result<StaggeredVelocity> {
        check_dt(dt)?;
        let order = Self::next_order(state, dt);
        let base = self.base_rhs(state, f, dt, order);
        self.solve_predictor(dt, order, &base, sigma_force, &state.v_n)
    }

    /// Projects `v_star` onto discretely divergence-free fields; `alpha` is
    /// the leading BDF coefficient times `ρ/Δt`. Returns the corrected
    /// velocity and the increment `φ` added to the pressure.
    pub fn pressure_correct(&self, v_star: &StaggeredVelocity, alpha: f64) -> Result<(StaggeredVelocity, CellScalar)> {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let div = divergence(v_star);
        let mut b: Vec<f64> = div.values().as_slice().iter().map(|d| -alpha * d).collect();
        if self.p_op.is_singular() {
            let (u, v) = (v_star.u(), v_star.v());
            let mut net = 0.0;
            let mut scale = 0.0;
            for j in 0..ny {
                net += (u[(nx, j)] - u[(0, j)]) * g.hy();
                scale += (u[(nx, j)].abs() + u[(0, j)].abs()) * g.hy();
            }
            for i in 0..nx {
                net += (v[(i, ny)] - v[(i, 0)]) * g.hx();
                scale += (v[(i, ny)].abs() + v[(i, 0)].abs()) * g.hx();
            }
            if net.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) && net != 0.0 {
                return Err(Error::Compatibility { net_flux: net });
            }
            crate::linalg::remove_mean(&mut b);
        }
        let mut phi = CellScalar::zeros(g);
        pcg(&self.p_op, &self.p_fast, &b, phi.values_mut().as_mut_slice(), POISSON_TOL, "pressure")?;

        let mut out = v_star.clone();
        let ph = phi.values();
        let inv = 1.0 / alpha;
        {
            let u = out.u_mut();
            for i in 1..nx {
                for j in 0..ny {
                    u[(i, j)] -= inv * (ph[(i, j)] - ph[(i - 1, j)]) / g.hx();
                }
            }
            if self.bc.has_outflow() {
                for j in 0..ny {
                    u[(nx, j)] -= inv * (-2.0 * ph[(nx - 1, j)]) / g.hx();
                }
            }
        }
        let v = out.v_mut();
        for i in 0..nx {
            for j in 1..ny {
                v[(i, j)] -= inv * (ph[(i, j)] - ph[(i, j - 1)]) / g.hy();
            }
        }
        Ok((out, phi))
    }

    /// Advance velocity and pressure by `dt` with the yield computed from
    /// `p_f`.
    pub fn step(
        &mut self,
        state: &MomentumState,
        p_f: &CellScalar,
        f: &StaggeredVelocity,
        dt: f64,
    ) -> Result<(MomentumState, StepReport)> {
        check_dt(dt)?;
        if state.grid() != &self.grid || p_f.grid() != &self.grid || f.grid() != &self.grid {
            return Err(Error::Contract("state, p_f and forcing must share the solver grid"));
        }
        let order = Self::next_order(state, dt);
        let (_, q_sites) = self.yield_sites(p_f)?;
        let q_max = q_sites.max();
        let base = self.base_rhs(state, f, dt, order);
        let closure = self.closure;

        let mut uzawa_iterations = 0;
        let mut uzawa_converged = true;
        let mut uzawa_increment = 0.0;
        let dual = self.settings.dual;
        let (v_star, _sigma_applied, lambda) = match self.settings.mode {
            StressMode::Newtonian => {
                let sigma = SymTensorField::zeros(self.grid);
                let v_star = self.solve_predictor(dt, order, &base, &sigma, &state.v_n)?;
                (v_star, sigma, state.lambda.clone())
            }
            _ if q_max <= 0.0 => {
                let sigma = SymTensorField::zeros(self.grid);
                let v_star = self.solve_predictor(dt, order, &base, &sigma, &state.v_n)?;
                (v_star, sigma, state.lambda.clone())
            }
            mode => {
                let mut lambda = state.lambda.clone();
                let mut sigma = scale_sites(&lambda, &q_sites).to_storage();
                // Starting from vⁿ rather than the last iterate forces a full
                // preconditioned sweep, so rigid-zone strain rates are not
                // left at solver-tolerance noise that λ would integrate.
                loop {
                    let v_star = self.solve_predictor(dt, order, &base, &sigma, &state.v_n)?;
                    let upd = match mode {
                        StressMode::Regularized { eps } => {
                            bingham_update_regularized_dual(&q_sites, &v_star, &closure, &lambda, dual.r, eps)?
                        }
                        _ => bingham_update_projection(&q_sites, &v_star, &closure, &lambda, dual.r)?,
                    };
                    uzawa_iterations += 1;
                    uzawa_increment = upd.max_increment;
                    let done = upd.max_increment <= dual.tol;
                    if done || uzawa_iterations >= dual.max_iters {
                        uzawa_converged = done;
                        break (v_star, sigma, upd.lambda);
                    }
                    lambda = upd.lambda;
                    sigma = upd.sigma;
                }
            }
        };

        let alpha = self.operators(dt, order)?.alpha;
        let (v_new, phi) = self.pressure_correct(&v_star, alpha)?;
        if !v_new.all_finite() {
            return Err(Error::Divergence {
                field: "velocity",
                step: state.step_index + 1,
            });
        }
        let mut p = state.p.clone();
        for (a, b) in p.values_mut().as_mut_slice().iter_mut().zip(phi.values().as_slice()) {
            *a += b;
        }
        if !p.values().all_finite() {
            return Err(Error::Divergence {
                field: "pressure",
                step: state.step_index + 1,
            });
        }
        // stored stress is the constitutive stress of the new velocity
        let sigma = match self.settings.mode {
            _ if q_max <= 0.0 => SymTensorField::zeros(self.grid),
            StressMode::Newtonian => SymTensorField::zeros(self.grid),
            StressMode::Regularized { eps } => bingham_update_regularized(&q_sites, &v_new, &closure, eps)?,
            StressMode::Projection => bingham_graph_stress(&q_sites, &v_new, &closure, &lambda)?,
        };
        let divergence_max = divergence(&v_new).values().max_abs();
        let next = MomentumState {
            v_nm1: state.v_n.clone(),
            v_n: v_new,
            p,
            sigma,
            lambda,
            t: state.t + dt,
            step_index: state.step_index + 1,
            last_dt: Some(dt),
        };
        Ok((
            next,
            StepReport {
                order,
                uzawa_iterations,
                uzawa_converged,
                uzawa_increment,
                divergence_max,
            },
        ))
    }

    /// First step from a single time level (backward Euler, explicit
    /// single-level convection). Equivalent to [`step`](Self::step) on a
    /// fresh state.
    pub fn bootstrap_first_step(
        &mut self,
        state: &MomentumState,
        p_f: &CellScalar,
        f: &StaggeredVelocity,
        dt: f64,
    ) -> Result<(MomentumState, StepReport)> {
        if state.step_index != 0 {
            return Err(Error::Contract("bootstrap step requires step_index = 0"));
        }
        let mut fresh = state.clone();
        fresh.last_dt = None;
        self.step(&fresh, p_f, f, dt)
    }

    /// `(ρ/2) Σ |v|² dA` over all faces.
    pub fn kinetic_energy(&self, v: &StaggeredVelocity) -> f64 {
        0.5 * self.params.rho * v.inner(v).unwrap_or(f64::NAN)
    }

    /// `η Σ |∇v|² dA` with the same boundary closures as the implicit
    /// viscous operator, so that it equals `−η ⟨v, Δ_h v⟩` exactly.
    pub fn viscous_dissipation(&self, v: &StaggeredVelocity) -> f64 {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (ux, uy) = self.bc.u_axes(&g);
        let (vx, vy) = self.bc.v_axes(&g);
        let (u, vv) = (v.u(), v.v());
        let mut sum = 0.0;
        for j in 0..ny {
            let left = u[(0, j)];
            let right = u[(nx, j)];
            sum += line_energy((1..nx).map(|i| u[(i, j)]), g.hx(), (ux.lo, left), (ux.hi, right));
        }
        for i in 1..nx {
            sum += line_energy((0..ny).map(|j| u[(i, j)]), g.hy(), (uy.lo, 0.0), (uy.hi, 0.0));
        }
        for j in 1..ny {
            sum += line_energy((0..nx).map(|i| vv[(i, j)]), g.hx(), (vx.lo, 0.0), (vx.hi, 0.0));
        }
        for i in 0..nx {
            sum += line_energy((1..ny).map(|j| vv[(i, j)]), g.hy(), (vy.lo, 0.0), (vy.hi, 0.0));
        }
        self.params.eta * sum * g.cell_area()
    }

    /// `∫ σ:Dv` with the storage inner product.
    pub fn plastic_dissipation(&self, sigma: &SymTensorField, v: &StaggeredVelocity) -> f64 {
        sigma
            .inner(&sym_gradient(v, &self.closure))
            .unwrap_or(f64::NAN)
    }

    /// Whether the lithostatic profile makes `p_s` vary in space.
    pub fn solid_pressure_is_uniform(&self) -> bool {
        matches!(self.params.ps_mode, SolidPressure::Constant(_)) || self.params.g_mag == 0.0
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter("dt must be positive"))
    }
}

fn scale_sites(lambda: &SiteTensors, q: &SiteScalars) -> SiteTensors {
    let mut out = lambda.clone();
    for (s, qq) in out.cells.iter_mut().zip(&q.cells) {
        *s = s.scale(*qq);
    }
    for (s, qq) in out.corners.iter_mut().zip(&q.corners) {
        *s = s.scale(*qq);
    }
    out
}
