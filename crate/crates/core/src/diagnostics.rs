//! Energy audits, rigid-zone geometry, graph residual sweeps and velocity
//! profiles.

use alloc::vec::Vec;

use crate::mesh::{CellScalar, SiteScalars, SiteTensors, StaggeredVelocity, SymTensorField};
use crate::momentum::{MomentumSolver, MomentumState};
use crate::rheology::{graph_residual, regularized_stress_unchecked, GraphSample};
use crate::{Error, Result};

/// One row of the energy/diagnostics time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub viscous_cum: f64,
    pub plastic_cum: f64,
    pub forcing_cum: f64,
    pub divergence_max: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    pub rigid_fraction: f64,
}

/// Builds samples step by step; time integrals use the rectangle rule at
/// the end of each step.
#[derive(Clone, Debug, Default)]
pub struct EnergyRecorder {
    samples: Vec<EnergySample>,
}

/// Instantaneous rates at one time level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRates {
    pub kinetic: f64,
    pub viscous: f64,
    pub plastic: f64,
    pub forcing: f64,
}

pub fn energy_rates(
    solver: &MomentumSolver,
    state: &MomentumState,
    f: &StaggeredVelocity,
) -> EnergyRates {
    EnergyRates {
        kinetic: solver.kinetic_energy(&state.v_n),
        viscous: solver.viscous_dissipation(&state.v_n),
        plastic: solver.plastic_dissipation(&state.sigma, &state.v_n),
        forcing: f.inner(&state.v_n).unwrap_or(f64::NAN),
    }
}

impl EnergyRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sample of the initial state (integrals start at zero).
    pub fn record_initial(&mut self, t: f64, rates: EnergyRates, divergence_max: f64, pf: &CellScalar, rigid_fraction: f64) {
        self.samples.clear();
        self.samples.push(EnergySample {
            t,
            kinetic: rates.kinetic,
            viscous_cum: 0.0,
            plastic_cum: 0.0,
            forcing_cum: 0.0,
            divergence_max,
            pf_min: pf.min(),
            pf_max: pf.max(),
            rigid_fraction,
        });
    }

    /// Sample after a step of size `dt`, with rates at the new level.
    pub fn record_step(
        &mut self,
        t: f64,
        dt: f64,
        rates: EnergyRates,
        divergence_max: f64,
        pf: &CellScalar,
        rigid_fraction: f64,
    ) {
        let prev = self.samples.last().copied().unwrap_or(EnergySample {
            t: t - dt,
            kinetic: rates.kinetic,
            viscous_cum: 0.0,
            plastic_cum: 0.0,
            forcing_cum: 0.0,
            divergence_max: 0.0,
            pf_min: pf.min(),
            pf_max: pf.max(),
            rigid_fraction,
        });
        self.samples.push(EnergySample {
            t,
            kinetic: rates.kinetic,
            viscous_cum: prev.viscous_cum + dt * rates.viscous,
            plastic_cum: prev.plastic_cum + dt * rates.plastic,
            forcing_cum: prev.forcing_cum + dt * rates.forcing,
            divergence_max,
            pf_min: pf.min(),
            pf_max: pf.max(),
            rigid_fraction,
        });
    }

    pub fn samples(&self) -> &[EnergySample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<EnergySample> {
        self.samples
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyAudit {
    pub passed: bool,
    /// Index of the first sample breaking the inequality.
    pub first_violation: Option<usize>,
    /// Largest `lhs − rhs` seen (negative when every step holds with room).
    pub worst_excess: f64,
    /// `max_t kinetic(t)`.
    pub kinetic_sup: f64,
    /// `viscous_cum` at the end.
    pub viscous_total: f64,
    /// `plastic_cum` at the end.
    pub plastic_total: f64,
}

/// Checks `kinetic(t) + viscous_cum(t) + plastic_cum(t) ≤ kinetic(0) +
/// forcing_cum(t) + 1e−8 kinetic(0) n` at every sample `n`.
pub fn energy_audit(samples: &[EnergySample]) -> EnergyAudit {
    let Some(first) = samples.first() else {
        return EnergyAudit {
            passed: true,
            first_violation: None,
            worst_excess: 0.0,
            kinetic_sup: 0.0,
            viscous_total: 0.0,
            plastic_total: 0.0,
        };
    };
    let e0 = first.kinetic;
    let mut first_violation = None;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut kinetic_sup: f64 = 0.0;
    for (n, s) in samples.iter().enumerate() {
        let lhs = s.kinetic + s.viscous_cum + s.plastic_cum;
        let rhs = e0 + s.forcing_cum + 1e-8 * e0 * n as f64;
        let excess = lhs - rhs;
        worst_excess = worst_excess.max(excess);
        if !(excess <= 0.0) && first_violation.is_none() {
            first_violation = Some(n);
        }
        kinetic_sup = kinetic_sup.max(s.kinetic);
    }
    let last = samples[samples.len() - 1];
    EnergyAudit {
        passed: first_violation.is_none(),
        first_violation,
        worst_excess,
        kinetic_sup,
        viscous_total: last.viscous_cum,
        plastic_total: last.plastic_cum,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidZoneReport {
    pub nx: usize,
    pub ny: usize,
    /// Cell mask, x-major (`i * ny + j`).
    pub mask: Vec<bool>,
    pub area_fraction: f64,
    /// Plug width of every cell column.
    pub widths: Vec<f64>,
}

impl RigidZoneReport {
    pub fn is_rigid(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.ny + j]
    }
}

/// Cells with `|D| ≤ tol_rigid`, and per column the length of the masked run
/// containing the midline.
pub fn rigid_zone(d: &SymTensorField, tol_rigid: f64) -> Result<RigidZoneReport> {
    if !(tol_rigid > 0.0) {
        return Err(Error::Parameter("tol_rigid must be positive"));
    }
    let g = *d.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mag = d.cell_magnitudes();
    let mut mask = Vec::with_capacity(nx * ny);
    for &m in mag.values().as_slice() {
        mask.push(m <= tol_rigid);
    }
    let count = mask.iter().filter(|&&m| m).count();
    let mid: &[usize] = if ny % 2 == 0 { &[ny / 2 - 1, ny / 2] } else { &[ny / 2] };
    let widths = (0..nx)
        .map(|i| {
            let col = &mask[i * ny..(i + 1) * ny];
            let mut best = 0;
            for &m in mid {
                if !col[m] {
                    continue;
                }
                let mut lo = m;
                while lo > 0 && col[lo - 1] {
                    lo -= 1;
                }
                let mut hi = m;
                while hi + 1 < ny && col[hi + 1] {
                    hi += 1;
                }
                best = best.max(hi - lo + 1);
            }
            best as f64 * g.hy()
        })
        .collect();
    Ok(RigidZoneReport {
        nx,
        ny,
        mask,
        area_fraction: count as f64 / (nx * ny) as f64,
        widths,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub mean_eq: f64,
    pub max_eq: f64,
    pub max_bound: f64,
    /// Largest `r_eq/(q ε)` over sites with `q > 0`.
    pub max_eq_ratio: f64,
}

/// Mean and max of the graph residuals over all storage sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSummary {
    pub mean_eq: f64,
    pub max_eq: f64,
    pub max_bound: f64,
}

/// Graph residuals of a stress/strain-rate pair over every storage site.
pub fn site_residuals(sigma: &SiteTensors, d: &SiteTensors, q: &SiteScalars) -> Result<ResidualSummary> {
    if sigma.grid() != d.grid() || q.grid() != d.grid() {
        return Err(Error::Contract("residual fields live on different grids"));
    }
    let sites = sigma
        .cells
        .iter()
        .zip(&d.cells)
        .zip(&q.cells)
        .chain(sigma.corners.iter().zip(&d.corners).zip(&q.corners));
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut max_eq: f64 = 0.0;
    let mut max_bound: f64 = 0.0;
    for ((s, dd), qq) in sites {
        let r = graph_residual(&GraphSample { sigma: *s, d: *dd, q: *qq });
        sum += r.eq;
        n += 1;
        max_eq = max_eq.max(r.eq);
        max_bound = max_bound.max(r.bound);
    }
    Ok(ResidualSummary {
        mean_eq: if n > 0 { sum / n as f64 } else { 0.0 },
        max_eq,
        max_bound,
    })
}

/// Regularized-stress residuals on a frozen `(q, D)` snapshot for each ε.
pub fn graph_limit_sweep(q: &SiteScalars, d: &SiteTensors, eps_list: &[f64]) -> Result<Vec<SweepRow>> {
    if q.grid() != d.grid() {
        return Err(Error::Contract("snapshot fields live on different grids"));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Parameter("eps values must be positive"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter("eps values must be strictly decreasing"));
    }
    let pairs: Vec<_> = d
        .cells
        .iter()
        .zip(&q.cells)
        .chain(d.corners.iter().zip(&q.corners))
        .collect();
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut sum = 0.0;
        let mut max_eq: f64 = 0.0;
        let mut max_bound: f64 = 0.0;
        let mut max_ratio: f64 = 0.0;
        for (dd, qq) in &pairs {
            let sigma = regularized_stress_unchecked(**qq, dd, eps);
            let r = graph_residual(&GraphSample { sigma, d: **dd, q: **qq });
            sum += r.eq;
            max_eq = max_eq.max(r.eq);
            max_bound = max_bound.max(r.bound);
            if **qq > 0.0 {
                max_ratio = max_ratio.max(r.eq / (**qq * eps));
            }
        }
        rows.push(SweepRow {
            eps,
            mean_eq: if pairs.is_empty() { 0.0 } else { sum / pairs.len() as f64 },
            max_eq,
            max_bound,
            max_eq_ratio: max_ratio,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub x: f64,
    /// Cell-centre heights.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

/// Horizontal velocity along vertical lines at the given abscissae, linear
/// in x between faces.
pub fn profile_extract(v: &StaggeredVelocity, stations: &[f64]) -> Result<Vec<Profile>> {
    let g = *v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = Vec::with_capacity(stations.len());
    for &x in stations {
        if !(x >= 0.0 && x <= g.lx()) {
            return Err(Error::Parameter("profile station outside the domain"));
        }
        let s = x / g.hx();
        let i = (s as usize).min(nx - 1);
        let w = s - i as f64;
        let u = v.u();
        out.push(Profile {
            x,
            y: (0..ny).map(|j| g.y_center(j)).collect(),
            u: (0..ny).map(|j| (1.0 - w) * u[(i, j)] + w * u[(i + 1, j)]).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sym_gradient, Closure, Grid, Sides, SymTensor};

    fn grid() -> Grid {
        Grid::new(8, 6, 2.0, 1.0).unwrap()
    }

    #[test]
    fn zero_run_audit() {
        let s = EnergySample {
            t: 0.0,
            kinetic: 0.0,
            viscous_cum: 0.0,
            plastic_cum: 0.0,
            forcing_cum: 0.0,
            divergence_max: 0.0,
            pf_min: 0.0,
            pf_max: 0.0,
            rigid_fraction: 1.0,
        };
        let a = energy_audit(&[s, EnergySample { t: 1.0, ..s }]);
        assert!(a.passed);
        assert_eq!((a.kinetic_sup, a.viscous_total, a.plastic_total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn audit_flags_first_violation() {
        let base = EnergySample {
            t: 0.0,
            kinetic: 1.0,
            viscous_cum: 0.0,
            plastic_cum: 0.0,
            forcing_cum: 0.0,
            divergence_max: 0.0,
            pf_min: 0.0,
            pf_max: 0.0,
            rigid_fraction: 0.0,
        };
        let ok = EnergySample { t: 1.0, kinetic: 0.5, viscous_cum: 0.4, ..base };
        let bad = EnergySample { t: 2.0, kinetic: 0.5, viscous_cum: 0.6, ..base };
        let a = energy_audit(&[base, ok, bad]);
        assert!(!a.passed);
        assert_eq!(a.first_violation, Some(2));
    }

    #[test]
    fn rigid_zone_basic_cases() {
        let g = grid();
        let closure = Sides::all(Closure::Neumann);
        let shear = StaggeredVelocity::from_fns(g, |_, y| y, |_, _| 0.0);
        let r = rigid_zone(&sym_gradient(&shear, &closure), 1e-3).unwrap();
        assert_eq!(r.area_fraction, 0.0);
        assert!(r.widths.iter().all(|w| *w == 0.0));
        let translate = StaggeredVelocity::from_fns(g, |_, _| 2.0, |_, _| -1.0);
        let r = rigid_zone(&sym_gradient(&translate, &closure), 1e-3).unwrap();
        assert_eq!(r.area_fraction, 1.0);
        assert!(r.widths.iter().all(|w| (*w - 1.0).abs() < 1e-15));
        assert!(rigid_zone(&SymTensorField::zeros(g), 0.0).is_err());
    }

    #[test]
    fn plug_width_counts_midline_run_only() {
        let g = Grid::new(4, 8, 1.0, 1.0).unwrap();
        let mut d = SymTensorField::zeros(g);
        for i in 0..4 {
            for j in [0, 1, 6, 7] {
                d.d11_mut()[(i, j)] = 1.0;
                d.d22_mut()[(i, j)] = -1.0;
            }
        }
        // column 0 also sheared on one middle cell
        d.d11_mut()[(0, 3)] = 1.0;
        d.d22_mut()[(0, 3)] = -1.0;
        let r = rigid_zone(&d, 1e-3).unwrap();
        assert!((r.widths[1] - 0.5).abs() < 1e-15);
        assert!((r.widths[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sweep_zero_yield_and_bound() {
        let g = grid();
        let closure = Sides::all(Closure::Neumann);
        let v = StaggeredVelocity::from_fns(g, |x, y| libm::sin(x + 2.0 * y), |x, y| x * y);
        let d = SiteTensors::from_field(&sym_gradient(&v, &closure));
        let zero = SiteScalars::from_cells(&CellScalar::zeros(g));
        for row in graph_limit_sweep(&zero, &d, &[1e-1, 1e-2]).unwrap() {
            assert_eq!((row.mean_eq, row.max_eq, row.max_bound), (0.0, 0.0, 0.0));
        }
        let q = SiteScalars::from_cells(&CellScalar::from_fn(g, |x, _| 0.1 + 0.1 * x));
        let rows = graph_limit_sweep(&q, &d, &[0.2, 0.1, 0.05]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].max_eq < w[0].max_eq);
            assert!(w[1].mean_eq < w[0].mean_eq);
        }
        for r in &rows {
            assert!(r.max_eq_ratio <= 1.0);
            assert_eq!(r.max_bound, 0.0);
        }
        assert!(graph_limit_sweep(&q, &d, &[0.1, 0.2]).is_err());
        assert!(graph_limit_sweep(&q, &d, &[0.0]).is_err());
    }

    #[test]
    fn residuals_of_exact_graph_member() {
        let g = grid();
        let mut d = SiteTensors::zeros(g);
        d.cells[0] = SymTensor::new(0.3, -0.3, 0.4);
        let q = SiteScalars::from_cells(&CellScalar::constant(g, 0.5));
        let mut s = SiteTensors::zeros(g);
        s.cells[0] = d.cells[0].scale(0.5 / d.cells[0].norm());
        let r = site_residuals(&s, &d, &q).unwrap();
        assert!(r.max_eq < 1e-15 && r.max_bound < 1e-15);
    }

    #[test]
    fn profiles_interpolate_linearly() {
        let g = grid();
        let v = StaggeredVelocity::from_fns(g, |x, y| 3.0 * x + y, |_, _| 0.0);
        let p = profile_extract(&v, &[0.0, 0.6, 2.0]).unwrap();
        for prof in &p {
            for (y, u) in prof.y.iter().zip(&prof.u) {
                assert!((u - (3.0 * prof.x + y)).abs() < 1e-12);
            }
        }
        assert!(profile_extract(&v, &[2.5]).is_err());
        assert!(profile_extract(&v, &[-0.1]).is_err());
    }
}
