//! Bingham constitutive graph with a pressure-dependent yield stress.
//!
//! The yield is `q = q0 (p_s − p_f)⁺`. A stress `σ` is admissible for a
//! strain rate `D` when `σ:D = q|D|` and `|σ| ≤ q`; on `D ≠ 0` this forces
//! `σ = q D/|D|`, on `D = 0` any `|σ| ≤ q` is allowed. The regularized map
//! `σ = q D/(|D| + ε)` is single-valued and converges to that graph.

use crate::mesh::{CellScalar, Grid};
use crate::{Error, Result};

pub use crate::mesh::SymTensor;

/// How the solid (lithostatic) pressure is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolidPressure {
    /// `p_s = ps0 + ρ |g| (y0 − y)`.
    Lithostatic,
    /// Spatially uniform `p_s`.
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Density (kg/m³).
    pub rho: f64,
    /// Newtonian viscosity (Pa·s).
    pub eta: f64,
    /// Yield multiplier of the pressure difference (dimensionless).
    pub q0: f64,
    /// Pore-pressure diffusivity (m²/s).
    pub diffusivity: f64,
    /// Solid pressure at the reference altitude (Pa).
    pub ps0: f64,
    /// Reference altitude (m).
    pub y0: f64,
    /// Gravity magnitude (m/s²).
    pub g_mag: f64,
    pub ps_mode: SolidPressure,
}

impl PhysicalParams {
    /// Nondimensional channel coefficients: unit density and viscosity,
    /// yield multiplier 0.2, diffusivity 0.1, `p_s ≡ 1`.
    pub fn channel() -> Self {
        Self {
            rho: 1.0,
            eta: 1.0,
            q0: 0.2,
            diffusivity: 0.1,
            ps0: 1.0,
            y0: 0.0,
            g_mag: 0.0,
            ps_mode: SolidPressure::Constant(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho, self.eta, self.q0, self.diffusivity, self.ps0, self.y0, self.g_mag]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Parameter("physical parameters must be finite"));
        }
        if self.rho <= 0.0 {
            return Err(Error::Parameter("rho must be positive"));
        }
        if self.eta <= 0.0 {
            return Err(Error::Parameter("eta must be positive"));
        }
        if self.q0 < 0.0 {
            return Err(Error::Parameter("q0 must be non-negative"));
        }
        if self.diffusivity <= 0.0 {
            return Err(Error::Parameter("diffusivity must be positive"));
        }
        if self.g_mag < 0.0 || self.ps0 < 0.0 {
            return Err(Error::Parameter("g_mag and ps0 must be non-negative"));
        }
        if let SolidPressure::Constant(c) = self.ps_mode {
            if !c.is_finite() {
                return Err(Error::Parameter("constant solid pressure must be finite"));
            }
        }
        Ok(())
    }
}

/// Solid pressure at altitude `y`.
pub fn lithostatic_pressure(y: f64, params: &PhysicalParams) -> f64 {
    match params.ps_mode {
        SolidPressure::Lithostatic => params.ps0 + params.rho * params.g_mag * (params.y0 - y),
        SolidPressure::Constant(c) => c,
    }
}

/// `p_s` sampled at cell centres.
pub fn solid_pressure_field(grid: Grid, params: &PhysicalParams) -> CellScalar {
    CellScalar::from_fn(grid, |_, y| lithostatic_pressure(y, params))
}

/// `q = q0 (p_s − p_f)⁺` per cell.
pub fn yield_field(p_f: &CellScalar, p_s: &CellScalar, params: &PhysicalParams) -> Result<CellScalar> {
    if p_f.grid() != p_s.grid() {
        return Err(Error::Contract("p_f and p_s live on different grids"));
    }
    let mut q = p_s.clone();
    for (qv, pf) in q.values_mut().as_mut_slice().iter_mut().zip(p_f.values().as_slice()) {
        *qv = params.q0 * (*qv - pf).max(0.0);
    }
    Ok(q)
}

/// `σ = q D / (|D| + ε)`.
pub fn regularized_stress(q: f64, d: &SymTensor, eps: f64) -> Result<SymTensor> {
    if !(eps > 0.0) {
        return Err(Error::Parameter("regularization eps must be positive"));
    }
    Ok(regularized_stress_unchecked(q, d, eps))
}

#[inline]
pub(crate) fn regularized_stress_unchecked(q: f64, d: &SymTensor, eps: f64) -> SymTensor {
    d.scale(q / (d.norm() + eps))
}

/// `σ = q D/|D|`, and the zero tensor on `D = 0`.
pub fn exact_stress(q: f64, d: &SymTensor) -> SymTensor {
    let n = d.norm();
    if n > 0.0 {
        d.scale(q / n)
    } else {
        SymTensor::ZERO
    }
}

/// A point `(σ, D, q)` to be tested against the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphSample {
    pub sigma: SymTensor,
    pub d: SymTensor,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphResidual {
    /// `|σ:D − q|D||`.
    pub eq: f64,
    /// `max(|σ| − q, 0)`.
    pub bound: f64,
}

pub fn graph_residual(s: &GraphSample) -> GraphResidual {
    GraphResidual {
        eq: (s.sigma.ddot(&s.d) - s.q * s.d.norm()).abs(),
        bound: (s.sigma.norm() - s.q).max(0.0),
    }
}

/// `(σ1 − σ2):(D1 − D2)` for two samples sharing the same yield.
pub fn monotonicity_gap(s1: &GraphSample, s2: &GraphSample) -> Result<f64> {
    if s1.q != s2.q {
        return Err(Error::Contract("monotonicity gap needs a common yield value"));
    }
    Ok(s1.sigma.sub(&s2.sigma).ddot(&s1.d.sub(&s2.d)))
}

/// Membership verdicts of the two equivalent descriptions of the graph,
/// both evaluated with tolerance `tol`; true when they agree.
///
/// Direct form: `σ = q D/|D|` if `D ≠ 0`, `|σ| ≤ q` if `D = 0`.
/// Variational form: `σ:D = q|D|` and `|σ| ≤ q`.
pub fn check_equivalence(s: &GraphSample, tol: f64) -> bool {
    let dn = s.d.norm();
    let sn = s.sigma.norm();
    let direct = if dn > tol {
        s.sigma.sub(&s.d.scale(s.q / dn)).norm() <= tol
    } else {
        sn <= s.q + tol
    };
    let variational = (s.sigma.ddot(&s.d) - s.q * dn).abs() <= tol * dn.max(1.0) && sn <= s.q + tol;
    direct == variational
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lithostatic_values() {
        let mut p = PhysicalParams::channel();
        p.ps_mode = SolidPressure::Lithostatic;
        p.rho = 2.0;
        p.g_mag = 10.0;
        p.y0 = 1.0;
        p.ps0 = 5.0;
        assert_eq!(lithostatic_pressure(1.0, &p), 5.0);
        assert_eq!(lithostatic_pressure(0.0, &p), 25.0);
        p.ps_mode = SolidPressure::Constant(1.0);
        assert_eq!(lithostatic_pressure(-3.0, &p), 1.0);
    }

    #[test]
    fn yield_values() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let params = PhysicalParams::channel();
        let ps = CellScalar::constant(g, 1.0);
        let q = yield_field(&CellScalar::constant(g, 0.0), &ps, &params).unwrap();
        assert!((q.max() - 0.2).abs() < 1e-15 && (q.min() - 0.2).abs() < 1e-15);
        let q = yield_field(&CellScalar::constant(g, 0.3), &ps, &params).unwrap();
        assert!((q.max() - 0.14).abs() < 1e-15);
        let q = yield_field(&CellScalar::constant(g, 1.7), &ps, &params).unwrap();
        assert_eq!(q.max(), 0.0);
    }

    #[test]
    fn regularized_hand_value() {
        let d = SymTensor::new(0.5, -0.5, 0.0);
        let s = regularized_stress(0.2, &d, 0.1).unwrap();
        let factor = 0.2 / (libm::sqrt(0.5) + 0.1);
        assert!((s.xx - 0.5 * factor).abs() < 1e-15);
        assert!((s.xx - 0.123_90).abs() < 1e-5);
        assert!((s.yy + 0.123_90).abs() < 1e-5);
        assert_eq!(regularized_stress(0.2, &SymTensor::ZERO, 0.1).unwrap(), SymTensor::ZERO);
        assert!(regularized_stress(0.2, &d, 0.0).is_err());
        assert!(regularized_stress(0.2, &d, -1.0).is_err());
    }

    #[test]
    fn exact_stress_is_unit_direction() {
        assert_eq!(exact_stress(0.4, &SymTensor::ZERO), SymTensor::ZERO);
        let s = exact_stress(1.0, &SymTensor::new(3.0, 0.0, 0.0));
        assert!((s.norm() - 1.0).abs() < 1e-15);
        let r = graph_residual(&GraphSample {
            sigma: s,
            d: SymTensor::new(3.0, 0.0, 0.0),
            q: 1.0,
        });
        assert!(r.eq < 1e-15 && r.bound == 0.0);
    }

    #[test]
    fn doubled_stress_exceeds_bound_by_q() {
        let d = SymTensor::new(0.3, -0.1, 0.7);
        let q = 0.25;
        let r = graph_residual(&GraphSample {
            sigma: d.scale(2.0 * q / d.norm()),
            d,
            q,
        });
        assert!((r.bound - q).abs() < 1e-15);
    }

    #[test]
    fn regularized_equation_residual_identity() {
        let d = SymTensor::new(0.3, 0.2, -0.4);
        let (q, eps) = (0.7, 0.05);
        let r = graph_residual(&GraphSample {
            sigma: regularized_stress(q, &d, eps).unwrap(),
            d,
            q,
        });
        let n = d.norm();
        assert!((r.eq - q * eps * n / (n + eps)).abs() < 1e-15);
        assert!(r.eq <= q * eps);
        assert_eq!(r.bound, 0.0);
    }

    #[test]
    fn gap_requires_common_yield() {
        let a = GraphSample {
            sigma: SymTensor::ZERO,
            d: SymTensor::ZERO,
            q: 1.0,
        };
        let b = GraphSample { q: 2.0, ..a };
        assert!(matches!(monotonicity_gap(&a, &b), Err(Error::Contract(_))));
        assert_eq!(monotonicity_gap(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn equivalence_special_cases() {
        let any_d = SymTensor::new(1.0, 2.0, -0.5);
        let zero_yield = GraphSample {
            sigma: SymTensor::ZERO,
            d: any_d,
            q: 0.0,
        };
        assert!(check_equivalence(&zero_yield, 1e-12));
        let rigid = GraphSample {
            sigma: SymTensor::new(0.1, -0.1, 0.0).scale(0.5 / libm::sqrt(0.02)),
            d: SymTensor::ZERO,
            q: 1.0,
        };
        assert!((rigid.sigma.norm() - 0.5).abs() < 1e-12);
        assert!(check_equivalence(&rigid, 1e-12));
    }
}
