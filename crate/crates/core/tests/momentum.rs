use std::f64::consts::PI;

use bingham_core::diagnostics::*;
use bingham_core::mesh::*;
use bingham_core::momentum::*;
use bingham_core::rheology::*;

fn free_slip_box(n: usize) -> (Grid, VelocityBoundarySpec) {
    let g = Grid::new(n, n, 1.0, 1.0).unwrap();
    (g, VelocityBoundarySpec::closed(VelocitySide::FreeSlip).unwrap())
}

// Taylor–Green mode: an exact Stokes eigenmode of the free-slip box, and
// discretely divergence-free when built from a corner stream function.
fn taylor_green(g: Grid, amp: f64) -> StaggeredVelocity {
    let psi = |x: f64, y: f64| amp * (PI * x).sin() * (PI * y).sin() / PI;
    stream_velocity(g, psi)
}

fn stream_velocity(g: Grid, psi: impl Fn(f64, f64) -> f64) -> StaggeredVelocity {
    let (nx, ny) = (g.nx(), g.ny());
    let u = Array2::from_fn(nx + 1, ny, |i, j| {
        (psi(g.x_face(i), g.y_face(j + 1)) - psi(g.x_face(i), g.y_face(j))) / g.hy()
    });
    let v = Array2::from_fn(nx, ny + 1, |i, j| {
        -(psi(g.x_face(i + 1), g.y_face(j)) - psi(g.x_face(i), g.y_face(j))) / g.hx()
    });
    StaggeredVelocity::from_parts(g, u, v).unwrap()
}

fn newtonian(params: &mut PhysicalParams, convection: bool) -> MomentumSettings {
    params.q0 = 0.0;
    MomentumSettings {
        mode: StressMode::Newtonian,
        convection,
        ..MomentumSettings::default()
    }
}

fn run(
    solver: &mut MomentumSolver,
    mut state: MomentumState,
    p_f: &CellScalar,
    dt: f64,
    steps: usize,
) -> MomentumState {
    let f = StaggeredVelocity::zeros(*solver.grid());
    for _ in 0..steps {
        let (next, report) = solver.step(&state, p_f, &f, dt).unwrap();
        assert!(report.divergence_max <= 1e-8, "{}", report.divergence_max);
        state = next;
    }
    state
}

fn l2(a: &StaggeredVelocity, b: &StaggeredVelocity) -> f64 {
    let d = StaggeredVelocity::combine(1.0, a, -1.0, b);
    d.inner(&d).unwrap().sqrt()
}

#[test]
fn stokes_mode_decays_at_analytic_rate() {
    let (g, bc) = free_slip_box(128);
    let mut params = PhysicalParams::channel();
    let settings = newtonian(&mut params, false);
    let mut solver = MomentumSolver::new(g, bc, params, settings).unwrap();
    let v0 = taylor_green(g, 1.0);
    let (dt, steps) = (1e-3, 100);
    let out = run(&mut solver, MomentumState::new(v0.clone()), &CellScalar::zeros(g), dt, steps);
    let amp = out.v_n.inner(&v0).unwrap() / v0.inner(&v0).unwrap();
    let exact = (-params.eta * 2.0 * PI * PI / params.rho * dt * steps as f64).exp();
    assert!((amp / exact - 1.0).abs() < 0.02, "{amp} vs {exact}");
}

#[test]
fn bdf2_is_second_order_in_time() {
    let (g, bc) = free_slip_box(32);
    let mut params = PhysicalParams::channel();
    params.eta = 0.05;
    let settings = newtonian(&mut params, true);
    // a superposition of modes so convection and pressure both matter
    let psi = |x: f64, y: f64| {
        (PI * x).sin() * (PI * y).sin() / PI + 0.5 * (2.0 * PI * x).sin() * (PI * y).sin() / PI
    };
    let v0 = stream_velocity(g, psi);
    let t_end = 0.2;
    let solve = |dt: f64| {
        let mut solver = MomentumSolver::new(g, bc, params, settings).unwrap();
        let steps = (t_end / dt).round() as usize;
        run(&mut solver, MomentumState::new(v0.clone()), &CellScalar::zeros(g), dt, steps).v_n
    };
    let reference = solve(2.5e-4);
    let errs: Vec<f64> = [4e-3, 2e-3, 1e-3].iter().map(|&dt| l2(&solve(dt), &reference)).collect();
    let order = ((errs[0] / errs[2]).log2()) / 2.0;
    assert!(order >= 1.8, "{errs:?} order {order}");
}

#[test]
fn newtonian_channel_keeps_poiseuille_profile() {
    let g = Grid::new(32, 16, 2.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::channel(1.0);
    let mut params = PhysicalParams::channel();
    let settings = newtonian(&mut params, true);
    let mut solver = MomentumSolver::new(g, bc, params, settings).unwrap();
    let v0 = bc.poiseuille_field(g);
    let out = run(&mut solver, MomentumState::new(v0.clone()), &CellScalar::zeros(g), 5e-3, 100);
    // the discrete steady state differs from the sampled parabola at O(h²)
    let diff = StaggeredVelocity::combine(1.0, &out.v_n, -1.0, &v0).max_abs();
    assert!(diff < 1e-2, "{diff}");
}

#[test]
fn projection_removes_gradient_part() {
    let g = Grid::new(24, 20, 1.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::closed(VelocitySide::NoSlip).unwrap();
    let solver = MomentumSolver::new(g, bc, PhysicalParams::channel(), MomentumSettings::default()).unwrap();
    let w = stream_velocity(g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2) * 50.0);
    let psi = CellScalar::from_fn(g, |x, y| (3.0 * x).sin() * y * y + x);
    let mut v_star = w.clone();
    v_star.axpy(1.0, &gradient_p(&psi));
    let (out, _) = solver.pressure_correct(&v_star, 1.0 / 0.01).unwrap();
    let err = StaggeredVelocity::combine(1.0, &out, -1.0, &w).max_abs();
    assert!(err < 1e-9, "{err}");
    assert!(divergence(&out).values().max_abs() <= 1e-8);
}

#[test]
fn zero_yield_equals_rheology_disabled_bitwise() {
    let g = Grid::new(32, 16, 2.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::channel(1.0);
    let mut params = PhysicalParams::channel();
    params.q0 = 0.0;
    let mut v0 = StaggeredVelocity::zeros(g);
    bc.apply_normal_values(&mut v0);
    let p_f = CellScalar::constant(g, 0.3);
    let mut a = MomentumSolver::new(g, bc, params, MomentumSettings::default()).unwrap();
    let proj = MomentumSettings {
        mode: StressMode::Projection,
        dual: DualIteration { r: 1.0, max_iters: 5, tol: 1e-8 },
        ..MomentumSettings::default()
    };
    let mut b = MomentumSolver::new(g, bc, params, proj).unwrap();
    let off = MomentumSettings {
        mode: StressMode::Newtonian,
        ..MomentumSettings::default()
    };
    let mut c = MomentumSolver::new(g, bc, params, off).unwrap();
    let sa = run(&mut a, MomentumState::new(v0.clone()), &p_f, 5e-3, 40);
    let sb = run(&mut b, MomentumState::new(v0.clone()), &p_f, 5e-3, 40);
    let sc = run(&mut c, MomentumState::new(v0), &p_f, 5e-3, 40);
    assert_eq!(sa.v_n, sc.v_n);
    assert_eq!(sa.p, sc.p);
    assert_eq!(sb.v_n, sc.v_n);
}

#[test]
fn restart_from_two_level_state_is_bitwise() {
    let g = Grid::new(32, 16, 2.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::channel(1.0);
    let params = PhysicalParams::channel();
    let p_f = CellScalar::from_fn(g, |x, _| (1.0 - x).max(0.0));
    let v0 = bc.poiseuille_field(g);
    let mut solver = MomentumSolver::new(g, bc, params, MomentumSettings::default()).unwrap();
    let mid = run(&mut solver, MomentumState::new(v0), &p_f, 5e-3, 10);
    let straight = run(&mut solver, mid.clone(), &p_f, 5e-3, 10);
    let mut fresh = MomentumSolver::new(g, bc, params, MomentumSettings::default()).unwrap();
    let restarted = run(&mut fresh, mid, &p_f, 5e-3, 10);
    assert_eq!(straight, restarted);
}

#[test]
fn bootstrap_of_zero_data_is_zero() {
    let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::closed(VelocitySide::NoSlip).unwrap();
    let mut solver = MomentumSolver::new(g, bc, PhysicalParams::channel(), MomentumSettings::default()).unwrap();
    let zero = StaggeredVelocity::zeros(g);
    let state = MomentumState::new(zero.clone());
    let (next, report) = solver.bootstrap_first_step(&state, &CellScalar::zeros(g), &zero, 1e-2).unwrap();
    assert_eq!(report.order, TimeOrder::Bdf1);
    assert_eq!(next.v_n.max_abs(), 0.0);
    assert!(solver.bootstrap_first_step(&next, &CellScalar::zeros(g), &zero, 1e-2).is_err());
    let (_, second) = solver.step(&next, &CellScalar::zeros(g), &zero, 1e-2).unwrap();
    assert_eq!(second.order, TimeOrder::Bdf2);
}

fn audit_closed_box(settings: MomentumSettings, wall: VelocitySide, dt: f64, steps: usize) -> (EnergyAudit, Vec<f64>, f64) {
    let g = Grid::new(32, 32, 1.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::closed(wall).unwrap();
    let params = PhysicalParams::channel();
    let mut solver = MomentumSolver::new(g, bc, params, settings).unwrap();
    let p_f = CellScalar::zeros(g);
    let f = StaggeredVelocity::zeros(g);
    let mut state = MomentumState::new(stream_velocity(g, |x, y| ((PI * x).sin() * (PI * y).sin()).powi(2) / PI));
    let mut rec = EnergyRecorder::new();
    rec.record_initial(0.0, energy_rates(&solver, &state, &f), 0.0, &p_f, 0.0);
    let mut worst_plastic = f64::INFINITY;
    for _ in 0..steps {
        let (next, report) = solver.step(&state, &p_f, &f, dt).unwrap();
        assert!(report.divergence_max <= 1e-8);
        state = next;
        let rates = energy_rates(&solver, &state, &f);
        worst_plastic = worst_plastic.min(rates.plastic);
        rec.record_step(state.t, dt, rates, report.divergence_max, &p_f, 0.0);
    }
    let kin: Vec<f64> = rec.samples().iter().map(|s| s.kinetic).collect();
    (energy_audit(rec.samples()), kin, worst_plastic)
}

#[test]
fn energy_audit_holds_in_closed_bingham_box() {
    let sites = (33.0 * 33.0) + 32.0 * 32.0;
    for mode in [StressMode::Regularized { eps: 1e-3 }, StressMode::Projection] {
        for wall in [VelocitySide::NoSlip, VelocitySide::FreeSlip] {
            let settings = MomentumSettings {
                mode,
                ..MomentumSettings::default()
            };
            let (audit, _, plastic) = audit_closed_box(settings, wall, 5e-3, 60);
            assert!(audit.passed, "{mode:?} {wall:?} {audit:?}");
            assert!(plastic >= -1e-12 * sites, "{plastic}");
        }
    }
}

#[test]
fn kinetic_energy_decreases_at_dual_convergence() {
    // a capped loop lets the multiplier overshoot as the flow stops; once it
    // converges each step the fluid stays at rest (BDF2 itself can overshoot
    // a sudden stop when Δt is much larger)
    let dual = DualIteration { r: 10.0, max_iters: 400, tol: 1e-10 };
    for mode in [StressMode::Regularized { eps: 1e-3 }, StressMode::Projection] {
        let settings = MomentumSettings {
            mode,
            dual,
            ..MomentumSettings::default()
        };
        let (audit, kin, _) = audit_closed_box(settings, VelocitySide::NoSlip, 2e-3, 100);
        assert!(audit.passed);
        let e0 = kin[0];
        for (k, w) in kin.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-8 * e0, "{mode:?} step {k}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn uzawa_interior_step_is_exact_and_rigid_sites_keep_lambda() {
    let g = Grid::new(6, 5, 1.0, 1.0).unwrap();
    let closure = VelocityBoundarySpec::closed(VelocitySide::NoSlip).unwrap().tangential_closure();
    let q = SiteScalars::from_cells(&CellScalar::constant(g, 0.5));
    let mut lambda = SiteTensors::zeros(g);
    for t in lambda.cells.iter_mut().chain(lambda.corners.iter_mut()) {
        *t = SymTensor::new(0.3, -0.3, 0.2);
    }
    let zero = StaggeredVelocity::zeros(g);
    let same = bingham_update_projection(&q, &zero, &closure, &lambda, 1.0).unwrap();
    assert_eq!(same.lambda, lambda);
    assert_eq!(same.max_increment, 0.0);

    // small shear: every site stays inside the unit ball
    let shear = StaggeredVelocity::from_fns(g, |_, y| 0.01 * y, |_, _| 0.0);
    let d = SiteTensors::from_field(&sym_gradient(&shear, &closure));
    let upd = bingham_update_projection(&q, &shear, &closure, &lambda, 2.0).unwrap();
    for k in 0..lambda.cells.len() {
        let want = lambda.cells[k].add(&d.cells[k].scale(2.0));
        assert!(upd.lambda.cells[k].sub(&want).norm() < 1e-15);
    }
    for k in 0..lambda.corners.len() {
        let want = lambda.corners[k].add(&d.corners[k].scale(2.0));
        assert!(upd.lambda.corners[k].sub(&want).norm() < 1e-15);
        assert!((upd.sigma.d12().as_slice()[k] - 0.5 * upd.lambda.corners[k].xy).abs() < 1e-15);
    }
}

// channel with a Bingham plug, run until the flow has settled
fn settled_channel(mode: StressMode) -> (MomentumSolver, MomentumState) {
    let g = Grid::new(32, 32, 2.0, 1.0).unwrap();
    let bc = VelocityBoundarySpec::channel(1.0);
    let settings = MomentumSettings {
        mode,
        ..MomentumSettings::default()
    };
    // a stronger yield than the channel default widens the plug to a few cells
    let mut params = PhysicalParams::channel();
    params.q0 = 0.5;
    let mut solver = MomentumSolver::new(g, bc, params, settings).unwrap();
    let state = run(&mut solver, MomentumState::new(bc.poiseuille_field(g)), &CellScalar::zeros(g), 1e-2, 800);
    (solver, state)
}

#[test]
fn regularized_profiles_approach_projection_profile() {
    let (_, reference) = settled_channel(StressMode::Projection);
    let dists: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| l2(&settled_channel(StressMode::Regularized { eps }).1.v_n, &reference.v_n))
        .collect();
    for w in dists.windows(2) {
        assert!(w[1] < w[0], "{dists:?}");
    }
}

#[test]
fn rigid_mask_is_symmetric_about_midline() {
    for mode in [StressMode::Regularized { eps: 1e-3 }, StressMode::Projection] {
        let (solver, state) = settled_channel(mode);
        let d = sym_gradient(&state.v_n, solver.closure());
        let rz = rigid_zone(&d, 1e-2).unwrap();
        let ny = rz.ny;
        assert!(rz.area_fraction > 0.0, "{mode:?}");
        for i in 0..rz.nx {
            let lo = (0..ny).position(|j| rz.is_rigid(i, j));
            let hi = (0..ny).rev().position(|j| rz.is_rigid(i, j));
            if let (Some(lo), Some(hi)) = (lo, hi) {
                assert!(lo.abs_diff(hi) <= 1, "{mode:?} station {i}: {lo} vs {hi}");
            }
        }
    }
}

#[test]
fn settled_projection_run_lies_on_the_graph() {
    let (solver, state) = settled_channel(StressMode::Projection);
    let (_, q) = solver.yield_sites(&CellScalar::zeros(*solver.grid())).unwrap();
    for t in state.lambda.cells.iter().chain(&state.lambda.corners) {
        assert!(t.norm() <= 1.0 + 1e-12);
    }
    let mut sigma = state.lambda.clone();
    for (t, qq) in sigma.cells.iter_mut().zip(&q.cells).chain(sigma.corners.iter_mut().zip(&q.corners)) {
        *t = t.scale(*qq);
    }
    let d = SiteTensors::from_field(&sym_gradient(&state.v_n, solver.closure()));
    let d_max = d.max_norm();
    let r = site_residuals(&sigma, &d, &q).unwrap();
    assert!(r.max_bound <= 1e-12, "{r:?}");
    assert!(r.mean_eq <= 1e-6 * q.max() * d_max, "{r:?} {d_max}");
}
