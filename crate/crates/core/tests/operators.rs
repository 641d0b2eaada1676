use std::f64::consts::PI;

use bingham_core::mesh::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dirichlet0() -> TangentialClosure {
    Sides::all(Closure::Dirichlet(0.0))
}

/// Random velocity vanishing on every boundary face and in the first ring
/// of interior faces.
fn interior_velocity(g: Grid, rng: &mut ChaCha8Rng) -> StaggeredVelocity {
    let (nx, ny) = (g.nx(), g.ny());
    let mut v = StaggeredVelocity::zeros(g);
    for i in 2..nx - 1 {
        for j in 1..ny - 1 {
            v.u_mut()[(i, j)] = rng.gen_range(-1.0..1.0);
        }
    }
    for i in 1..nx - 1 {
        for j in 2..ny - 1 {
            v.v_mut()[(i, j)] = rng.gen_range(-1.0..1.0);
        }
    }
    v
}

fn random_velocity(g: Grid, rng: &mut ChaCha8Rng) -> StaggeredVelocity {
    let (nx, ny) = (g.nx(), g.ny());
    let u = Array2::from_fn(nx + 1, ny, |_, _| rng.gen_range(-1.0..1.0));
    let v = Array2::from_fn(nx, ny + 1, |_, _| rng.gen_range(-1.0..1.0));
    StaggeredVelocity::from_parts(g, u, v).unwrap()
}

fn random_tensor(g: Grid, rng: &mut ChaCha8Rng) -> SymTensorField {
    let (nx, ny) = (g.nx(), g.ny());
    let mut r = |a, b| Array2::from_fn(a, b, |_, _| rng.gen_range(-1.0..1.0));
    let d11 = r(nx, ny);
    let d22 = r(nx, ny);
    let d12 = r(nx + 1, ny + 1);
    SymTensorField::from_parts(g, d11, d22, d12).unwrap()
}

#[test]
fn div_tensor_is_negative_adjoint_of_sym_gradient() {
    let g = Grid::new(64, 32, 2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let v = interior_velocity(g, &mut rng);
        let s = random_tensor(g, &mut rng);
        let lhs = s.inner(&sym_gradient(&v, &dirichlet0())).unwrap();
        let rhs = -div_tensor(&s).inner(&v).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn adjointness_holds_up_to_no_slip_walls() {
    // any velocity with zero normal boundary values and homogeneous
    // tangential ghosts
    let g = Grid::new(24, 16, 1.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut v = random_velocity(g, &mut rng);
    for j in 0..16 {
        v.u_mut()[(0, j)] = 0.0;
        v.u_mut()[(24, j)] = 0.0;
    }
    for i in 0..24 {
        v.v_mut()[(i, 0)] = 0.0;
        v.v_mut()[(i, 16)] = 0.0;
    }
    let s = random_tensor(g, &mut rng);
    let lhs = s.inner(&sym_gradient(&v, &dirichlet0())).unwrap();
    let rhs = -div_tensor(&s).inner(&v).unwrap();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn gradient_is_negative_adjoint_of_divergence() {
    let g = Grid::new(64, 32, 2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v = interior_velocity(g, &mut rng);
    let p = CellScalar::from_fn(g, |x, y| (3.0 * x).sin() * y + x * x);
    let lhs = gradient_p(&p).inner(&v).unwrap();
    let rhs = -p.inner(&divergence(&v)).unwrap();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn affine_exactness() {
    let g = Grid::new(9, 7, 1.3, 0.7).unwrap();
    let closure = Sides::all(Closure::Neumann);
    let v = StaggeredVelocity::from_fns(g, |x, y| 0.5 + 2.0 * x - 3.0 * y, |x, y| -1.0 + 4.0 * x - 2.0 * y);
    let div = divergence(&v);
    for &d in div.values().as_slice() {
        assert!(d.abs() < 1e-12);
    }
    let d = sym_gradient(&v, &closure);
    for i in 0..9 {
        for j in 0..7 {
            assert!((d.d11()[(i, j)] - 2.0).abs() < 1e-12);
            assert!((d.d22()[(i, j)] + 2.0).abs() < 1e-12);
        }
    }
    for i in 1..9 {
        for j in 1..7 {
            assert!((d.d12()[(i, j)] - 0.5).abs() < 1e-12);
        }
    }
    let p = CellScalar::from_fn(g, |x, y| 1.0 + x - 2.0 * y);
    let gp = gradient_p(&p);
    for i in 1..9 {
        for j in 0..7 {
            assert!((gp.u()[(i, j)] - 1.0).abs() < 1e-12);
        }
    }
    for i in 0..9 {
        for j in 1..7 {
            assert!((gp.v()[(i, j)] + 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn laplacian_exact_on_quadratics_in_the_interior() {
    let g = Grid::new(10, 8, 1.0, 1.0).unwrap();
    let s = CellScalar::from_fn(g, |x, y| x * x - 0.5 * y * y + x * y);
    let l = laplacian_scalar(&s, &Sides::all(Closure::Dirichlet(0.0)));
    for i in 1..9 {
        for j in 1..7 {
            assert!((l.values()[(i, j)] - 1.0).abs() < 1e-10);
        }
    }
    let c = laplacian_scalar(&CellScalar::constant(g, 4.2), &Sides::all(Closure::Neumann));
    assert!(c.values().max_abs() < 1e-10);
}

fn order(errors: &[f64]) -> f64 {
    let n = errors.len();
    (errors[n - 2] / errors[n - 1]).log2()
}

fn l2(values: impl Iterator<Item = f64>, area: f64) -> f64 {
    (values.map(|e| e * e).sum::<f64>() * area).sqrt()
}

#[test]
fn laplacian_eigenfunction_second_order() {
    let mut errs = Vec::new();
    for n in [32, 64, 128] {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        let f = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let s = CellScalar::from_fn(g, f);
        let l = laplacian_scalar(&s, &Sides::all(Closure::Dirichlet(0.0)));
        let e = l
            .values()
            .as_slice()
            .iter()
            .zip(s.values().as_slice())
            .map(|(a, b)| a + 2.0 * PI * PI * b);
        errs.push(l2(e, g.cell_area()));
    }
    assert!(order(&errs) >= 1.9, "{errs:?}");
}

#[test]
fn operators_converge_at_second_order_on_smooth_fields() {
    let (mut e_div, mut e_d12, mut e_tdiv, mut e_grad) = (vec![], vec![], vec![], vec![]);
    let u = |x: f64, y: f64| (2.0 * x).sin() * (3.0 * y).cos();
    let v = |x: f64, y: f64| (x + y).cos() * y;
    for n in [32, 64, 128] {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        let vel = StaggeredVelocity::from_fns(g, u, v);
        let div = divergence(&vel);
        let exact_div = |x: f64, y: f64| 2.0 * (2.0 * x).cos() * (3.0 * y).cos() - (x + y).sin() * y + (x + y).cos();
        e_div.push(l2(
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| div.values()[(i, j)] - exact_div(g.x_center(i), g.y_center(j))),
            g.cell_area(),
        ));
        let d = sym_gradient(&vel, &Sides::all(Closure::Neumann));
        let exact_d12 = |x: f64, y: f64| 0.5 * (-3.0 * (2.0 * x).sin() * (3.0 * y).sin() - (x + y).sin() * y);
        e_d12.push(l2(
            (1..n).flat_map(|i| (1..n).map(move |j| (i, j))).map(|(i, j)| d.d12()[(i, j)] - exact_d12(g.x_face(i), g.y_face(j))),
            g.cell_area(),
        ));
        // div of the tensor (x², y², xy·sin) on interior u faces
        let d11 = Array2::from_fn(n, n, |i, j| g.x_center(i).powi(2) * g.y_center(j));
        let d22 = Array2::from_fn(n, n, |_, j| g.y_center(j).powi(2));
        let d12 = Array2::from_fn(n + 1, n + 1, |i, j| (g.x_face(i) * g.y_face(j)).sin());
        let t = SymTensorField::from_parts(g, d11, d22, d12).unwrap();
        let dt = div_tensor(&t);
        let exact_x = |x: f64, y: f64| 2.0 * x * y + x * (x * y).cos();
        e_tdiv.push(l2(
            (1..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dt.u()[(i, j)] - exact_x(g.x_face(i), g.y_center(j))),
            g.cell_area(),
        ));
        let p = CellScalar::from_fn(g, |x, y| (x * y).exp());
        let gp = gradient_p(&p);
        e_grad.push(l2(
            (1..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| {
                let (x, y) = (g.x_face(i), g.y_center(j));
                gp.u()[(i, j)] - y * (x * y).exp()
            }),
            g.cell_area(),
        ));
    }
    for (name, e) in [("div", &e_div), ("d12", &e_d12), ("div_tensor", &e_tdiv), ("grad", &e_grad)] {
        assert!(order(e) >= 1.9, "{name}: {e:?}");
    }
}

#[test]
fn trace_of_strain_equals_divergence() {
    let g = Grid::new(12, 10, 1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_velocity(g, &mut rng);
    let d = sym_gradient(&v, &dirichlet0());
    let div = divergence(&v);
    for i in 0..12 {
        for j in 0..10 {
            assert!((d.d11()[(i, j)] + d.d22()[(i, j)] - div.values()[(i, j)]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjointness_on_random_grids(nx in 6usize..20, ny in 6usize..20, lx in 0.5f64..3.0, ly in 0.5f64..3.0, seed in 0u64..1000) {
        let g = Grid::new(nx, ny, lx, ly).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = interior_velocity(g, &mut rng);
        let s = random_tensor(g, &mut rng);
        let lhs = s.inner(&sym_gradient(&v, &dirichlet0())).unwrap();
        let rhs = -div_tensor(&s).inner(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn gradient_duality_on_random_grids(nx in 6usize..20, ny in 6usize..20, seed in 0u64..1000) {
        let g = Grid::new(nx, ny, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = interior_velocity(g, &mut rng);
        let p = CellScalar::from_array(g, Array2::from_fn(nx, ny, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let lhs = gradient_p(&p).inner(&v).unwrap();
        let rhs = -p.inner(&divergence(&v)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn cell_magnitude_is_nonnegative_and_scales(seed in 0u64..1000, c in -5.0f64..5.0) {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(g, &mut rng);
        let mut scaled = t.clone();
        scaled.d11_mut().as_mut_slice().iter_mut().for_each(|x| *x *= c);
        scaled.d22_mut().as_mut_slice().iter_mut().for_each(|x| *x *= c);
        scaled.d12_mut().as_mut_slice().iter_mut().for_each(|x| *x *= c);
        for i in 0..6 { for j in 0..6 {
            let m = t.cell_magnitude(i, j);
            prop_assert!(m >= 0.0);
            prop_assert!((scaled.cell_magnitude(i, j) - c.abs() * m).abs() <= 1e-12 * (1.0 + m));
        }}
    }
}
