//! Solution paths on the built-in scenarios and small oracle problems.

use dcfem::assembly::{assemble, assemble_rhs, system_matrix, EdgePath, SourceSpec};
use dcfem::dc_solver::{
    build_global_v0, solve_dc_layered, solve_dc_projected, solve_dc_schur2, solve_direct, Method, ReducedSystem,
};
use dcfem::linalg::{complexify, norm, relative_error, AccurateOperator, CMatrix, CVector, ComplexLu, SplitOperator};
use dcfem::mesh::{build_mesh, conductor_components, discrete_gradient, partition_layers, Axis, BoundarySpec, GridSpec};
use dcfem::pipeline::{global_nullspace, layer_nullspaces, run, schur2_regions};
use dcfem::postprocess::{capacitance, extract_voltage, ProbePath};
use dcfem::scenario::{builtin, parallel_plate, MethodName, ScenarioConfig};
use dcfem::spectral::{generalized_eig, modal_solution};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn with_methods(mut cfg: ScenarioConfig, methods: &[MethodName]) -> ScenarioConfig {
    cfg.methods = methods.to_vec();
    cfg
}

fn dc_error_at(freq: f64) -> f64 {
    let mut cfg = with_methods(builtin("parallel_plate").unwrap(), &[MethodName::Direct, MethodName::DcProjected]);
    cfg.source.frequency_hz = freq;
    run(&cfg, None).unwrap().report(Method::DcProjected).unwrap().error_vs(Method::Direct).unwrap()
}

#[test]
fn dc_error_shrinks_with_frequency() {
    let e20 = dc_error_at(20e9);
    let e2 = dc_error_at(2e9);
    let e05 = dc_error_at(0.5e9);
    assert!(e2 < e20 && e05 < e2, "{e20:e} {e2:e} {e05:e}");
    // modal truncation scales with ω²
    assert!((e20 / e2 / 100.0 - 1.0).abs() < 0.05, "{}", e20 / e2);
}

#[test]
fn global_basis_shape_and_nonzero_projection() {
    let cfg = builtin("parallel_plate").unwrap();
    let prepared = cfg.prepare().unwrap();
    let layers = layer_nullspaces(&prepared.mesh, &prepared.partition).unwrap();
    let v0 = global_nullspace(&prepared.partition, &layers).unwrap();
    let dense = v0.dense();
    assert_eq!(dense.shape(), (188, 105));
    assert_eq!(v0.block_sizes(), vec![21; 5]);
    assert_eq!(dcfem::linalg::rank(&dense, 1e-10), 105);
    let s = assemble(&prepared.mesh).stiffness;
    let proj = dense.transpose() * &s * &dense;
    assert!(proj.abs().max() > 1e-6 * s.abs().max());
}

#[test]
fn direct_solution_is_at_the_representation_limit() {
    let cfg = builtin("parallel_plate").unwrap();
    let prepared = cfg.prepare().unwrap();
    let sys = assemble(&prepared.mesh);
    let omega = cfg.omega();
    let src = SourceSpec::along(&prepared.mesh, &cfg.source.path.into(), 1.0, omega).unwrap();
    let b = assemble_rhs(&src, 188).unwrap().rhs;
    let a = system_matrix(&sys, omega);
    let op = SplitOperator { stiffness: &sys.stiffness, mass: &sys.mass, loss: &sys.loss, omega };
    let x = solve_direct(&a, &b, Some(&op)).unwrap().x;
    let r = norm(&op.residual(&x, &b));
    let a_norm = a.clone().svd(false, false).singular_values.max();
    // normwise backward error
    assert!(r / (a_norm * norm(&x) + norm(&b)) <= 1e-15);
    // a one-ulp perturbation of x already leaves a larger residual
    let bumped = CVector::from_fn(188, |i, _| x[i] * if i % 2 == 0 { 1.0 + f64::EPSILON } else { 1.0 - f64::EPSILON / 2.0 });
    assert!(norm(&op.residual(&bumped, &b)) > r);
    // plain LU without the split residual is visibly worse at low frequency
    let plain = ComplexLu::new(&a).unwrap().solve(&b);
    assert!(relative_error(&plain, &x).unwrap() > 1e-8);
}

#[test]
fn two_bus_residual() {
    let cfg = with_methods(builtin("two_bus").unwrap(), &[MethodName::Direct]);
    let result = run(&cfg, None).unwrap();
    assert!(result.direct_residual.unwrap() <= 1e-10);
}

#[test]
fn modal_static_limit_is_gradient_free_pseudo_inverse() {
    let mesh = build_mesh(&GridSpec::uniform([1, 1, 1], [1.0, 1.0, 1.0]), &BoundarySpec::natural(), &[]).unwrap();
    let sys = assemble(&mesh);
    let g = discrete_gradient(&mesh, &conductor_components(&mesh));
    assert_eq!(g.ncols(), 7);
    let dec = generalized_eig(&sys.stiffness, &sys.mass).unwrap();
    let z = DMatrix::from_fn(12, 1, |i, _| (i as f64 * 0.7).sin() + 0.3);
    let b_real = &sys.stiffness * &z;
    let b = complexify(&b_real).column(0).into_owned();
    let x = modal_solution(&dec, &b, 0.0).unwrap();

    // S x = b with Gᵀ T x = 0 as a bordered system
    let t = &sys.mass / sys.mass.abs().max();
    let tg = &t * &g;
    let mut k = DMatrix::zeros(19, 19);
    k.view_mut((0, 0), (12, 12)).copy_from(&sys.stiffness);
    k.view_mut((0, 12), (12, 7)).copy_from(&tg);
    k.view_mut((12, 0), (7, 12)).copy_from(&tg.transpose());
    let mut rhs = DMatrix::zeros(19, 1);
    rhs.view_mut((0, 0), (12, 1)).copy_from(&b_real);
    let sol = k.lu().solve(&rhs).unwrap();
    let oracle = CVector::from_fn(12, |i, _| Complex64::new(sol[(i, 0)], 0.0));
    assert!(relative_error(&x, &oracle).unwrap() <= 1e-10);
}

#[test]
fn full_space_projection_equals_direct() {
    let mesh = build_mesh(&GridSpec::uniform([2, 2, 2], [1e-6; 3]), &BoundarySpec::pec_x_planes(), &[]).unwrap();
    let sys = assemble(&mesh);
    let n = mesh.num_unknowns();
    let omega = 2e10;
    let a = system_matrix(&sys, omega);
    let b = CVector::from_fn(n, |i, _| Complex64::new(((i * 7) % 5) as f64 - 2.0, 0.0));
    let direct = solve_direct(&a, &b, None).unwrap();
    let v0 = build_global_v0(vec![DMatrix::identity(n, n)], vec![(0..n).collect()], n).unwrap();
    let proj = solve_dc_projected(&a, &v0, &b).unwrap();
    assert!(relative_error(&proj.x, &direct.x).unwrap() <= 1e-10);
    // a single layer sweep is the projected solve
    let layered = solve_dc_layered(&a, &v0, &b).unwrap();
    assert!(relative_error(&layered.x, &proj.x).unwrap() <= 1e-10);
}

#[test]
fn one_layer_partition_degenerates() {
    let mut cfg = with_methods(builtin("parallel_plate").unwrap(), &[MethodName::DcProjected, MethodName::DcLayered]);
    cfg.partition.layers = Some(1);
    cfg.partition.schur2_split = None;
    let result = run(&cfg, None).unwrap();
    assert_eq!(result.layers[0].k, 61);
    let p = result.report(Method::DcProjected).unwrap();
    let l = result.report(Method::DcLayered).unwrap();
    assert!(relative_error(&l.x, &p.x).unwrap() <= 1e-10);
    assert_eq!(l.block_orders, vec![61]);
}

#[test]
fn two_layer_sweep_agrees_with_schur_path() {
    let cfg = builtin("parallel_plate").unwrap();
    let mesh = cfg.prepare().unwrap().mesh;
    let nz = mesh.grid.nz;
    let part = partition_layers(&mesh, &[0..nz / 2, nz / 2..nz]).unwrap();
    let layers = layer_nullspaces(&mesh, &part).unwrap();
    let sys = assemble(&mesh);
    let omega = cfg.omega();
    let a = system_matrix(&sys, omega);
    let src = SourceSpec::along(&mesh, &cfg.source.path.into(), 1.0, omega).unwrap();
    let b = assemble_rhs(&src, mesh.num_unknowns()).unwrap().rhs;
    let v0 = global_nullspace(&part, &layers).unwrap();
    let layered = solve_dc_layered(&a, &v0, &b).unwrap();
    let (r1, r2, v02) = schur2_regions(&part, &layers, 1).unwrap();
    let x2 = solve_dc_schur2(&a, &r1, &r2, &v02, &b).unwrap();
    let layered_x2 = CVector::from_fn(r2.len(), |i, _| layered.x[r2[i]]);
    let e = relative_error(&layered_x2, &x2).unwrap();
    assert!(e <= 1e-3, "{e:e}");
}

#[test]
fn schur_trivial_cases() {
    let n = 6;
    let a = CMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => Complex64::new(4.0, 0.2),
        1 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 0.0),
    });
    let b = CVector::from_fn(n, |i, _| Complex64::new(i as f64 + 1.0, -0.5));
    let (r1, r2): (Vec<usize>, Vec<usize>) = ((0..3).collect(), (3..6).collect());
    // full region-2 basis: exact Schur solve equals the direct restriction
    let x2 = solve_dc_schur2(&a, &r1, &r2, &DMatrix::identity(3, 3), &b).unwrap();
    let x = ComplexLu::new(&a).unwrap().solve(&b);
    let x_r2 = CVector::from_fn(3, |i, _| x[3 + i]);
    assert!(relative_error(&x2, &x_r2).unwrap() <= 1e-12);

    // decoupled regions and b only in region 2: plain projection on region 2
    let mut dec = a.clone();
    dec[(2, 3)] = Complex64::new(0.0, 0.0);
    dec[(3, 2)] = Complex64::new(0.0, 0.0);
    let mut b2 = b.clone();
    for i in 0..3 {
        b2[i] = Complex64::new(0.0, 0.0);
    }
    let v = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.6, 0.8]);
    let x2 = solve_dc_schur2(&dec, &r1, &r2, &v, &b2).unwrap();
    let a22 = CMatrix::from_fn(3, 3, |i, j| dec[(3 + i, 3 + j)]);
    let vc = complexify(&v);
    let reduced = vc.transpose() * &a22 * &vc;
    let g = vc.transpose() * CVector::from_fn(3, |i, _| b2[3 + i]);
    let y = ComplexLu::new(&reduced).unwrap().solve(&g);
    assert!(relative_error(&x2, &(vc * y)).unwrap() <= 1e-12);
}

#[test]
fn layered_cost_scales_with_layer_blocks() {
    let cfg = with_methods(builtin("two_bus").unwrap(), &[MethodName::DcProjected, MethodName::DcLayered]);
    let result = run(&cfg, None).unwrap();
    let p = result.report(Method::DcProjected).unwrap();
    let l = result.report(Method::DcLayered).unwrap();
    assert_eq!(result.partition.len(), 12);
    let k: Vec<f64> = l.block_orders.iter().map(|&k| k as f64).collect();
    let sum_cubes: f64 = k.iter().map(|k| k * k * k).sum();
    let total: f64 = k.iter().sum();
    assert_eq!(p.block_orders, vec![total as usize]);
    // a handful of k³ operations per layer, far from (Σk)³
    assert!(l.factor_flops <= 6.0 * sum_cubes, "{} vs {}", l.factor_flops, sum_cubes);
    assert!(p.factor_flops >= 0.5 * total.powi(3));
    assert!(l.factor_flops * 10.0 < p.factor_flops);
}

#[test]
fn reduced_system_is_block_tridiagonal() {
    let cfg = builtin("two_bus").unwrap();
    let prepared = cfg.prepare().unwrap();
    let layers = layer_nullspaces(&prepared.mesh, &prepared.partition).unwrap();
    let v0 = global_nullspace(&prepared.partition, &layers).unwrap();
    let sys = assemble(&prepared.mesh);
    let a = system_matrix(&sys, cfg.omega());
    let b = CVector::from_element(prepared.mesh.num_unknowns(), Complex64::new(1.0, 0.0));
    let reduced = ReducedSystem::build(&a, &v0, &b).unwrap();
    assert!(reduced.is_block_tridiagonal());
    for (i, row) in reduced.blocks.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            if i.abs_diff(j) > 1 {
                assert!(blk.iter().all(|z| z.re == 0.0 && z.im == 0.0));
            } else {
                assert!(blk.iter().any(|z| z.norm() > 0.0));
            }
        }
    }
}

fn plate_capacitance(height: f64, x_cells: usize, freq: f64) -> (f64, f64) {
    let mut cfg = with_methods(parallel_plate(height, x_cells), &[MethodName::Direct]);
    cfg.source.frequency_hz = freq;
    let result = run(&cfg, None).unwrap();
    let far = result.probes.iter().find(|p| p.probe == "far_end").unwrap();
    (far.capacitance.unwrap().farads(), result.analytic_capacitance.unwrap())
}

#[test]
fn capacitance_matches_analytic_and_is_flat() {
    let (c2, analytic) = plate_capacitance(1e-6, 3, 2e9);
    assert!((analytic - 3.5417e-15).abs() < 1e-19);
    assert!((c2 - analytic).abs() <= 0.01 * analytic, "{c2:e} vs {analytic:e}");
    for f in [0.5e9, 1e9] {
        let (c, _) = plate_capacitance(1e-6, 3, f);
        assert!((c - c2).abs() <= 0.005 * c2, "{f:e}: {c:e} vs {c2:e}");
    }
}

#[test]
fn doubling_separation_halves_capacitance() {
    let (c1, _) = plate_capacitance(1e-6, 3, 2e9);
    let (c2, analytic2) = plate_capacitance(2e-6, 6, 2e9);
    assert!((c2 / c1 - 0.5).abs() <= 0.02 * 0.5, "{}", c2 / c1);
    assert!((c2 - analytic2).abs() <= 0.01 * analytic2);
}

#[test]
fn voltage_is_path_independent_across_the_gap() {
    let cfg = with_methods(builtin("parallel_plate").unwrap(), &[MethodName::Direct]);
    let result = run(&cfg, None).unwrap();
    let x = &result.report(Method::Direct).unwrap().x;
    let mesh = &result.mesh;
    for k in 0..=5 {
        let volts: Vec<Complex64> = (0..=4)
            .map(|j| {
                let probe = ProbePath::along(mesh, &EdgePath { start: [0, j, k], axis: Axis::X, steps: 3 }).unwrap();
                extract_voltage(mesh, x, &probe)
            })
            .collect();
        for v in &volts[1..] {
            let dev = (v - volts[0]).norm() / volts[0].norm();
            assert!(dev <= 1e-3, "z node {k}: {dev:e}");
        }
    }
    // reversed path flips the sign
    let fwd = ProbePath::along(mesh, &EdgePath { start: [0, 1, 2], axis: Axis::X, steps: 3 }).unwrap();
    let back = ProbePath::along(mesh, &EdgePath { start: [3, 1, 2], axis: Axis::X, steps: -3 }).unwrap();
    assert!((extract_voltage(mesh, x, &fwd) + extract_voltage(mesh, x, &back)).norm() < 1e-9);
    let c = capacitance(1.0, extract_voltage(mesh, x, &fwd), result.omega).unwrap();
    assert!(c.loss_tangent().abs() < 1e-9);
}

#[test]
fn modal_and_direct_agree_on_lossless_plate() {
    let cfg = with_methods(builtin("parallel_plate").unwrap(), &[MethodName::Direct, MethodName::Modal]);
    let result = run(&cfg, None).unwrap();
    assert_eq!(result.global_gap.as_ref().unwrap().split, 61);
    assert!(result.report(Method::Modal).unwrap().error_vs(Method::Direct).unwrap() <= 1e-10);
}

#[test]
fn modal_is_skipped_for_lossy_systems() {
    let cfg = with_methods(builtin("two_bus").unwrap(), &[MethodName::Direct, MethodName::Modal]);
    let result = run(&cfg, Some(2)).unwrap();
    assert!(result.report(Method::Modal).is_none());
    assert!(result.report(Method::Direct).is_some());
}
