//! End-to-end run of a scenario: mesh, assembly, nullspaces, every
//! requested solution path, derived quantities and consistency checks.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::assembly::{assemble, assemble_rhs, assemble_standalone_layer, system_matrix, SourceSpec, SystemMatrices};
use crate::dc_solver::{
    build_global_v0, solve_dc_schur2_full, solve_direct, solve_reduced_dense, solve_reduced_layered, GlobalNullspace,
    Method, ReducedSystem, SolveReport,
};
use crate::error::{Error, Result};
use crate::linalg::{norm, relative_error, AccurateOperator, CMatrix, CVector, SplitOperator};
use crate::mesh::{gradient_dimension, LayerPartition, Mesh};
use crate::postprocess::{capacitance, extract_voltage, Capacitance, ProbePath};
use crate::scenario::{MethodName, Prepared, ScenarioConfig};
use crate::spectral::{generalized_eig, modal_solution, nullspace_of_standalone, restrict_rows, GapReport};

/// Bound on the direct solve residual and on layered vs. projected agreement.
pub const EXACT_TOL: f64 = 1e-10;
/// Bound on DC-path error against the references.
pub const DC_TOL: f64 = 1e-3;
/// Bound on capacitance deviation from the analytic value and between probes.
pub const CAPACITANCE_TOL: f64 = 1e-2;

/// Standalone nullspace of one layer.
#[derive(Debug, Clone)]
pub struct LayerNullspace {
    pub layer: usize,
    pub owned: usize,
    pub standalone: usize,
    pub k: usize,
    pub gap: GapReport,
    pub zero_eigenvalues: Vec<f64>,
    pub high_eigenvalues: Vec<f64>,
    pub restricted: DMatrix<f64>,
}

/// Voltage and capacitance seen by one probe on one solution.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub probe: String,
    pub method: Method,
    pub voltage: Complex64,
    pub capacitance: Option<Capacitance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    /// Must hold for any valid run.
    Internal,
    /// Accuracy targets, enforced only on request.
    Acceptance,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, kind: CheckKind, value: f64, bound: f64) -> Self {
        Check { name: name.into(), kind, value, bound }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub mesh: Mesh,
    pub partition: LayerPartition,
    pub omega: f64,
    pub system: SystemMatrices,
    pub rhs: CVector,
    pub layers: Vec<LayerNullspace>,
    /// Gap of the global generalized eigenproblem (modal runs only).
    pub global_gap: Option<GapReport>,
    /// Layer whose spectrum fills the eigenvalue table.
    pub eigentable_layer: Option<usize>,
    pub reports: Vec<SolveReport>,
    /// `‖b − Ax‖/‖b‖` of the direct solution.
    pub direct_residual: Option<f64>,
    /// Schur2 error on its own region against the direct restriction.
    pub schur2_region_error: Option<f64>,
    pub probes: Vec<ProbeResult>,
    pub analytic_capacitance: Option<f64>,
    pub checks: Vec<Check>,
    pub timings: Vec<(String, Duration)>,
}

impl RunResult {
    pub fn report(&self, m: Method) -> Option<&SolveReport> {
        self.reports.iter().find(|r| r.method == m)
    }

    pub fn failed(&self, kind: CheckKind) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.kind == kind && !c.passed()).collect()
    }

    pub fn eigentable(&self) -> Option<(&[f64], &[f64])> {
        self.eigentable_layer
            .map(|i| (self.layers[i].zero_eigenvalues.as_slice(), self.layers[i].high_eigenvalues.as_slice()))
    }
}

/// Standalone nullspaces of every layer, cross-checked against the gradient
/// count of each slab and restricted to owned rows.
pub fn layer_nullspaces(mesh: &Mesh, part: &LayerPartition) -> Result<Vec<LayerNullspace>> {
    (0..part.len())
        .into_par_iter()
        .map(|i| {
            let layer = &part.layers[i];
            let s0 = assemble_standalone_layer(mesh, part, i)?;
            let expected = gradient_dimension(mesh, layer.z_range.clone());
            let basis = nullspace_of_standalone(&s0, i, Some(expected))?;
            let restricted = restrict_rows(&basis, part)?;
            let (zero, high) = basis.eigen_split();
            Ok(LayerNullspace {
                layer: i,
                owned: layer.owned.len(),
                standalone: layer.standalone.len(),
                k: basis.k,
                gap: basis.gap,
                zero_eigenvalues: zero,
                high_eigenvalues: high,
                restricted,
            })
        })
        .collect()
}

/// Block-diagonal DC basis from per-layer nullspaces.
pub fn global_nullspace(part: &LayerPartition, layers: &[LayerNullspace]) -> Result<GlobalNullspace> {
    let n = part.owner.len();
    build_global_v0(
        layers.iter().map(|l| l.restricted.clone()).collect(),
        part.layers.iter().map(|l| l.owned.clone()).collect(),
        n,
    )
}

/// Region rows and region-2 DC basis for the two-region Schur path: layers
/// `..split` form region 1, layers `split..` region 2, whose basis is the
/// block-diagonal stack of their restricted nullspaces.
pub fn schur2_regions(
    part: &LayerPartition,
    layers: &[LayerNullspace],
    split: usize,
) -> Result<(Vec<usize>, Vec<usize>, DMatrix<f64>)> {
    if split == 0 || split >= part.len() || layers.len() != part.len() {
        return Err(Error::InvalidArgument(format!("split {split} outside 1..{}", part.len())));
    }
    let region1: Vec<usize> = part.layers[..split].iter().flat_map(|l| l.owned.iter().copied()).collect();
    let region2: Vec<usize> = part.layers[split..].iter().flat_map(|l| l.owned.iter().copied()).collect();
    let cols: usize = layers[split..].iter().map(|l| l.k).sum();
    let mut v02 = DMatrix::zeros(region2.len(), cols);
    let (mut r0, mut c0) = (0, 0);
    for l in &layers[split..] {
        let b = &l.restricted;
        v02.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    Ok((region1, region2, v02))
}

fn restrict(x: &CVector, rows: &[usize]) -> CVector {
    CVector::from_fn(rows.len(), |i, _| x[rows[i]])
}

/// Run a validated scenario. `jobs` caps the worker threads used for the
/// per-layer eigensolves.
pub fn run(cfg: &ScenarioConfig, jobs: Option<usize>) -> Result<RunResult> {
    cfg.validate()?;
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ScenarioConfig) -> Result<RunResult> {
    let t_start = Instant::now();
    let mut timings: Vec<(String, Duration)> = Vec::new();
    let mut checks = Vec::new();
    let wants = |m: MethodName| cfg.methods.contains(&m);

    let Prepared { mesh, partition, .. } = cfg.prepare()?;
    let omega = cfg.omega();
    let t0 = Instant::now();
    let system = assemble(&mesh);
    let src = SourceSpec::along(&mesh, &cfg.source.path.into(), cfg.source.current_a, omega)?;
    let rhs = assemble_rhs(&src, mesh.num_unknowns())?.rhs;
    timings.push(("assemble".into(), t0.elapsed()));

    let needs_layers = [MethodName::DcProjected, MethodName::DcLayered, MethodName::Schur2, MethodName::Eigtable]
        .iter()
        .any(|&m| wants(m));
    let needs_solve = MethodName::ALL.iter().any(|&m| m != MethodName::Eigtable && wants(m));

    let t0 = Instant::now();
    let layers = if needs_layers { layer_nullspaces(&mesh, &partition)? } else { Vec::new() };
    timings.push(("layer-nullspaces".into(), t0.elapsed()));
    let eigentable_layer = (wants(MethodName::Eigtable) && !layers.is_empty()).then_some(layers.len() / 2);

    let mut reports: Vec<SolveReport> = Vec::new();
    let mut global_gap = None;
    let mut schur2_region_error = None;
    let mut direct_residual = None;

    if needs_solve {
        let a: CMatrix = system_matrix(&system, omega);
        let split = SplitOperator { stiffness: &system.stiffness, mass: &system.mass, loss: &system.loss, omega };

        let t0 = Instant::now();
        let direct = solve_direct(&a, &rhs, Some(&split))?;
        timings.push(("direct".into(), t0.elapsed()));
        let r = norm(&split.residual(&direct.x, &rhs));
        direct_residual = Some(r / norm(&rhs).max(f64::MIN_POSITIVE));
        let a_norm = a.clone().svd(false, false).singular_values.max();
        let backward = r / (a_norm * norm(&direct.x) + norm(&rhs)).max(f64::MIN_POSITIVE);
        checks.push(Check::at_most("direct backward error", CheckKind::Internal, backward, EXACT_TOL));
        reports.push(direct);

        if wants(MethodName::Modal) && system.is_lossless() {
            let t0 = Instant::now();
            let dec = generalized_eig(&system.stiffness, &system.mass)?;
            global_gap = Some(dec.gap()?);
            let x = modal_solution(&dec, &rhs, omega)?;
            timings.push(("modal".into(), t0.elapsed()));
            reports.push(SolveReport::new(Method::Modal, x));
        }

        if wants(MethodName::DcProjected) || wants(MethodName::DcLayered) {
            let t0 = Instant::now();
            let v0 = global_nullspace(&partition, &layers)?;
            let reduced = ReducedSystem::build(&a, &v0, &rhs)?;
            let t_project = t0.elapsed();
            timings.push(("project".into(), t_project));
            let expected_orders: Vec<usize> = layers.iter().map(|l| l.k).collect();
            if wants(MethodName::DcProjected) {
                let t0 = Instant::now();
                let rep = solve_reduced_dense(&reduced, &v0)?;
                timings.push(("dc-projected".into(), t0.elapsed() + t_project));
                reports.push(rep);
            }
            if wants(MethodName::DcLayered) {
                let t0 = Instant::now();
                let rep = solve_reduced_layered(&reduced, &v0)?;
                timings.push(("dc-layered".into(), t0.elapsed() + t_project));
                let mismatch = rep.block_orders.iter().zip(&expected_orders).filter(|(a, b)| a != b).count();
                checks.push(Check::at_most("reduced block orders mismatch", CheckKind::Internal, mismatch as f64, 0.0));
                reports.push(rep);
            }
        }

        if wants(MethodName::Schur2) {
            if let Some(split_layer) = cfg.partition.schur2_split {
                let t0 = Instant::now();
                let (r1, r2, v02) = schur2_regions(&partition, &layers, split_layer)?;
                let rep = solve_dc_schur2_full(&a, &r1, &r2, &v02, &rhs)?;
                timings.push(("schur2".into(), t0.elapsed()));
                schur2_region_error = Some(relative_error(&restrict(&rep.x, &r2), &restrict(&reports[0].x, &r2))?);
                reports.push(rep);
            }
        }

        let refs: Vec<SolveReport> =
            reports.iter().filter(|r| matches!(r.method, Method::Direct | Method::Modal)).cloned().collect();
        for rep in &mut reports {
            for r in &refs {
                if r.method != rep.method {
                    rep.compare(r)?;
                }
            }
        }
    }

    let analytic_capacitance = cfg.analytic_capacitance();
    let mut probes = Vec::new();
    for p in &cfg.probes {
        let path = ProbePath::along(&mesh, &p.path.into())?;
        for rep in &reports {
            let voltage = extract_voltage(&mesh, &rep.x, &path);
            let cap = if omega > 0.0 { capacitance(cfg.source.current_a, voltage, omega).ok() } else { None };
            probes.push(ProbeResult { probe: p.name.clone(), method: rep.method, voltage, capacitance: cap });
        }
    }

    add_solution_checks(&mut checks, &reports, schur2_region_error);
    add_probe_checks(&mut checks, &probes, analytic_capacitance);
    timings.push(("total".into(), t_start.elapsed()));

    Ok(RunResult {
        config: cfg.clone(),
        mesh,
        partition,
        omega,
        system,
        rhs,
        layers,
        global_gap,
        eigentable_layer,
        reports,
        direct_residual,
        schur2_region_error,
        probes,
        analytic_capacitance,
        checks,
        timings,
    })
}

fn add_solution_checks(checks: &mut Vec<Check>, reports: &[SolveReport], schur2_region_error: Option<f64>) {
    let get = |m: Method| reports.iter().find(|r| r.method == m);
    if let Some(e) = get(Method::Modal).and_then(|r| r.error_vs(Method::Direct)) {
        checks.push(Check::at_most("modal vs direct", CheckKind::Acceptance, e, EXACT_TOL));
    }
    if let (Some(p), Some(l)) = (get(Method::DcProjected), get(Method::DcLayered)) {
        let e = relative_error(&l.x, &p.x).unwrap_or(f64::INFINITY);
        checks.push(Check::at_most("dc-layered vs dc-projected", CheckKind::Internal, e, EXACT_TOL));
    }
    for m in [Method::DcProjected, Method::DcLayered] {
        if let Some(r) = get(m) {
            for reference in [Method::Direct, Method::Modal] {
                if let Some(e) = r.error_vs(reference) {
                    checks.push(Check::at_most(
                        format!("{} vs {}", m.name(), reference.name()),
                        CheckKind::Acceptance,
                        e,
                        DC_TOL,
                    ));
                }
            }
        }
    }
    if let Some(e) = schur2_region_error {
        checks.push(Check::at_most("schur2 region 2 vs direct", CheckKind::Acceptance, e, DC_TOL));
    }
}

fn add_probe_checks(checks: &mut Vec<Check>, probes: &[ProbeResult], analytic: Option<f64>) {
    let direct: Vec<&ProbeResult> = probes.iter().filter(|p| p.method == Method::Direct).collect();
    if let Some(c0) = analytic {
        for p in probes {
            if let Some(c) = p.capacitance {
                let dev = (c.farads() - c0).abs() / c0;
                checks.push(Check::at_most(
                    format!("capacitance {} {} vs analytic", p.probe, p.method.name()),
                    CheckKind::Acceptance,
                    dev,
                    CAPACITANCE_TOL,
                ));
            }
        }
    }
    if let Some((first, rest)) = direct.split_first() {
        for p in rest {
            let dev = (p.voltage - first.voltage).norm() / first.voltage.norm().max(f64::MIN_POSITIVE);
            checks.push(Check::at_most(
                format!("voltage {} vs {}", p.probe, first.probe),
                CheckKind::Acceptance,
                dev,
                CAPACITANCE_TOL,
            ));
        }
    }
}
