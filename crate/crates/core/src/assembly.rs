//! Global assembly of the stiffness, mass and loss matrices, the source
//! excitation and the frequency-dependent system matrix.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::constants::MU0;
use crate::element::{local_matrices, ElementMatrices};
use crate::error::{Error, Result};
use crate::mesh::{Axis, LayerPartition, Mesh, LOCAL_EDGES};

/// Real symmetric S, T, R over the unknown set.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub loss: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn order(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn is_lossless(&self) -> bool {
        self.loss.iter().all(|&v| v == 0.0)
    }
}

/// Scatter one cell's element matrices into dense targets. `map` turns an
/// unknown index into a row of the target (or `None` to skip it).
fn scatter(
    mesh: &Mesh,
    cell: [usize; 3],
    em: &ElementMatrices,
    map: &dyn Fn(usize) -> Option<usize>,
    targets: &mut [&mut DMatrix<f64>; 3],
) {
    let dofs = mesh.cell_unknowns(cell);
    let rows: [(Option<usize>, f64); LOCAL_EDGES] = dofs.map(|(u, s)| (u.and_then(map), s));
    let locals = [&em.stiffness, &em.mass, &em.loss];
    for (a, &(ra, sa)) in rows.iter().enumerate() {
        let Some(ra) = ra else { continue };
        for (b, &(rb, sb)) in rows.iter().enumerate() {
            let Some(rb) = rb else { continue };
            for (t, l) in targets.iter_mut().zip(locals) {
                t[(ra, rb)] += sa * sb * l[(a, b)];
            }
        }
    }
}

fn cell_matrices(mesh: &Mesh, cell: [usize; 3]) -> ElementMatrices {
    local_matrices(mesh.cell_dims(cell), &mesh.material(cell)).expect("mesh validated cells and materials")
}

/// Assemble S, T, R over all free unknowns.
pub fn assemble(mesh: &Mesh) -> SystemMatrices {
    let n = mesh.num_unknowns();
    let (mut s, mut t, mut r) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    for cell in mesh.cells_in_slab(0..mesh.grid.nz) {
        let em = cell_matrices(mesh, cell);
        scatter(mesh, cell, &em, &Some, &mut [&mut s, &mut t, &mut r]);
    }
    SystemMatrices { stiffness: s, mass: t, loss: r }
}

/// Stiffness of layer `layer` assembled in isolation over its standalone
/// (s⁰-v-s⁰) index set. Rows follow `Layer::standalone` order.
pub fn assemble_standalone_layer(mesh: &Mesh, part: &LayerPartition, layer: usize) -> Result<DMatrix<f64>> {
    let l = part
        .layers
        .get(layer)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} out of range")))?;
    let mut local = vec![None; mesh.num_unknowns()];
    for (p, &u) in l.standalone.iter().enumerate() {
        local[u] = Some(p);
    }
    let m = l.standalone.len();
    let mut s = DMatrix::zeros(m, m);
    for cell in mesh.cells_in_slab(l.z_range.clone()) {
        let em = local_matrices(mesh.cell_dims(cell), &mesh.material(cell))?;
        scatter_stiffness(mesh, cell, &em, &|u| local[u], &mut s);
    }
    Ok(s)
}

fn scatter_stiffness(
    mesh: &Mesh,
    cell: [usize; 3],
    em: &ElementMatrices,
    map: &dyn Fn(usize) -> Option<usize>,
    target: &mut DMatrix<f64>,
) {
    let rows = mesh.cell_unknowns(cell).map(|(u, s)| (u.and_then(map), s));
    for (a, &(ra, sa)) in rows.iter().enumerate() {
        let Some(ra) = ra else { continue };
        for (b, &(rb, sb)) in rows.iter().enumerate() {
            let Some(rb) = rb else { continue };
            target[(ra, rb)] += sa * sb * em.stiffness[(a, b)];
        }
    }
}

/// Straight signed edge path starting at a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePath {
    pub start: [usize; 3],
    pub axis: Axis,
    /// Number of edges; negative walks toward decreasing coordinate.
    pub steps: i64,
}

impl EdgePath {
    /// Global edges with orientation sign relative to the walking direction.
    pub fn edges(&self, mesh: &Mesh) -> Result<Vec<(usize, f64)>> {
        let a = self.axis.index();
        let dims = mesh.node_dims();
        if (0..3).any(|k| self.start[k] >= dims[k]) {
            return Err(Error::InvalidPath(format!("start node {:?} outside grid", self.start)));
        }
        let end = self.start[a] as i64 + self.steps;
        if end < 0 || end >= dims[a] as i64 {
            return Err(Error::InvalidPath(format!("path leaves the grid along {:?}", self.axis)));
        }
        let mut out = Vec::with_capacity(self.steps.unsigned_abs() as usize);
        for s in 0..self.steps.unsigned_abs() as usize {
            let mut n = self.start;
            let (pos, sign) = if self.steps > 0 { (n[a] + s, 1.0) } else { (n[a] - s - 1, -1.0) };
            n[a] = pos;
            out.push((mesh.edge_index(self.axis, n), sign));
        }
        Ok(out)
    }
}

/// Impressed line current on a contiguous edge path.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    /// (unknown index, sign) pairs.
    pub path: Vec<(usize, f64)>,
    pub current: f64,
    pub omega: f64,
}

impl SourceSpec {
    /// Source along a straight path; every edge must be a free unknown.
    pub fn along(mesh: &Mesh, path: &EdgePath, current: f64, omega: f64) -> Result<Self> {
        let mut out = Vec::new();
        for (e, s) in path.edges(mesh)? {
            let u = mesh
                .unknown_of_edge(e)
                .ok_or_else(|| Error::InvalidPath(format!("source edge {e} is PEC-eliminated")))?;
            out.push((u, s));
        }
        Ok(SourceSpec { path: out, current, omega })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    pub rhs: DVector<Complex64>,
    pub omega: f64,
}

/// b[e] = −j ω μ0 I · sign(e) on the path edges.
pub fn assemble_rhs(src: &SourceSpec, n: usize) -> Result<Excitation> {
    let mut b = DVector::from_element(n, Complex64::new(0.0, 0.0));
    let amp = Complex64::new(0.0, -src.omega * MU0 * src.current);
    for &(u, s) in &src.path {
        if u >= n {
            return Err(Error::InvalidPath(format!("unknown {u} out of range")));
        }
        b[u] += amp * s;
    }
    Ok(Excitation { rhs: b, omega: src.omega })
}

/// A = S + jωR − ω²T.
pub fn system_matrix(sys: &SystemMatrices, omega: f64) -> DMatrix<Complex64> {
    let w2 = omega * omega;
    DMatrix::from_fn(sys.order(), sys.order(), |i, j| {
        Complex64::new(sys.stiffness[(i, j)] - w2 * sys.mass[(i, j)], omega * sys.loss[(i, j)])
    })
}

/// Write the nonzeros of a real symmetric matrix in Matrix Market coordinate
/// format (lower triangle, 17 significant digits).
pub fn write_matrix_market<W: Write>(out: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    let entries: Vec<(usize, usize, f64)> = (0..m.ncols())
        .flat_map(|j| (j..m.nrows()).map(move |i| (i, j)))
        .filter_map(|(i, j)| {
            let v = m[(i, j)];
            (v != 0.0).then_some((i, j, v))
        })
        .collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Excitation as `index,real,imag` CSV.
pub fn write_vector_csv<W: Write>(out: &mut W, v: &DVector<Complex64>) -> std::io::Result<()> {
    writeln!(out, "index,real,imag")?;
    for (i, z) in v.iter().enumerate() {
        writeln!(out, "{i},{:.16e},{:.16e}", z.re, z.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, partition_layers, BoundarySpec, GridSpec, Material, MaterialRegion, CellBox};

    fn plate(regions: &[MaterialRegion]) -> Mesh {
        let spec = GridSpec::uniform([3, 4, 5], [1e-6, 4e-6, 100e-6]);
        build_mesh(&spec, &BoundarySpec::pec_x_planes(), regions).unwrap()
    }

    #[test]
    fn plate_orders_and_symmetry() {
        let m = plate(&[]);
        let sys = assemble(&m);
        assert_eq!(sys.order(), 188);
        for mat in [&sys.stiffness, &sys.mass] {
            let asym = (mat - mat.transpose()).abs().max();
            assert!(asym <= 1e-15 * mat.abs().max());
        }
        assert!(sys.is_lossless());
    }

    #[test]
    fn stiffness_ignores_permittivity_and_conductivity() {
        let all = CellBox { x: [0, 2], y: [0, 3], z: [0, 4] };
        let diel = MaterialRegion { cells: all, material: Material { eps_r: 4.1, mu_r: 1.0, sigma: 3.0 } };
        let a = assemble(&plate(&[]));
        let b = assemble(&plate(&[diel]));
        assert_eq!(a.stiffness, b.stiffness);
        assert_ne!(a.mass, b.mass);
        assert!(!b.is_lossless());
    }

    #[test]
    fn single_brick_equals_element() {
        let spec = GridSpec::uniform([1, 1, 1], [0.5, 1.5, 2.0]);
        let m = build_mesh(&spec, &BoundarySpec::natural(), &[]).unwrap();
        let sys = assemble(&m);
        let em = local_matrices([0.5, 1.5, 2.0], &Material::VACUUM).unwrap();
        let dofs = m.cell_unknowns([0, 0, 0]);
        for a in 0..12 {
            for b in 0..12 {
                let (ua, sa) = dofs[a];
                let (ub, sb) = dofs[b];
                assert_eq!(sys.stiffness[(ua.unwrap(), ub.unwrap())], sa * sb * em.stiffness[(a, b)]);
            }
        }
    }

    #[test]
    fn standalone_layers() {
        let m = plate(&[]);
        let p = crate::mesh::partition_slabs(&m);
        for i in 0..5 {
            assert_eq!(assemble_standalone_layer(&m, &p, i).unwrap().nrows(), 56);
        }
        let one = partition_layers(&m, &[0..5]).unwrap();
        assert_eq!(assemble_standalone_layer(&m, &one, 0).unwrap(), assemble(&m).stiffness);
        assert!(assemble_standalone_layer(&m, &p, 7).is_err());
    }

    #[test]
    fn rhs_amplitude_and_sign() {
        let m = plate(&[]);
        let omega = 2.0 * std::f64::consts::PI * 2e9;
        let path = EdgePath { start: [0, 2, 0], axis: Axis::X, steps: 3 };
        let src = SourceSpec::along(&m, &path, 1.0, omega).unwrap();
        let b = assemble_rhs(&src, m.num_unknowns()).unwrap().rhs;
        let nz: Vec<_> = b.iter().filter(|z| z.norm() > 0.0).collect();
        assert_eq!(nz.len(), 3);
        for z in nz {
            assert!((z.norm() / 1.5791e4 - 1.0).abs() < 1e-4);
            assert_eq!(z.re, 0.0);
        }

        let back = EdgePath { start: [3, 2, 0], axis: Axis::X, steps: -3 };
        let src_back = SourceSpec::along(&m, &back, 1.0, omega).unwrap();
        let b_back = assemble_rhs(&src_back, m.num_unknowns()).unwrap().rhs;
        assert_eq!(b_back, -b.clone());

        let zero = SourceSpec { current: 0.0, ..src };
        assert!(assemble_rhs(&zero, m.num_unknowns()).unwrap().rhs.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn source_on_pec_edge_rejected() {
        let m = plate(&[]);
        let path = EdgePath { start: [0, 0, 0], axis: Axis::Y, steps: 2 };
        assert!(SourceSpec::along(&m, &path, 1.0, 1.0).is_err());
        let off = EdgePath { start: [0, 0, 0], axis: Axis::X, steps: 4 };
        assert!(off.edges(&m).is_err());
    }

    #[test]
    fn system_matrix_cases() {
        let all = CellBox { x: [0, 2], y: [0, 3], z: [0, 4] };
        let lossy = MaterialRegion { cells: all, material: Material { eps_r: 1.0, mu_r: 1.0, sigma: 1.0 } };
        let sys = assemble(&plate(&[]));
        let a0 = system_matrix(&sys, 0.0);
        assert!(a0.iter().zip(sys.stiffness.iter()).all(|(z, s)| z.re == *s && z.im == 0.0));
        let a = system_matrix(&sys, 1e10);
        assert!(a.iter().all(|z| z.im == 0.0));
        let lossy_sys = assemble(&plate(&[lossy]));
        let al = system_matrix(&lossy_sys, 1e10);
        assert_eq!(al, al.transpose());
        assert_ne!(al, al.adjoint());
    }

    #[test]
    fn matrix_market_format() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 0.0]);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &m).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2.0000000000000000e0\n2 1 -1.0000000000000000e0\n"
        );
    }
}
