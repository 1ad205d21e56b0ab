//! Voltage and capacitance extraction, analytic references and the
//! frequency-window estimate.

use num_complex::Complex64;

use crate::assembly::EdgePath;
use crate::constants::C0;
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::mesh::{conductor_components, Mesh};

/// Signed edge path between two conductors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePath {
    /// (global edge, sign) pairs; eliminated edges contribute nothing.
    pub edges: Vec<(usize, f64)>,
}

impl ProbePath {
    /// Straight probe; its end nodes must lie on two different conductors.
    pub fn along(mesh: &Mesh, path: &EdgePath) -> Result<Self> {
        let edges = path.edges(mesh)?;
        let cond = conductor_components(mesh);
        let (Some(&(first, s0)), Some(&(last, s1))) = (edges.first(), edges.last()) else {
            return Err(Error::InvalidPath("empty probe".into()));
        };
        let tail = mesh.edges[first].nodes[if s0 > 0.0 { 0 } else { 1 }];
        let head = mesh.edges[last].nodes[if s1 > 0.0 { 1 } else { 0 }];
        match (cond.node_component[tail], cond.node_component[head]) {
            (Some(a), Some(b)) if a != b => Ok(ProbePath { edges }),
            (Some(_), Some(_)) => Err(Error::InvalidPath("probe ends on the same conductor".into())),
            _ => Err(Error::InvalidPath("probe ends must lie on conductors".into())),
        }
    }
}

/// V = −Σ sign(e)·x[e] along the probe.
pub fn extract_voltage(mesh: &Mesh, x: &CVector, probe: &ProbePath) -> Complex64 {
    -probe
        .edges
        .iter()
        .filter_map(|&(e, s)| mesh.unknown_of_edge(e).map(|u| x[u] * s))
        .sum::<Complex64>()
}

/// Capacitance from terminal current and voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacitance {
    pub value: Complex64,
}

impl Capacitance {
    pub fn farads(&self) -> f64 {
        self.value.re
    }

    /// −Im(C)/Re(C); zero for a lossless capacitor.
    pub fn loss_tangent(&self) -> f64 {
        -self.value.im / self.value.re
    }
}

/// C = I / (jωV).
pub fn capacitance(current: f64, voltage: Complex64, omega: f64) -> Result<Capacitance> {
    if omega == 0.0 || voltage.norm() == 0.0 {
        return Err(Error::InvalidArgument("capacitance needs nonzero ω and V".into()));
    }
    Ok(Capacitance { value: Complex64::new(current, 0.0) / (Complex64::new(0.0, omega) * voltage) })
}

/// εA/d.
pub fn analytic_parallel_plate(area: f64, separation: f64, permittivity: f64) -> f64 {
    permittivity * area / separation
}

/// Frequency range (Hz) where the field is DC-dominated yet not so low that
/// the discrete system breaks down numerically.
pub fn frequency_window(mesh: &Mesh) -> (f64, f64) {
    let extent = |a: usize| mesh.coords[a].last().unwrap() - mesh.coords[a][0];
    let l_max = (0..3).map(extent).fold(0.0, f64::max);
    let h_min = [&mesh.grid.dx, &mesh.grid.dy, &mesh.grid.dz]
        .iter()
        .flat_map(|d| d.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let eps_max = mesh.materials.iter().map(|m| m.eps_r).fold(1.0, f64::max);
    let mu_max = mesh.materials.iter().map(|m| m.mu_r).fold(1.0, f64::max);
    let index = (eps_max * mu_max).sqrt();
    let first_resonance = C0 / (2.0 * l_max * index);
    let f_mesh = C0 / (2.0 * h_min * index);
    (1e-6 * f_mesh, 0.1 * first_resonance)
}

/// First resonance estimate c/(2·L_max·n).
pub fn first_resonance(mesh: &Mesh) -> f64 {
    frequency_window(mesh).1 / 0.1
}
