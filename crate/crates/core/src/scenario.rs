//! Scenario configuration (JSON) and the built-in scenarios.
//!
//! All physical quantities are SI and carry a unit suffix in their key.

use serde::{Deserialize, Serialize};

use crate::assembly::EdgePath;
use crate::constants::EPS0;
use crate::error::{Error, Result};
use crate::mesh::{
    build_mesh, even_z_ranges, partition_layers, Axis, BoundaryCondition, BoundarySpec, CellBox, Face, GridSpec,
    LayerPartition, Material, MaterialRegion, Mesh,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells: [usize; 3],
    pub dx_m: Vec<f64>,
    pub dy_m: Vec<f64>,
    pub dz_m: Vec<f64>,
    #[serde(default)]
    pub origin_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default)]
    pub x_min: BoundaryCondition,
    #[serde(default)]
    pub x_max: BoundaryCondition,
    #[serde(default)]
    pub y_min: BoundaryCondition,
    #[serde(default)]
    pub y_max: BoundaryCondition,
    #[serde(default)]
    pub z_min: BoundaryCondition,
    #[serde(default)]
    pub z_max: BoundaryCondition,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub cells: CellBox,
    #[serde(default = "one")]
    pub eps_r: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
    #[serde(default)]
    pub sigma_s_per_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub start_node: [usize; 3],
    pub axis: Axis,
    pub steps: i64,
}

impl From<PathConfig> for EdgePath {
    fn from(p: PathConfig) -> Self {
        EdgePath { start: p.start_node, axis: p.axis, steps: p.steps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub path: PathConfig,
    pub current_a: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// Number of equal z-layers.
    #[serde(default)]
    pub layers: Option<usize>,
    /// Explicit `[start, end)` cell ranges in z.
    #[serde(default)]
    pub z_ranges: Option<Vec<[usize; 2]>>,
    /// First layer of region 2 for the two-region Schur path.
    #[serde(default)]
    pub schur2_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub name: String,
    pub path: PathConfig,
}

/// Analytic parallel-plate reference for the capacitance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateReference {
    pub area_m2: f64,
    pub separation_m: f64,
    #[serde(default = "one")]
    pub eps_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "direct")]
    Direct,
    #[serde(rename = "modal")]
    Modal,
    #[serde(rename = "dc-projected")]
    DcProjected,
    #[serde(rename = "dc-layered")]
    DcLayered,
    #[serde(rename = "schur2")]
    Schur2,
    #[serde(rename = "eigtable")]
    Eigtable,
}

impl MethodName {
    pub const ALL: [MethodName; 6] = [
        MethodName::Direct,
        MethodName::Modal,
        MethodName::DcProjected,
        MethodName::DcLayered,
        MethodName::Schur2,
        MethodName::Eigtable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Direct => "direct",
            MethodName::Modal => "modal",
            MethodName::DcProjected => "dc-projected",
            MethodName::DcLayered => "dc-layered",
            MethodName::Schur2 => "schur2",
            MethodName::Eigtable => "eigtable",
        }
    }

    /// Parse a comma separated list; `all` expands to every method.
    pub fn parse_list(s: &str) -> Result<Vec<MethodName>> {
        let mut out = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if tok == "all" {
                out.extend(MethodName::ALL);
                continue;
            }
            let m = MethodName::ALL
                .into_iter()
                .find(|m| m.as_str() == tok)
                .ok_or_else(|| Error::Config(format!("unknown method '{tok}'")))?;
            out.push(m);
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub boundaries: BoundaryConfig,
    #[serde(default)]
    pub materials: Vec<RegionConfig>,
    pub source: SourceConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub plate_reference: Option<PlateReference>,
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Mesh, partition and source resolved from a config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mesh: Mesh,
    pub partition: LayerPartition,
    pub z_ranges: Vec<std::ops::Range<usize>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            nx: g.cells[0],
            ny: g.cells[1],
            nz: g.cells[2],
            dx: g.dx_m.clone(),
            dy: g.dy_m.clone(),
            dz: g.dz_m.clone(),
            origin: g.origin_m,
        }
    }

    pub fn boundary_spec(&self) -> BoundarySpec {
        let b = &self.boundaries;
        let f = |axis, max_side| Face { axis, max_side };
        BoundarySpec::natural()
            .with(f(Axis::X, false), b.x_min)
            .with(f(Axis::X, true), b.x_max)
            .with(f(Axis::Y, false), b.y_min)
            .with(f(Axis::Y, true), b.y_max)
            .with(f(Axis::Z, false), b.z_min)
            .with(f(Axis::Z, true), b.z_max)
    }

    pub fn regions(&self) -> Vec<MaterialRegion> {
        self.materials
            .iter()
            .map(|r| MaterialRegion {
                cells: r.cells,
                material: Material { eps_r: r.eps_r, mu_r: r.mu_r, sigma: r.sigma_s_per_m },
            })
            .collect()
    }

    pub fn z_ranges(&self) -> Result<Vec<std::ops::Range<usize>>> {
        let p = &self.partition;
        match (p.layers, &p.z_ranges) {
            (Some(n), None) => even_z_ranges(self.grid.cells[2], n),
            (None, Some(r)) => Ok(r.iter().map(|[a, b]| *a..*b).collect()),
            (None, None) => Ok(vec![0..self.grid.cells[2]]),
            (Some(_), Some(_)) => Err(Error::Config("give either partition.layers or partition.z_ranges".into())),
        }
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.source.frequency_hz
    }

    /// Check everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if !(self.source.frequency_hz >= 0.0) || !self.source.frequency_hz.is_finite() {
            return Err(Error::Config("source.frequency_hz must be >= 0".into()));
        }
        if !self.source.current_a.is_finite() {
            return Err(Error::Config("source.current_a must be finite".into()));
        }
        if let Some(r) = &self.plate_reference {
            if !(r.area_m2 > 0.0 && r.separation_m > 0.0 && r.eps_r > 0.0) {
                return Err(Error::Config("plate_reference values must be positive".into()));
            }
        }
        let prepared = self.prepare()?;
        let src: EdgePath = self.source.path.into();
        crate::assembly::SourceSpec::along(&prepared.mesh, &src, self.source.current_a, self.omega())?;
        for p in &self.probes {
            crate::postprocess::ProbePath::along(&prepared.mesh, &p.path.into())?;
        }
        if let Some(split) = self.partition.schur2_split {
            if split == 0 || split >= prepared.z_ranges.len() {
                return Err(Error::Config(format!("schur2_split {split} must be inside 1..{}", prepared.z_ranges.len())));
            }
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let mesh = build_mesh(&self.grid_spec(), &self.boundary_spec(), &self.regions())?;
        let z_ranges = self.z_ranges()?;
        let partition = partition_layers(&mesh, &z_ranges)?;
        Ok(Prepared { mesh, partition, z_ranges })
    }

    /// Analytic capacitance εA/d when a plate reference is configured.
    pub fn analytic_capacitance(&self) -> Option<f64> {
        self.plate_reference
            .as_ref()
            .map(|r| crate::postprocess::analytic_parallel_plate(r.area_m2, r.separation_m, r.eps_r * EPS0))
    }
}

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 2] = ["parallel_plate", "two_bus"];

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    match name {
        "parallel_plate" => Ok(parallel_plate(1e-6, 3)),
        "two_bus" => Ok(two_bus()),
        _ => Err(Error::Config(format!("unknown builtin '{name}' (expected one of {BUILTINS:?})"))),
    }
}

/// Lossless parallel-plate waveguide: 4 µm wide (y), `height` tall (x),
/// 100 µm long (z), PEC plates at both x faces, vacuum filled.
/// `x_cells` cells across the gap, 1 µm × 20 µm cells in y and z.
pub fn parallel_plate(height: f64, x_cells: usize) -> ScenarioConfig {
    let (ny, nz) = (4, 5);
    ScenarioConfig {
        name: "parallel_plate".into(),
        grid: GridConfig {
            cells: [x_cells, ny, nz],
            dx_m: vec![height / x_cells as f64; x_cells],
            dy_m: vec![1e-6; ny],
            dz_m: vec![20e-6; nz],
            origin_m: [0.0; 3],
        },
        boundaries: BoundaryConfig {
            x_min: BoundaryCondition::Pec,
            x_max: BoundaryCondition::Pec,
            y_min: BoundaryCondition::Natural,
            y_max: BoundaryCondition::Natural,
            z_min: BoundaryCondition::Natural,
            z_max: BoundaryCondition::Natural,
        },
        materials: Vec::new(),
        source: SourceConfig {
            path: PathConfig { start_node: [0, 2, 0], axis: Axis::X, steps: x_cells as i64 },
            current_a: 1.0,
            frequency_hz: 2e9,
        },
        partition: PartitionConfig { layers: Some(nz), z_ranges: None, schur2_split: Some(2) },
        probes: vec![
            ProbeConfig {
                name: "far_end".into(),
                path: PathConfig { start_node: [0, 2, nz], axis: Axis::X, steps: x_cells as i64 },
            },
            ProbeConfig {
                name: "near_end".into(),
                path: PathConfig { start_node: [0, 0, 0], axis: Axis::X, steps: x_cells as i64 },
            },
        ],
        plate_reference: Some(PlateReference { area_m2: 4e-6 * 100e-6, separation_m: height, eps_r: 1.0 }),
        methods: MethodName::ALL.to_vec(),
        output_dir: None,
    }
}

/// Lossy two-bus line: two copper bars 500 µm long in an εr = 4.1
/// dielectric, truncated by 50 µm of air at each end, with 12 z-layers of
/// 50 µm. PEC top/bottom (x faces), PMC left/right (y faces).
///
/// The cross-section is an assumed 3 µm × 5 µm box of 1 µm cells with two
/// 1 µm × 1 µm bars in the middle row at y cells 1 and 3. The source is a
/// single y-directed edge bridging the bars at the near end of the bus.
pub fn two_bus() -> ScenarioConfig {
    let (nx, ny, nz) = (3, 5, 12);
    let bus_z = [1, nz - 2];
    let copper = |j: usize| RegionConfig {
        cells: CellBox { x: [1, 1], y: [j, j], z: bus_z },
        eps_r: 1.0,
        mu_r: 1.0,
        sigma_s_per_m: 5.8e7,
    };
    let dielectric = |x: [usize; 2], y: [usize; 2]| RegionConfig {
        cells: CellBox { x, y, z: bus_z },
        eps_r: 4.1,
        mu_r: 1.0,
        sigma_s_per_m: 0.0,
    };
    ScenarioConfig {
        name: "two_bus".into(),
        grid: GridConfig {
            cells: [nx, ny, nz],
            dx_m: vec![1e-6; nx],
            dy_m: vec![1e-6; ny],
            dz_m: vec![50e-6; nz],
            origin_m: [0.0; 3],
        },
        boundaries: BoundaryConfig {
            x_min: BoundaryCondition::Pec,
            x_max: BoundaryCondition::Pec,
            y_min: BoundaryCondition::Pmc,
            y_max: BoundaryCondition::Pmc,
            z_min: BoundaryCondition::Natural,
            z_max: BoundaryCondition::Natural,
        },
        materials: vec![
            dielectric([0, 0], [0, ny - 1]),
            dielectric([2, 2], [0, ny - 1]),
            dielectric([1, 1], [0, 0]),
            dielectric([1, 1], [2, 2]),
            dielectric([1, 1], [4, 4]),
            copper(1),
            copper(3),
        ],
        source: SourceConfig {
            path: PathConfig { start_node: [1, 2, bus_z[0]], axis: Axis::Y, steps: 1 },
            current_a: 1.0,
            frequency_hz: 10e9,
        },
        partition: PartitionConfig { layers: Some(nz), z_ranges: None, schur2_split: Some(nz / 2) },
        probes: Vec::new(),
        plate_reference: None,
        methods: vec![
            MethodName::Direct,
            MethodName::DcProjected,
            MethodName::DcLayered,
            MethodName::Schur2,
            MethodName::Eigtable,
        ],
        output_dir: None,
    }
}
