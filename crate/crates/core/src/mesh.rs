//! Structured brick meshes: node/edge enumeration, PEC elimination,
//! conductor detection, z-layer partitioning and the discrete gradient.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Cell counts and per-axis spacings of a structured grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
    pub origin: [f64; 3],
}

impl GridSpec {
    /// Uniform grid spanning `size` (meters) with the given cell counts.
    pub fn uniform(counts: [usize; 3], size: [f64; 3]) -> Self {
        let seq = |n: usize, len: f64| vec![len / n as f64; n];
        GridSpec {
            nx: counts[0],
            ny: counts[1],
            nz: counts[2],
            dx: seq(counts[0], size[0]),
            dy: seq(counts[1], size[1]),
            dz: seq(counts[2], size[2]),
            origin: [0.0; 3],
        }
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn spacing(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.dx,
            Axis::Y => &self.dy,
            Axis::Z => &self.dz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in Axis::ALL {
            let n = self.counts()[axis.index()];
            let d = self.spacing(axis);
            if n == 0 {
                return Err(Error::InvalidGrid(format!("{axis:?} cell count must be >= 1")));
            }
            if d.len() != n {
                return Err(Error::InvalidGrid(format!(
                    "{axis:?} spacing has {} entries, expected {n}",
                    d.len()
                )));
            }
            if d.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
                return Err(Error::InvalidGrid(format!("{axis:?} spacings must be positive")));
            }
        }
        Ok(())
    }
}

/// Boundary condition on one face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Pec,
    Pmc,
    #[default]
    Natural,
}

/// One of the six faces of the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: Axis,
    pub max_side: bool,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face { axis: Axis::X, max_side: false },
        Face { axis: Axis::X, max_side: true },
        Face { axis: Axis::Y, max_side: false },
        Face { axis: Axis::Y, max_side: true },
        Face { axis: Axis::Z, max_side: false },
        Face { axis: Axis::Z, max_side: true },
    ];

    fn slot(self) -> usize {
        2 * self.axis.index() + usize::from(self.max_side)
    }
}

/// Per-face boundary conditions, in the order x-min, x-max, y-min, y-max,
/// z-min, z-max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundarySpec {
    pub faces: [BoundaryCondition; 6],
}

impl BoundarySpec {
    pub fn natural() -> Self {
        Self::default()
    }

    pub fn with(mut self, face: Face, bc: BoundaryCondition) -> Self {
        self.faces[face.slot()] = bc;
        self
    }

    pub fn get(&self, face: Face) -> BoundaryCondition {
        self.faces[face.slot()]
    }

    /// PEC on both x faces, everything else natural.
    pub fn pec_x_planes() -> Self {
        Self::natural()
            .with(Face { axis: Axis::X, max_side: false }, BoundaryCondition::Pec)
            .with(Face { axis: Axis::X, max_side: true }, BoundaryCondition::Pec)
    }
}

/// Inclusive cell-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub x: [usize; 2],
    pub y: [usize; 2],
    pub z: [usize; 2],
}

impl CellBox {
    pub fn contains(&self, c: [usize; 3]) -> bool {
        let r = [self.x, self.y, self.z];
        (0..3).all(|a| r[a][0] <= c[a] && c[a] <= r[a][1])
    }

    fn overlaps(&self, other: &CellBox) -> bool {
        let a = [self.x, self.y, self.z];
        let b = [other.x, other.y, other.z];
        (0..3).all(|i| a[i][0] <= b[i][1] && b[i][0] <= a[i][1])
    }
}

/// Material properties of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub eps_r: f64,
    pub mu_r: f64,
    pub sigma: f64,
}

impl Material {
    pub const VACUUM: Material = Material { eps_r: 1.0, mu_r: 1.0, sigma: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r > 0.0) || !(self.mu_r > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "eps_r={}, mu_r={}, sigma={}",
                self.eps_r, self.mu_r, self.sigma
            )));
        }
        Ok(())
    }
}

/// Box of cells sharing one material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialRegion {
    pub cells: CellBox,
    pub material: Material,
}

/// Classification of a mesh edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Free unknown with the given unknown index.
    Free(usize),
    PecEliminated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Tail and head node; edges always point along +axis.
    pub nodes: [usize; 2],
    pub axis: Axis,
    pub length: f64,
    pub kind: EdgeKind,
}

/// A structured brick mesh with PEC elimination applied.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub grid: GridSpec,
    pub boundary: BoundarySpec,
    pub coords: [Vec<f64>; 3],
    pub edges: Vec<Edge>,
    /// Per cell material, indexed by [`Mesh::cell_index`].
    pub materials: Vec<Material>,
    /// True for nodes lying on a PEC face.
    pub pec_node: Vec<bool>,
    /// Unknown index -> global edge index.
    pub unknown_edges: Vec<usize>,
}

/// Local edge ordering inside a cell: x-edges (j,k) = (0,0),(1,0),(0,1),(1,1),
/// then y-edges (i,k), then z-edges (i,j), same pattern.
pub const LOCAL_EDGES: usize = 12;

impl Mesh {
    pub fn node_dims(&self) -> [usize; 3] {
        [self.grid.nx + 1, self.grid.ny + 1, self.grid.nz + 1]
    }

    pub fn num_nodes(&self) -> usize {
        let d = self.node_dims();
        d[0] * d[1] * d[2]
    }

    pub fn num_cells(&self) -> usize {
        self.grid.nx * self.grid.ny * self.grid.nz
    }

    pub fn num_unknowns(&self) -> usize {
        self.unknown_edges.len()
    }

    pub fn node_index(&self, n: [usize; 3]) -> usize {
        let d = self.node_dims();
        n[0] + d[0] * (n[1] + d[1] * n[2])
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let d = self.node_dims();
        [node % d[0], (node / d[0]) % d[1], node / (d[0] * d[1])]
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let c = self.node_coords(node);
        [self.coords[0][c[0]], self.coords[1][c[1]], self.coords[2][c[2]]]
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.grid.nx * (c[1] + self.grid.ny * c[2])
    }

    pub fn cell_dims(&self, c: [usize; 3]) -> [f64; 3] {
        [self.grid.dx[c[0]], self.grid.dy[c[1]], self.grid.dz[c[2]]]
    }

    pub fn material(&self, c: [usize; 3]) -> Material {
        self.materials[self.cell_index(c)]
    }

    /// Number of edges directed along `axis`.
    pub fn edge_count(&self, axis: Axis) -> usize {
        let [nx, ny, nz] = self.grid.counts();
        match axis {
            Axis::X => nx * (ny + 1) * (nz + 1),
            Axis::Y => (nx + 1) * ny * (nz + 1),
            Axis::Z => (nx + 1) * (ny + 1) * nz,
        }
    }

    /// Global index of the edge leaving node `n` along `axis`.
    pub fn edge_index(&self, axis: Axis, n: [usize; 3]) -> usize {
        let [nx, ny, _] = self.grid.counts();
        match axis {
            Axis::X => n[0] + nx * (n[1] + (ny + 1) * n[2]),
            Axis::Y => self.edge_count(Axis::X) + n[0] + (nx + 1) * (n[1] + ny * n[2]),
            Axis::Z => {
                self.edge_count(Axis::X)
                    + self.edge_count(Axis::Y)
                    + n[0]
                    + (nx + 1) * (n[1] + (ny + 1) * n[2])
            }
        }
    }

    /// Global edge indices of the 12 cell edges in local order, with
    /// orientation signs (local and global edges both point along +axis).
    pub fn cell_edges(&self, c: [usize; 3]) -> [(usize, f64); LOCAL_EDGES] {
        let [i, j, k] = c;
        let mut out = [(0, 1.0); LOCAL_EDGES];
        for (s, (p, q)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            out[s].0 = self.edge_index(Axis::X, [i, j + p, k + q]);
            out[4 + s].0 = self.edge_index(Axis::Y, [i + p, j, k + q]);
            out[8 + s].0 = self.edge_index(Axis::Z, [i + p, j + q, k]);
        }
        out
    }

    /// Unknown index of a global edge, if it is free.
    pub fn unknown_of_edge(&self, edge: usize) -> Option<usize> {
        match self.edges[edge].kind {
            EdgeKind::Free(u) => Some(u),
            EdgeKind::PecEliminated => None,
        }
    }

    /// Free unknowns (with signs) touched by a cell.
    pub fn cell_unknowns(&self, c: [usize; 3]) -> [(Option<usize>, f64); LOCAL_EDGES] {
        let mut out = [(None, 1.0); LOCAL_EDGES];
        for (slot, (e, s)) in self.cell_edges(c).into_iter().enumerate() {
            out[slot] = (self.unknown_of_edge(e), s);
        }
        out
    }

    /// Iterate over all cells with z-index in `z_range`.
    pub fn cells_in_slab(&self, z_range: std::ops::Range<usize>) -> impl Iterator<Item = [usize; 3]> + '_ {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        z_range.flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
    }

    /// z-plane (node layer index) of a free unknown when it is a surface edge,
    /// or the z-cell index with `is_volume = true` for z-directed edges.
    pub fn unknown_z_location(&self, u: usize) -> (usize, bool) {
        let e = &self.edges[self.unknown_edges[u]];
        let k = self.node_coords(e.nodes[0])[2];
        (k, e.axis == Axis::Z)
    }
}

fn node_on_face(grid: &GridSpec, n: [usize; 3], face: Face) -> bool {
    let a = face.axis.index();
    let plane = if face.max_side { grid.counts()[a] } else { 0 };
    n[a] == plane
}

/// Build the mesh, apply PEC elimination and number unknowns.
///
/// Unknowns are numbered z-plane by z-plane: the in-plane (x, y) edges of node
/// plane 0, the z-edges of cell slab 0, the in-plane edges of node plane 1,
/// and so on. Layer ownership is therefore contiguous.
pub fn build_mesh(spec: &GridSpec, bc: &BoundarySpec, regions: &[MaterialRegion]) -> Result<Mesh> {
    spec.validate()?;
    let [nx, ny, nz] = spec.counts();
    for (idx, r) in regions.iter().enumerate() {
        r.material.validate()?;
        let b = [r.cells.x, r.cells.y, r.cells.z];
        for a in 0..3 {
            if b[a][0] > b[a][1] || b[a][1] >= spec.counts()[a] {
                return Err(Error::RegionOutOfBounds(idx));
            }
        }
        for (jdx, other) in regions.iter().enumerate().take(idx) {
            if r.cells.overlaps(&other.cells) {
                return Err(Error::OverlappingRegions(jdx, idx));
            }
        }
    }

    let coords = [0, 1, 2].map(|a| {
        let d = spec.spacing(Axis::ALL[a]);
        let mut c = Vec::with_capacity(d.len() + 1);
        let mut acc = spec.origin[a];
        c.push(acc);
        for h in d {
            acc += h;
            c.push(acc);
        }
        c
    });

    let mut materials = vec![Material::VACUUM; nx * ny * nz];
    for r in regions {
        for k in r.cells.z[0]..=r.cells.z[1] {
            for j in r.cells.y[0]..=r.cells.y[1] {
                for i in r.cells.x[0]..=r.cells.x[1] {
                    materials[i + nx * (j + ny * k)] = r.material;
                }
            }
        }
    }

    let pec_faces: Vec<Face> = Face::ALL
        .into_iter()
        .filter(|&f| bc.get(f) == BoundaryCondition::Pec)
        .collect();

    let mut mesh = Mesh {
        grid: spec.clone(),
        boundary: *bc,
        coords,
        edges: Vec::new(),
        materials,
        pec_node: Vec::new(),
        unknown_edges: Vec::new(),
    };

    let nodes = mesh.num_nodes();
    mesh.pec_node = (0..nodes)
        .map(|n| {
            let c = mesh.node_coords(n);
            pec_faces.iter().any(|&f| node_on_face(spec, c, f))
        })
        .collect();

    let total = mesh.edge_count(Axis::X) + mesh.edge_count(Axis::Y) + mesh.edge_count(Axis::Z);
    let mut edges = Vec::with_capacity(total);
    for axis in Axis::ALL {
        let a = axis.index();
        let mut ext = [nx + 1, ny + 1, nz + 1];
        ext[a] -= 1;
        for k in 0..ext[2] {
            for j in 0..ext[1] {
                for i in 0..ext[0] {
                    let tail = [i, j, k];
                    let mut head = tail;
                    head[a] += 1;
                    // An edge lies in a PEC face when both endpoints do.
                    let eliminated = pec_faces
                        .iter()
                        .any(|&f| f.axis != axis && node_on_face(spec, tail, f) && node_on_face(spec, head, f));
                    edges.push(Edge {
                        nodes: [mesh.node_index(tail), mesh.node_index(head)],
                        axis,
                        length: spec.spacing(axis)[tail[a]],
                        kind: if eliminated { EdgeKind::PecEliminated } else { EdgeKind::Free(usize::MAX) },
                    });
                }
            }
        }
    }
    mesh.edges = edges;

    let mut numbering = Vec::new();
    for k in 0..=nz {
        for axis in [Axis::X, Axis::Y] {
            let a = axis.index();
            let mut ext = [nx + 1, ny + 1];
            ext[a] -= 1;
            for j in 0..ext[1] {
                for i in 0..ext[0] {
                    numbering.push(mesh.edge_index(axis, [i, j, k]));
                }
            }
        }
        if k < nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    numbering.push(mesh.edge_index(Axis::Z, [i, j, k]));
                }
            }
        }
    }
    for e in numbering {
        if let EdgeKind::Free(_) = mesh.edges[e].kind {
            mesh.edges[e].kind = EdgeKind::Free(mesh.unknown_edges.len());
            mesh.unknown_edges.push(e);
        }
    }
    Ok(mesh)
}

/// Labeling of PEC nodes into connected conductors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conductors {
    pub count: usize,
    /// Component id for each node, `None` for free nodes.
    pub node_component: Vec<Option<usize>>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of PEC nodes restricted to cells with z in
/// `z_range`. Two PEC nodes are connected when a PEC-eliminated edge joins
/// them. Component ids follow the smallest member node index.
fn label_conductors(mesh: &Mesh, z_range: std::ops::Range<usize>) -> Conductors {
    let nodes = mesh.num_nodes();
    let mut uf = UnionFind::new(nodes);
    let in_slab = |n: usize| {
        let k = mesh.node_coords(n)[2];
        k >= z_range.start && k <= z_range.end
    };
    for e in &mesh.edges {
        if e.kind == EdgeKind::PecEliminated && in_slab(e.nodes[0]) && in_slab(e.nodes[1]) {
            uf.union(e.nodes[0], e.nodes[1]);
        }
    }
    let mut root_id = vec![usize::MAX; nodes];
    let mut node_component = vec![None; nodes];
    let mut count = 0;
    for n in 0..nodes {
        if !mesh.pec_node[n] || !in_slab(n) {
            continue;
        }
        let r = uf.find(n);
        if root_id[r] == usize::MAX {
            root_id[r] = count;
            count += 1;
        }
        node_component[n] = Some(root_id[r]);
    }
    Conductors { count, node_component }
}

/// Conductor (PEC component) labeling of the whole mesh.
pub fn conductor_components(mesh: &Mesh) -> Conductors {
    label_conductors(mesh, 0..mesh.grid.nz)
}

/// Dimension of the curl-free space of the sub-mesh made of cell slabs
/// `z_range`: free nodes plus touching conductors, minus one.
pub fn gradient_dimension(mesh: &Mesh, z_range: std::ops::Range<usize>) -> usize {
    let cond = label_conductors(mesh, z_range.clone());
    let free = (0..mesh.num_nodes())
        .filter(|&n| {
            let k = mesh.node_coords(n)[2];
            !mesh.pec_node[n] && k >= z_range.start && k <= z_range.end
        })
        .count();
    (free + cond.count).saturating_sub(1)
}

/// Discrete gradient over the unknown edges.
///
/// Columns: free nodes in index order, then one column per conductor, with
/// the reference column (lowest free node, else conductor 0) dropped. The
/// entry for edge p->q is +1 at q and -1 at p.
pub fn discrete_gradient(mesh: &Mesh, conductors: &Conductors) -> DMatrix<f64> {
    let nodes = mesh.num_nodes();
    let mut col_of = vec![None; nodes];
    let mut next = 0;
    for (n, slot) in col_of.iter_mut().enumerate() {
        if conductors.node_component[n].is_none() && !mesh.pec_node[n] {
            *slot = Some(next);
            next += 1;
        }
    }
    let free = next;
    for (n, slot) in col_of.iter_mut().enumerate() {
        if let Some(c) = conductors.node_component[n] {
            *slot = Some(free + c);
        }
    }
    let total = free + conductors.count;
    let cols = total.saturating_sub(1);
    let mut g = DMatrix::zeros(mesh.num_unknowns(), cols);
    if total == 0 {
        return g;
    }
    // Reference is column 0 in both cases (lowest free node, or conductor 0).
    let shift = |c: usize| if c == 0 { None } else { Some(c - 1) };
    for (u, &e) in mesh.unknown_edges.iter().enumerate() {
        let [p, q] = mesh.edges[e].nodes;
        if let Some(cq) = col_of[q].and_then(shift) {
            g[(u, cq)] += 1.0;
        }
        if let Some(cp) = col_of[p].and_then(shift) {
            g[(u, cp)] -= 1.0;
        }
    }
    g
}

/// Role of an owned unknown within its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwnedGroup {
    StandaloneSurface,
    Volume,
    CoupledSurface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Cell slabs `[z0, z1)` of this layer.
    pub z_range: std::ops::Range<usize>,
    /// Owned unknowns in increasing order.
    pub owned: Vec<usize>,
    pub owned_groups: Vec<OwnedGroup>,
    /// All unknowns touched by the layer cells (s0-v-s0 set), increasing.
    pub standalone: Vec<usize>,
}

impl Layer {
    /// Positions of the owned unknowns inside the standalone set.
    pub fn owned_positions(&self) -> Vec<usize> {
        let mut pos = Vec::with_capacity(self.owned.len());
        let mut it = self.standalone.iter().enumerate();
        for &u in &self.owned {
            let (p, _) = it.find(|(_, &s)| s == u).expect("owned unknown outside standalone set");
            pos.push(p);
        }
        pos
    }

    pub fn group_count(&self, g: OwnedGroup) -> usize {
        self.owned_groups.iter().filter(|&&x| x == g).count()
    }
}

/// z-layer decomposition of the unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPartition {
    pub layers: Vec<Layer>,
    /// Owning layer of each unknown.
    pub owner: Vec<usize>,
}

impl LayerPartition {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn owned_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.owned.len()).collect()
    }
}

/// Split `[0, nz)` into `count` nearly equal consecutive ranges.
pub fn even_z_ranges(nz: usize, count: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if count == 0 || count > nz {
        return Err(Error::InvalidPartition(format!("cannot split {nz} slabs into {count} layers")));
    }
    let base = nz / count;
    let extra = nz % count;
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

/// Partition unknowns into z-layers.
///
/// The interface surface between layers i and i+1 belongs to layer i; the
/// bottom boundary plane belongs to the first layer.
pub fn partition_layers(mesh: &Mesh, z_ranges: &[std::ops::Range<usize>]) -> Result<LayerPartition> {
    let nz = mesh.grid.nz;
    let mut expect = 0;
    for r in z_ranges {
        if r.start != expect || r.end <= r.start {
            return Err(Error::InvalidPartition(format!("layer ranges must tile [0, {nz}) in order")));
        }
        expect = r.end;
    }
    if expect != nz || z_ranges.is_empty() {
        return Err(Error::InvalidPartition(format!("layer ranges must tile [0, {nz}) in order")));
    }

    let n = mesh.num_unknowns();
    let last = z_ranges.len() - 1;
    // layer of each surface plane / volume slab
    let mut plane_owner = vec![0; nz + 1];
    let mut slab_owner = vec![0; nz];
    for (li, r) in z_ranges.iter().enumerate() {
        for k in r.clone() {
            slab_owner[k] = li;
            plane_owner[k + 1] = li;
        }
    }

    let mut layers: Vec<Layer> = z_ranges
        .iter()
        .map(|r| Layer { z_range: r.clone(), owned: Vec::new(), owned_groups: Vec::new(), standalone: Vec::new() })
        .collect();
    let mut owner = vec![0; n];
    for u in 0..n {
        let (k, is_volume) = mesh.unknown_z_location(u);
        let li = if is_volume { slab_owner[k] } else { plane_owner[k] };
        owner[u] = li;
        let group = if is_volume {
            OwnedGroup::Volume
        } else if k == 0 || (li == last && k == nz) {
            OwnedGroup::StandaloneSurface
        } else {
            OwnedGroup::CoupledSurface
        };
        layers[li].owned.push(u);
        layers[li].owned_groups.push(group);
        for (lj, layer) in layers.iter_mut().enumerate() {
            let r = &z_ranges[lj];
            let touches = if is_volume { r.contains(&k) } else { k >= r.start && k <= r.end };
            if touches {
                layer.standalone.push(u);
            }
        }
    }
    Ok(LayerPartition { layers, owner })
}

/// One layer per cell slab.
pub fn partition_slabs(mesh: &Mesh) -> LayerPartition {
    let ranges: Vec<_> = (0..mesh.grid.nz).map(|k| k..k + 1).collect();
    partition_layers(mesh, &ranges).expect("slab ranges always tile")
}

/// Mesh summary rows `(quantity, value)` for CSV dumps.
pub fn summary_rows(mesh: &Mesh, part: Option<&LayerPartition>) -> Vec<(String, String)> {
    let cond = conductor_components(mesh);
    let mut rows = vec![
        ("cells".to_string(), mesh.num_cells().to_string()),
        ("nodes".to_string(), mesh.num_nodes().to_string()),
        ("edges".to_string(), mesh.edges.len().to_string()),
        ("unknowns".to_string(), mesh.num_unknowns().to_string()),
        ("conductors".to_string(), cond.count.to_string()),
    ];
    if let Some(p) = part {
        rows.push(("layers".to_string(), p.len().to_string()));
        for (i, l) in p.layers.iter().enumerate() {
            rows.push((format!("layer{i}_owned"), l.owned.len().to_string()));
            rows.push((format!("layer{i}_standalone"), l.standalone.len().to_string()));
        }
    }
    rows
}

/// Plain text listing of nodes and edges, for debugging.
pub fn listing(mesh: &Mesh) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    for n in 0..mesh.num_nodes() {
        let p = mesh.node_position(n);
        let _ = writeln!(s, "node {n} {:?} {:e} {:e} {:e} pec={}", mesh.node_coords(n), p[0], p[1], p[2], mesh.pec_node[n]);
    }
    for (i, e) in mesh.edges.iter().enumerate() {
        let tag = match e.kind {
            EdgeKind::Free(u) => format!("unknown {u}"),
            EdgeKind::PecEliminated => "pec".to_string(),
        };
        let _ = writeln!(s, "edge {i} {:?} {}->{} len={:e} {tag}", e.axis, e.nodes[0], e.nodes[1], e.length);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plate() -> Mesh {
        let spec = GridSpec::uniform([3, 4, 5], [1e-6, 4e-6, 100e-6]);
        build_mesh(&spec, &BoundarySpec::pec_x_planes(), &[]).unwrap()
    }

    #[test]
    fn parallel_plate_counts() {
        let m = plate();
        assert_eq!(m.edges.len(), 286);
        assert_eq!(m.num_unknowns(), 188);
        assert_eq!(conductor_components(&m).count, 2);
    }

    #[test]
    fn single_brick() {
        let spec = GridSpec::uniform([1, 1, 1], [1.0, 1.0, 1.0]);
        let m = build_mesh(&spec, &BoundarySpec::natural(), &[]).unwrap();
        assert_eq!(m.num_unknowns(), 12);
        assert_eq!(conductor_components(&m).count, 0);
        let g = discrete_gradient(&m, &conductor_components(&m));
        assert_eq!(g.ncols(), 7);

        let m = build_mesh(&spec, &BoundarySpec::pec_x_planes(), &[]).unwrap();
        assert_eq!(m.num_unknowns(), 4);
        assert!(m.unknown_edges.iter().all(|&e| m.edges[e].axis == Axis::X));
    }

    #[test]
    fn adjacent_pec_faces_form_one_conductor() {
        let spec = GridSpec::uniform([2, 2, 2], [1.0, 1.0, 1.0]);
        let bc = BoundarySpec::natural()
            .with(Face { axis: Axis::X, max_side: false }, BoundaryCondition::Pec)
            .with(Face { axis: Axis::Y, max_side: false }, BoundaryCondition::Pec);
        let m = build_mesh(&spec, &bc, &[]).unwrap();
        assert_eq!(conductor_components(&m).count, 1);
    }

    #[test]
    fn region_errors() {
        let spec = GridSpec::uniform([2, 2, 2], [1.0, 1.0, 1.0]);
        let mat = Material { eps_r: 2.0, mu_r: 1.0, sigma: 0.0 };
        let a = MaterialRegion { cells: CellBox { x: [0, 1], y: [0, 0], z: [0, 1] }, material: mat };
        let b = MaterialRegion { cells: CellBox { x: [1, 1], y: [0, 1], z: [1, 1] }, material: mat };
        let out = MaterialRegion { cells: CellBox { x: [0, 2], y: [0, 0], z: [0, 0] }, material: mat };
        assert!(matches!(build_mesh(&spec, &BoundarySpec::natural(), &[a, b]), Err(Error::OverlappingRegions(0, 1))));
        assert!(matches!(build_mesh(&spec, &BoundarySpec::natural(), &[out]), Err(Error::RegionOutOfBounds(0))));
        let bad = MaterialRegion { cells: a.cells, material: Material { eps_r: -1.0, ..mat } };
        assert!(build_mesh(&spec, &BoundarySpec::natural(), &[bad]).is_err());
    }

    #[test]
    fn grid_validation() {
        let mut spec = GridSpec::uniform([2, 2, 2], [1.0, 1.0, 1.0]);
        spec.dz = vec![1.0];
        assert!(build_mesh(&spec, &BoundarySpec::natural(), &[]).is_err());
        let mut spec = GridSpec::uniform([2, 2, 2], [1.0, 1.0, 1.0]);
        spec.dx[1] = 0.0;
        assert!(build_mesh(&spec, &BoundarySpec::natural(), &[]).is_err());
    }

    #[test]
    fn edge_count_formulas_sweep() {
        for nx in 1..=6 {
            for ny in 1..=6 {
                for nz in 1..=6 {
                    let spec = GridSpec::uniform([nx, ny, nz], [1.0, 1.0, 1.0]);
                    let m = build_mesh(&spec, &BoundarySpec::natural(), &[]).unwrap();
                    let count = |a| m.edges.iter().filter(|e| e.axis == a).count();
                    assert_eq!(count(Axis::X), nx * (ny + 1) * (nz + 1));
                    assert_eq!(count(Axis::Y), (nx + 1) * ny * (nz + 1));
                    assert_eq!(count(Axis::Z), (nx + 1) * (ny + 1) * nz);
                    assert_eq!(m.num_unknowns(), m.edges.len());
                }
            }
        }
    }

    #[test]
    fn parallel_plate_layers() {
        let m = plate();
        let p = partition_slabs(&m);
        assert_eq!(p.owned_sizes(), vec![56, 33, 33, 33, 33]);
        assert!(p.layers.iter().all(|l| l.standalone.len() == 56));
        let first = &p.layers[0];
        assert_eq!(first.group_count(OwnedGroup::StandaloneSurface), 23);
        assert_eq!(first.group_count(OwnedGroup::Volume), 10);
        assert_eq!(first.group_count(OwnedGroup::CoupledSurface), 23);
        let mid = &p.layers[2];
        assert_eq!(mid.group_count(OwnedGroup::StandaloneSurface), 0);
        assert_eq!(mid.group_count(OwnedGroup::CoupledSurface), 23);
        let last = &p.layers[4];
        assert_eq!(last.group_count(OwnedGroup::StandaloneSurface), 23);
        assert_eq!(last.group_count(OwnedGroup::CoupledSurface), 0);
    }

    #[test]
    fn single_layer_owns_everything() {
        let m = plate();
        let p = partition_layers(&m, &[0..5]).unwrap();
        assert_eq!(p.layers[0].owned, (0..188).collect::<Vec<_>>());
        assert_eq!(p.layers[0].standalone, p.layers[0].owned);
    }

    #[test]
    fn two_slab_variant() {
        let spec = GridSpec::uniform([3, 4, 2], [1e-6, 4e-6, 40e-6]);
        let m = build_mesh(&spec, &BoundarySpec::pec_x_planes(), &[]).unwrap();
        let p = partition_slabs(&m);
        assert_eq!(p.owned_sizes(), vec![56, 33]);
        assert_eq!(p.owned_sizes().iter().sum::<usize>(), m.num_unknowns());
    }

    #[test]
    fn bad_ranges() {
        let m = plate();
        assert!(partition_layers(&m, &[0..2, 3..5]).is_err());
        assert!(partition_layers(&m, &[0..2, 2..4]).is_err());
        assert!(partition_layers(&m, &[]).is_err());
        assert!(even_z_ranges(5, 6).is_err());
        assert_eq!(even_z_ranges(5, 2).unwrap(), vec![0..3, 3..5]);
    }

    #[test]
    fn gradient_columns() {
        let m = plate();
        let g = discrete_gradient(&m, &conductor_components(&m));
        assert_eq!(g.ncols(), 61);
        assert_eq!(gradient_dimension(&m, 0..5), 61);
        assert_eq!(gradient_dimension(&m, 2..3), 21);
        let sv = g.clone().svd(false, false).singular_values;
        assert!(sv.min() > 1e-8 * sv.max());

        let slab = GridSpec::uniform([3, 4, 1], [1e-6, 4e-6, 20e-6]);
        let ms = build_mesh(&slab, &BoundarySpec::pec_x_planes(), &[]).unwrap();
        assert_eq!(ms.num_unknowns(), 56);
        assert_eq!(discrete_gradient(&ms, &conductor_components(&ms)).ncols(), 21);
    }
}
