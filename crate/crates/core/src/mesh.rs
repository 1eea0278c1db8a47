//! Structured triangulations of rectilinear domains.
//!
//! Every domain is a union of axis-aligned rectangles whose corners sit on the
//! lattice of spacing `1/n_per_unit`. Each lattice cell is split along its
//! lower-left to upper-right diagonal. Vertices, cells and edges are numbered
//! canonically from lattice coordinates, so two meshes of the same region are
//! identical node for node, no matter how they were produced.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const GEOM_EPS: f64 = 1e-12;
const LATTICE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn overlap(&self, other: &Rect) -> (f64, f64) {
        let dx = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let dy = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        (dx, dy)
    }
}

/// A connected union of axis-aligned rectangles with disjoint interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct RectUnion {
    rects: Vec<Rect>,
}

impl RectUnion {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        if rects.is_empty() {
            return Err(Error::InvalidDomain("no rectangles".into()));
        }
        for r in &rects {
            if !(r.x_max > r.x_min && r.y_max > r.y_min) || !r.area().is_finite() {
                return Err(Error::InvalidDomain(format!("rectangle {r:?} has no area")));
            }
        }
        // Union-find over rectangles that share a boundary segment.
        let mut parent: Vec<usize> = (0..rects.len()).collect();
        fn find(parent: &mut [usize], i: usize) -> usize {
            let mut i = i;
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                let (dx, dy) = rects[i].overlap(&rects[j]);
                if dx > GEOM_EPS && dy > GEOM_EPS {
                    return Err(Error::InvalidDomain(format!(
                        "rectangles {i} and {j} overlap"
                    )));
                }
                let touching = (dx.abs() <= GEOM_EPS && dy > GEOM_EPS)
                    || (dy.abs() <= GEOM_EPS && dx > GEOM_EPS);
                if touching {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        if (1..rects.len()).any(|i| find(&mut parent, i) != root) {
            return Err(Error::InvalidDomain("union is not connected".into()));
        }
        Ok(RectUnion { rects })
    }

    /// The cavity `(0,1)^2`.
    pub fn unit_square() -> Self {
        RectUnion {
            rects: vec![Rect::new(0.0, 1.0, 0.0, 1.0)],
        }
    }

    /// The cavity extended by the chamber `(1,2) x (-1,2)` behind its open side.
    pub fn extended_cavity() -> Self {
        RectUnion {
            rects: vec![Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(1.0, 2.0, -1.0, 2.0)],
        }
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn area(&self) -> f64 {
        self.rects.iter().map(Rect::area).sum()
    }

    /// Lattice cells (lower-left corner indices) covered by the union.
    fn cells(&self, n_per_unit: usize) -> Result<BTreeSet<(i64, i64)>> {
        let mut cells = BTreeSet::new();
        for r in &self.rects {
            let i0 = to_lattice(r.x_min, n_per_unit)?;
            let i1 = to_lattice(r.x_max, n_per_unit)?;
            let j0 = to_lattice(r.y_min, n_per_unit)?;
            let j1 = to_lattice(r.y_max, n_per_unit)?;
            for j in j0..j1 {
                for i in i0..i1 {
                    // (row, column) so that iteration order is row-major.
                    cells.insert((j, i));
                }
            }
        }
        Ok(cells)
    }
}

fn to_lattice(value: f64, n_per_unit: usize) -> Result<i64> {
    let scaled = value * n_per_unit as f64;
    let rounded = scaled.round();
    if !scaled.is_finite() || (scaled - rounded).abs() > LATTICE_EPS {
        return Err(Error::OffLattice { value, n_per_unit });
    }
    Ok(rounded as i64)
}

/// Boundary regions of the two boundary decompositions.
///
/// Velocity uses `{Inlet, Wall, Open}`, temperature uses
/// `{Dirichlet, Neumann, Open}`; `Open` is shared by both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Inlet,
    Wall,
    Open,
    Dirichlet,
    Neumann,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::Inlet,
        BoundaryTag::Wall,
        BoundaryTag::Open,
        BoundaryTag::Dirichlet,
        BoundaryTag::Neumann,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Inlet => "Gamma_i",
            BoundaryTag::Wall => "Gamma_w",
            BoundaryTag::Open => "Gamma_o",
            BoundaryTag::Dirichlet => "Gamma_d",
            BoundaryTag::Neumann => "Gamma_n",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TagSet(u8);

impl TagSet {
    pub fn contains(self, tag: BoundaryTag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn insert(&mut self, tag: BoundaryTag) {
        self.0 |= tag.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = BoundaryTag> {
        BoundaryTag::ALL.into_iter().filter(move |t| self.contains(*t))
    }

    fn has_velocity_tag(self) -> bool {
        self.contains(BoundaryTag::Inlet)
            || self.contains(BoundaryTag::Wall)
            || self.contains(BoundaryTag::Open)
    }

    fn has_temperature_tag(self) -> bool {
        self.contains(BoundaryTag::Dirichlet)
            || self.contains(BoundaryTag::Neumann)
            || self.contains(BoundaryTag::Open)
    }
}

/// A boundary edge, oriented so that the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub triangle: usize,
    /// Start and end vertex, counterclockwise with respect to the domain.
    pub vertices: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct TaggedMesh {
    n_per_unit: usize,
    lattice: Vec<[i64; 2]>,
    vertices: Vec<Point>,
    cells: Vec<[i64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// Local edge k of a triangle joins local vertices k and (k+1) % 3.
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    tags: Vec<TagSet>,
}

/// Build the structured triangulation of `domain` with `n_per_unit` cells per
/// unit length.
pub fn build_structured_mesh(domain: &RectUnion, n_per_unit: usize) -> Result<TaggedMesh> {
    if n_per_unit == 0 {
        return Err(Error::param("n_per_unit", "must be at least 1"));
    }
    let cell_set = domain.cells(n_per_unit)?;

    let mut corner_set = BTreeSet::new();
    for &(j, i) in &cell_set {
        for (dj, di) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            corner_set.insert((j + dj, i + di));
        }
    }
    let h = 1.0 / n_per_unit as f64;
    let mut vertex_id = HashMap::with_capacity(corner_set.len());
    let mut lattice = Vec::with_capacity(corner_set.len());
    let mut vertices = Vec::with_capacity(corner_set.len());
    for (id, &(j, i)) in corner_set.iter().enumerate() {
        vertex_id.insert((j, i), id);
        lattice.push([i, j]);
        vertices.push([i as f64 * h, j as f64 * h]);
    }

    let mut cells = Vec::with_capacity(cell_set.len());
    let mut triangles = Vec::with_capacity(2 * cell_set.len());
    for &(j, i) in &cell_set {
        let ll = vertex_id[&(j, i)];
        let lr = vertex_id[&(j, i + 1)];
        let ur = vertex_id[&(j + 1, i + 1)];
        let ul = vertex_id[&(j + 1, i)];
        cells.push([i, j]);
        triangles.push([ll, lr, ur]);
        triangles.push([ll, ur, ul]);
    }

    // Edges sorted by their (min, max) vertex pair.
    let mut edge_owners: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_owners
                .entry((a.min(b), a.max(b)))
                .or_default()
                .push((t, k));
        }
    }
    let mut edges = Vec::with_capacity(edge_owners.len());
    let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
    let mut boundary = Vec::new();
    for (e, (&(a, b), owners)) in edge_owners.iter().enumerate() {
        edges.push([a, b]);
        for &(t, k) in owners {
            triangle_edges[t][k] = e;
        }
        if owners.len() == 1 {
            let (t, k) = owners[0];
            let tri = triangles[t];
            boundary.push(BoundaryEdge {
                edge: e,
                triangle: t,
                vertices: [tri[k], tri[(k + 1) % 3]],
            });
        }
    }
    let tags = vec![TagSet::default(); edges.len()];

    Ok(TaggedMesh {
        n_per_unit,
        lattice,
        vertices,
        cells,
        triangles,
        edges,
        triangle_edges,
        boundary,
        tags,
    })
}

impl TaggedMesh {
    pub fn n_per_unit(&self) -> usize {
        self.n_per_unit
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_per_unit as f64
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of P2 nodes (vertices followed by edge midpoints).
    pub fn n_p2_nodes(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    /// P2 node id of the midpoint of edge `e`.
    pub fn midpoint_node(&self, e: usize) -> usize {
        self.vertices.len() + e
    }

    /// Coordinates of a P2 node.
    pub fn node_coord(&self, node: usize) -> Point {
        let nv = self.vertices.len();
        if node < nv {
            self.vertices[node]
        } else {
            let [a, b] = self.edges[node - nv];
            midpoint(self.vertices[a], self.vertices[b])
        }
    }

    pub fn triangle_coords(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn edge_tags(&self, e: usize) -> TagSet {
        self.tags[e]
    }

    /// Boundary edges carrying `tag`.
    pub fn tagged_edges(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> + '_ {
        self.boundary
            .iter()
            .filter(move |b| self.tags[b.edge].contains(tag))
    }

    /// Outward unit normal and length of a boundary edge.
    pub fn boundary_normal(&self, b: &BoundaryEdge) -> ([f64; 2], f64) {
        let p = self.vertices[b.vertices[0]];
        let q = self.vertices[b.vertices[1]];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        ([dy / len, -dx / len], len)
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        midpoint(self.vertices[a], self.vertices[b])
    }

    /// Euler characteristic `V - E + F`; 1 for a simply connected mesh.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

pub type Predicate = Box<dyn Fn(Point) -> bool + Send + Sync>;

/// Assigns `tag` to every boundary edge whose midpoint satisfies `predicate`.
pub struct TagRule {
    pub tag: BoundaryTag,
    pub predicate: Predicate,
}

impl TagRule {
    pub fn new(tag: BoundaryTag, predicate: impl Fn(Point) -> bool + Send + Sync + 'static) -> Self {
        TagRule {
            tag,
            predicate: Box::new(predicate),
        }
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= GEOM_EPS
}

/// Tagging rules for the cavity `(0,1)^2`: heated wall at `x1 = 0`, open
/// side at `x1 = 1`, insulated floor and ceiling.
pub fn cavity_rules() -> Vec<TagRule> {
    vec![
        TagRule::new(BoundaryTag::Open, |p| near(p[0], 1.0)),
        TagRule::new(BoundaryTag::Wall, |p| !near(p[0], 1.0)),
        TagRule::new(BoundaryTag::Dirichlet, |p| near(p[0], 0.0)),
        TagRule::new(BoundaryTag::Neumann, |p| {
            (near(p[1], 0.0) || near(p[1], 1.0)) && !near(p[0], 1.0) && !near(p[0], 0.0)
        }),
    ]
}

/// Tagging rules for the extended cavity: open side at `x1 = 2`, heated wall
/// `{x1 = 0, 0 < x2 < 1}`, everything else insulated no-slip wall.
pub fn extended_cavity_rules() -> Vec<TagRule> {
    let heated = |p: Point| near(p[0], 0.0) && p[1] > 0.0 && p[1] < 1.0;
    vec![
        TagRule::new(BoundaryTag::Open, |p| near(p[0], 2.0)),
        TagRule::new(BoundaryTag::Wall, |p| !near(p[0], 2.0)),
        TagRule::new(BoundaryTag::Dirichlet, heated),
        TagRule::new(BoundaryTag::Neumann, move |p| !near(p[0], 2.0) && !heated(p)),
    ]
}

/// Replace all boundary tags according to `rules`, evaluated at edge midpoints.
pub fn tag_boundaries(mut mesh: TaggedMesh, rules: &[TagRule]) -> Result<TaggedMesh> {
    for b in &mesh.boundary {
        let mid = midpoint(mesh.vertices[b.vertices[0]], mesh.vertices[b.vertices[1]]);
        let mut set = TagSet::default();
        for rule in rules {
            if (rule.predicate)(mid) {
                set.insert(rule.tag);
            }
        }
        let missing = if !set.has_velocity_tag() {
            Some("velocity")
        } else if !set.has_temperature_tag() {
            Some("temperature")
        } else {
            None
        };
        if let Some(decomposition) = missing {
            return Err(Error::UntaggedEdge {
                x: mid[0],
                y: mid[1],
                decomposition,
            });
        }
        mesh.tags[b.edge] = set;
    }
    Ok(mesh)
}

/// Correspondence from the P2 nodes of a sub-mesh to those of a larger mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMap {
    nodes: Vec<usize>,
}

impl NodeMap {
    pub fn get(&self, node: usize) -> usize {
        self.nodes[node]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.nodes
    }

    /// Gather `ext` values (one per P2 node of the large mesh) onto the sub-mesh.
    pub fn restrict(&self, ext: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&n| ext[n]).collect()
    }
}

/// Mesh `region` with the lattice of `mesh_ext` and map its nodes into `mesh_ext`.
///
/// The returned mesh carries no boundary tags.
pub fn extract_submesh(mesh_ext: &TaggedMesh, region: &RectUnion) -> Result<(TaggedMesh, NodeMap)> {
    let n = mesh_ext.n_per_unit;
    let sub = build_structured_mesh(region, n).map_err(|e| match e {
        Error::OffLattice { value, .. } => {
            Error::Misaligned(format!("coordinate {value} is off the mesh lattice"))
        }
        other => other,
    })?;
    let ext_cells: BTreeSet<[i64; 2]> = mesh_ext.cells.iter().copied().collect();
    let shared = sub.cells.iter().filter(|c| ext_cells.contains(*c)).count();
    if shared == 0 {
        return Err(Error::Misaligned("region shares no cells with the mesh".into()));
    }
    if shared != sub.cells.len() {
        return Err(Error::Misaligned(format!(
            "{} cells of the region lie outside the mesh",
            sub.cells.len() - shared
        )));
    }

    let ext_vertex: HashMap<[i64; 2], usize> = mesh_ext
        .lattice
        .iter()
        .enumerate()
        .map(|(id, &l)| (l, id))
        .collect();
    let ext_edge: HashMap<[usize; 2], usize> = mesh_ext
        .edges
        .iter()
        .enumerate()
        .map(|(id, &e)| (e, id))
        .collect();
    let vmap: Vec<usize> = sub.lattice.iter().map(|l| ext_vertex[l]).collect();
    let mut nodes = vmap.clone();
    for &[a, b] in &sub.edges {
        let (a, b) = (vmap[a], vmap[b]);
        let e = ext_edge[&[a.min(b), a.max(b)]];
        nodes.push(mesh_ext.midpoint_node(e));
    }
    Ok((sub, NodeMap { nodes }))
}

/// The tagged cavity mesh.
pub fn cavity_mesh(n_per_unit: usize) -> Result<TaggedMesh> {
    tag_boundaries(
        build_structured_mesh(&RectUnion::unit_square(), n_per_unit)?,
        &cavity_rules(),
    )
}

/// The tagged extended-cavity mesh.
pub fn extended_cavity_mesh(n_per_unit: usize) -> Result<TaggedMesh> {
    tag_boundaries(
        build_structured_mesh(&RectUnion::extended_cavity(), n_per_unit)?,
        &extended_cavity_rules(),
    )
}
