//! Taylor-Hood degree-of-freedom numbering and Dirichlet constraints.
//!
//! Scalar P2 nodes are numbered vertices first, then edge midpoints. The
//! velocity is stored component-blocked (`x` components, then `y`), and the
//! coupled system appends the P1 pressure after the velocity.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Point, TaggedMesh};

const CONFLICT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    n_vertices: usize,
    n_p2: usize,
    p2: Vec<[usize; 6]>,
    p1: Vec<[usize; 3]>,
}

impl DofMap {
    pub fn n_scalar(&self) -> usize {
        self.n_p2
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_p2
    }

    pub fn n_pressure(&self) -> usize {
        self.n_vertices
    }

    pub fn n_temperature(&self) -> usize {
        self.n_p2
    }

    /// Size of the coupled velocity-pressure system.
    pub fn n_flow(&self) -> usize {
        self.n_velocity() + self.n_pressure()
    }

    pub fn n_elements(&self) -> usize {
        self.p2.len()
    }

    /// Scalar P2 nodes of element `t`.
    pub fn p2_element(&self, t: usize) -> &[usize; 6] {
        &self.p2[t]
    }

    /// P1 nodes of element `t`.
    pub fn p1_element(&self, t: usize) -> &[usize; 3] {
        &self.p1[t]
    }

    /// Velocity dof of component `comp` at scalar node `node`.
    #[inline]
    pub fn velocity_dof(&self, node: usize, comp: usize) -> usize {
        comp * self.n_p2 + node
    }

    /// Pressure dof of vertex `v` in the coupled system.
    #[inline]
    pub fn pressure_dof(&self, v: usize) -> usize {
        self.n_velocity() + v
    }
}

pub fn build_dofmap(mesh: &TaggedMesh) -> DofMap {
    let nv = mesh.n_vertices();
    let p2 = mesh
        .triangles()
        .iter()
        .zip(mesh.triangle_edges())
        .map(|(&[a, b, c], &[e0, e1, e2])| [a, b, c, nv + e0, nv + e1, nv + e2])
        .collect();
    DofMap {
        n_vertices: nv,
        n_p2: mesh.n_p2_nodes(),
        p2,
        p1: mesh.triangles().to_vec(),
    }
}

/// Constrained dofs and their prescribed values, sorted by dof.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletSet {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl DirichletSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (dof, value) in pairs {
            if !value.is_finite() {
                return Err(Error::param("dirichlet", format!("non-finite value at dof {dof}")));
            }
            insert_checked(&mut map, dof, value)?;
        }
        Ok(Self::from_map(map))
    }

    fn from_map(map: BTreeMap<usize, f64>) -> Self {
        let (dofs, values) = map.into_iter().unzip();
        DirichletSet { dofs, values }
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dofs.iter().copied().zip(self.values.iter().copied())
    }

    pub fn contains(&self, dof: usize) -> bool {
        self.dofs.binary_search(&dof).is_ok()
    }

    /// Shift every dof by `offset` (to embed a field into a block system).
    pub fn shifted(&self, offset: usize) -> Self {
        DirichletSet {
            dofs: self.dofs.iter().map(|d| d + offset).collect(),
            values: self.values.clone(),
        }
    }

    /// Union of two sets over disjoint dof ranges.
    pub fn merged(&self, other: &DirichletSet) -> Result<Self> {
        Self::from_pairs(self.iter().chain(other.iter()))
    }

    /// Overwrite the constrained entries of `x`.
    pub fn impose(&self, x: &mut [f64]) {
        for (d, v) in self.iter() {
            x[d] = v;
        }
    }
}

fn insert_checked(map: &mut BTreeMap<usize, f64>, dof: usize, value: f64) -> Result<()> {
    if let Some(&old) = map.get(&dof) {
        if (old - value).abs() > CONFLICT_TOL {
            return Err(Error::DirichletConflict {
                node: dof,
                a: old,
                b: value,
            });
        }
        return Ok(());
    }
    map.insert(dof, value);
    Ok(())
}

pub type ScalarFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

/// Dirichlet data per boundary tag, possibly time dependent.
///
/// Velocity data may be attached to `Inlet`/`Wall`, temperature data to
/// `Dirichlet`. All P2 nodes on the closure of a tagged edge are constrained,
/// so the corners of a Dirichlet part belong to it.
#[derive(Clone, Default)]
pub struct BoundaryData {
    pub velocity: Vec<(BoundaryTag, VectorFn)>,
    pub temperature: Vec<(BoundaryTag, ScalarFn)>,
}

impl BoundaryData {
    /// No-slip walls (and inlets) and `u = 1` on the heated wall.
    pub fn heated_cavity() -> Self {
        let zero: VectorFn = Arc::new(|_, _| [0.0, 0.0]);
        BoundaryData {
            velocity: vec![(BoundaryTag::Inlet, zero.clone()), (BoundaryTag::Wall, zero)],
            temperature: vec![(BoundaryTag::Dirichlet, Arc::new(|_, _| 1.0))],
        }
    }
}

/// Velocity and temperature constraint sets at time `t`.
///
/// Velocity dofs are in the velocity numbering (`velocity_dof`), temperature
/// dofs are scalar P2 node ids.
pub fn dirichlet_sets(
    mesh: &TaggedMesh,
    dofmap: &DofMap,
    data: &BoundaryData,
    t: f64,
) -> Result<(DirichletSet, DirichletSet)> {
    let mut velocity = BTreeMap::new();
    for (tag, f) in &data.velocity {
        for b in mesh.tagged_edges(*tag) {
            for node in edge_nodes(mesh, b.edge) {
                let value = f(mesh.node_coord(node), t);
                for (comp, &v) in value.iter().enumerate() {
                    insert_checked(&mut velocity, dofmap.velocity_dof(node, comp), v)?;
                }
            }
        }
    }
    let mut temperature = BTreeMap::new();
    for (tag, f) in &data.temperature {
        for b in mesh.tagged_edges(*tag) {
            for node in edge_nodes(mesh, b.edge) {
                insert_checked(&mut temperature, node, f(mesh.node_coord(node), t))?;
            }
        }
    }
    Ok((
        DirichletSet::from_map(velocity),
        DirichletSet::from_map(temperature),
    ))
}

fn edge_nodes(mesh: &TaggedMesh, e: usize) -> [usize; 3] {
    let [a, b] = mesh.edges()[e];
    [a, b, mesh.midpoint_node(e)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, cavity_mesh, RectUnion};

    #[test]
    fn counts_on_single_cell() {
        let mesh = build_structured_mesh(&RectUnion::unit_square(), 1).unwrap();
        let d = build_dofmap(&mesh);
        assert_eq!(d.n_pressure(), 4);
        assert_eq!(d.n_temperature(), 9);
        assert_eq!(d.n_velocity(), 18);
    }

    #[test]
    fn every_node_is_referenced_and_tables_are_consistent() {
        let mesh = cavity_mesh(4).unwrap();
        let d = build_dofmap(&mesh);
        let mut seen = vec![false; d.n_scalar()];
        for t in 0..d.n_elements() {
            let nodes = d.p2_element(t);
            let mut sorted = nodes.to_vec();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 6);
            for &n in nodes {
                seen[n] = true;
            }
            // Midpoint nodes sit at the midpoint of their element edge.
            let coords: Vec<_> = nodes.iter().map(|&n| mesh.node_coord(n)).collect();
            for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let m = coords[3 + k];
                assert_eq!(m, [0.5 * (coords[a][0] + coords[b][0]), 0.5 * (coords[a][1] + coords[b][1])]);
            }
        }
        assert!(seen.into_iter().all(|s| s));
        assert_eq!(build_dofmap(&cavity_mesh(4).unwrap()), d);
    }

    #[test]
    fn cavity_constraints() {
        let mesh = cavity_mesh(2).unwrap();
        let d = build_dofmap(&mesh);
        let (vel, temp) = dirichlet_sets(&mesh, &d, &BoundaryData::heated_cavity(), 0.0).unwrap();
        assert_eq!(temp.len(), 5);
        for (node, value) in temp.iter() {
            assert_eq!(mesh.node_coord(node)[0], 0.0);
            assert_eq!(value, 1.0);
        }
        assert!(vel.values().iter().all(|&v| v == 0.0));
        for node in 0..d.n_scalar() {
            let [x, y] = mesh.node_coord(node);
            let constrained = vel.contains(d.velocity_dof(node, 0));
            assert_eq!(constrained, vel.contains(d.velocity_dof(node, 1)));
            if x == 1.0 && y > 0.0 && y < 1.0 {
                assert!(!constrained, "open boundary node ({x}, {y})");
            }
            if x == 1.0 && (y == 0.0 || y == 1.0) {
                assert!(constrained, "corner ({x}, {y})");
            }
        }
    }

    #[test]
    fn constrained_velocity_count() {
        for n in [2, 3, 5] {
            let mesh = cavity_mesh(n).unwrap();
            let d = build_dofmap(&mesh);
            let (vel, _) = dirichlet_sets(&mesh, &d, &BoundaryData::heated_cavity(), 0.0).unwrap();
            // 8n boundary P2 nodes, of which 2n - 1 are interior to the open side.
            assert_eq!(vel.len(), 2 * (8 * n - (2 * n - 1)));
        }
    }

    #[test]
    fn conflicting_values_are_rejected() {
        let mesh = cavity_mesh(2).unwrap();
        let d = build_dofmap(&mesh);
        let data = BoundaryData {
            velocity: vec![],
            temperature: vec![
                (BoundaryTag::Dirichlet, Arc::new(|_, _| 1.0)),
                (BoundaryTag::Neumann, Arc::new(|_, _| 0.0)),
            ],
        };
        assert!(matches!(
            dirichlet_sets(&mesh, &d, &data, 0.0),
            Err(Error::DirichletConflict { .. })
        ));
        assert!(DirichletSet::from_pairs([(1, 0.0), (1, 1.0)]).is_err());
        assert!(DirichletSet::from_pairs([(1, f64::NAN)]).is_err());
    }
}
