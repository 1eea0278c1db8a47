//! Assembly of the linearized time-step systems.
//!
//! Each step solves two linear systems. The temperature system is
//!
//! ```text
//! (2/k)(u, y) + (w.grad u, y) + 1/(Re Pr)(grad u, grad y) - C_u(u, w, y)
//!     = (2/k)(u_n, y) - (v_n.grad u_n, y) - 1/(Re Pr)(grad u_n, grad y) + C_u(u_n, v_n, y)
//! ```
//!
//! with `C_u(u, w, y) = int_{Gamma_o} u beta(w.n)(w.n) y`. The coupled flow
//! system in `(v, p)` is the trapezoid rule applied to momentum plus the
//! continuity constraint `(div v, q) = 0`, with the convecting velocity `w`
//! extrapolated from the two previous levels and the directional do-nothing
//! term `C_v(v, w, y) = int_{Gamma_o} 1/2 (v.y)(w.n)_-` on the open boundary.
//!
//! The systems are assembled into a fixed sparsity pattern computed once per
//! mesh; element contributions are scattered in element order, so results are
//! bitwise reproducible in both assembly modes.

use rayon::prelude::*;

use crate::boundary_conditions::{negative_part, BetaSpec, TemperatureBc, VelocityBc};
use crate::error::{Error, Result};
use crate::fem::{edge_p2_values, edge_quadrature, p1_values, p2_gradients, p2_values, triangle_quadrature, AffineMap};
use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryEdge, BoundaryTag, Point, TaggedMesh};
use crate::spaces::{DirichletSet, DofMap, ScalarFn, VectorFn};

const NQ: usize = 7;

/// Dimensionless parameters and time step. Buoyancy acts along `e = (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub re: f64,
    pub pr: f64,
    pub gr: f64,
    pub k: f64,
}

impl Params {
    pub fn new(re: f64, pr: f64, gr: f64, k: f64) -> Result<Self> {
        let p = Params { re, pr, gr, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        positive("re", self.re)?;
        positive("pr", self.pr)?;
        positive("k", self.k)?;
        if !(self.gr >= 0.0 && self.gr.is_finite()) {
            return Err(Error::param("gr", format!("must be non-negative, got {}", self.gr)));
        }
        Ok(())
    }

    /// Buoyancy coefficient `Gr / Re^2`.
    pub fn buoyancy(&self) -> f64 {
        self.gr / (self.re * self.re)
    }

    /// Thermal diffusivity `1 / (Re Pr)`.
    pub fn diffusivity(&self) -> f64 {
        1.0 / (self.re * self.pr)
    }
}

/// Velocity, pressure and temperature at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(dofmap: &DofMap, t: f64) -> Self {
        State {
            v: vec![0.0; dofmap.n_velocity()],
            p: vec![0.0; dofmap.n_pressure()],
            u: vec![0.0; dofmap.n_temperature()],
            t,
        }
    }

    pub fn check_layout(&self, dofmap: &DofMap) -> Result<()> {
        if self.v.len() != dofmap.n_velocity()
            || self.p.len() != dofmap.n_pressure()
            || self.u.len() != dofmap.n_temperature()
        {
            return Err(Error::DimensionMismatch(format!(
                "state has ({}, {}, {}) coefficients, dofmap expects ({}, {}, {})",
                self.v.len(),
                self.p.len(),
                self.u.len(),
                dofmap.n_velocity(),
                dofmap.n_pressure(),
                dofmap.n_temperature()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.p).chain(&self.u).all(|x| x.is_finite())
    }
}

/// Linear extrapolation `2 x_n - x_{n-1}` of velocity and temperature.
pub fn extrapolate(state_n: &State, state_nm1: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    if state_n.v.len() != state_nm1.v.len() || state_n.u.len() != state_nm1.u.len() {
        return Err(Error::DimensionMismatch("extrapolation of states with different layouts".into()));
    }
    let lin = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 2.0 * x - y).collect();
    Ok((lin(&state_n.v, &state_nm1.v), lin(&state_n.u, &state_nm1.u)))
}

/// Which reading of the linearized momentum weak form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeakForm {
    /// Trapezoid rule with explicit convection and pressure at level `n`.
    #[default]
    SemiDiscrete,
    /// The displayed form taken literally: the implicit convection and
    /// pressure terms appear on both sides, so they are doubled on the left
    /// and absent on the right.
    Literal,
}

/// Time level of the temperature in the buoyancy force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuoyancyLevel {
    /// `Gr/Re^2 (u_{n+1} + u_n) e` (trapezoid).
    #[default]
    Trapezoid,
    /// `2 Gr/Re^2 u_{n+1} e`.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssemblyMode {
    #[default]
    Sequential,
    /// Element kernels run on the rayon pool; the scatter stays in element order.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub weak_form: WeakForm,
    pub buoyancy_level: BuoyancyLevel,
    pub mode: AssemblyMode,
    pub convection: bool,
    pub buoyancy: bool,
    pub open_boundary_terms: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            weak_form: WeakForm::SemiDiscrete,
            buoyancy_level: BuoyancyLevel::Trapezoid,
            mode: AssemblyMode::Sequential,
            convection: true,
            buoyancy: true,
            open_boundary_terms: true,
        }
    }
}

/// Volume sources `g1` (momentum) and `g2` (heat), functions of `(x, t)`.
#[derive(Clone, Default)]
pub struct Forcing {
    pub momentum: Option<VectorFn>,
    pub heat: Option<ScalarFn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Temperature { n: usize },
    Flow { n_velocity: usize, n_pressure: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

/// Left-hand-side coefficients of the flow operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLhs {
    /// Coefficient of `(v, y)`.
    pub mass: f64,
    /// Coefficient of `(grad v, grad y)`.
    pub viscous: f64,
    /// Coefficient of `(w.grad v, y)`.
    pub convection: f64,
    /// Coefficient of `-(p, div y)`.
    pub pressure: f64,
    /// Coefficient of `-C_v(v, w, y)`; zero for do-nothing.
    pub open_boundary: f64,
}

/// Right-hand side of the flow system.
#[derive(Clone, Default)]
pub struct FlowRhs<'a> {
    pub old_v: Option<&'a [f64]>,
    pub old_p: Option<&'a [f64]>,
    /// Coefficient of `(v_n, y)`.
    pub mass: f64,
    /// Coefficient of `-(grad v_n, grad y)`.
    pub viscous: f64,
    /// Coefficient of `-(v_n.grad v_n, y)`.
    pub convection: f64,
    /// Coefficient of `(p_n, div y)`.
    pub pressure: f64,
    /// Coefficient of `C_v(v_n, v_n, y)`.
    pub open_boundary: f64,
    /// Buoyancy terms `(c u e, y)`.
    pub buoyancy: Vec<(f64, &'a [f64])>,
    /// Momentum source sampled at `(weight, time)` pairs.
    pub forcing: Option<(&'a VectorFn, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatLhs {
    pub mass: f64,
    pub diffusion: f64,
    pub convection: f64,
    /// Coefficient of `-C_u(u, w, y)` and the beta function to use.
    pub open_boundary: Option<(f64, BetaSpec)>,
}

#[derive(Clone, Default)]
pub struct HeatRhs<'a> {
    pub old_u: Option<&'a [f64]>,
    /// Convecting velocity of the explicit terms.
    pub old_v: Option<&'a [f64]>,
    pub mass: f64,
    pub diffusion: f64,
    pub convection: f64,
    /// Coefficient of `C_u(u_n, v_n, y)`.
    pub open_boundary: Option<(f64, BetaSpec)>,
    pub forcing: Option<(&'a ScalarFn, Vec<(f64, f64)>)>,
}

struct RefTables {
    weights: [f64; NQ],
    points: [Point; NQ],
    p2: [[f64; 6]; NQ],
    dp2: [[[f64; 2]; 6]; NQ],
    p1: [[f64; 3]; NQ],
    edge_points: Vec<f64>,
    edge_weights: Vec<f64>,
}

impl RefTables {
    fn new() -> Self {
        let rule = triangle_quadrature(5).expect("degree-5 rule");
        let edge = edge_quadrature(7).expect("degree-7 edge rule");
        let mut t = RefTables {
            weights: [0.0; NQ],
            points: [[0.0; 2]; NQ],
            p2: [[0.0; 6]; NQ],
            dp2: [[[0.0; 2]; 6]; NQ],
            p1: [[0.0; 3]; NQ],
            edge_points: edge.points.iter().map(|p| p[0]).collect(),
            edge_weights: edge.weights.clone(),
        };
        for (q, (p, w)) in rule.iter().enumerate() {
            t.weights[q] = w;
            t.points[q] = p;
            t.p2[q] = p2_values(p);
            t.dp2[q] = p2_gradients(p);
            t.p1[q] = p1_values(p);
        }
        t
    }
}

/// Per-mesh assembly context: element maps, quadrature tables and the fixed
/// sparsity patterns of both systems.
pub struct Assembler<'m> {
    mesh: &'m TaggedMesh,
    dofmap: &'m DofMap,
    maps: Vec<AffineMap>,
    tables: RefTables,
    open_edges: Vec<BoundaryEdge>,
    heat_pattern: CsrMatrix,
    heat_pos: Vec<[usize; 36]>,
    flow_pattern: CsrMatrix,
    flow_pos: Vec<FlowPositions>,
}

#[derive(Clone)]
struct FlowPositions {
    vv: [[[usize; 6]; 6]; 2],
    vp: [[[usize; 3]; 6]; 2],
    pv: [[[usize; 6]; 3]; 2],
}

/// Element contributions of the flow system.
struct FlowLocal {
    a: [[f64; 6]; 6],
    /// `div[c][m][j] = int psi_m d_c phi_j`.
    div: [[[f64; 6]; 3]; 2],
    f: [[f64; 6]; 2],
}

struct HeatLocal {
    a: [[f64; 6]; 6],
    f: [f64; 6],
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl<'m> Assembler<'m> {
    pub fn new(mesh: &'m TaggedMesh, dofmap: &'m DofMap) -> Result<Self> {
        let maps = (0..mesh.n_triangles())
            .map(|t| AffineMap::new(&mesh.triangle_coords(t)))
            .collect::<Result<Vec<_>>>()?;
        let open_edges: Vec<BoundaryEdge> = mesh.tagged_edges(BoundaryTag::Open).copied().collect();
        let n = dofmap.n_scalar();

        let mut triplets = Vec::with_capacity(36 * dofmap.n_elements());
        for t in 0..dofmap.n_elements() {
            let nodes = dofmap.p2_element(t);
            for &i in nodes {
                for &j in nodes {
                    triplets.push((i, j, 0.0));
                }
            }
        }
        let heat_pattern = CsrMatrix::from_triplets(n, n, &triplets)?;
        let heat_pos = (0..dofmap.n_elements())
            .map(|t| {
                let nodes = dofmap.p2_element(t);
                let mut pos = [0usize; 36];
                for i in 0..6 {
                    for j in 0..6 {
                        pos[6 * i + j] = heat_pattern.position(nodes[i], nodes[j]).unwrap();
                    }
                }
                pos
            })
            .collect();

        let nf = dofmap.n_flow();
        let mut triplets = Vec::with_capacity(144 * dofmap.n_elements());
        for t in 0..dofmap.n_elements() {
            let nodes = dofmap.p2_element(t);
            let verts = dofmap.p1_element(t);
            for c in 0..2 {
                for &i in nodes {
                    let row = dofmap.velocity_dof(i, c);
                    for &j in nodes {
                        triplets.push((row, dofmap.velocity_dof(j, c), 0.0));
                    }
                    for &m in verts {
                        triplets.push((row, dofmap.pressure_dof(m), 0.0));
                        triplets.push((dofmap.pressure_dof(m), row, 0.0));
                    }
                }
            }
        }
        let flow_pattern = CsrMatrix::from_triplets(nf, nf, &triplets)?;
        let flow_pos = (0..dofmap.n_elements())
            .map(|t| {
                let nodes = dofmap.p2_element(t);
                let verts = dofmap.p1_element(t);
                let mut pos = FlowPositions {
                    vv: [[[0; 6]; 6]; 2],
                    vp: [[[0; 3]; 6]; 2],
                    pv: [[[0; 6]; 3]; 2],
                };
                let at = |r: usize, c: usize| flow_pattern.position(r, c).unwrap();
                for c in 0..2 {
                    for i in 0..6 {
                        let row = dofmap.velocity_dof(nodes[i], c);
                        for j in 0..6 {
                            pos.vv[c][i][j] = at(row, dofmap.velocity_dof(nodes[j], c));
                        }
                        for m in 0..3 {
                            pos.vp[c][i][m] = at(row, dofmap.pressure_dof(verts[m]));
                            pos.pv[c][m][i] = at(dofmap.pressure_dof(verts[m]), row);
                        }
                    }
                }
                pos
            })
            .collect();

        Ok(Assembler {
            mesh,
            dofmap,
            maps,
            tables: RefTables::new(),
            open_edges,
            heat_pattern,
            heat_pos,
            flow_pattern,
            flow_pos,
        })
    }

    pub fn mesh(&self) -> &TaggedMesh {
        self.mesh
    }

    pub fn dofmap(&self) -> &DofMap {
        self.dofmap
    }

    fn map_elements<T: Send>(&self, mode: AssemblyMode, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match mode {
            AssemblyMode::Sequential => (0..self.dofmap.n_elements()).map(f).collect(),
            AssemblyMode::Parallel => (0..self.dofmap.n_elements()).into_par_iter().map(f).collect(),
        }
    }

    #[inline]
    fn scalar_at(coeffs: &[f64], nodes: &[usize; 6], phi: &[f64; 6]) -> f64 {
        (0..6).map(|k| coeffs[nodes[k]] * phi[k]).sum()
    }

    #[inline]
    fn gradient_at(coeffs: &[f64], nodes: &[usize; 6], g: &[[f64; 2]; 6]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for k in 0..6 {
            out[0] += coeffs[nodes[k]] * g[k][0];
            out[1] += coeffs[nodes[k]] * g[k][1];
        }
        out
    }

    fn physical_gradients(&self, t: usize, q: usize) -> [[f64; 2]; 6] {
        let map = &self.maps[t];
        let mut g = [[0.0; 2]; 6];
        for (gi, r) in g.iter_mut().zip(&self.tables.dp2[q]) {
            *gi = map.gradient(*r);
        }
        g
    }

    fn flow_element(&self, t: usize, lhs: &FlowLhs, w: &[f64], rhs: &FlowRhs<'_>) -> FlowLocal {
        let n = self.dofmap.n_scalar();
        let nodes = self.dofmap.p2_element(t);
        let verts = self.dofmap.p1_element(t);
        let map = &self.maps[t];
        let (wx, wy) = w.split_at(n);
        let mut local = FlowLocal {
            a: [[0.0; 6]; 6],
            div: [[[0.0; 6]; 3]; 2],
            f: [[0.0; 6]; 2],
        };
        for q in 0..NQ {
            let jw = self.tables.weights[q] * map.det;
            let phi = &self.tables.p2[q];
            let psi = &self.tables.p1[q];
            let g = self.physical_gradients(t, q);
            let wq = [Self::scalar_at(wx, nodes, phi), Self::scalar_at(wy, nodes, phi)];
            for i in 0..6 {
                for j in 0..6 {
                    local.a[i][j] += jw
                        * (lhs.mass * phi[i] * phi[j]
                            + lhs.viscous * dot(g[i], g[j])
                            + lhs.convection * dot(wq, g[j]) * phi[i]);
                }
            }
            for c in 0..2 {
                for m in 0..3 {
                    for j in 0..6 {
                        local.div[c][m][j] += jw * psi[m] * g[j][c];
                    }
                }
            }

            let mut source = [0.0; 2];
            if let Some(v_old) = rhs.old_v {
                let (vx, vy) = v_old.split_at(n);
                let val = [Self::scalar_at(vx, nodes, phi), Self::scalar_at(vy, nodes, phi)];
                let grad = [Self::gradient_at(vx, nodes, &g), Self::gradient_at(vy, nodes, &g)];
                for c in 0..2 {
                    let conv = dot(val, grad[c]);
                    for i in 0..6 {
                        local.f[c][i] += jw
                            * (rhs.mass * val[c] * phi[i]
                                - rhs.viscous * dot(grad[c], g[i])
                                - rhs.convection * conv * phi[i]);
                    }
                }
            }
            if let Some(p_old) = rhs.old_p {
                if rhs.pressure != 0.0 {
                    let pq: f64 = (0..3).map(|m| p_old[verts[m]] * psi[m]).sum();
                    for c in 0..2 {
                        for i in 0..6 {
                            local.f[c][i] += jw * rhs.pressure * pq * g[i][c];
                        }
                    }
                }
            }
            for &(coef, u) in &rhs.buoyancy {
                source[1] += coef * Self::scalar_at(u, nodes, phi);
            }
            if let Some((g1, times)) = &rhs.forcing {
                let x = map.point(self.tables.points[q]);
                for &(weight, time) in times {
                    let f = g1(x, time);
                    source[0] += weight * f[0];
                    source[1] += weight * f[1];
                }
            }
            for c in 0..2 {
                if source[c] != 0.0 {
                    for i in 0..6 {
                        local.f[c][i] += jw * source[c] * phi[i];
                    }
                }
            }
        }
        local
    }

    fn heat_element(&self, t: usize, lhs: &HeatLhs, w: &[f64], rhs: &HeatRhs<'_>) -> HeatLocal {
        let n = self.dofmap.n_scalar();
        let nodes = self.dofmap.p2_element(t);
        let map = &self.maps[t];
        let (wx, wy) = w.split_at(n);
        let mut local = HeatLocal {
            a: [[0.0; 6]; 6],
            f: [0.0; 6],
        };
        for q in 0..NQ {
            let jw = self.tables.weights[q] * map.det;
            let phi = &self.tables.p2[q];
            let g = self.physical_gradients(t, q);
            let wq = [Self::scalar_at(wx, nodes, phi), Self::scalar_at(wy, nodes, phi)];
            for i in 0..6 {
                for j in 0..6 {
                    local.a[i][j] += jw
                        * (lhs.mass * phi[i] * phi[j]
                            + lhs.diffusion * dot(g[i], g[j])
                            + lhs.convection * dot(wq, g[j]) * phi[i]);
                }
            }
            if let Some(u_old) = rhs.old_u {
                let val = Self::scalar_at(u_old, nodes, phi);
                let grad = Self::gradient_at(u_old, nodes, &g);
                let conv = match rhs.old_v {
                    Some(v) if rhs.convection != 0.0 => {
                        let (vx, vy) = v.split_at(n);
                        dot([Self::scalar_at(vx, nodes, phi), Self::scalar_at(vy, nodes, phi)], grad)
                    }
                    _ => 0.0,
                };
                for i in 0..6 {
                    local.f[i] += jw
                        * (rhs.mass * val * phi[i]
                            - rhs.diffusion * dot(grad, g[i])
                            - rhs.convection * conv * phi[i]);
                }
            }
            if let Some((g2, times)) = &rhs.forcing {
                let x = map.point(self.tables.points[q]);
                let s: f64 = times.iter().map(|&(weight, time)| weight * g2(x, time)).sum();
                for i in 0..6 {
                    local.f[i] += jw * s * phi[i];
                }
            }
        }
        local
    }

    /// Quadrature data on an open-boundary edge: for each point the trace basis,
    /// the weight times edge length, and the normal.
    fn edge_points<'s>(&'s self, b: &BoundaryEdge) -> impl Iterator<Item = ([f64; 3], f64, [f64; 2])> + 's {
        let (normal, len) = self.mesh.boundary_normal(b);
        self.tables
            .edge_points
            .iter()
            .zip(&self.tables.edge_weights)
            .map(move |(&s, &w)| (edge_p2_values(s), w * len, normal))
    }

    fn edge_nodes(&self, b: &BoundaryEdge) -> [usize; 3] {
        [b.vertices[0], b.vertices[1], self.mesh.midpoint_node(b.edge)]
    }

    #[inline]
    fn trace(coeffs: &[f64], nodes: &[usize; 3], phi: &[f64; 3]) -> f64 {
        (0..3).map(|k| coeffs[nodes[k]] * phi[k]).sum()
    }

    fn normal_velocity(&self, v: &[f64], nodes: &[usize; 3], phi: &[f64; 3], normal: [f64; 2]) -> f64 {
        let (vx, vy) = v.split_at(self.dofmap.n_scalar());
        Self::trace(vx, nodes, phi) * normal[0] + Self::trace(vy, nodes, phi) * normal[1]
    }

    /// Assemble the coupled velocity-pressure system (no constraints applied).
    pub fn flow_system(&self, lhs: &FlowLhs, w: &[f64], rhs: &FlowRhs<'_>, mode: AssemblyMode) -> Result<SparseSystem> {
        let d = self.dofmap;
        if w.len() != d.n_velocity() {
            return Err(Error::DimensionMismatch("convecting velocity length".into()));
        }
        let mut matrix = self.flow_pattern.clone();
        let mut b = vec![0.0; d.n_flow()];
        let locals = self.map_elements(mode, |t| self.flow_element(t, lhs, w, rhs));
        {
            let vals = matrix.values_mut();
            for (t, local) in locals.iter().enumerate() {
                let pos = &self.flow_pos[t];
                let nodes = d.p2_element(t);
                for c in 0..2 {
                    for i in 0..6 {
                        for j in 0..6 {
                            vals[pos.vv[c][i][j]] += local.a[i][j];
                        }
                        for m in 0..3 {
                            vals[pos.vp[c][i][m]] -= lhs.pressure * local.div[c][m][i];
                            vals[pos.pv[c][m][i]] += local.div[c][m][i];
                        }
                        b[d.velocity_dof(nodes[i], c)] += local.f[c][i];
                    }
                }
            }
        }

        let n = d.n_scalar();
        if lhs.open_boundary != 0.0 || rhs.open_boundary != 0.0 {
            for e in &self.open_edges {
                let nodes = self.edge_nodes(e);
                let mut a = [[0.0; 3]; 3];
                let mut f = [[0.0; 3]; 2];
                for (phi, jw, normal) in self.edge_points(e) {
                    if lhs.open_boundary != 0.0 {
                        let s = negative_part(self.normal_velocity(w, &nodes, &phi, normal));
                        for i in 0..3 {
                            for j in 0..3 {
                                a[i][j] -= lhs.open_boundary * 0.5 * s * phi[i] * phi[j] * jw;
                            }
                        }
                    }
                    if let (Some(v_old), true) = (rhs.old_v, rhs.open_boundary != 0.0) {
                        let s = negative_part(self.normal_velocity(v_old, &nodes, &phi, normal));
                        let (vx, vy) = v_old.split_at(n);
                        let val = [Self::trace(vx, &nodes, &phi), Self::trace(vy, &nodes, &phi)];
                        for c in 0..2 {
                            for i in 0..3 {
                                f[c][i] += rhs.open_boundary * 0.5 * val[c] * s * phi[i] * jw;
                            }
                        }
                    }
                }
                for c in 0..2 {
                    for i in 0..3 {
                        let row = d.velocity_dof(nodes[i], c);
                        for j in 0..3 {
                            let k = matrix.position(row, d.velocity_dof(nodes[j], c)).unwrap();
                            matrix.values_mut()[k] += a[i][j];
                        }
                        b[row] += f[c][i];
                    }
                }
            }
        }
        Ok(SparseSystem {
            matrix,
            rhs: b,
            layout: Layout::Flow {
                n_velocity: d.n_velocity(),
                n_pressure: d.n_pressure(),
            },
        })
    }

    /// Assemble the temperature system (no constraints applied).
    pub fn heat_system(&self, lhs: &HeatLhs, w: &[f64], rhs: &HeatRhs<'_>, mode: AssemblyMode) -> Result<SparseSystem> {
        let d = self.dofmap;
        if w.len() != d.n_velocity() {
            return Err(Error::DimensionMismatch("convecting velocity length".into()));
        }
        let mut matrix = self.heat_pattern.clone();
        let mut b = vec![0.0; d.n_scalar()];
        let locals = self.map_elements(mode, |t| self.heat_element(t, lhs, w, rhs));
        {
            let vals = matrix.values_mut();
            for (t, local) in locals.iter().enumerate() {
                let pos = &self.heat_pos[t];
                let nodes = d.p2_element(t);
                for i in 0..6 {
                    for j in 0..6 {
                        vals[pos[6 * i + j]] += local.a[i][j];
                    }
                    b[nodes[i]] += local.f[i];
                }
            }
        }
        if lhs.open_boundary.is_some() || rhs.open_boundary.is_some() {
            for e in &self.open_edges {
                let nodes = self.edge_nodes(e);
                let mut a = [[0.0; 3]; 3];
                let mut f = [0.0; 3];
                for (phi, jw, normal) in self.edge_points(e) {
                    if let Some((coef, beta)) = &lhs.open_boundary {
                        let s = self.normal_velocity(w, &nodes, &phi, normal);
                        let flux = beta.eval(s) * s;
                        for i in 0..3 {
                            for j in 0..3 {
                                a[i][j] -= coef * flux * phi[i] * phi[j] * jw;
                            }
                        }
                    }
                    if let (Some((coef, beta)), Some(u_old), Some(v_old)) = (&rhs.open_boundary, rhs.old_u, rhs.old_v) {
                        let s = self.normal_velocity(v_old, &nodes, &phi, normal);
                        let uq = Self::trace(u_old, &nodes, &phi);
                        let flux = crate::boundary_conditions::heat_flux_integrand(uq, s, beta);
                        for i in 0..3 {
                            f[i] += coef * flux * phi[i] * jw;
                        }
                    }
                }
                for i in 0..3 {
                    for j in 0..3 {
                        let k = matrix.position(nodes[i], nodes[j]).unwrap();
                        matrix.values_mut()[k] += a[i][j];
                    }
                    b[nodes[i]] += f[i];
                }
            }
        }
        Ok(SparseSystem {
            matrix,
            rhs: b,
            layout: Layout::Temperature { n: d.n_scalar() },
        })
    }

    /// Temperature system of one time step, constraints applied.
    ///
    /// `v_tilde` linearizes the implicit convection; the explicit terms use
    /// `state_n`. `forcing` and `t_next` are only needed for manufactured
    /// problems.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble_temperature(
        &self,
        state_n: &State,
        v_tilde: &[f64],
        params: &Params,
        bc_u: &TemperatureBc,
        options: &SchemeOptions,
        forcing: &Forcing,
        t_next: f64,
        constraints: &DirichletSet,
    ) -> Result<SparseSystem> {
        state_n.check_layout(self.dofmap)?;
        let m = 2.0 / params.k;
        let kappa = params.diffusivity();
        let conv = if options.convection { 1.0 } else { 0.0 };
        let boundary = match (bc_u, options.open_boundary_terms) {
            (TemperatureBc::NeumannBeta(beta), true) => Some((1.0, beta.clone())),
            _ => None,
        };
        let lhs = HeatLhs {
            mass: m,
            diffusion: kappa,
            convection: conv,
            open_boundary: boundary.clone(),
        };
        let rhs = HeatRhs {
            old_u: Some(&state_n.u),
            old_v: Some(&state_n.v),
            mass: m,
            diffusion: kappa,
            convection: conv,
            open_boundary: boundary,
            forcing: forcing
                .heat
                .as_ref()
                .map(|g| (g, vec![(1.0, state_n.t), (1.0, t_next)])),
        };
        let system = self.heat_system(&lhs, v_tilde, &rhs, options.mode)?;
        apply_dirichlet(system, constraints)
    }

    /// Coupled momentum/continuity system of one time step, constraints applied.
    ///
    /// `constraints` indexes the coupled layout (velocity dofs, then pressure).
    #[allow(clippy::too_many_arguments)]
    pub fn assemble_momentum(
        &self,
        state_n: &State,
        v_tilde: &[f64],
        u_np1: &[f64],
        params: &Params,
        bc_v: VelocityBc,
        options: &SchemeOptions,
        forcing: &Forcing,
        t_next: f64,
        constraints: &DirichletSet,
    ) -> Result<SparseSystem> {
        state_n.check_layout(self.dofmap)?;
        if u_np1.is_empty() {
            return Err(Error::MissingInput("temperature at the new time level"));
        }
        if u_np1.len() != self.dofmap.n_temperature() {
            return Err(Error::DimensionMismatch("new temperature length".into()));
        }
        let m = 2.0 / params.k;
        let nu = 1.0 / params.re;
        let conv = if options.convection { 1.0 } else { 0.0 };
        let ddn = bc_v == VelocityBc::DirectionalDoNothing && options.open_boundary_terms;
        let cv = if ddn { 1.0 } else { 0.0 };
        let (lhs_conv, rhs_conv, lhs_p, rhs_p) = match options.weak_form {
            WeakForm::SemiDiscrete => (conv, conv, 1.0, 1.0),
            WeakForm::Literal => (2.0 * conv, 0.0, 2.0, 0.0),
        };
        let gamma = if options.buoyancy { params.buoyancy() } else { 0.0 };
        let buoyancy: Vec<(f64, &[f64])> = if gamma == 0.0 {
            Vec::new()
        } else {
            match options.buoyancy_level {
                BuoyancyLevel::Trapezoid => vec![(gamma, u_np1), (gamma, &state_n.u)],
                BuoyancyLevel::Implicit => vec![(2.0 * gamma, u_np1)],
            }
        };
        let lhs = FlowLhs {
            mass: m,
            viscous: nu,
            convection: lhs_conv,
            pressure: lhs_p,
            open_boundary: cv,
        };
        let rhs = FlowRhs {
            old_v: Some(&state_n.v),
            old_p: Some(&state_n.p),
            mass: m,
            viscous: nu,
            convection: rhs_conv,
            pressure: rhs_p,
            open_boundary: cv,
            buoyancy,
            forcing: forcing
                .momentum
                .as_ref()
                .map(|g| (g, vec![(1.0, state_n.t), (1.0, t_next)])),
        };
        let system = self.flow_system(&lhs, v_tilde, &rhs, options.mode)?;
        apply_dirichlet(system, constraints)
    }

    /// P2 mass matrix.
    pub fn mass_matrix(&self) -> Result<CsrMatrix> {
        self.scalar_operator(1.0, 0.0)
    }

    /// P2 stiffness (Laplacian) matrix.
    pub fn stiffness_matrix(&self) -> Result<CsrMatrix> {
        self.scalar_operator(0.0, 1.0)
    }

    fn scalar_operator(&self, mass: f64, diffusion: f64) -> Result<CsrMatrix> {
        let lhs = HeatLhs {
            mass,
            diffusion,
            convection: 0.0,
            open_boundary: None,
        };
        let w = vec![0.0; self.dofmap.n_velocity()];
        Ok(self.heat_system(&lhs, &w, &HeatRhs::default(), AssemblyMode::Sequential)?.matrix)
    }

    /// Divergence block `B[m][(c, j)] = int psi_m d_c phi_j` (pressure rows,
    /// velocity columns).
    pub fn divergence_matrix(&self) -> Result<CsrMatrix> {
        let d = self.dofmap;
        let mut triplets = Vec::new();
        for t in 0..d.n_elements() {
            let nodes = d.p2_element(t);
            let verts = d.p1_element(t);
            let map = &self.maps[t];
            for q in 0..NQ {
                let jw = self.tables.weights[q] * map.det;
                let g = self.physical_gradients(t, q);
                for m in 0..3 {
                    for c in 0..2 {
                        for j in 0..6 {
                            triplets.push((
                                verts[m],
                                d.velocity_dof(nodes[j], c),
                                jw * self.tables.p1[q][m] * g[j][c],
                            ));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(d.n_pressure(), d.n_velocity(), &triplets)
    }
}

/// Eliminate constrained dofs: rows become identity rows with the prescribed
/// value on the right; known values are lifted out of the remaining rows.
pub fn apply_dirichlet(system: SparseSystem, constraints: &DirichletSet) -> Result<SparseSystem> {
    let SparseSystem { matrix, mut rhs, layout } = system;
    let n = matrix.n_rows();
    if constraints.is_empty() {
        return Ok(SparseSystem { matrix, rhs, layout });
    }
    let mut fixed: Vec<Option<f64>> = vec![None; matrix.n_cols()];
    for (dof, value) in constraints.iter() {
        if dof >= n || dof >= matrix.n_cols() {
            return Err(Error::IndexOutOfRange {
                row: dof,
                col: dof,
                n_rows: n,
                n_cols: matrix.n_cols(),
            });
        }
        fixed[dof] = Some(value);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(matrix.nnz());
    let mut values = Vec::with_capacity(matrix.nnz());
    row_ptr.push(0);
    for r in 0..n {
        if let Some(g) = fixed[r] {
            col_idx.push(r);
            values.push(1.0);
            rhs[r] = g;
        } else {
            let (cols, vals) = matrix.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                match fixed[c] {
                    Some(g) => rhs[r] -= v * g,
                    None => {
                        col_idx.push(c);
                        values.push(v);
                    }
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    let matrix = CsrMatrix::new(n, matrix.n_cols(), row_ptr, col_idx, values)?;
    Ok(SparseSystem { matrix, rhs, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_direct;
    use crate::mesh::cavity_mesh;
    use crate::spaces::{build_dofmap, dirichlet_sets, BoundaryData};
    use std::sync::Arc;

    fn setup(n: usize) -> (TaggedMesh, DofMap) {
        let mesh = cavity_mesh(n).unwrap();
        let dofmap = build_dofmap(&mesh);
        (mesh, dofmap)
    }

    fn interpolate_scalar(mesh: &TaggedMesh, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..mesh.n_p2_nodes()).map(|i| f(mesh.node_coord(i))).collect()
    }

    fn interpolate_vector(mesh: &TaggedMesh, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let n = mesh.n_p2_nodes();
        let mut v = vec![0.0; 2 * n];
        for i in 0..n {
            let val = f(mesh.node_coord(i));
            v[i] = val[0];
            v[n + i] = val[1];
        }
        v
    }

    fn dot_vec(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(3.0, 1.0, 1000.0, 0.01).is_ok());
        assert!(Params::new(-1.0, 1.0, 1000.0, 0.01).is_err());
        assert!(Params::new(3.0, 0.0, 1000.0, 0.01).is_err());
        assert!(Params::new(3.0, 1.0, -1.0, 0.01).is_err());
        assert!(Params::new(3.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn extrapolation() {
        let s = |v: Vec<f64>, u: Vec<f64>| State { v, p: vec![], u, t: 0.0 };
        let a = s(vec![1.0, 2.0], vec![3.0]);
        assert_eq!(extrapolate(&a, &a).unwrap(), (a.v.clone(), a.u.clone()));
        let c = s(vec![1.0, -2.0], vec![0.5]);
        let twice = s(vec![2.0, -4.0], vec![1.0]);
        assert_eq!(extrapolate(&twice, &c).unwrap(), (vec![3.0, -6.0], vec![1.5]));
        assert!(extrapolate(&a, &s(vec![1.0], vec![3.0])).is_err());
    }

    #[test]
    fn extrapolation_matches_componentwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let mut r = |n: usize| (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
        let a = State { v: r(30), p: r(4), u: r(15), t: 1.0 };
        let b = State { v: r(30), p: r(4), u: r(15), t: 0.0 };
        let (vt, ut) = extrapolate(&a, &b).unwrap();
        for i in 0..30 {
            assert_eq!(vt[i], 2.0 * a.v[i] - b.v[i]);
        }
        for i in 0..15 {
            assert_eq!(ut[i], 2.0 * a.u[i] - b.u[i]);
        }
    }

    #[test]
    fn mass_total_and_stiffness_kernel() {
        for n in [1, 3, 6] {
            let (mesh, d) = setup(n);
            let asm = Assembler::new(&mesh, &d).unwrap();
            let m = asm.mass_matrix().unwrap();
            let total: f64 = m.values().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            let k = asm.stiffness_matrix().unwrap();
            let ones = vec![1.0; d.n_scalar()];
            assert!(k.matvec(&ones).unwrap().iter().all(|v| v.abs() < 1e-10));
            assert!(m.asymmetry() < 1e-14 && k.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn mass_and_stiffness_integrate_quadratics_exactly() {
        let (mesh, d) = setup(3);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let f = interpolate_scalar(&mesh, |[x, y]| x * x + x * y);
        // int (x^2 + xy)^2 over the unit square = 1/5 + 1/4 + 1/9
        let mf = asm.mass_matrix().unwrap().matvec(&f).unwrap();
        assert!((dot_vec(&f, &mf) - (0.2 + 0.25 + 1.0 / 9.0)).abs() < 1e-12);
        // grad = (2x + y, x): int (2x+y)^2 + x^2 = 4/3 + 1 + 1/3 + 1/3
        let kf = asm.stiffness_matrix().unwrap().matvec(&f).unwrap();
        assert!((dot_vec(&f, &kf) - (4.0 / 3.0 + 1.0 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_flow_is_discretely_divergence_free() {
        let (mesh, d) = setup(2);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let b = asm.divergence_matrix().unwrap();
        let v = interpolate_vector(&mesh, |_| [1.0, 0.0]);
        assert!(b.matvec(&v).unwrap().iter().all(|x| x.abs() < 1e-12));
        // A linear field with divergence 2: sum of B v = int div v = 2.
        let v = interpolate_vector(&mesh, |[x, y]| [x, y]);
        let total: f64 = b.matvec(&v).unwrap().iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn heat_matrix_without_convection_is_symmetric() {
        let (mesh, d) = setup(4);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 1000.0, 0.01).unwrap();
        let state = State::zeros(&d, 0.0);
        let w = interpolate_vector(&mesh, |[x, y]| [x * y, 1.0 - x]);
        let opts = SchemeOptions {
            convection: false,
            ..Default::default()
        };
        let sys = asm
            .assemble_temperature(&state, &w, &params, &TemperatureBc::Neumann, &opts, &Forcing::default(), 0.01, &DirichletSet::default())
            .unwrap();
        assert!(sys.matrix.asymmetry() < 1e-12);
        let with_conv = asm
            .assemble_temperature(&state, &w, &params, &TemperatureBc::Neumann, &SchemeOptions::default(), &Forcing::default(), 0.01, &DirichletSet::default())
            .unwrap();
        assert!(with_conv.matrix.asymmetry() > 1e-6);
    }

    #[test]
    fn constant_temperature_is_steady() {
        let (mesh, d) = setup(4);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 0.0, 0.01).unwrap();
        let c = 0.7;
        let mut state = State::zeros(&d, 0.0);
        state.u.iter_mut().for_each(|u| *u = c);
        let data = BoundaryData {
            velocity: vec![],
            temperature: vec![(BoundaryTag::Dirichlet, Arc::new(move |_, _| c))],
        };
        let (_, temp) = dirichlet_sets(&mesh, &d, &data, 0.0).unwrap();
        let zero = vec![0.0; d.n_velocity()];
        let sys = asm
            .assemble_temperature(&state, &zero, &params, &TemperatureBc::Neumann, &SchemeOptions::default(), &Forcing::default(), 0.01, &temp)
            .unwrap();
        let u = solve_direct(&sys.matrix, &sys.rhs).unwrap();
        assert!(u.iter().all(|x| (x - c).abs() < 1e-12));
    }

    #[test]
    fn heat_flux_term_integrates_to_boundary_length() {
        // u = 1, beta = 1, v.n = 1 on the open side: int_{Gamma_o} 1 = 1.
        let (mesh, d) = setup(5);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let one = BetaSpec::custom("one", 1.0, true, |_| 1.0);
        let v = interpolate_vector(&mesh, |_| [1.0, 0.0]);
        let u = vec![1.0; d.n_scalar()];
        let rhs = HeatRhs {
            old_u: Some(&u),
            old_v: Some(&v),
            open_boundary: Some((1.0, one.clone())),
            ..Default::default()
        };
        let lhs = HeatLhs {
            mass: 0.0,
            diffusion: 0.0,
            convection: 0.0,
            open_boundary: Some((1.0, one)),
        };
        let sys = asm.heat_system(&lhs, &v, &rhs, AssemblyMode::Sequential).unwrap();
        assert!((sys.rhs.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        // Matrix side: -C_u(1, v, 1) = -1.
        let total: f64 = sys.matrix.matvec(&u).unwrap().iter().sum();
        assert!((total + 1.0).abs() < 1e-13);
    }

    #[test]
    fn neumann_equals_beta_zero() {
        let (mesh, d) = setup(3);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 1000.0, 0.01).unwrap();
        let mut state = State::zeros(&d, 0.0);
        state.u = interpolate_scalar(&mesh, |[x, y]| x + y * y);
        state.v = interpolate_vector(&mesh, |[x, y]| [y - 0.5, x * (1.0 - x)]);
        let zero_beta = TemperatureBc::NeumannBeta(BetaSpec::custom("zero", 0.0, true, |_| 0.0));
        let opts = SchemeOptions::default();
        let f = Forcing::default();
        let none = DirichletSet::default();
        let a = asm.assemble_temperature(&state, &state.v, &params, &TemperatureBc::Neumann, &opts, &f, 0.01, &none).unwrap();
        let b = asm.assemble_temperature(&state, &state.v, &params, &zero_beta, &opts, &f, 0.01, &none).unwrap();
        assert_eq!(a.matrix.values(), b.matrix.values());
        assert_eq!(a.rhs, b.rhs);
    }

    #[test]
    fn rest_state_solves_momentum() {
        let (mesh, d) = setup(3);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 0.0, 0.01).unwrap();
        let state = State::zeros(&d, 0.0);
        let (vel, _) = dirichlet_sets(&mesh, &d, &BoundaryData::heated_cavity(), 0.0).unwrap();
        let sys = asm
            .assemble_momentum(&state, &state.v, &state.u, &params, VelocityBc::DoNothing, &SchemeOptions::default(), &Forcing::default(), 0.01, &vel)
            .unwrap();
        assert!(sys.rhs.iter().all(|&x| x == 0.0));
        let x = solve_direct(&sys.matrix, &sys.rhs).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert!(asm
            .assemble_momentum(&state, &state.v, &[], &params, VelocityBc::DoNothing, &SchemeOptions::default(), &Forcing::default(), 0.01, &vel)
            .is_err());
    }

    #[test]
    fn directional_term_vanishes_for_outflow() {
        let (mesh, d) = setup(3);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 100.0, 0.01).unwrap();
        let mut state = State::zeros(&d, 0.0);
        // Non-negative normal velocity on x1 = 1.
        state.v = interpolate_vector(&mesh, |[x, y]| [x * y * (1.0 - y) + 0.1, x * 0.3]);
        state.u = interpolate_scalar(&mesh, |[x, _]| 1.0 - x);
        let opts = SchemeOptions::default();
        let f = Forcing::default();
        let none = DirichletSet::default();
        let dn = asm.assemble_momentum(&state, &state.v, &state.u, &params, VelocityBc::DoNothing, &opts, &f, 0.01, &none).unwrap();
        let ddn = asm
            .assemble_momentum(&state, &state.v, &state.u, &params, VelocityBc::DirectionalDoNothing, &opts, &f, 0.01, &none)
            .unwrap();
        assert_eq!(dn, ddn);
    }

    #[test]
    fn directional_term_damps_backflow() {
        // With inflow through Gamma_o, -C_v(v, w, v) >= 0 for every v.
        let (mesh, d) = setup(4);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let w = interpolate_vector(&mesh, |[_, y]| [y - 0.6, 0.2]);
        let lhs = |open_boundary| FlowLhs {
            mass: 0.0,
            viscous: 0.0,
            convection: 0.0,
            pressure: 0.0,
            open_boundary,
        };
        let a = asm.flow_system(&lhs(1.0), &w, &FlowRhs::default(), AssemblyMode::Sequential).unwrap();
        let b = asm.flow_system(&lhs(0.0), &w, &FlowRhs::default(), AssemblyMode::Sequential).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let n = d.n_flow();
        let mut positive = false;
        for _ in 0..20 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            v[d.n_velocity()..].iter_mut().for_each(|p| *p = 0.0);
            let av = a.matrix.matvec(&v).unwrap();
            let bv = b.matrix.matvec(&v).unwrap();
            let q: f64 = (0..n).map(|i| v[i] * (av[i] - bv[i])).sum();
            assert!(q >= -1e-14);
            positive |= q > 1e-6;
        }
        assert!(positive);
    }

    #[test]
    fn convection_form_is_skew_for_compact_divergence_free_field() {
        // w = curl(psi) with psi = (x(1-x)y(1-y))^2 vanishes on the boundary.
        let n = 16;
        let (mesh, d) = setup(n);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let w = interpolate_vector(&mesh, |[x, y]| {
            let (a, b) = (x * (1.0 - x), y * (1.0 - y));
            let (da, db) = (1.0 - 2.0 * x, 1.0 - 2.0 * y);
            [2.0 * a * a * b * db, -2.0 * b * b * a * da]
        });
        let lhs = HeatLhs {
            mass: 0.0,
            diffusion: 0.0,
            convection: 1.0,
            open_boundary: None,
        };
        let c = asm.heat_system(&lhs, &w, &HeatRhs::default(), AssemblyMode::Sequential).unwrap().matrix;
        let f = interpolate_scalar(&mesh, |[x, y]| (3.0 * x).sin() + x * y);
        let cf = c.matvec(&f).unwrap();
        let form = dot_vec(&f, &cf);
        // Interpolation error of w is O(h^3); the form vanishes for exactly
        // divergence-free w.
        let h = 1.0 / n as f64;
        assert!(form.abs() < 10.0 * h.powi(3), "form = {form}");
    }

    #[test]
    fn parallel_assembly_is_bitwise_identical() {
        let (mesh, d) = setup(5);
        let asm = Assembler::new(&mesh, &d).unwrap();
        let params = Params::new(3.0, 1.0, 1000.0, 0.01).unwrap();
        let mut state = State::zeros(&d, 0.0);
        state.v = interpolate_vector(&mesh, |[x, y]| [(x * 7.0).sin() * y, x.cos() - y]);
        state.u = interpolate_scalar(&mesh, |[x, y]| (x - y).exp());
        let seq = SchemeOptions::default();
        let par = SchemeOptions {
            mode: AssemblyMode::Parallel,
            ..Default::default()
        };
        let f = Forcing::default();
        let none = DirichletSet::default();
        let combos = [VelocityBc::DoNothing, VelocityBc::DirectionalDoNothing];
        for bc in combos {
            let a = asm.assemble_momentum(&state, &state.v, &state.u, &params, bc, &seq, &f, 0.01, &none).unwrap();
            let b = asm.assemble_momentum(&state, &state.v, &state.u, &params, bc, &par, &f, 0.01, &none).unwrap();
            let bits = |s: &SparseSystem| s.matrix.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
            assert_eq!(a.rhs, b.rhs);
        }
        let bc_u = TemperatureBc::NeumannBeta(BetaSpec::Beta1);
        let a = asm.assemble_temperature(&state, &state.v, &params, &bc_u, &seq, &f, 0.01, &none).unwrap();
        let b = asm.assemble_temperature(&state, &state.v, &params, &bc_u, &par, &f, 0.01, &none).unwrap();
        assert_eq!(a, b);
    }

    fn small_system() -> SparseSystem {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 2.0)],
        )
        .unwrap();
        SparseSystem {
            matrix: m,
            rhs: vec![1.0, 2.0, 3.0],
            layout: Layout::Temperature { n: 3 },
        }
    }

    #[test]
    fn dirichlet_elimination() {
        let sys = small_system();
        assert_eq!(apply_dirichlet(sys.clone(), &DirichletSet::default()).unwrap(), sys);

        // Constrain x1 = 5 by hand: rows 0 and 2 lose their column-1 entries,
        // rhs becomes (1 - 5, 5, 3 - 5).
        let c = DirichletSet::from_pairs([(1, 5.0)]).unwrap();
        let out = apply_dirichlet(sys.clone(), &c).unwrap();
        assert_eq!(
            out.matrix.to_dense(),
            vec![vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]
        );
        assert_eq!(out.rhs, vec![-4.0, 5.0, -2.0]);
        let x = solve_direct(&out.matrix, &out.rhs).unwrap();
        // Same as solving the reduced 2x2 problem.
        assert!((x[0] + 1.0).abs() < 1e-15 && (x[2] + 1.0).abs() < 1e-15 && x[1] == 5.0);

        let all = DirichletSet::from_pairs([(0, 1.0), (1, 2.0), (2, 3.0)]).unwrap();
        let out = apply_dirichlet(sys.clone(), &all).unwrap();
        assert_eq!(out.matrix, CsrMatrix::identity(3));
        assert_eq!(out.rhs, vec![1.0, 2.0, 3.0]);

        let bad = DirichletSet::from_pairs([(3, 1.0)]).unwrap();
        assert!(matches!(apply_dirichlet(sys, &bad), Err(Error::IndexOutOfRange { .. })));
    }
}
