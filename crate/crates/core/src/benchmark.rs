//! The open-cavity truncation study.
//!
//! A reference solution is computed on the extended domain with the
//! do-nothing condition far downstream. The same problem is then solved on the
//! unit square with each candidate condition on `x1 = 1`, and both final
//! states are compared on the unit square:
//!
//! ```text
//! res_omega = |grad(v - v_ref)|^2_{L2(Omega)} + |grad(u - u_ref)|^2_{L2(Omega)}
//! res_gamma = |v - v_ref|^2_{L2(Gamma_o)} + |u - u_ref|^2_{L2(Gamma_o)}
//! ```
//!
//! The reference is restricted node by node, so no interpolation error enters.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{Params, SchemeOptions, State};
use crate::boundary_conditions::{BcCombo, TemperatureBc, VelocityBc};
use crate::error::{Error, Result};
use crate::fem::{edge_p2_values, edge_quadrature, p2_gradients, triangle_quadrature, AffineMap};
use crate::mesh::{cavity_mesh, extended_cavity_mesh, extract_submesh, BoundaryEdge, BoundaryTag, NodeMap, RectUnion, TaggedMesh};
use crate::spaces::{build_dofmap, BoundaryData};
use crate::timestepper::{run_transient, Problem, RunConfig, RunMetadata, INITIAL_CONDITION_NOTE};

const TIME_TOL: f64 = 1e-9;

/// Settings shared by every run of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub pr: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_per_unit: usize,
    pub options: SchemeOptions,
    pub workers: usize,
    pub profile_samples: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            pr: 1.0,
            t_end: 1.0,
            n_steps: 100,
            n_per_unit: 40,
            options: SchemeOptions::default(),
            workers: 1,
            profile_samples: 101,
        }
    }
}

impl BenchConfig {
    fn run_config(&self, re: f64, gr: f64, bc: BcCombo) -> Result<RunConfig> {
        let params = Params::new(re, self.pr, gr, self.t_end / self.n_steps.max(1) as f64)?;
        Ok(RunConfig::new(params, self.t_end, self.n_steps, bc)?.with_options(self.options))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchMetadata {
    pub n_per_unit: usize,
    pub k: f64,
    pub n_steps: usize,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub initial_condition: String,
}

impl From<&RunMetadata> for BenchMetadata {
    fn from(m: &RunMetadata) -> Self {
        BenchMetadata {
            n_per_unit: 0,
            k: m.k,
            n_steps: m.n_steps,
            n_vertices: m.n_vertices,
            n_triangles: m.n_triangles,
            initial_condition: m.initial_condition.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub re: f64,
    pub gr: f64,
    pub pr: f64,
    pub combo: BcCombo,
    pub res_omega: f64,
    pub res_gamma: f64,
    pub wall_time_s: f64,
    pub metadata: BenchMetadata,
}

/// A sample of the open-boundary trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub x2: f64,
    pub vn: f64,
    pub u: f64,
}

/// The reference solution and its restriction to the unit square.
pub struct Reference {
    pub mesh_ext: TaggedMesh,
    pub state: State,
    pub mesh: TaggedMesh,
    pub node_map: NodeMap,
    pub wall_time_s: f64,
}

impl Reference {
    /// Reference fields restricted to the unit square.
    pub fn restricted(&self) -> State {
        restrict_state(&self.state, &self.node_map, self.mesh.n_vertices())
    }
}

/// Velocity, pressure and temperature of `ext` at the nodes of a sub-mesh.
pub fn restrict_state(ext: &State, node_map: &NodeMap, n_sub_vertices: usize) -> State {
    let n_ext = ext.u.len();
    let (vx, vy) = ext.v.split_at(n_ext);
    let mut v = node_map.restrict(vx);
    v.extend(node_map.restrict(vy));
    // Sub-mesh vertices come first in the node map.
    let p = node_map.as_slice()[..n_sub_vertices].iter().map(|&n| ext.p[n]).collect();
    State {
        v,
        p,
        u: node_map.restrict(&ext.u),
        t: ext.t,
    }
}

fn reference_combo() -> BcCombo {
    BcCombo::new(VelocityBc::DoNothing, TemperatureBc::Neumann)
}

/// Solve on the extended domain with do-nothing and Neumann conditions far downstream.
pub fn run_reference(re: f64, gr: f64, config: &BenchConfig) -> Result<Reference> {
    let start = Instant::now();
    let mesh_ext = extended_cavity_mesh(config.n_per_unit)?;
    let dofmap = build_dofmap(&mesh_ext);
    let problem = Problem::new(&mesh_ext, &dofmap, BoundaryData::heated_cavity())?;
    let run = config.run_config(re, gr, reference_combo())?;
    let out = run_transient(problem.quiescent_state(0.0)?, &run, &problem)?;
    drop(problem);
    let (mesh, node_map) = extract_submesh(&mesh_ext, &RectUnion::unit_square())?;
    Ok(Reference {
        mesh_ext,
        state: out.final_state,
        mesh,
        node_map,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Solve on the unit square with `combo` on the open side.
pub fn run_truncated(re: f64, gr: f64, combo: &BcCombo, config: &BenchConfig) -> Result<(TaggedMesh, State, RunMetadata)> {
    let mesh = cavity_mesh(config.n_per_unit)?;
    let dofmap = build_dofmap(&mesh);
    let out = {
        let problem = Problem::new(&mesh, &dofmap, BoundaryData::heated_cavity())?;
        let run = config.run_config(re, gr, combo.clone())?;
        run_transient(problem.quiescent_state(0.0)?, &run, &problem)?
    };
    Ok((mesh, out.final_state, out.metadata))
}

fn check_pair(sol: &State, reference: &State, mesh: &TaggedMesh) -> Result<()> {
    if (sol.t - reference.t).abs() > TIME_TOL {
        return Err(Error::TimeMismatch {
            a: sol.t,
            b: reference.t,
        });
    }
    let n = mesh.n_p2_nodes();
    for s in [sol, reference] {
        if s.u.len() != n || s.v.len() != 2 * n {
            return Err(Error::DimensionMismatch(format!(
                "fields with {} temperature values on a mesh with {n} nodes",
                s.u.len()
            )));
        }
    }
    Ok(())
}

/// Squared H1-seminorm difference of velocity and temperature over the mesh.
///
/// `reference` must already live on `mesh` (see [`restrict_state`]).
pub fn compute_res_omega(sol: &State, reference: &State, mesh: &TaggedMesh) -> Result<f64> {
    check_pair(sol, reference, mesh)?;
    let n = mesh.n_p2_nodes();
    let diff: Vec<f64> = sol.v.iter().zip(&reference.v).map(|(a, b)| a - b).collect();
    let du: Vec<f64> = sol.u.iter().zip(&reference.u).map(|(a, b)| a - b).collect();
    let fields = [&diff[..n], &diff[n..], &du[..]];
    let rule = triangle_quadrature(2)?;
    let grads: Vec<_> = rule.points.iter().map(|&p| p2_gradients(p)).collect();
    let dofmap = build_dofmap(mesh);
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = AffineMap::new(&mesh.triangle_coords(t))?;
        let nodes = dofmap.p2_element(t);
        for (q, w) in rule.weights.iter().enumerate() {
            for f in fields {
                let mut g = [0.0; 2];
                for k in 0..6 {
                    let gk = map.gradient(grads[q][k]);
                    g[0] += f[nodes[k]] * gk[0];
                    g[1] += f[nodes[k]] * gk[1];
                }
                total += w * map.det * (g[0] * g[0] + g[1] * g[1]);
            }
        }
    }
    Ok(total)
}

/// Boundary edges of `mesh` lying on the vertical line `x1 = x`.
pub fn edges_on_line(mesh: &TaggedMesh, x: f64) -> Vec<BoundaryEdge> {
    mesh.boundary_edges()
        .iter()
        .filter(|b| b.vertices.iter().all(|&v| (mesh.vertices()[v][0] - x).abs() < 1e-12))
        .copied()
        .collect()
}

/// Squared L2 trace difference of velocity and temperature on `x1 = 1`.
pub fn compute_res_gamma(sol: &State, reference: &State, mesh: &TaggedMesh) -> Result<f64> {
    check_pair(sol, reference, mesh)?;
    let edges = edges_on_line(mesh, 1.0);
    if edges.is_empty() {
        return Err(Error::OffBoundary(1.0));
    }
    let n = mesh.n_p2_nodes();
    let rule = edge_quadrature(4)?;
    let mut total = 0.0;
    for b in &edges {
        let (_, len) = mesh.boundary_normal(b);
        let nodes = [b.vertices[0], b.vertices[1], mesh.midpoint_node(b.edge)];
        for (p, w) in rule.iter() {
            let phi = edge_p2_values(p[0]);
            for offset in [0, n] {
                let e: f64 = (0..3).map(|k| (sol.v[offset + nodes[k]] - reference.v[offset + nodes[k]]) * phi[k]).sum();
                total += w * len * e * e;
            }
            let e: f64 = (0..3).map(|k| (sol.u[nodes[k]] - reference.u[nodes[k]]) * phi[k]).sum();
            total += w * len * e * e;
        }
    }
    Ok(total)
}

/// Sample the trace of `v.n` and `u` on the boundary line `x1 = x`, at
/// `n_samples` uniformly spaced heights covering the line.
pub fn extract_profile(sol: &State, mesh: &TaggedMesh, x: f64, n_samples: usize) -> Result<Vec<ProfileSample>> {
    let edges = edges_on_line(mesh, x);
    if edges.is_empty() {
        return Err(Error::OffBoundary(x));
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let n = mesh.n_p2_nodes();
    if sol.u.len() != n || sol.v.len() != 2 * n {
        return Err(Error::DimensionMismatch("state does not match the mesh".into()));
    }
    let y = |v: usize| mesh.vertices()[v][1];
    let lo = edges.iter().flat_map(|b| b.vertices.map(y)).fold(f64::INFINITY, f64::min);
    let hi = edges.iter().flat_map(|b| b.vertices.map(y)).fold(f64::NEG_INFINITY, f64::max);
    (0..n_samples)
        .map(|i| {
            let x2 = if n_samples == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n_samples - 1) as f64
            };
            let b = edges
                .iter()
                .find(|b| {
                    let (a, c) = (y(b.vertices[0]), y(b.vertices[1]));
                    x2 >= a.min(c) - 1e-12 && x2 <= a.max(c) + 1e-12
                })
                .ok_or(Error::OffBoundary(x))?;
            let (normal, _) = mesh.boundary_normal(b);
            let (a, c) = (y(b.vertices[0]), y(b.vertices[1]));
            let s = ((x2 - a) / (c - a)).clamp(0.0, 1.0);
            let phi = edge_p2_values(s);
            let nodes = [b.vertices[0], b.vertices[1], mesh.midpoint_node(b.edge)];
            let tr = |f: &[f64]| -> f64 { (0..3).map(|k| f[nodes[k]] * phi[k]).sum() };
            Ok(ProfileSample {
                x2,
                vn: tr(&sol.v[..n]) * normal[0] + tr(&sol.v[n..]) * normal[1],
                u: tr(&sol.u),
            })
        })
        .collect()
}

/// Net outward volume flux `int v.n` through the edges tagged `tag`.
pub fn boundary_flux(sol: &State, mesh: &TaggedMesh, tag: BoundaryTag) -> Result<f64> {
    let n = mesh.n_p2_nodes();
    let rule = edge_quadrature(2)?;
    let mut total = 0.0;
    for b in mesh.tagged_edges(tag) {
        let (normal, len) = mesh.boundary_normal(b);
        let nodes = [b.vertices[0], b.vertices[1], mesh.midpoint_node(b.edge)];
        for (p, w) in rule.iter() {
            let phi = edge_p2_values(p[0]);
            let vx: f64 = (0..3).map(|k| sol.v[nodes[k]] * phi[k]).sum();
            let vy: f64 = (0..3).map(|k| sol.v[n + nodes[k]] * phi[k]).sum();
            total += w * len * (vx * normal[0] + vy * normal[1]);
        }
    }
    Ok(total)
}

/// Everything computed for one `(Re, Gr)` cell.
pub struct CellReport {
    pub re: f64,
    pub gr: f64,
    pub reference_profile: Vec<ProfileSample>,
    pub results: Vec<std::result::Result<BenchResult, String>>,
    pub profiles: Vec<Vec<ProfileSample>>,
}

/// Reference solve plus one truncated solve per combination.
pub fn bench_cell(re: f64, gr: f64, combos: &[BcCombo], config: &BenchConfig) -> Result<CellReport> {
    let reference = run_reference(re, gr, config)?;
    let restricted = reference.restricted();
    let reference_profile = extract_profile(&restricted, &reference.mesh, 1.0, config.profile_samples)?;
    let mut results = Vec::with_capacity(combos.len());
    let mut profiles = Vec::with_capacity(combos.len());
    for combo in combos {
        let start = Instant::now();
        let outcome = run_truncated(re, gr, combo, config).and_then(|(mesh, state, meta)| {
            let res_omega = compute_res_omega(&state, &restricted, &mesh)?;
            let res_gamma = compute_res_gamma(&state, &restricted, &mesh)?;
            let profile = extract_profile(&state, &mesh, 1.0, config.profile_samples)?;
            let mut metadata = BenchMetadata::from(&meta);
            metadata.n_per_unit = config.n_per_unit;
            Ok((
                BenchResult {
                    re,
                    gr,
                    pr: config.pr,
                    combo: combo.clone(),
                    res_omega,
                    res_gamma,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    metadata,
                },
                profile,
            ))
        });
        match outcome {
            Ok((r, p)) => {
                results.push(Ok(r));
                profiles.push(p);
            }
            Err(e) => {
                results.push(Err(e.to_string()));
                profiles.push(Vec::new());
            }
        }
    }
    Ok(CellReport {
        re,
        gr,
        reference_profile,
        results,
        profiles,
    })
}

/// One row of a sweep: a result or the reason the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub re: f64,
    pub gr: f64,
    pub combo: BcCombo,
    pub outcome: std::result::Result<BenchResult, String>,
}

/// Run every `(Re, Gr)` cell; rows come back in grid order (Re outer, Gr
/// inner, combos in the given order), whatever the worker count.
pub fn sweep(res: &[f64], grs: &[f64], combos: &[BcCombo], config: &BenchConfig) -> Result<Vec<SweepEntry>> {
    if res.is_empty() || grs.is_empty() || combos.is_empty() {
        return Err(Error::param("grid", "sweep grid must be non-empty"));
    }
    let cells: Vec<(f64, f64)> = res.iter().flat_map(|&re| grs.iter().map(move |&gr| (re, gr))).collect();
    let run_cell = |&(re, gr): &(f64, f64)| -> Vec<SweepEntry> {
        match bench_cell(re, gr, combos, config) {
            Ok(report) => report
                .results
                .into_iter()
                .zip(combos)
                .map(|(outcome, combo)| SweepEntry {
                    re,
                    gr,
                    combo: combo.clone(),
                    outcome,
                })
                .collect(),
            Err(e) => combos
                .iter()
                .map(|combo| SweepEntry {
                    re,
                    gr,
                    combo: combo.clone(),
                    outcome: Err(format!("reference run failed: {e}")),
                })
                .collect(),
        }
    };
    let per_cell: Vec<Vec<SweepEntry>> = if config.workers <= 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };
    Ok(per_cell.into_iter().flatten().collect())
}

/// The note describing the initial condition used by every run.
pub fn initial_condition_note() -> &'static str {
    INITIAL_CONDITION_NOTE
}
