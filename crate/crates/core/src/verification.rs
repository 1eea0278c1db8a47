//! Code verification: manufactured solutions in space and time, and the
//! discrete energy law of the Stokes limit.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};

use crate::assembly::{apply_dirichlet, Assembler, AssemblyMode, FlowLhs, FlowRhs, Forcing, HeatLhs, HeatRhs, Params, SchemeOptions, State};
use crate::benchmark::{compute_res_gamma, compute_res_omega};
use crate::boundary_conditions::{beta1, beta2, BcCombo, TemperatureBc, VelocityBc};
use crate::error::{Error, Result};
use crate::fem::{eval_basis, p1_values, p2_gradients, triangle_quadrature, AffineMap, Family};
use crate::linalg::{norm2, LuSolver};
use crate::mesh::{cavity_mesh, BoundaryTag, Point, TaggedMesh};
use crate::spaces::{build_dofmap, BoundaryData, DofMap, ScalarFn, VectorFn};
use crate::timestepper::{run_transient, Problem, RunConfig, Stepper};

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_order(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len().min(err.len()) as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// An exact solution `(v, p, u)` with the sources that produce it.
#[derive(Clone)]
pub struct Manufactured {
    pub v: VectorFn,
    pub grad_v: Arc<dyn Fn(Point, f64) -> [[f64; 2]; 2] + Send + Sync>,
    pub p: ScalarFn,
    pub u: ScalarFn,
    pub grad_u: VectorFn,
    pub forcing: Forcing,
}

impl Manufactured {
    pub fn state(&self, mesh: &TaggedMesh, t: f64) -> State {
        let n = mesh.n_p2_nodes();
        let mut v = vec![0.0; 2 * n];
        let mut u = vec![0.0; n];
        for i in 0..n {
            let x = mesh.node_coord(i);
            let val = (self.v)(x, t);
            v[i] = val[0];
            v[n + i] = val[1];
            u[i] = (self.u)(x, t);
        }
        let p = mesh.vertices().iter().map(|&x| (self.p)(x, t)).collect();
        State { v, p, u, t }
    }
}

/// Steady solution on the unit square: a divergence-free cellular flow, a
/// smooth pressure and a temperature with zero normal derivative on the
/// floor, ceiling and open side, all in the Boussinesq equations with the
/// given parameters.
pub fn steady_solution(params: &Params) -> Manufactured {
    let (nu, kappa, gamma) = (1.0 / params.re, params.diffusivity(), params.buoyancy());
    let (s, c) = (f64::sin, f64::cos);
    let v: VectorFn = Arc::new(move |[x, y], _| [s(PI * x) * c(PI * y), -c(PI * x) * s(PI * y)]);
    let grad_v = Arc::new(move |[x, y]: Point, _: f64| {
        [
            [PI * c(PI * x) * c(PI * y), -PI * s(PI * x) * s(PI * y)],
            [PI * s(PI * x) * s(PI * y), -PI * c(PI * x) * c(PI * y)],
        ]
    });
    let p: ScalarFn = Arc::new(move |[x, y], _| c(PI * x) * s(PI * y));
    let u: ScalarFn = Arc::new(move |[x, y], _| c(PI * x) * c(PI * y) + 1.0);
    let grad_u: VectorFn = Arc::new(move |[x, y], _| [-PI * s(PI * x) * c(PI * y), -PI * c(PI * x) * s(PI * y)]);
    let g1: VectorFn = Arc::new(move |[x, y], _| {
        let (v1, v2) = (s(PI * x) * c(PI * y), -c(PI * x) * s(PI * y));
        let u = c(PI * x) * c(PI * y) + 1.0;
        [
            2.0 * PI * PI * nu * v1 + PI * s(PI * x) * c(PI * x) - PI * s(PI * x) * s(PI * y),
            2.0 * PI * PI * nu * v2 + PI * s(PI * y) * c(PI * y) + PI * c(PI * x) * c(PI * y) - gamma * u,
        ]
    });
    let g2: ScalarFn = Arc::new(move |[x, y], _| {
        let w = c(PI * x) * c(PI * y);
        let conv = -PI * (s(PI * x) * c(PI * y)).powi(2) + PI * (c(PI * x) * s(PI * y)).powi(2);
        2.0 * PI * PI * kappa * w + conv
    });
    Manufactured {
        v,
        grad_v,
        p,
        u,
        grad_u,
        forcing: Forcing {
            momentum: Some(g1),
            heat: Some(g2),
        },
    }
}

/// Errors of a discrete solution against an exact one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub h: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    pub temperature_h1: f64,
}

/// H1 seminorm errors of velocity and temperature and the L2 error of the
/// pressure with both means removed.
pub fn field_errors(mesh: &TaggedMesh, dofmap: &DofMap, state: &State, exact: &Manufactured) -> Result<FieldErrors> {
    let rule = triangle_quadrature(5)?;
    let n = dofmap.n_scalar();
    let t = state.t;
    let (mut ev, mut eu) = (0.0, 0.0);
    let (mut p_mean, mut q_mean, mut area) = (0.0, 0.0, 0.0);
    let mut samples = Vec::new();
    for e in 0..dofmap.n_elements() {
        let map = AffineMap::new(&mesh.triangle_coords(e))?;
        let nodes = dofmap.p2_element(e);
        let verts = dofmap.p1_element(e);
        for (r, w) in rule.iter() {
            let jw = w * map.det;
            let x = map.point(r);
            let g: Vec<[f64; 2]> = p2_gradients(r).iter().map(|&gr| map.gradient(gr)).collect();
            let grad = |f: &[f64]| {
                let mut out = [0.0; 2];
                for k in 0..6 {
                    out[0] += f[nodes[k]] * g[k][0];
                    out[1] += f[nodes[k]] * g[k][1];
                }
                out
            };
            let gv = (exact.grad_v)(x, t);
            for (comp, f) in [&state.v[..n], &state.v[n..]].into_iter().enumerate() {
                let d = grad(f);
                ev += jw * ((d[0] - gv[comp][0]).powi(2) + (d[1] - gv[comp][1]).powi(2));
            }
            let gu = (exact.grad_u)(x, t);
            let d = grad(&state.u);
            eu += jw * ((d[0] - gu[0]).powi(2) + (d[1] - gu[1]).powi(2));
            let psi = p1_values(r);
            let ph: f64 = (0..3).map(|m| state.p[verts[m]] * psi[m]).sum();
            let pe = (exact.p)(x, t);
            p_mean += jw * ph;
            q_mean += jw * pe;
            area += jw;
            samples.push((jw, ph, pe));
        }
    }
    let (p_mean, q_mean) = (p_mean / area, q_mean / area);
    let ep: f64 = samples
        .iter()
        .map(|&(jw, ph, pe)| jw * ((ph - p_mean) - (pe - q_mean)).powi(2))
        .sum();
    Ok(FieldErrors {
        h: mesh.h(),
        velocity_h1: ev.sqrt(),
        pressure_l2: ep.sqrt(),
        temperature_h1: eu.sqrt(),
    })
}

fn velocity_everywhere(v: &VectorFn) -> Vec<(BoundaryTag, VectorFn)> {
    vec![(BoundaryTag::Wall, v.clone()), (BoundaryTag::Open, v.clone())]
}

/// Steady Picard iteration on the unit square with Dirichlet velocity on the
/// whole boundary and Dirichlet temperature on `x1 = 0`.
pub fn solve_steady(n_per_unit: usize, params: &Params, exact: &Manufactured) -> Result<FieldErrors> {
    let mesh = cavity_mesh(n_per_unit)?;
    let dofmap = build_dofmap(&mesh);
    let data = BoundaryData {
        velocity: velocity_everywhere(&exact.v),
        temperature: vec![(BoundaryTag::Dirichlet, exact.u.clone())],
    };
    let problem = Problem::new(&mesh, &dofmap, data)?.with_pressure_pin(0, exact.p.clone());
    let (flow_bc, temp_bc) = problem.constraints(0.0)?;
    let asm = &problem.assembler;
    let (mut heat_solver, mut flow_solver) = (LuSolver::new(), LuSolver::new());
    let mut state = State::zeros(&dofmap, 0.0);
    let heat_lhs = HeatLhs {
        mass: 0.0,
        diffusion: params.diffusivity(),
        convection: 1.0,
        open_boundary: None,
    };
    let flow_lhs = FlowLhs {
        mass: 0.0,
        viscous: 1.0 / params.re,
        convection: 1.0,
        pressure: 1.0,
        open_boundary: 0.0,
    };
    let g1 = exact.forcing.momentum.as_ref().ok_or(Error::MissingInput("momentum source"))?;
    let g2 = exact.forcing.heat.as_ref().ok_or(Error::MissingInput("heat source"))?;
    for _ in 0..60 {
        let heat_rhs = HeatRhs {
            forcing: Some((g2, vec![(1.0, 0.0)])),
            ..Default::default()
        };
        let sys = apply_dirichlet(asm.heat_system(&heat_lhs, &state.v, &heat_rhs, AssemblyMode::Sequential)?, &temp_bc)?;
        let u = heat_solver.solve(&sys.matrix, &sys.rhs)?;
        let flow_rhs = FlowRhs {
            buoyancy: vec![(params.buoyancy(), &u[..])],
            forcing: Some((g1, vec![(1.0, 0.0)])),
            ..Default::default()
        };
        let sys = apply_dirichlet(asm.flow_system(&flow_lhs, &state.v, &flow_rhs, AssemblyMode::Sequential)?, &flow_bc)?;
        let mut x = flow_solver.solve(&sys.matrix, &sys.rhs)?;
        let p = x.split_off(dofmap.n_velocity());
        let change = norm2(&x.iter().zip(&state.v).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = norm2(&x).max(1.0);
        state = State { v: x, p, u, t: 0.0 };
        if change < 1e-13 * scale {
            return field_errors(&mesh, &dofmap, &state, exact);
        }
    }
    Err(Error::Solver("Picard iteration did not converge".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub errors: Vec<FieldErrors>,
    pub velocity_order: f64,
    pub pressure_order: f64,
    pub temperature_order: f64,
}

/// Observed orders of the steady manufactured problem across meshes.
pub fn mms_convergence(ns: &[usize]) -> Result<ConvergenceReport> {
    let params = Params::new(1.0, 1.0, 1.0, 1.0)?;
    let exact = steady_solution(&params);
    let errors = ns
        .iter()
        .map(|&n| solve_steady(n, &params, &exact))
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = errors.iter().map(|e| e.h).collect();
    let col = |f: fn(&FieldErrors) -> f64| errors.iter().map(f).collect::<Vec<_>>();
    Ok(ConvergenceReport {
        velocity_order: fit_order(&h, &col(|e| e.velocity_h1)),
        pressure_order: fit_order(&h, &col(|e| e.pressure_l2)),
        temperature_order: fit_order(&h, &col(|e| e.temperature_h1)),
        errors,
    })
}

/// Transient solution whose fields are polynomials the spaces represent
/// exactly, so only the time discretization contributes error:
/// `v = a(t) (x^2, -2xy)`, `p = b(t) (x + y)`, `u = c(t) (x^2 + y)`.
pub fn transient_solution(params: &Params) -> Manufactured {
    let (nu, kappa, gamma) = (1.0 / params.re, params.diffusivity(), params.buoyancy());
    let a = |t: f64| 1.0 + (2.0 * t).sin();
    let da = |t: f64| 2.0 * (2.0 * t).cos();
    let b = |t: f64| t.cos();
    let c = |t: f64| (-t).exp() + 0.5;
    let dc = |t: f64| -(-t).exp();
    let v: VectorFn = Arc::new(move |[x, y], t| [a(t) * x * x, -2.0 * a(t) * x * y]);
    let grad_v = Arc::new(move |[x, y]: Point, t: f64| [[2.0 * a(t) * x, 0.0], [-2.0 * a(t) * y, -2.0 * a(t) * x]]);
    let p: ScalarFn = Arc::new(move |[x, y], t| b(t) * (x + y));
    let u: ScalarFn = Arc::new(move |[x, y], t| c(t) * (x * x + y));
    let grad_u: VectorFn = Arc::new(move |[x, _], t| [2.0 * c(t) * x, c(t)]);
    let g1: VectorFn = Arc::new(move |[x, y], t| {
        let (at, bt) = (a(t), b(t));
        [
            da(t) * x * x + at * at * 2.0 * x * x * x - nu * 2.0 * at + bt,
            -2.0 * da(t) * x * y + at * at * 2.0 * x * x * y + bt - gamma * c(t) * (x * x + y),
        ]
    });
    let g2: ScalarFn = Arc::new(move |[x, y], t| {
        dc(t) * (x * x + y) + a(t) * c(t) * (2.0 * x * x * x - 2.0 * x * y) - kappa * 2.0 * c(t)
    });
    Manufactured {
        v,
        grad_v,
        p,
        u,
        grad_u,
        forcing: Forcing {
            momentum: Some(g1),
            heat: Some(g2),
        },
    }
}

fn transient_problem<'m>(mesh: &'m TaggedMesh, dofmap: &'m DofMap, exact: &Manufactured) -> Result<Problem<'m>> {
    let data = BoundaryData {
        velocity: velocity_everywhere(&exact.v),
        temperature: [BoundaryTag::Dirichlet, BoundaryTag::Neumann, BoundaryTag::Open]
            .into_iter()
            .map(|tag| (tag, exact.u.clone()))
            .collect(),
    };
    Ok(Problem::new(mesh, dofmap, data)?
        .with_forcing(exact.forcing.clone())
        .with_pressure_pin(0, exact.p.clone()))
}

fn nodal_error(a: &State, b: &State) -> f64 {
    a.v.iter()
        .zip(&b.v)
        .chain(a.u.iter().zip(&b.u))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: f64,
}

// Weak diffusion keeps the step sizes of the order fits out of the stiff
// regime, where the trapezoid rule's local error degrades to O(k^2).
fn temporal_params(k: f64) -> Result<Params> {
    Params::new(10.0, 1.0, 10.0, k)
}

fn temporal_combo() -> BcCombo {
    BcCombo::new(VelocityBc::DoNothing, TemperatureBc::Neumann)
}

/// One step from the exact state at `t0` (with exact history at `t0 - k`)
/// for each `k`; the error after one step is the local truncation error.
pub fn temporal_local_order(t0: f64, steps: &[f64], options: SchemeOptions) -> Result<TemporalReport> {
    let mesh = cavity_mesh(2)?;
    let dofmap = build_dofmap(&mesh);
    let exact = transient_solution(&temporal_params(1.0)?);
    let problem = transient_problem(&mesh, &dofmap, &exact)?;
    let mut errors = Vec::new();
    for &k in steps {
        let config = RunConfig::new(temporal_params(k)?, k, 1, temporal_combo())?.with_options(options);
        let prev = exact.state(&mesh, t0 - k);
        let now = exact.state(&mesh, t0);
        let next = Stepper::new().advance(&problem, &now, Some(&prev), &config)?;
        errors.push(nodal_error(&next, &exact.state(&mesh, t0 + k)));
    }
    Ok(TemporalReport {
        steps: steps.to_vec(),
        order: fit_order(steps, &errors),
        errors,
    })
}

/// Error at `t_end` from the exact initial state for each step count.
pub fn temporal_global_order(t_end: f64, step_counts: &[usize], options: SchemeOptions) -> Result<TemporalReport> {
    let mesh = cavity_mesh(2)?;
    let dofmap = build_dofmap(&mesh);
    let exact = transient_solution(&temporal_params(1.0)?);
    let problem = transient_problem(&mesh, &dofmap, &exact)?;
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for &n in step_counts {
        let config = RunConfig::new(temporal_params(1.0)?, t_end, n, temporal_combo())?.with_options(options);
        let out = run_transient(exact.state(&mesh, 0.0), &config, &problem)?;
        steps.push(config.params.k);
        errors.push(nodal_error(&out.final_state, &exact.state(&mesh, t_end)));
    }
    Ok(TemporalReport {
        order: fit_order(&steps, &errors),
        steps,
        errors,
    })
}

/// Discretely divergence-free `L2` projection of `v` onto velocities that
/// vanish on the walls.
pub fn project_divergence_free(problem: &Problem<'_>, v: &[f64]) -> Result<Vec<f64>> {
    let (flow_bc, _) = problem.constraints(0.0)?;
    let lhs = FlowLhs {
        mass: 1.0,
        viscous: 0.0,
        convection: 0.0,
        pressure: 1.0,
        open_boundary: 0.0,
    };
    let rhs = FlowRhs {
        old_v: Some(v),
        mass: 1.0,
        ..Default::default()
    };
    let zero = vec![0.0; v.len()];
    let sys = apply_dirichlet(problem.assembler.flow_system(&lhs, &zero, &rhs, AssemblyMode::Sequential)?, &flow_bc)?;
    let mut x = LuSolver::new().solve(&sys.matrix, &sys.rhs)?;
    x.truncate(v.len());
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub n_states: usize,
    pub n_steps: usize,
    /// Largest relative increase `(|v_{n+1}| - |v_n|) / |v_n|` seen.
    pub worst_relative_increase: f64,
    /// Largest discrete divergence `|B v|` of a projected initial state.
    pub worst_initial_divergence: f64,
    pub first_to_last_ratio: f64,
}

/// Stokes limit (no convection, buoyancy or open-boundary terms, zero
/// sources) with do-nothing on the open side: track `|v_n|_{L2}` from random
/// discretely divergence-free initial states.
pub fn energy_law(n_per_unit: usize, n_states: usize, n_steps: usize, seed: u64) -> Result<EnergyReport> {
    let mesh = cavity_mesh(n_per_unit)?;
    let dofmap = build_dofmap(&mesh);
    let data = BoundaryData {
        temperature: vec![(BoundaryTag::Dirichlet, Arc::new(|_, _| 0.0))],
        ..BoundaryData::heated_cavity()
    };
    let problem = Problem::new(&mesh, &dofmap, data)?;
    let mass = problem.assembler.mass_matrix()?;
    let div = problem.assembler.divergence_matrix()?;
    let n = dofmap.n_scalar();
    let norm = |v: &[f64]| -> Result<f64> {
        let mx = mass.matvec(&v[..n])?;
        let my = mass.matvec(&v[n..])?;
        let e: f64 = v[..n].iter().zip(&mx).chain(v[n..].iter().zip(&my)).map(|(a, b)| a * b).sum();
        Ok(e.max(0.0).sqrt())
    };
    let options = SchemeOptions {
        convection: false,
        buoyancy: false,
        open_boundary_terms: false,
        ..Default::default()
    };
    let config = RunConfig::new(Params::new(1.0, 1.0, 0.0, 1.0)?, 0.01 * n_steps as f64, n_steps, temporal_combo())?
        .with_options(options);
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_div: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for _ in 0..n_states {
        let raw: Vec<f64> = (0..dofmap.n_velocity()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = project_divergence_free(&problem, &raw)?;
        let bv = div.matvec(&v)?;
        worst_div = worst_div.max(bv.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let mut state = State::zeros(&dofmap, 0.0);
        state.v = v;
        let first = norm(&state.v)?;
        let mut last = first;
        let mut error = None;
        crate::timestepper::run_transient_with(state, &config, &problem, |_, s| {
            if error.is_some() {
                return;
            }
            match norm(&s.v) {
                Ok(e) => {
                    worst = worst.max((e - last) / last);
                    last = e;
                }
                Err(e) => error = Some(e),
            }
        })?;
        if let Some(e) = error {
            return Err(e);
        }
        ratio = ratio.max(last / first);
    }
    Ok(EnergyReport {
        n_states,
        n_steps,
        worst_relative_increase: worst,
        worst_initial_divergence: worst_div,
        first_to_last_ratio: ratio,
    })
}

/// Cheap structural checks of the discretization; each entry is a name and
/// whether it held.
pub fn invariant_checks() -> Result<Vec<(&'static str, bool)>> {
    let mut out = Vec::new();
    let rule = triangle_quadrature(5)?;
    // int_T x^a y^b over the reference triangle is a! b! / (a + b + 2)!.
    let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
    let exact = (0..=5).all(|a| {
        (0..=5 - a).all(|b| {
            let q: f64 = rule.iter().map(|(p, w)| w * p[0].powi(a) * p[1].powi(b)).sum();
            (q - fact(a) * fact(b) / fact(a + b + 2)).abs() < 1e-14
        })
    });
    out.push(("quadrature exactness", exact));
    let unity = [[0.2, 0.3], [0.0, 0.0], [0.5, 0.5]].iter().all(|&p| {
        [Family::P1, Family::P2].iter().all(|&f| {
            eval_basis(f, p)
                .map(|e| (e.values.iter().sum::<f64>() - 1.0).abs() < 1e-14)
                .unwrap_or(false)
        })
    });
    out.push(("partition of unity", unity));
    let mesh = cavity_mesh(4)?;
    let dofmap = build_dofmap(&mesh);
    let asm = Assembler::new(&mesh, &dofmap)?;
    let mass = asm.mass_matrix()?.values().iter().sum::<f64>();
    out.push(("mass total equals area", (mass - 1.0).abs() < 1e-12));
    let kc = asm.stiffness_matrix()?.matvec(&vec![1.0; dofmap.n_scalar()])?;
    out.push(("stiffness annihilates constants", kc.iter().all(|v| v.abs() < 1e-11)));
    let betas = beta1(0.0) == 0.5
        && [0.1, 1.0, 7.0].iter().all(|&s| (beta1(s) + beta1(-s) - 1.0).abs() < 1e-15)
        && beta2(-1.0) == 0.5
        && beta2(1.0) == 0.0;
    out.push(("beta identities", betas));
    let mut s = State::zeros(&dofmap, 0.0);
    for i in 0..dofmap.n_scalar() {
        let [x, y] = mesh.node_coord(i);
        s.v[i] = x * y;
        s.u[i] = x - y;
    }
    let zero = compute_res_omega(&s, &s, &mesh)? == 0.0 && compute_res_gamma(&s, &s, &mesh)? == 0.0;
    out.push(("residuals vanish on identical states", zero));
    Ok(out)
}
