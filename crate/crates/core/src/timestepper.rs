//! Time marching: per step, temperature with the extrapolated velocity, then
//! the coupled velocity-pressure system with the new temperature.

use std::sync::Arc;

use crate::assembly::{extrapolate, Assembler, Forcing, Params, SchemeOptions, State};
use crate::boundary_conditions::BcCombo;
use crate::error::{Error, Result};
use crate::linalg::LuSolver;
use crate::mesh::TaggedMesh;
use crate::spaces::{dirichlet_sets, BoundaryData, DirichletSet, DofMap, ScalarFn};

/// Initial condition recorded with every run.
pub const INITIAL_CONDITION_NOTE: &str =
    "quiescent start: v0 = 0, p0 = 0, u0 = 0 except Dirichlet temperature values imposed at t = 0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordPolicy {
    FinalOnly,
    /// Every `m`-th step, plus the final state.
    Every(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub t_end: f64,
    pub n_steps: usize,
    pub bc: BcCombo,
    pub record: RecordPolicy,
    pub options: SchemeOptions,
}

impl RunConfig {
    /// Build a configuration with `k = t_end / n_steps`; `params.k` is overwritten.
    pub fn new(mut params: Params, t_end: f64, n_steps: usize, bc: BcCombo) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::param("t_end", format!("must be positive, got {t_end}")));
        }
        params.k = t_end / n_steps as f64;
        params.validate()?;
        Ok(RunConfig {
            params,
            t_end,
            n_steps,
            bc,
            record: RecordPolicy::FinalOnly,
            options: SchemeOptions::default(),
        })
    }

    pub fn with_record(mut self, record: RecordPolicy) -> Self {
        self.record = record;
        self
    }

    pub fn with_options(mut self, options: SchemeOptions) -> Self {
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if let RecordPolicy::Every(0) = self.record {
            return Err(Error::param("record", "interval must be at least 1"));
        }
        self.params.validate()
    }
}

/// A discretized problem: mesh, dofs, boundary data and sources.
pub struct Problem<'m> {
    pub assembler: Assembler<'m>,
    pub data: BoundaryData,
    pub forcing: Forcing,
    /// Pressure vertex fixed to a prescribed value, for fully enclosed flows.
    pub pressure_pin: Option<(usize, ScalarFn)>,
}

impl<'m> Problem<'m> {
    pub fn new(mesh: &'m TaggedMesh, dofmap: &'m DofMap, data: BoundaryData) -> Result<Self> {
        Ok(Problem {
            assembler: Assembler::new(mesh, dofmap)?,
            data,
            forcing: Forcing::default(),
            pressure_pin: None,
        })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_pressure_pin(mut self, vertex: usize, value: ScalarFn) -> Self {
        self.pressure_pin = Some((vertex, value));
        self
    }

    pub fn mesh(&self) -> &TaggedMesh {
        self.assembler.mesh()
    }

    pub fn dofmap(&self) -> &DofMap {
        self.assembler.dofmap()
    }

    /// Velocity constraints in the coupled numbering, plus temperature constraints.
    pub fn constraints(&self, t: f64) -> Result<(DirichletSet, DirichletSet)> {
        let (velocity, temperature) = dirichlet_sets(self.mesh(), self.dofmap(), &self.data, t)?;
        let flow = match &self.pressure_pin {
            None => velocity,
            Some((vertex, f)) => {
                let x = self.mesh().vertices()[*vertex];
                let pin = DirichletSet::from_pairs([(self.dofmap().pressure_dof(*vertex), f(x, t))])?;
                velocity.merged(&pin)?
            }
        };
        Ok((flow, temperature))
    }

    /// Zero fields with the Dirichlet values at `t` embedded.
    pub fn quiescent_state(&self, t: f64) -> Result<State> {
        let mut s = State::zeros(self.dofmap(), t);
        self.embed_dirichlet(&mut s)?;
        Ok(s)
    }

    /// Overwrite the constrained entries of `state` with the data at `state.t`.
    pub fn embed_dirichlet(&self, state: &mut State) -> Result<()> {
        let (flow, temperature) = self.constraints(state.t)?;
        let nv = self.dofmap().n_velocity();
        for (dof, value) in flow.iter() {
            if dof < nv {
                state.v[dof] = value;
            } else {
                state.p[dof - nv] = value;
            }
        }
        temperature.impose(&mut state.u);
        Ok(())
    }
}

/// Step driver that keeps the symbolic factorizations across steps.
#[derive(Default)]
pub struct Stepper {
    heat: LuSolver,
    flow: LuSolver,
    steps_taken: usize,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Advance one step. `state_nm1 = None` bootstraps with `v~ = v_n`.
    pub fn advance(
        &mut self,
        problem: &Problem<'_>,
        state_n: &State,
        state_nm1: Option<&State>,
        config: &RunConfig,
    ) -> Result<State> {
        let step = self.steps_taken + 1;
        let out = self.advance_inner(problem, state_n, state_nm1, config);
        match out {
            Ok(s) => {
                self.steps_taken = step;
                Ok(s)
            }
            Err(e) => Err(Error::Step {
                step,
                source: Box::new(e),
            }),
        }
    }

    fn advance_inner(
        &mut self,
        problem: &Problem<'_>,
        state_n: &State,
        state_nm1: Option<&State>,
        config: &RunConfig,
    ) -> Result<State> {
        let d = problem.dofmap();
        state_n.check_layout(d)?;
        let params = &config.params;
        let t_next = state_n.t + params.k;
        let v_tilde = match state_nm1 {
            Some(prev) => extrapolate(state_n, prev)?.0,
            None => state_n.v.clone(),
        };
        let (flow_bc, temp_bc) = problem.constraints(t_next)?;
        let asm = &problem.assembler;

        let heat = asm.assemble_temperature(
            state_n,
            &v_tilde,
            params,
            &config.bc.temperature,
            &config.options,
            &problem.forcing,
            t_next,
            &temp_bc,
        )?;
        let mut u = self.heat.solve(&heat.matrix, &heat.rhs)?;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { system: "temperature" });
        }
        temp_bc.impose(&mut u);

        let flow = asm.assemble_momentum(
            state_n,
            &v_tilde,
            &u,
            params,
            config.bc.velocity,
            &config.options,
            &problem.forcing,
            t_next,
            &flow_bc,
        )?;
        let mut x = self.flow.solve(&flow.matrix, &flow.rhs)?;
        if x.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { system: "momentum" });
        }
        flow_bc.impose(&mut x);
        let p = x.split_off(d.n_velocity());
        Ok(State { v: x, p, u, t: t_next })
    }
}

/// Sizes and settings attached to a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub n_steps: usize,
    pub k: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_flow_dofs: usize,
    pub n_temperature_dofs: usize,
    pub initial_condition: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: State,
    pub recorded: Vec<State>,
    pub metadata: RunMetadata,
}

/// March `config.n_steps` steps from `initial`.
pub fn run_transient(initial: State, config: &RunConfig, problem: &Problem<'_>) -> Result<RunOutput> {
    run_transient_with(initial, config, problem, |_, _| {})
}

/// As `run_transient`, calling `observe(step, state)` after every step.
pub fn run_transient_with(
    initial: State,
    config: &RunConfig,
    problem: &Problem<'_>,
    mut observe: impl FnMut(usize, &State),
) -> Result<RunOutput> {
    config.validate()?;
    initial.check_layout(problem.dofmap())?;
    let mut stepper = Stepper::new();
    let mut recorded = Vec::new();
    let mut prev: Option<State> = None;
    let mut current = initial;
    for step in 1..=config.n_steps {
        let next = stepper.advance(problem, &current, prev.as_ref(), config)?;
        observe(step, &next);
        if let RecordPolicy::Every(m) = config.record {
            if step % m == 0 && step != config.n_steps {
                recorded.push(next.clone());
            }
        }
        prev = Some(std::mem::replace(&mut current, next));
    }
    recorded.push(current.clone());
    let mesh = problem.mesh();
    let d = problem.dofmap();
    Ok(RunOutput {
        final_state: current,
        recorded,
        metadata: RunMetadata {
            n_steps: config.n_steps,
            k: config.params.k,
            n_vertices: mesh.n_vertices(),
            n_triangles: mesh.n_triangles(),
            n_flow_dofs: d.n_flow(),
            n_temperature_dofs: d.n_temperature(),
            initial_condition: INITIAL_CONDITION_NOTE.to_string(),
        },
    })
}

/// Constant function helper for boundary data and pins.
pub fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_, _| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{BuoyancyLevel, WeakForm};
    use crate::boundary_conditions::{TemperatureBc, VelocityBc};
    use crate::mesh::{cavity_mesh, BoundaryTag};
    use crate::spaces::build_dofmap;

    fn combo() -> BcCombo {
        BcCombo::new(VelocityBc::DoNothing, TemperatureBc::Neumann)
    }

    #[test]
    fn config_validation() {
        let p = Params::new(3.0, 1.0, 1000.0, 1.0).unwrap();
        assert!(RunConfig::new(p, 1.0, 0, combo()).is_err());
        assert!(RunConfig::new(p, 0.0, 10, combo()).is_err());
        let c = RunConfig::new(p, 1.0, 100, combo()).unwrap();
        assert!((c.params.k - 0.01).abs() < 1e-15);
        assert!(c.clone().with_record(RecordPolicy::Every(0)).validate().is_err());
    }

    #[test]
    fn rest_state_is_preserved_in_the_stokes_limit() {
        let mesh = cavity_mesh(4).unwrap();
        let d = build_dofmap(&mesh);
        let data = BoundaryData {
            temperature: vec![(BoundaryTag::Dirichlet, constant(0.0))],
            ..BoundaryData::heated_cavity()
        };
        let problem = Problem::new(&mesh, &d, data).unwrap();
        let opts = SchemeOptions {
            convection: false,
            buoyancy: false,
            ..Default::default()
        };
        let cfg = RunConfig::new(Params::new(3.0, 1.0, 1000.0, 1.0).unwrap(), 0.1, 5, combo())
            .unwrap()
            .with_options(opts);
        let out = run_transient(State::zeros(&d, 0.0), &cfg, &problem).unwrap();
        assert!(out.final_state.v.iter().chain(&out.final_state.p).chain(&out.final_state.u).all(|&x| x == 0.0));
        assert_eq!(out.recorded.len(), 1);
        assert!((out.final_state.t - 0.1).abs() < 1e-14);
    }

    #[test]
    fn steady_conduction_profile_is_kept() {
        // u = 1 - x1 solves the heat equation with u(0) = 1; the open side
        // carries the flux -1 which a Neumann condition cannot represent, so it
        // is given as Dirichlet data u(1) = 0.
        let mesh = cavity_mesh(6).unwrap();
        let d = build_dofmap(&mesh);
        let data = BoundaryData {
            temperature: vec![
                (BoundaryTag::Dirichlet, constant(1.0)),
                (BoundaryTag::Open, constant(0.0)),
            ],
            ..BoundaryData::heated_cavity()
        };
        let problem = Problem::new(&mesh, &d, data).unwrap();
        let cfg = RunConfig::new(Params::new(3.0, 1.0, 0.0, 1.0).unwrap(), 0.2, 20, combo()).unwrap();
        let mut init = State::zeros(&d, 0.0);
        init.u = (0..d.n_scalar()).map(|i| 1.0 - mesh.node_coord(i)[0]).collect();
        let out = run_transient(init.clone(), &cfg, &problem).unwrap();
        for (a, b) in out.final_state.u.iter().zip(&init.u) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(out.final_state.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conduction_stays_within_data_bounds() {
        let mesh = cavity_mesh(8).unwrap();
        let d = build_dofmap(&mesh);
        let problem = Problem::new(&mesh, &d, BoundaryData::heated_cavity()).unwrap();
        let opts = SchemeOptions {
            open_boundary_terms: false,
            ..Default::default()
        };
        let cfg = RunConfig::new(Params::new(3.0, 1.0, 0.0, 1.0).unwrap(), 0.5, 50, combo())
            .unwrap()
            .with_options(opts);
        let init = problem.quiescent_state(0.0).unwrap();
        let mut worst = (0.0f64, 1.0f64);
        run_transient_with(init, &cfg, &problem, |_, s| {
            for &u in &s.u {
                worst.0 = worst.0.min(u);
                worst.1 = worst.1.max(u);
            }
        })
        .unwrap();
        assert!(worst.0 > -1e-8 && worst.1 < 1.0 + 1e-8, "{worst:?}");
    }

    #[test]
    fn record_policy() {
        let mesh = cavity_mesh(2).unwrap();
        let d = build_dofmap(&mesh);
        let problem = Problem::new(&mesh, &d, BoundaryData::heated_cavity()).unwrap();
        let cfg = RunConfig::new(Params::new(3.0, 1.0, 100.0, 1.0).unwrap(), 0.1, 10, combo())
            .unwrap()
            .with_record(RecordPolicy::Every(3));
        let out = run_transient(problem.quiescent_state(0.0).unwrap(), &cfg, &problem).unwrap();
        let times: Vec<f64> = out.recorded.iter().map(|s| (s.t * 100.0).round()).collect();
        assert_eq!(times, vec![3.0, 6.0, 9.0, 10.0]);
        assert_eq!(out.metadata.n_steps, 10);
        assert_eq!(out.metadata.n_flow_dofs, d.n_flow());
    }

    #[test]
    fn dirichlet_values_held_exactly_and_variants_run() {
        let mesh = cavity_mesh(4).unwrap();
        let d = build_dofmap(&mesh);
        let problem = Problem::new(&mesh, &d, BoundaryData::heated_cavity()).unwrap();
        let (flow_bc, temp_bc) = problem.constraints(0.0).unwrap();
        for (wf, bl) in [
            (WeakForm::SemiDiscrete, BuoyancyLevel::Trapezoid),
            (WeakForm::Literal, BuoyancyLevel::Trapezoid),
            (WeakForm::SemiDiscrete, BuoyancyLevel::Implicit),
        ] {
            let opts = SchemeOptions {
                weak_form: wf,
                buoyancy_level: bl,
                ..Default::default()
            };
            let cfg = RunConfig::new(Params::new(3.0, 1.0, 1000.0, 1.0).unwrap(), 0.05, 5, BcCombo::benchmark_set()[3].clone())
                .unwrap()
                .with_options(opts);
            let out = run_transient(problem.quiescent_state(0.0).unwrap(), &cfg, &problem).unwrap();
            let s = &out.final_state;
            assert!(s.is_finite());
            for (dof, v) in flow_bc.iter() {
                assert_eq!(s.v[dof], v);
            }
            for (dof, v) in temp_bc.iter() {
                assert_eq!(s.u[dof], v);
            }
            assert!(s.v.iter().any(|&v| v.abs() > 1e-6));
        }
    }

    #[test]
    fn failures_carry_the_step_index() {
        let mesh = cavity_mesh(2).unwrap();
        let d = build_dofmap(&mesh);
        let problem = Problem::new(&mesh, &d, BoundaryData::heated_cavity()).unwrap();
        let cfg = RunConfig::new(Params::new(3.0, 1.0, 1000.0, 1.0).unwrap(), 0.1, 3, combo()).unwrap();
        let mut bad = problem.quiescent_state(0.0).unwrap();
        bad.u[0] = f64::NAN;
        bad.u[d.n_scalar() - 1] = f64::NAN;
        match run_transient(bad, &cfg, &problem) {
            Err(Error::Step { step: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
