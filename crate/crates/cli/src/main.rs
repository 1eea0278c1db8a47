use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boussinesq::assembly::SchemeOptions;
use boussinesq::benchmark::{bench_cell, boundary_flux, extract_profile, run_truncated, sweep, SweepEntry};
use boussinesq::boundary_conditions::BcCombo;
use boussinesq::io::{
    load_config, write_profiles_csv, write_results_csv, write_vtk, Config, WeakFormName,
};
use boussinesq::mesh::BoundaryTag;
use boussinesq::spaces::{build_dofmap, BoundaryData};
use boussinesq::timestepper::{run_transient, Problem};
use boussinesq::verification::{energy_law, invariant_checks, mms_convergence, temporal_global_order, temporal_local_order};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boussinesq", version, about = "Taylor-Hood solver for buoyant flow with open boundaries")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single transient run; writes VTK snapshots.
    Run(Overrides),
    /// Reference plus truncated runs for one (Re, Gr) cell; writes results.csv and profiles.csv.
    Bench(Overrides),
    /// The benchmark over the configured Re x Gr grid; writes results.csv.
    Sweep(Overrides),
    /// Truncated run for one combination; writes its outflow profile to profiles.csv.
    Profile(Overrides),
    /// Convergence, invariant, energy and temporal-order checks.
    Verify,
}

#[derive(Args, Default)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    re: Option<f64>,
    #[arg(long)]
    gr: Option<f64>,
    #[arg(long)]
    pr: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Mesh cells per unit length.
    #[arg(long)]
    mesh_n: Option<usize>,
    /// Open-boundary velocity condition: dn or ddn.
    #[arg(long)]
    bc_v: Option<String>,
    /// Open-boundary temperature condition: n, n_beta1 or n_beta2.
    #[arg(long)]
    bc_u: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// semidiscrete or literal.
    #[arg(long)]
    weak_form: Option<String>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<boussinesq::Error> for Failure {
    fn from(e: boussinesq::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl Overrides {
    fn resolve(&self) -> Result<Config, Failure> {
        let mut c = match &self.config {
            Some(path) => load_config(path).map_err(|e| Failure::Usage(e.to_string()))?,
            None => Config::default(),
        };
        if let Some(v) = self.re {
            c.params.re = v;
        }
        if let Some(v) = self.gr {
            c.params.gr = v;
        }
        if let Some(v) = self.pr {
            c.params.pr = v;
        }
        if let Some(v) = self.t_end {
            c.time.t_end = v;
        }
        if let Some(v) = self.steps {
            c.time.n_steps = v;
        }
        if let Some(v) = self.mesh_n {
            c.mesh.n_per_unit = v;
        }
        if let Some(v) = &self.bc_v {
            c.bc.velocity = v.clone();
        }
        if let Some(v) = &self.bc_u {
            c.bc.temperature = v.clone();
        }
        if let Some(v) = &self.out {
            c.output.directory = v.clone();
        }
        if let Some(v) = self.workers {
            c.sweep.workers = v;
        }
        if let Some(v) = &self.weak_form {
            c.flags.weak_form = match v.as_str() {
                "semidiscrete" => WeakFormName::Semidiscrete,
                "literal" => WeakFormName::Literal,
                other => return Err(Failure::Usage(format!("unknown weak form {other:?}"))),
            };
        }
        c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(c)
    }

    /// Combinations to benchmark: the one given on the command line, or all six.
    fn combos(&self, config: &Config) -> Result<Vec<BcCombo>, Failure> {
        if self.bc_v.is_some() || self.bc_u.is_some() {
            Ok(vec![config.bc_combo()?])
        } else {
            Ok(BcCombo::benchmark_set())
        }
    }
}

fn wants(config: &Config, format: &str) -> bool {
    config.output.formats.iter().any(|f| f == format)
}

fn cmd_run(o: &Overrides) -> Result<(), Failure> {
    let config = o.resolve()?;
    let mesh = config.mesh()?;
    let dofmap = build_dofmap(&mesh);
    let problem = Problem::new(&mesh, &dofmap, BoundaryData::heated_cavity())?;
    let run = config.run_config()?;
    let initial = problem.quiescent_state(0.0)?;
    let out = run_transient(initial, &run, &problem)?;
    let dir = &config.output.directory;
    let echo = config.echo();
    if wants(&config, "vtk") {
        for (i, s) in out.recorded.iter().enumerate() {
            write_vtk(s, &mesh, &dofmap, &dir.join(format!("state_{i:04}.vtk")), &echo)?;
        }
        write_vtk(&out.final_state, &mesh, &dofmap, &dir.join("final.vtk"), &echo)?;
    }
    let s = &out.final_state;
    let n = dofmap.n_scalar();
    let vmax = (0..n).map(|i| s.v[i].hypot(s.v[n + i])).fold(0.0, f64::max);
    let flux = boundary_flux(s, &mesh, BoundaryTag::Open)?;
    println!(
        "t={} steps={} vertices={} triangles={} max|v|={vmax:.6e} open-boundary flux={flux:.3e}",
        s.t, out.metadata.n_steps, out.metadata.n_vertices, out.metadata.n_triangles
    );
    println!("{}", out.metadata.initial_condition);
    Ok(())
}

fn print_rows(rows: &[SweepEntry]) {
    println!("{:>6} {:>8} {:>12} {:>12} {:>12}", "Re", "Gr", "combo", "res_omega", "res_gamma");
    for r in rows {
        match &r.outcome {
            Ok(b) => println!(
                "{:>6} {:>8} {:>12} {:>12.5} {:>12.5}",
                r.re,
                r.gr,
                r.combo.label(),
                b.res_omega,
                b.res_gamma
            ),
            Err(e) => println!("{:>6} {:>8} {:>12} failed: {e}", r.re, r.gr, r.combo.label()),
        }
    }
}

fn write_table(dir: &Path, rows: &[SweepEntry], config: &Config) -> Result<(), Failure> {
    if wants(config, "csv") {
        let path = dir.join("results.csv");
        write_results_csv(&path, rows, &config.echo())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_bench(o: &Overrides) -> Result<(), Failure> {
    let config = o.resolve()?;
    let combos = o.combos(&config)?;
    let (re, gr) = (config.params.re, config.params.gr);
    let cell = bench_cell(re, gr, &combos, &config.bench_config())?;
    let rows: Vec<SweepEntry> = cell
        .results
        .iter()
        .zip(&combos)
        .map(|(outcome, combo)| SweepEntry {
            re,
            gr,
            combo: combo.clone(),
            outcome: outcome.clone(),
        })
        .collect();
    print_rows(&rows);
    let dir = &config.output.directory;
    write_table(dir, &rows, &config)?;
    if wants(&config, "csv") {
        let mut profiles = vec![("reference".to_string(), cell.reference_profile.clone())];
        profiles.extend(combos.iter().map(|c| c.label()).zip(cell.profiles.iter().cloned()));
        write_profiles_csv(&dir.join("profiles.csv"), &profiles, &config.echo())?;
    }
    Ok(())
}

fn cmd_sweep(o: &Overrides) -> Result<(), Failure> {
    let config = o.resolve()?;
    let combos = o.combos(&config)?;
    let rows = sweep(&config.sweep.re, &config.sweep.gr, &combos, &config.bench_config())?;
    print_rows(&rows);
    write_table(&config.output.directory, &rows, &config)
}

fn cmd_profile(o: &Overrides) -> Result<(), Failure> {
    let config = o.resolve()?;
    let combo = config.bc_combo()?;
    let bench = config.bench_config();
    let (mesh, state, _) = run_truncated(config.params.re, config.params.gr, &combo, &bench)?;
    let profile = extract_profile(&state, &mesh, 1.0, bench.profile_samples)?;
    for s in &profile {
        println!("{:.6} {:+.6e} {:.6e}", s.x2, s.vn, s.u);
    }
    let path = config.output.directory.join("profiles.csv");
    write_profiles_csv(&path, &[(combo.label(), profile)], &config.echo())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_verify() -> Result<(), Failure> {
    let mut ok = true;
    let mms = mms_convergence(&[8, 16, 32])?;
    let pass = mms.velocity_order >= 1.9 && mms.pressure_order >= 1.9 && mms.temperature_order >= 1.9;
    ok &= pass;
    println!(
        "spatial orders: velocity H1 {:.3}, pressure L2 {:.3}, temperature H1 {:.3} [{}]",
        mms.velocity_order,
        mms.pressure_order,
        mms.temperature_order,
        verdict(pass)
    );
    for (name, pass) in invariant_checks()? {
        ok &= pass;
        println!("{name} [{}]", verdict(pass));
    }
    let energy = energy_law(8, 20, 100, 2024)?;
    let pass = energy.worst_relative_increase <= 1e-10;
    ok &= pass;
    println!(
        "Stokes energy: largest relative step change {:.3e} [{}]",
        energy.worst_relative_increase,
        verdict(pass)
    );
    let opts = SchemeOptions::default();
    let local = temporal_local_order(0.3, &[0.02, 0.01, 0.005, 0.0025], opts)?;
    let global = temporal_global_order(1.0, &[10, 20, 40, 80], opts)?;
    let pass = local.order >= 2.8 && global.order >= 1.9;
    ok &= pass;
    println!(
        "temporal orders: local {:.3}, global {:.3} [{}]",
        local.order,
        global.order,
        verdict(pass)
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Run("verification failed".into()))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => cmd_run(o),
        Command::Bench(o) => cmd_bench(o),
        Command::Sweep(o) => cmd_sweep(o),
        Command::Profile(o) => cmd_profile(o),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
