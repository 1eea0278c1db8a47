//! Run configuration and file output: CSV tables and legacy VTK snapshots.
//!
//! Every file starts with a schema line and the configuration that produced
//! it, as `#`-prefixed comment lines (VTK carries them in its title line and
//! a trailing field block).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{AssemblyMode, BuoyancyLevel, Params, SchemeOptions, State, WeakForm};
use crate::benchmark::{BenchConfig, ProfileSample, SweepEntry};
use crate::boundary_conditions::{BcCombo, TemperatureBc, VelocityBc};
use crate::error::{Error, Result};
use crate::mesh::{
    build_structured_mesh, cavity_mesh, extended_cavity_mesh, tag_boundaries, BoundaryTag, Rect, RectUnion, TagRule,
    TaggedMesh,
};
use crate::spaces::DofMap;
use crate::timestepper::{RecordPolicy, RunConfig};

pub const RESULTS_SCHEMA: &str = "boussinesq-results/1";
pub const PROFILES_SCHEMA: &str = "boussinesq-profiles/1";
pub const FIELDS_SCHEMA: &str = "boussinesq-fields/1";

/// Column order of the results table.
pub const RESULTS_COLUMNS: [&str; 7] = ["re", "gr", "bc_v", "bc_u", "res_omega", "res_gamma", "wall_time_s"];

/// Column order of the profiles table.
pub const PROFILE_COLUMNS: [&str; 4] = ["combo", "x2", "vn", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    #[default]
    Cavity,
    CavityExtended,
    Custom,
}

/// A boundary tag rule for custom geometries: edges whose midpoint lies on
/// the line `x1 = x` (or `x2 = y`), optionally restricted to `range` along
/// the line. `complement` selects every other boundary edge instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRule {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub complement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    /// Rectangles `[x_min, x_max, y_min, y_max]` of a custom domain.
    pub rects: Vec<[f64; 4]>,
    pub rules: Vec<LineRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub re: f64,
    pub gr: f64,
    pub pr: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            re: 3.0,
            gr: 1000.0,
            pr: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_end: f64,
    pub n_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t_end: 1.0,
            n_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub n_per_unit: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { n_per_unit: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    /// `dn` or `ddn`.
    pub velocity: String,
    /// `n`, `n_beta1` or `n_beta2`.
    pub temperature: String,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            velocity: "dn".into(),
            temperature: "n".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Any of `csv`, `vtk`.
    pub formats: Vec<String>,
    /// Record every `record_every` steps; 0 keeps the final state only.
    pub record_every: usize,
    pub profile_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            formats: vec!["csv".into(), "vtk".into()],
            record_every: 0,
            profile_samples: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeakFormName {
    #[default]
    Semidiscrete,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BuoyancyName {
    #[default]
    Trapezoid,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsConfig {
    pub weak_form: WeakFormName,
    pub buoyancy_level: BuoyancyName,
    /// Sequential element loop; otherwise element kernels run in parallel
    /// (results are identical either way).
    pub deterministic_assembly: bool,
}

impl Default for FlagsConfig {
    fn default() -> Self {
        FlagsConfig {
            weak_form: WeakFormName::Semidiscrete,
            buoyancy_level: BuoyancyName::Trapezoid,
            deterministic_assembly: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub re: Vec<f64>,
    pub gr: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            re: vec![2.0, 3.0, 4.0, 5.0],
            gr: vec![500.0, 1000.0, 2000.0],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub params: ParamsConfig,
    pub time: TimeConfig,
    pub mesh: MeshConfig,
    pub bc: BcConfig,
    pub output: OutputConfig,
    pub flags: FlagsConfig,
    pub sweep: SweepConfig,
}

/// Parse and validate a TOML configuration; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<Config> {
    let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        Params::new(p.re, p.pr, p.gr, 1.0)?;
        if self.time.n_steps == 0 {
            return Err(Error::param("time.n_steps", "must be at least 1"));
        }
        if !(self.time.t_end > 0.0 && self.time.t_end.is_finite()) {
            return Err(Error::param("time.t_end", "must be positive"));
        }
        if self.mesh.n_per_unit == 0 {
            return Err(Error::param("mesh.n_per_unit", "must be at least 1"));
        }
        self.bc_combo()?;
        for f in &self.output.formats {
            if f != "csv" && f != "vtk" {
                return Err(Error::param("output.formats", format!("unknown format {f:?}")));
            }
        }
        if self.output.profile_samples == 0 {
            return Err(Error::param("output.profile_samples", "must be at least 1"));
        }
        if self.sweep.workers == 0 {
            return Err(Error::param("sweep.workers", "must be at least 1"));
        }
        for &re in &self.sweep.re {
            if !(re > 0.0 && re.is_finite()) {
                return Err(Error::param("sweep.re", format!("must be positive, got {re}")));
            }
        }
        for &gr in &self.sweep.gr {
            if !(gr >= 0.0 && gr.is_finite()) {
                return Err(Error::param("sweep.gr", format!("must be non-negative, got {gr}")));
            }
        }
        match self.geometry.kind {
            GeometryKind::Custom => {
                if self.geometry.rects.is_empty() || self.geometry.rules.is_empty() {
                    return Err(Error::param("geometry", "a custom geometry needs rects and rules"));
                }
                for r in &self.geometry.rules {
                    parse_tag(&r.tag)?;
                    if r.x.is_some() == r.y.is_some() {
                        return Err(Error::param("geometry.rules", "each rule needs exactly one of x, y"));
                    }
                }
            }
            _ => {
                if !self.geometry.rects.is_empty() || !self.geometry.rules.is_empty() {
                    return Err(Error::param("geometry", "rects and rules apply to custom geometries only"));
                }
            }
        }
        Ok(())
    }

    pub fn bc_combo(&self) -> Result<BcCombo> {
        let v: VelocityBc = self.bc.velocity.parse()?;
        let t: TemperatureBc = self.bc.temperature.parse()?;
        Ok(BcCombo::new(v, t))
    }

    pub fn scheme_options(&self) -> SchemeOptions {
        SchemeOptions {
            weak_form: match self.flags.weak_form {
                WeakFormName::Semidiscrete => WeakForm::SemiDiscrete,
                WeakFormName::Literal => WeakForm::Literal,
            },
            buoyancy_level: match self.flags.buoyancy_level {
                BuoyancyName::Trapezoid => BuoyancyLevel::Trapezoid,
                BuoyancyName::Implicit => BuoyancyLevel::Implicit,
            },
            mode: if self.flags.deterministic_assembly {
                AssemblyMode::Sequential
            } else {
                AssemblyMode::Parallel
            },
            ..Default::default()
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let p = &self.params;
        let params = Params::new(p.re, p.pr, p.gr, self.time.t_end / self.time.n_steps as f64)?;
        let record = match self.output.record_every {
            0 => RecordPolicy::FinalOnly,
            m => RecordPolicy::Every(m),
        };
        Ok(RunConfig::new(params, self.time.t_end, self.time.n_steps, self.bc_combo()?)?
            .with_record(record)
            .with_options(self.scheme_options()))
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            pr: self.params.pr,
            t_end: self.time.t_end,
            n_steps: self.time.n_steps,
            n_per_unit: self.mesh.n_per_unit,
            options: self.scheme_options(),
            workers: self.sweep.workers,
            profile_samples: self.output.profile_samples,
        }
    }

    pub fn mesh(&self) -> Result<TaggedMesh> {
        let n = self.mesh.n_per_unit;
        match self.geometry.kind {
            GeometryKind::Cavity => cavity_mesh(n),
            GeometryKind::CavityExtended => extended_cavity_mesh(n),
            GeometryKind::Custom => {
                let rects = self.geometry.rects.iter().map(|r| Rect::new(r[0], r[1], r[2], r[3])).collect();
                let region = RectUnion::new(rects)?;
                let rules = self
                    .geometry
                    .rules
                    .iter()
                    .map(line_rule)
                    .collect::<Result<Vec<_>>>()?;
                tag_boundaries(build_structured_mesh(&region, n)?, &rules)
            }
        }
    }

    /// The configuration as TOML, for embedding into outputs.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("unserializable config: {e}"))
    }
}

fn parse_tag(s: &str) -> Result<BoundaryTag> {
    match s {
        "inlet" => Ok(BoundaryTag::Inlet),
        "wall" => Ok(BoundaryTag::Wall),
        "open" => Ok(BoundaryTag::Open),
        "dirichlet" => Ok(BoundaryTag::Dirichlet),
        "neumann" => Ok(BoundaryTag::Neumann),
        other => Err(Error::param("geometry.rules", format!("unknown tag {other:?}"))),
    }
}

fn line_rule(r: &LineRule) -> Result<TagRule> {
    let tag = parse_tag(&r.tag)?;
    let (axis, at) = match (r.x, r.y) {
        (Some(x), None) => (0, x),
        (None, Some(y)) => (1, y),
        _ => return Err(Error::param("geometry.rules", "each rule needs exactly one of x, y")),
    };
    let range = r.range.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
    let complement = r.complement;
    Ok(TagRule::new(tag, move |p| {
        let along = p[1 - axis];
        let hit = (p[axis] - at).abs() < 1e-12 && along > range[0] && along < range[1];
        hit != complement
    }))
}

fn header(schema: &str, echo: &str) -> String {
    let mut s = format!("# schema: {schema}\n");
    for line in echo.lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// A parsed row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub re: f64,
    pub gr: f64,
    pub bc_v: String,
    pub bc_u: String,
    pub res_omega: f64,
    pub res_gamma: f64,
    pub wall_time_s: f64,
}

/// Write the results table. Failed cells are listed as comment lines.
pub fn write_results_csv(path: &Path, rows: &[SweepEntry], echo: &str) -> Result<()> {
    let mut file = create(path)?;
    let mut head = header(RESULTS_SCHEMA, echo);
    for row in rows {
        if let Err(msg) = &row.outcome {
            head.push_str(&format!("# failed: re={} gr={} {}: {}\n", row.re, row.gr, row.combo.label(), msg));
        }
    }
    file.write_all(head.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(RESULTS_COLUMNS)?;
    for row in rows {
        if let Ok(r) = &row.outcome {
            w.serialize(ResultRow {
                re: r.re,
                gr: r.gr,
                bc_v: r.combo.velocity_name().to_string(),
                bc_u: r.combo.temperature_name(),
                res_omega: r.res_omega,
                res_gamma: r.res_gamma,
                wall_time_s: r.wall_time_s,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv_reader(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(RESULTS_COLUMNS.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected columns {headers:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub combo: String,
    pub x2: f64,
    pub vn: f64,
    pub u: f64,
}

/// Write open-boundary profiles, one block of rows per label.
pub fn write_profiles_csv(path: &Path, profiles: &[(String, Vec<ProfileSample>)], echo: &str) -> Result<()> {
    let mut file = create(path)?;
    file.write_all(header(PROFILES_SCHEMA, echo).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(PROFILE_COLUMNS)?;
    for (label, samples) in profiles {
        for s in samples {
            w.serialize(ProfileRow {
                combo: label.clone(),
                x2: s.x2,
                vn: s.vn,
                u: s.u,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_profiles_csv(path: &Path) -> Result<Vec<ProfileRow>> {
    let mut r = csv_reader(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// VTK cell type of the six-node triangle.
pub const VTK_QUADRATIC_TRIANGLE: u8 = 22;

/// Write a legacy ASCII VTK unstructured grid with all P2 nodes as points and
/// quadratic triangles as cells. Pressure is given at the vertices and
/// interpolated linearly to the midpoint nodes.
pub fn write_vtk(state: &State, mesh: &TaggedMesh, dofmap: &DofMap, path: &Path, echo: &str) -> Result<()> {
    state.check_layout(dofmap)?;
    let n = mesh.n_p2_nodes();
    let nv = mesh.n_vertices();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&format!("{FIELDS_SCHEMA} t={}\n", state.t));
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {n} double\n"));
    for i in 0..n {
        let [x, y] = mesh.node_coord(i);
        out.push_str(&format!("{x} {y} 0\n"));
    }
    let cells = dofmap.n_elements();
    out.push_str(&format!("CELLS {cells} {}\n", 7 * cells));
    for t in 0..cells {
        let e = dofmap.p2_element(t);
        out.push_str(&format!("6 {} {} {} {} {} {}\n", e[0], e[1], e[2], e[3], e[4], e[5]));
    }
    out.push_str(&format!("CELL_TYPES {cells}\n"));
    for _ in 0..cells {
        out.push_str(&format!("{VTK_QUADRATIC_TRIANGLE}\n"));
    }
    out.push_str(&format!("POINT_DATA {n}\n"));
    out.push_str("VECTORS velocity double\n");
    for i in 0..n {
        out.push_str(&format!("{} {} 0\n", state.v[i], state.v[n + i]));
    }
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for i in 0..n {
        let p = if i < nv {
            state.p[i]
        } else {
            let [a, b] = mesh.edges()[i - nv];
            0.5 * (state.p[a] + state.p[b])
        };
        out.push_str(&format!("{p}\n"));
    }
    out.push_str("SCALARS temperature double 1\nLOOKUP_TABLE default\n");
    for i in 0..n {
        out.push_str(&format!("{}\n", state.u[i]));
    }
    // The config echo travels as a string field of the dataset.
    let echo_line: String = echo.lines().collect::<Vec<_>>().join("; ").replace(' ', "_");
    out.push_str("FIELD metadata 1\n");
    out.push_str(&format!("config 1 1 string\n{}\n", if echo_line.is_empty() { "-" } else { &echo_line }));
    let mut file = create(path)?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{BenchMetadata, BenchResult};
    use crate::mesh::build_structured_mesh;
    use crate::spaces::build_dofmap;

    #[test]
    fn empty_document_gives_benchmark_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.params.re, c.params.gr, c.params.pr), (3.0, 1000.0, 1.0));
        assert_eq!((c.time.t_end, c.time.n_steps, c.mesh.n_per_unit), (1.0, 100, 40));
        let run = c.run_config().unwrap();
        assert!((run.params.k - 0.01).abs() < 1e-15);
    }

    #[test]
    fn validation_names_the_field() {
        let e = parse_config("[params]\nre = -1\n").unwrap_err();
        assert!(e.to_string().contains("re"), "{e}");
        assert!(parse_config("[time]\nn_steps = 0\n").is_err());
        assert!(parse_config("[bc]\nvelocity = \"robin\"\n").is_err());
        assert!(parse_config("[output]\nformats = [\"xml\"]\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let e = parse_config("[params]\nreynolds = 3\n").unwrap_err().to_string();
        assert!(e.contains("reynolds") && e.contains("line 2"), "{e}");
        assert!(parse_config("rey = 1\n").is_err());
    }

    #[test]
    fn benchmark_grid_document() {
        let text = r#"
            [params]
            pr = 1.0
            [time]
            t_end = 1.0
            n_steps = 100
            [mesh]
            n_per_unit = 40
            [sweep]
            re = [2.0, 3.0, 4.0, 5.0]
            gr = [500.0, 1000.0, 2000.0]
            workers = 4
        "#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.sweep.re.len() * c.sweep.gr.len(), 12);
        let b = c.bench_config();
        assert_eq!((b.n_per_unit, b.n_steps, b.workers), (40, 100, 4));
    }

    #[test]
    fn echo_round_trips() {
        let mut c = Config::default();
        c.params.re = 2.5;
        c.flags.weak_form = WeakFormName::Literal;
        assert_eq!(parse_config(&c.echo()).unwrap(), c);
        assert_eq!(c.scheme_options().weak_form, WeakForm::Literal);
    }

    #[test]
    fn custom_geometry() {
        let text = r#"
            [geometry]
            kind = "custom"
            rects = [[0.0, 1.0, 0.0, 1.0]]
            rules = [
              { tag = "open", x = 1.0 },
              { tag = "wall", x = 1.0, complement = true },
              { tag = "dirichlet", x = 0.0 },
              { tag = "neumann", y = 0.0 },
              { tag = "neumann", y = 1.0 },
            ]
            [mesh]
            n_per_unit = 4
        "#;
        let c = parse_config(text).unwrap();
        let custom = c.mesh().unwrap();
        let direct = cavity_mesh(4).unwrap();
        for tag in [BoundaryTag::Open, BoundaryTag::Wall, BoundaryTag::Dirichlet] {
            let a: Vec<usize> = custom.tagged_edges(tag).map(|b| b.edge).collect();
            let b: Vec<usize> = direct.tagged_edges(tag).map(|b| b.edge).collect();
            assert_eq!(a, b, "{tag:?}");
        }
        assert!(parse_config("[geometry]\nkind = \"custom\"\n").is_err());
    }

    fn entry(re: f64, combo: BcCombo, res: f64) -> SweepEntry {
        SweepEntry {
            re,
            gr: 1000.0,
            combo: combo.clone(),
            outcome: Ok(BenchResult {
                re,
                gr: 1000.0,
                pr: 1.0,
                combo,
                res_omega: res,
                res_gamma: res / 7.0,
                wall_time_s: 0.125,
                metadata: BenchMetadata {
                    n_per_unit: 4,
                    k: 0.01,
                    n_steps: 100,
                    n_vertices: 25,
                    n_triangles: 32,
                    initial_condition: String::new(),
                },
            }),
        }
    }

    #[test]
    fn results_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let combos = BcCombo::benchmark_set();
        let mut rows: Vec<SweepEntry> = combos
            .iter()
            .enumerate()
            .map(|(i, c)| entry(3.0, c.clone(), 1.0 / (i as f64 + 3.0)))
            .collect();
        rows.push(SweepEntry {
            re: 4.0,
            gr: 1000.0,
            combo: combos[0].clone(),
            outcome: Err("step 7: non-finite values".into()),
        });
        write_results_csv(&path, &rows, &Config::default().echo()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("# schema: {RESULTS_SCHEMA}\n")));
        assert!(text.contains("# [params]") && text.contains("# failed: re=4"));
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.len(), 6);
        for (row, orig) in back.iter().zip(&rows) {
            let r = orig.outcome.as_ref().unwrap();
            assert_eq!(row.res_omega, r.res_omega);
            assert_eq!(row.res_gamma, r.res_gamma);
            assert_eq!(row.bc_v, r.combo.velocity_name());
            assert_eq!(row.bc_u, r.combo.temperature_name());
        }
    }

    #[test]
    fn profiles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/profiles.csv");
        let samples: Vec<ProfileSample> = (0..5)
            .map(|i| ProfileSample {
                x2: i as f64 / 4.0,
                vn: (i as f64).sin() / 3.0,
                u: 0.1 * i as f64,
            })
            .collect();
        let data = vec![("reference".to_string(), samples.clone()), ("DN-N".to_string(), samples)];
        write_profiles_csv(&path, &data, "x = 1").unwrap();
        let back = read_profiles_csv(&path).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back[6].combo, "DN-N");
        assert_eq!(back[6].vn, data[1].1[1].vn);
        assert_eq!(back[6].u, data[1].1[1].u);
    }

    #[test]
    fn vtk_output() {
        let mesh = build_structured_mesh(&RectUnion::unit_square(), 1).unwrap();
        let d = build_dofmap(&mesh);
        let mut s = State::zeros(&d, 0.5);
        s.u.iter_mut().for_each(|u| *u = 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.vtk");
        write_vtk(&s, &mesh, &d, &path, "[params]\nre = 3.0").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {} double", d.n_scalar())));
        assert!(text.contains("CELLS 2 14") && text.contains("CELL_TYPES 2\n22\n22\n"));
        let temp = text.split("SCALARS temperature double 1\nLOOKUP_TABLE default\n").nth(1).unwrap();
        let values: Vec<f64> = temp.lines().take(d.n_scalar()).map(|l| l.parse().unwrap()).collect();
        assert_eq!(values, vec![1.0; 9]);
        assert!(text.contains("re_=_3.0"));
        assert!(write_vtk(&s, &mesh, &d, Path::new("/proc/forbidden/x.vtk"), "").is_err());
    }
}
