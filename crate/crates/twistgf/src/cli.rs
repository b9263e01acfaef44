//! Command-line driver: scenario files, pipelines and JSON/CSV reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuation::{persistence_experiment, ContinuationError, PersistenceConfig, Verdict};
use crate::genfun::{
    critical_points, CriticalPoint, CriticalSearch, CriticalSet, FactorOptions, GeneratingFunction,
    GenfunError, TwistGF,
};
use crate::linking_braids::{
    braid_from_flow_stable, braid_of_loops, gamma_loop, linking_l_diff, lk_two_loops, LinkingError,
};
use crate::morse::{
    check_filtration, check_lyapunov, complex_from_critical_set, filtration, ComplexOptions,
    FlowOptions, Metric, MorseError,
};
use crate::plane_dynamics::{
    alternating_decomposition, decomposition_with_n, Decomposition, DecompositionConfig,
    DynamicsError, FamilyId, HamiltonianError, PlaneMap, TwistCertificate,
};
use crate::Hamiltonian;

/// Scenario schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "twistgf",
    version,
    about = "Twist generating functions, linking and braids of fixed points"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Factor list and twist certificates.
    Decompose(RunArgs),
    /// Table of critical points with actions and indices.
    CriticalPoints(RunArgs),
    /// CSV of 2 I on the critical points (lk off the diagonal) and the staircase loops.
    LinkingMatrix(RunArgs),
    /// Braid words of the collection from the flow and from the staircase loops.
    Braid(RunArgs),
    /// Morse complexes of the scenario windows with their filtration tables.
    Complex(RunArgs),
    /// Linking-function jump reports along random pairs of gradient lines.
    Lyapunov(RunArgs),
    /// Braid persistence under a Hofer-small perturbation.
    Persistence(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Decompose(_) => "decompose",
            Self::CriticalPoints(_) => "critical-points",
            Self::LinkingMatrix(_) => "linking-matrix",
            Self::Braid(_) => "braid",
            Self::Complex(_) => "complex",
            Self::Lyapunov(_) => "lyapunov",
            Self::Persistence(_) => "persistence",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Self::Decompose(a)
            | Self::CriticalPoints(a)
            | Self::LinkingMatrix(a)
            | Self::Braid(a)
            | Self::Complex(a)
            | Self::Lyapunov(a)
            | Self::Persistence(a) => a,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for batch numerics.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Numerical(_) | Self::Output { .. } => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Validation(_) => "validation_error",
            Self::Numerical(_) => "numerical_failure",
            Self::Output { .. } => "output_error",
        }
    }
}

impl From<HamiltonianError> for CliError {
    fn from(e: HamiltonianError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Hamiltonian(h) => h.into(),
            e => Self::Numerical(e.to_string()),
        }
    }
}

impl From<GenfunError> for CliError {
    fn from(e: GenfunError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<LinkingError> for CliError {
    fn from(e: LinkingError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<MorseError> for CliError {
    fn from(e: MorseError) -> Self {
        match e {
            MorseError::InvalidWindow { .. } | MorseError::InvalidMetric(_) => {
                Self::Validation(e.to_string())
            }
            e => Self::Numerical(e.to_string()),
        }
    }
}

impl From<ContinuationError> for CliError {
    fn from(e: ContinuationError) -> Self {
        match e {
            ContinuationError::WindowViolation { .. } | ContinuationError::InvalidParameter(_) => {
                Self::Validation(e.to_string())
            }
            e => Self::Numerical(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianBlock {
    pub family: FamilyId,
    pub params: Vec<f64>,
    pub support_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slicing {
    pub n: usize,
    /// Use exactly `n` slices instead of doubling from `n` until every slice is a twist.
    #[serde(default)]
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Hamiltonian and gradient flow integrators.
    pub flow: f64,
    /// Newton solves for critical points.
    pub newton: f64,
    /// Factor evaluation (root solves and quadrature oracle).
    pub quadrature: f64,
    /// Hessian eigenvalues below this count as zero.
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            flow: 1e-10,
            newton: 1e-9,
            quadrature: 1e-10,
            degeneracy: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    /// Plane seeds per side.
    pub grid: usize,
    /// Seeds only inside this plane disk (default: the support disk).
    pub seed_radius: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            grid: 24,
            seed_radius: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSettings {
    pub pairs: usize,
    /// Flow time of each line.
    pub horizon: f64,
    pub samples: usize,
    /// Half-width of the box of starting points (default: the support radius).
    pub box_radius: Option<f64>,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            pairs: 50,
            horizon: 20.0,
            samples: 200,
            box_radius: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BraidSettings {
    /// Initial samples per strand, doubled until the word is stable.
    pub samples: usize,
    pub max_samples: usize,
}

impl Default for BraidSettings {
    fn default() -> Self {
        Self {
            samples: 64,
            max_samples: 1024,
        }
    }
}

/// A scenario file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub hamiltonian: HamiltonianBlock,
    pub slicing: Slicing,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub search: SearchSettings,
    /// Action windows `[a, b]` with `a b > 0`.
    #[serde(default)]
    pub windows: Vec<[f64; 2]>,
    /// Indices into the nondegenerate critical points ordered by action; empty means all.
    #[serde(default)]
    pub collection: Vec<usize>,
    #[serde(default)]
    pub experiment: Option<ExperimentSettings>,
    #[serde(default)]
    pub lyapunov: LyapunovSettings,
    #[serde(default)]
    pub braid: BraidSettings,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                self.version
            ));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("flow", t.flow),
            ("newton", t.newton),
            ("quadrature", t.quadrature),
            ("degeneracy", t.degeneracy),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("tolerance {name} must be positive"));
            }
        }
        if self.slicing.n == 0 {
            return bad("slicing n must be at least 1".into());
        }
        if self.search.grid < 2 || self.search.seed_radius.is_some_and(|r| !(r > 0.0)) {
            return bad("search needs grid >= 2 and a positive seed radius".into());
        }
        for w in &self.windows {
            if !(w[0] < w[1]) || !(w[0] * w[1] > 0.0) {
                return bad(format!(
                    "window [{}, {}] must satisfy a < b and a * b > 0",
                    w[0], w[1]
                ));
            }
        }
        if let Some(e) = &self.experiment {
            if !(e.epsilon > 0.0) || !(e.delta >= 0.0) {
                return bad("experiment needs epsilon > 0 and delta >= 0".into());
            }
        }
        let l = &self.lyapunov;
        if !(l.horizon > 0.0) || l.samples < 2 || l.box_radius.is_some_and(|r| !(r > 0.0)) {
            return bad(
                "lyapunov needs a positive horizon, samples >= 2 and a positive box".into(),
            );
        }
        if self.braid.samples == 0 || self.braid.max_samples < self.braid.samples {
            return bad("braid needs 0 < samples <= max_samples".into());
        }
        if !(self.hamiltonian.support_radius > 0.0) {
            return bad("support radius must be positive".into());
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian> {
        let h = &self.hamiltonian;
        Ok(Hamiltonian::from_family(
            h.family,
            &h.params,
            h.support_radius,
        )?)
    }

    fn decomposition_config(&self) -> DecompositionConfig<f64> {
        DecompositionConfig {
            tol: self.tolerances.flow,
            ..DecompositionConfig::default()
        }
    }

    fn factor_options(&self) -> FactorOptions {
        FactorOptions {
            tol: self.tolerances.quadrature,
            ..FactorOptions::default()
        }
    }

    fn search_options(&self) -> CriticalSearch {
        CriticalSearch {
            grid: self.search.grid,
            newton_tol: self.tolerances.newton,
            degeneracy_tol: self.tolerances.degeneracy,
            seed_radius: self.search.seed_radius,
            ..CriticalSearch::default()
        }
    }

    fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            tol: self.tolerances.flow,
            ..FlowOptions::default()
        }
    }

    fn complex_options(&self) -> ComplexOptions {
        ComplexOptions {
            search: self.search_options(),
            flow: self.flow_options(),
            ..ComplexOptions::default()
        }
    }

    /// Every tolerance the pipelines use, after defaults.
    pub fn effective_tolerances(&self) -> EffectiveTolerances {
        let d = self.decomposition_config();
        let c = self.complex_options();
        EffectiveTolerances {
            flow: self.tolerances.flow,
            newton: self.tolerances.newton,
            quadrature: self.tolerances.quadrature,
            degeneracy: self.tolerances.degeneracy,
            twist_margin: d.margin_threshold,
            twist_grid: d.grid,
            slicing_cap: d.cap,
            gradient_convergence: c.flow.convergence,
            gradient_polish: c.flow.polish_tol,
            shoot_factor: c.shoot_factor,
            bisection: c.bisection_tol,
            identify_factor: c.identify_factor,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EffectiveTolerances {
    pub flow: f64,
    pub newton: f64,
    pub quadrature: f64,
    pub degeneracy: f64,
    pub twist_margin: f64,
    pub twist_grid: usize,
    pub slicing_cap: usize,
    pub gradient_convergence: f64,
    pub gradient_polish: f64,
    pub shoot_factor: f64,
    pub bisection: f64,
    pub identify_factor: f64,
}

/// Hex SHA-256 of the scenario file bytes.
pub fn scenario_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario: &'a str,
    scenario_hash: &'a str,
    seed: u64,
    tolerances: Option<EffectiveTolerances>,
    status: &'a str,
    report: R,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Ok,
    PropertyFailure,
    /// The pipeline ran but a numerical stage did not resolve.
    Inconclusive,
}

impl Status {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Self::Ok
        } else {
            Self::PropertyFailure
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::PropertyFailure => "property_failure",
            Self::Inconclusive => "numerical_failure",
        }
    }

    fn exit_code(self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::PropertyFailure => 3,
            Self::Inconclusive => 2,
        }
    }
}

/// Outcome of a pipeline: the report and the state of its checks.
struct Outcome {
    report: serde_json::Value,
    files: Vec<(String, String)>,
    status: Status,
    summary: String,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| CliError::Output {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Runs one subcommand and returns the process exit code: 0 on success, 1 on a validation
/// error, 2 on a numerical failure, 3 on a failed property check. Failures write
/// `error.json` to the output directory.
pub fn run(cmd: &Command) -> i32 {
    let args = cmd.args();
    let name = cmd.name();
    if let Err(source) = std::fs::create_dir_all(&args.out) {
        eprintln!("cannot create {}: {source}", args.out.display());
        return 2;
    }
    let bytes = std::fs::read(&args.scenario);
    let hash = bytes.as_deref().map(scenario_hash).unwrap_or_default();
    let parsed = match bytes {
        Ok(b) => String::from_utf8(b)
            .map_err(|e| CliError::Validation(e.to_string()))
            .and_then(|t| Scenario::parse(&t)),
        Err(e) => Err(CliError::Validation(format!(
            "cannot read {}: {e}",
            args.scenario.display()
        ))),
    };
    let seed = |s: Option<&Scenario>| args.seed.or(s.map(|s| s.seed)).unwrap_or(0);
    let result = parsed.and_then(|s| {
        let out = execute(cmd, &s, seed(Some(&s)));
        out.map(|o| (s, o))
    });
    match result {
        Ok((s, o)) => {
            let status = o.status.label();
            let env = Envelope {
                tool: "twistgf",
                version: env!("CARGO_PKG_VERSION"),
                command: name,
                scenario: &s.name,
                scenario_hash: &hash,
                seed: seed(Some(&s)),
                tolerances: Some(s.effective_tolerances()),
                status,
                report: o.report,
            };
            let json = serde_json::to_string_pretty(&env).expect("reports serialize") + "\n";
            let mut written = vec![write_file(&args.out, &format!("{name}.json"), &json)];
            for (file, text) in &o.files {
                written.push(write_file(&args.out, file, text));
            }
            if let Some(Err(e)) = written.into_iter().find(|r| r.is_err()) {
                eprintln!("{e}");
                return e.exit_code();
            }
            println!("{name}: {}", o.summary);
            if o.status != Status::Ok {
                eprintln!(
                    "{name}: {status}; see {}",
                    args.out.join(format!("{name}.json")).display()
                );
            }
            o.status.exit_code()
        }
        Err(e) => {
            let code = e.exit_code();
            let env = Envelope {
                tool: "twistgf",
                version: env!("CARGO_PKG_VERSION"),
                command: name,
                scenario: "",
                scenario_hash: &hash,
                seed: seed(None),
                tolerances: None,
                status: e.kind(),
                report: ErrorReport {
                    kind: e.kind(),
                    exit_code: code,
                    message: e.to_string(),
                },
            };
            let json = serde_json::to_string_pretty(&env).expect("reports serialize") + "\n";
            let _ = write_file(&args.out, "error.json", &json);
            eprintln!("{name}: {e}");
            code
        }
    }
}

fn execute(cmd: &Command, s: &Scenario, seed: u64) -> Result<Outcome> {
    match cmd {
        Command::Decompose(_) => decompose(s),
        Command::CriticalPoints(_) => critical_points_table(s),
        Command::LinkingMatrix(_) => linking_matrix(s),
        Command::Braid(_) => braid(s),
        Command::Complex(_) => complexes(s),
        Command::Lyapunov(a) => lyapunov(s, seed, a.jobs.max(1)),
        Command::Persistence(_) => persistence(s, seed),
    }
}

struct Pipeline {
    hamiltonian: Arc<Hamiltonian>,
    decomposition: Decomposition<f64>,
    gf: TwistGF,
}

fn pipeline(s: &Scenario) -> Result<Pipeline> {
    let hamiltonian = Arc::new(s.hamiltonian()?);
    let cfg = s.decomposition_config();
    let decomposition = if s.slicing.exact {
        decomposition_with_n(&hamiltonian, s.slicing.n, &cfg)?
    } else {
        alternating_decomposition(&hamiltonian, s.slicing.n, &cfg)?
    };
    let gf = TwistGF::from_decomposition(&decomposition, &s.factor_options())?;
    Ok(Pipeline {
        hamiltonian,
        decomposition,
        gf,
    })
}

/// Nondegenerate critical points ordered by action, then restricted to the collection.
fn ordered_points(set: &CriticalSet, collection: &[usize]) -> Result<Vec<CriticalPoint>> {
    let mut all: Vec<CriticalPoint> = set.nondegenerate().cloned().collect();
    all.sort_by(|p, q| p.action.total_cmp(&q.action));
    if collection.is_empty() {
        return Ok(all);
    }
    collection
        .iter()
        .map(|&i| {
            all.get(i).cloned().ok_or_else(|| {
                CliError::Validation(format!(
                    "collection index {i} out of range ({} points)",
                    all.len()
                ))
            })
        })
        .collect()
}

#[derive(Serialize)]
struct FactorRow {
    index: usize,
    kind: &'static str,
    certificate: TwistCertificate<f64>,
}

fn decompose(s: &Scenario) -> Result<Outcome> {
    let h = Arc::new(s.hamiltonian()?);
    let cfg = s.decomposition_config();
    let d = if s.slicing.exact {
        decomposition_with_n(&h, s.slicing.n, &cfg)?
    } else {
        alternating_decomposition(&h, s.slicing.n, &cfg)?
    };
    let last = d.factors.len() - 1;
    let factors: Vec<FactorRow> = d
        .factors
        .iter()
        .zip(&d.certificates)
        .enumerate()
        .map(|(index, (f, c))| FactorRow {
            index,
            kind: match f {
                PlaneMap::Linear(_) if index == last => "inverse_rotation",
                PlaneMap::Linear(_) => "rotation",
                _ => "slice",
            },
            certificate: *c,
        })
        .collect();
    let residual = d.composition_residual(9)?;
    let summary = format!(
        "n = {}, {} factors, composition residual {residual:.2e}",
        d.n,
        factors.len()
    );
    Ok(Outcome {
        report: serde_json::json!({
            "n": d.n,
            "dimension": d.factors.len(),
            "factors": factors,
            "composition_residual": residual,
        }),
        files: Vec::new(),
        status: Status::Ok,
        summary,
    })
}

#[derive(Serialize)]
struct PointRow {
    index: usize,
    action: f64,
    morse_index: usize,
    cz_index: i64,
    plane_x: f64,
    plane_y: f64,
    residual: f64,
    coords: Vec<f64>,
}

fn rows(points: &[CriticalPoint]) -> Vec<PointRow> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| PointRow {
            index,
            action: p.action,
            morse_index: p.morse_index,
            cz_index: p.cz_index,
            plane_x: p.plane_point[0] + 0.0,
            plane_y: p.plane_point[1] + 0.0,
            residual: p.residual,
            coords: p.coords.clone(),
        })
        .collect()
}

fn critical_points_table(s: &Scenario) -> Result<Outcome> {
    let p = pipeline(s)?;
    let set = critical_points(&p.gf, &s.search_options())?;
    let points = ordered_points(&set, &[])?;
    let mut csv = String::from("index,action,morse_index,cz_index,plane_x,plane_y,residual\n");
    for r in rows(&points) {
        let _ = writeln!(
            csv,
            "{},{:e},{},{},{:e},{:e},{:e}",
            r.index, r.action, r.morse_index, r.cz_index, r.plane_x, r.plane_y, r.residual
        );
    }
    let degenerate: Vec<&CriticalPoint> = set.points.iter().filter(|c| c.degenerate).collect();
    let summary = format!(
        "{} nondegenerate critical points (n = {})",
        points.len(),
        p.decomposition.n
    );
    Ok(Outcome {
        report: serde_json::json!({
            "n": p.decomposition.n,
            "dimension": p.gf.dim(),
            "points": rows(&points),
            "degenerate_representative": degenerate.first(),
            "degenerate_count": set.degenerate_count,
            "seeds": set.seeds,
            "dropped_seeds": set.dropped_seeds,
        }),
        files: vec![("critical_points.csv".into(), csv)],
        status: Status::Ok,
        summary,
    })
}

#[derive(Serialize)]
struct PairCheck {
    first: usize,
    second: usize,
    two_l: Option<i64>,
    lk_loops: Option<i64>,
}

fn linking_matrix(s: &Scenario) -> Result<Outcome> {
    let p = pipeline(s)?;
    let set = critical_points(&p.gf, &s.search_options())?;
    let points = ordered_points(&set, &s.collection)?;
    let m = points.len();
    let mut matrix = vec![vec![None; m]; m];
    let mut checks = Vec::new();
    let loops: Vec<_> = points
        .iter()
        .map(|c| gamma_loop(&c.coords, false))
        .collect();
    for i in 0..m {
        matrix[i][i] = Some(2 * crate::morse::diagonal_cz_form(points[i].cz_index));
        for j in 0..m {
            if i == j {
                continue;
            }
            let two_l = linking_l_diff(&points[i].coords, &points[j].coords)
                .get()
                .map(|v| 2 * v);
            matrix[i][j] = two_l;
            if i < j {
                let lk_loops = lk_two_loops(&loops[i], &loops[j]).ok();
                checks.push(PairCheck {
                    first: i,
                    second: j,
                    two_l,
                    lk_loops,
                });
            }
        }
    }
    let pass = checks
        .iter()
        .all(|c| c.two_l.is_none() || c.two_l == c.lk_loops);
    let mut csv = String::from("row");
    for j in 0..m {
        let _ = write!(csv, ",{j}");
    }
    csv.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        csv.push_str(&i.to_string());
        for v in row {
            csv.push(',');
            if let Some(v) = v {
                csv.push_str(&v.to_string());
            }
        }
        csv.push('\n');
    }
    let mut loop_csv = String::from("point,vertex,x,y\n");
    for (i, l) in loops.iter().enumerate() {
        for (k, v) in l.vertices.iter().enumerate() {
            let _ = writeln!(loop_csv, "{i},{k},{:e},{:e}", v.x, v.y);
        }
    }
    let summary = format!("{m} points, 2L = lk on every defined pair: {pass}");
    Ok(Outcome {
        report: serde_json::json!({
            "points": rows(&points),
            "matrix": matrix,
            "pairs": checks,
        }),
        files: vec![
            ("linking_matrix.csv".into(), csv),
            ("loops.csv".into(), loop_csv),
        ],
        status: Status::from_pass(pass),
        summary,
    })
}

fn braid(s: &Scenario) -> Result<Outcome> {
    let p = pipeline(s)?;
    let set = critical_points(&p.gf, &s.search_options())?;
    let points = ordered_points(&set, &s.collection)?;
    let planes: Vec<_> = points.iter().map(|c| c.plane()).collect();
    let (flow_word, samples) = braid_from_flow_stable(
        p.hamiltonian.as_ref(),
        &planes,
        s.braid.samples,
        s.braid.max_samples,
        s.tolerances.flow,
    )?;
    let flow_word = flow_word.free_reduce();
    let coords: Vec<Vec<f64>> = points.iter().map(|c| c.coords.clone()).collect();
    let loop_word = braid_of_loops(&coords)?.free_reduce();
    let agree = flow_word == loop_word;
    let summary = format!("flow word '{flow_word}', loop word '{loop_word}'");
    let text = format!("flow: {flow_word}\nloops: {loop_word}\n");
    Ok(Outcome {
        report: serde_json::json!({
            "n": p.decomposition.n,
            "points": rows(&points),
            "flow_word": flow_word.to_string(),
            "loop_word": loop_word.to_string(),
            "strands": points.len(),
            "flow_samples": samples,
            "lk_flow": flow_word.lk(),
            "lk_loops": loop_word.lk(),
            "agree": agree,
        }),
        files: vec![("braid.txt".into(), text)],
        status: Status::from_pass(agree),
        summary,
    })
}

#[derive(Serialize)]
struct WitnessRow {
    source: usize,
    target: usize,
    energy: f64,
    samples: usize,
}

fn complexes(s: &Scenario) -> Result<Outcome> {
    if s.windows.is_empty() {
        return Err(CliError::Validation(
            "complex needs at least one window".into(),
        ));
    }
    let p = pipeline(s)?;
    let opts = s.complex_options();
    let set = critical_points(&p.gf, &opts.search)?;
    let sigma = crate::genfun::gauge_to_gfqi(&p.gf)?.sigma;
    let mut out = Vec::new();
    let mut pass = true;
    let mut summary = Vec::new();
    for w in &s.windows {
        let c = complex_from_critical_set(
            &p.gf,
            &Metric::standard(),
            (w[0], w[1]),
            &set,
            sigma,
            2.0 * p.gf.support_radius(),
            &opts,
        )?;
        let table = filtration(&c);
        let check = check_filtration(&c, &table, 64);
        let ok = c.is_chain_complex() && table.diagonal_agree && check.pass();
        pass &= ok;
        summary.push(format!(
            "({}, {}): {} generators",
            w[0],
            w[1],
            c.generators.len()
        ));
        let witnesses: Vec<WitnessRow> = c
            .witnesses
            .iter()
            .map(|x| WitnessRow {
                source: x.source,
                target: x.target,
                energy: x.trajectory.energy,
                samples: x.trajectory.samples.len(),
            })
            .collect();
        out.push(serde_json::json!({
            "window": w,
            "sigma": c.sigma,
            "generators": rows(&c.generators),
            "grading": (0..c.generators.len()).map(|i| c.grading(i)).collect::<Vec<_>>(),
            "differential": c.differential,
            "differential_squared_zero": c.is_chain_complex(),
            "witnesses": witnesses,
            "shooting_seeds": c.seeds,
            "shoot_radius": c.shoot_radius,
            "filtration": to_value(&table),
            "filtration_check": to_value(&check),
            "pass": ok,
        }));
    }
    Ok(Outcome {
        report: serde_json::json!({ "n": p.decomposition.n, "complexes": out }),
        files: Vec::new(),
        status: Status::from_pass(pass),
        summary: summary.join("; "),
    })
}

fn lyapunov(s: &Scenario, seed: u64, jobs: usize) -> Result<Outcome> {
    let p = pipeline(s)?;
    let settings = s.lyapunov;
    let r = settings.box_radius.unwrap_or_else(|| p.gf.support_radius());
    let dim = p.gf.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(Vec<f64>, Vec<f64>)> = (0..settings.pairs)
        .map(|_| {
            let mut draw = || {
                (0..dim)
                    .map(|_| rng.gen_range(-r..=r))
                    .collect::<Vec<f64>>()
            };
            (draw(), draw())
        })
        .collect();
    let flow = s.flow_options();
    let metric = Metric::standard();
    let check = |(a, b): &(Vec<f64>, Vec<f64>)| {
        check_lyapunov(
            &p.gf,
            &metric,
            a,
            b,
            settings.horizon,
            settings.samples,
            &flow,
        )
    };
    // contiguous chunks keep the output order independent of `jobs`
    let chunk = starts.len().div_ceil(jobs).max(1);
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(check).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut pairs = Vec::new();
    let mut csv = String::from("pair,time,l\n");
    let mut violations = 0;
    for (k, (res, (a, b))) in results.into_iter().zip(&starts).enumerate() {
        let rep = res?;
        violations += rep.violations();
        for (t, v) in rep.sample_times.iter().zip(&rep.values) {
            let _ = writeln!(
                csv,
                "{k},{t:e},{}",
                v.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        let jumps: Vec<_> = rep.jumps().cloned().collect();
        pairs.push(serde_json::json!({
            "pair": k,
            "start_first": a,
            "start_second": b,
            "jumps": jumps,
            "violations": rep.violations(),
        }));
    }
    let summary = format!("{} pairs, {violations} violations", pairs.len());
    Ok(Outcome {
        report: serde_json::json!({
            "n": p.decomposition.n,
            "box_radius": r,
            "horizon": settings.horizon,
            "pairs": pairs,
            "violations": violations,
        }),
        files: vec![("lyapunov_samples.csv".into(), csv)],
        status: Status::from_pass(violations == 0),
        summary,
    })
}

fn persistence(s: &Scenario, seed: u64) -> Result<Outcome> {
    let Some(e) = s.experiment else {
        return Err(CliError::Validation(
            "persistence needs an experiment block".into(),
        ));
    };
    if s.collection.is_empty() {
        return Err(CliError::Validation(
            "persistence needs a collection".into(),
        ));
    }
    let h = s.hamiltonian()?;
    // both ends use the slicing found for the unperturbed map
    let n = if s.slicing.exact {
        s.slicing.n
    } else {
        alternating_decomposition(&Arc::new(h.clone()), s.slicing.n, &s.decomposition_config())?.n
    };
    let mut cfg = PersistenceConfig::new(n, s.collection.clone(), e.epsilon, e.delta);
    cfg.search = s.search_options();
    cfg.complex = s.complex_options();
    cfg.hofer.decomposition = s.decomposition_config();
    cfg.hofer.factor = s.factor_options();
    cfg.hofer.seed = seed;
    cfg.continuation.flow.tol = cfg.continuation.flow.tol.min(s.tolerances.flow);
    cfg.braid_tol = s.tolerances.flow;
    let report = persistence_experiment(&h, &cfg);
    let summary = match &report.failed_stage {
        Some(stage) => format!("verdict {:?} (stage {stage})", report.verdict),
        None => format!("verdict {:?}", report.verdict),
    };
    let status = match report.verdict {
        Verdict::Equal => Status::Ok,
        Verdict::Unequal => Status::PropertyFailure,
        Verdict::Inconclusive => Status::Inconclusive,
    };
    Ok(Outcome {
        report: to_value(&report),
        files: Vec::new(),
        status,
        summary,
    })
}

/// Parses the command line and runs it; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
