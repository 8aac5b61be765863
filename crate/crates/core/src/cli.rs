//! Command-line front door. Exit codes: 0 success, 2 invalid input,
//! 3 identification failure (diagnostic JSON on stderr names the assumption).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{self, check_rank_invariance, check_v_rank_invariance};
use crate::dag::{builtin, check_proposition, classify_designs, Dag};
use crate::error::{Error, ErrorClass, Result};
use crate::fixtures::{fixture, oracle_effects, Flavor};
use crate::npsem::{empirical_tensor, Npsem};
use crate::pipelines::{estimands_with_grid, identify, PipelineDesign, PipelineOptions, Roles, DEFAULT_QTE_GRID};
use crate::prob::ProbTensor;
use crate::relabel::{self, confounder_means, RelabelRule};
use crate::report::{self, default_golden_dir, end_to_end, Report, Tolerances};

pub const THREADS_ENV: &str = "TRIPROXY_THREADS";

#[derive(Debug, Parser)]
#[command(name = "triproxy", version, about = "Treatment effects under latent confounding from three proxies")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Compute (or sample) the observed joint of a structural model.
    Simulate(SimulateArgs),
    /// Exact treatment effects of a structural model by enumeration.
    Oracle(OracleArgs),
    /// Identify potential-outcome laws and estimands from an observed joint.
    Identify(IdentifyArgs),
    /// Identify, then resolve the latent labeling.
    Relabel(RelabelArgs),
    /// Rank-invariance bounds on treatment effects.
    Bounds(BoundsArgs),
    /// Certify proposition conclusions on a graph by d-separation.
    DagCheck(GraphArgs),
    /// List the identification designs a graph supports.
    Classify(GraphArgs),
    /// Run a builtin scenario and compare it with its golden report.
    EndToEnd(EndToEndArgs),
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Structural model JSON.
    #[arg(long, conflicts_with = "figure", required_unless_present = "figure")]
    model: Option<PathBuf>,
    /// Draw a seeded model over a builtin graph instead.
    #[arg(long)]
    figure: Option<String>,
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    #[arg(long, default_value = "generic")]
    flavor: String,
    #[arg(long)]
    seed: u64,
    /// Sample size; the exact population joint when absent.
    #[arg(long)]
    samples: Option<usize>,
    /// Keep the latent node in the output joint.
    #[arg(long)]
    keep_latent: bool,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    /// Also write the drawn model.
    #[arg(long)]
    #[serde(skip)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct IdentifyArgs {
    #[arg(long)]
    design: String,
    #[arg(long)]
    latent_dim: usize,
    #[arg(long)]
    joint: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Axis names for roles, e.g. `--role Y=gpa`.
    #[arg(long = "role", value_parser = parse_role)]
    roles: Vec<(String, String)>,
    /// Comma-separated quantile levels for the QTE table.
    #[arg(long)]
    qte_grid: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
    /// Directory for `qte.csv` and `cate_distribution.csv`.
    #[arg(long)]
    #[serde(skip)]
    csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RelabelArgs {
    #[command(flatten)]
    identify: IdentifyArgs,
    /// mean-unbiased, median-unbiased, mean-monotone or median-monotone.
    #[arg(long)]
    rule: String,
    #[arg(long, default_value = "0.25,0.5,0.75")]
    tau: String,
}

#[derive(Debug, Args, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    design: String,
    #[arg(long)]
    latent_dim: usize,
    #[arg(long)]
    joint: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "role", value_parser = parse_role)]
    roles: Vec<(String, String)>,
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GraphArgs {
    /// Graph JSON `{"nodes": [...], "edges": [[a, b], ...], "roles": {...}}`.
    #[arg(long, conflicts_with = "figure", required_unless_present = "figure")]
    graph: Option<PathBuf>,
    /// Builtin graph such as `fig2a` or `2.a`.
    #[arg(long)]
    figure: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EndToEndArgs {
    #[arg(long)]
    fixture: String,
    #[arg(long)]
    #[serde(skip)]
    golden_dir: Option<PathBuf>,
    /// Rewrite the golden file from the oracle before comparing.
    #[arg(long)]
    bless: bool,
    #[arg(long)]
    #[serde(skip)]
    report: Option<PathBuf>,
}

fn parse_role(s: &str) -> std::result::Result<(String, String), String> {
    let (role, axis) = s.split_once('=').ok_or_else(|| format!("expected ROLE=AXIS, found `{s}`"))?;
    if !["Y", "X", "Z", "V", "C"].contains(&role) {
        return Err(format!("unknown role `{role}`"));
    }
    Ok((role.to_string(), axis.to_string()))
}

fn roles_from(pairs: &[(String, String)]) -> Roles {
    let mut r = Roles::default();
    for (role, axis) in pairs {
        let slot = match role.as_str() {
            "Y" => &mut r.y,
            "X" => &mut r.x,
            "Z" => &mut r.z,
            "V" => &mut r.v,
            _ => &mut r.c,
        };
        *slot = axis.clone();
    }
    r
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad quantile level `{t}`"))))
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

/// Parse arguments, run one verb, return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    cap_threads();
    match dispatch(cli.verb) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

fn cap_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Identification => 3,
        ErrorClass::Validation | ErrorClass::Io => 2,
    }
}

/// Machine-readable one-line description of a failure.
pub fn diagnostic(e: &Error) -> String {
    #[derive(Serialize)]
    struct Diagnostic<'a> {
        error: &'a str,
        class: &'a str,
        assumption: Option<&'a str>,
        message: String,
    }
    let class = match e.class() {
        ErrorClass::Validation => "validation",
        ErrorClass::Identification => "identification",
        ErrorClass::Io => "io",
    };
    let d = Diagnostic { error: e.code(), class, assumption: e.assumption(), message: e.to_string() };
    serde_json::to_string(&d).unwrap_or_else(|_| e.to_string())
}

fn dispatch(verb: Verb) -> Result<()> {
    match verb {
        Verb::Simulate(a) => simulate(a),
        Verb::Oracle(a) => oracle(a),
        Verb::Identify(a) => identify_verb(a),
        Verb::Relabel(a) => relabel_verb(a),
        Verb::Bounds(a) => bounds_verb(a),
        Verb::DagCheck(a) => dag_check(a),
        Verb::Classify(a) => classify(a),
        Verb::EndToEnd(a) => end_to_end_verb(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = match (&a.model, &a.figure) {
        (Some(path), _) => Npsem::from_json(std::str::from_utf8(&read(path)?).map_err(|e| Error::InvalidInput(e.to_string()))?)?,
        (None, Some(fig)) => fixture(fig, a.latent_dim, a.flavor.parse::<Flavor>()?, a.seed)?.model,
        (None, None) => return Err(Error::InvalidInput("either --model or --figure is required".into())),
    };
    if let Some(p) = &a.model_out {
        fs::write(p, model.to_json()? + "\n")?;
    }
    let joint = match a.samples {
        Some(n) => empirical_tensor(&model.sample(n, a.seed)?)?,
        None => model.observable_joint()?,
    };
    let joint = if a.keep_latent {
        joint
    } else {
        let w = model.role("W")?;
        if joint.has_axis(&w) {
            joint.marginalize(&[w.as_str()])?
        } else {
            joint
        }
    };
    fs::write(&a.out, joint.to_json()? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct OracleResult {
    effects: crate::fixtures::OracleEffects,
    rank_invariance: bool,
    v_rank_invariance: Option<bool>,
}

fn oracle(a: OracleArgs) -> Result<()> {
    let bytes = read(&a.model)?;
    let model = Npsem::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::InvalidInput(e.to_string()))?)?;
    let v_rank_invariance = match model.role("V") {
        Ok(v) if model.node(&v).is_ok() => Some(check_v_rank_invariance(&model)?),
        _ => None,
    };
    let result = OracleResult {
        effects: oracle_effects(&model)?,
        rank_invariance: check_rank_invariance(&model)?,
        v_rank_invariance,
    };
    let r = Report::new("oracle", &a, &[bytes], Tolerances::default(), result)?;
    emit(a.out.as_deref(), &r.to_json()?)
}

fn load_joint(path: &Path) -> Result<(ProbTensor, Vec<u8>)> {
    let bytes = read(path)?;
    let t = ProbTensor::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::InvalidInput(e.to_string()))?)?;
    Ok((t, bytes))
}

/// Restrict the joint to the axes a design consumes.
fn design_joint(joint: &ProbTensor, design: PipelineDesign, roles: &Roles) -> Result<ProbTensor> {
    let keep: Vec<&str> = design.required_roles().iter().map(|r| roles.get(r)).collect();
    joint.marginal(&keep)
}

fn pipeline_options(latent_dim: usize, seed: u64, roles: Roles) -> PipelineOptions {
    let mut opts = PipelineOptions::new(latent_dim).with_seed(seed);
    opts.roles = roles;
    opts
}

#[derive(Serialize)]
struct IdentifyResult {
    estimands: crate::pipelines::EstimandReport,
    stages: Vec<crate::pipelines::StageDiagnostics>,
}

fn identify_verb(a: IdentifyArgs) -> Result<()> {
    let design: PipelineDesign = a.design.parse()?;
    let (joint, bytes) = load_joint(&a.joint)?;
    let opts = pipeline_options(a.latent_dim, a.seed, roles_from(&a.roles));
    let grid = match &a.qte_grid {
        Some(s) => parse_grid(s)?,
        None => DEFAULT_QTE_GRID.to_vec(),
    };
    let model = identify(design, &design_joint(&joint, design, &opts.roles)?, &opts)?;
    let est = estimands_with_grid(&model, &grid)?;
    if let Some(dir) = &a.csv_dir {
        fs::create_dir_all(dir)?;
        report::write_qte_csv(&dir.join("qte.csv"), &est.qte)?;
        report::write_cate_csv(
            &dir.join("cate_distribution.csv"),
            &est.cate_distribution,
            &est.cate_distribution_given_x,
            &est.treatment.name,
        )?;
    }
    let result = IdentifyResult { estimands: est, stages: model.stages.clone() };
    let r = Report::new("identify", &a, &[bytes], Tolerances::from_options(&opts), result)?;
    emit(a.report.as_deref(), &r.to_json()?)
}

#[derive(Serialize)]
struct RelabelResult {
    rule: RelabelRule,
    alpha: Vec<Vec<f64>>,
    values: Option<Vec<Vec<f64>>>,
    ranks: Option<Vec<Vec<usize>>>,
    quantiles: Vec<relabel::QuantileState>,
    latent_marginal: Vec<f64>,
    cate: Option<Vec<f64>>,
    cate_by_quantile: Vec<(f64, f64)>,
    /// `E[Y(x, w)]` indexed `[x][w]` in relabeled order.
    confounder_means: Vec<Vec<f64>>,
}

fn relabel_verb(a: RelabelArgs) -> Result<()> {
    let i = &a.identify;
    let design: PipelineDesign = i.design.parse()?;
    let rule: RelabelRule = a.rule.parse()?;
    let taus = parse_grid(&a.tau)?;
    let (joint, bytes) = load_joint(&i.joint)?;
    let opts = pipeline_options(i.latent_dim, i.seed, roles_from(&i.roles));
    let model = identify(design, &design_joint(&joint, design, &opts.roles)?, &opts)?;
    let labeled = relabel::relabel(&model, &rule, &taus)?;
    let cate = labeled.cate().ok();
    let cate_by_quantile = if cate.is_some() { labeled.cate_by_quantile()? } else { Vec::new() };
    let result = RelabelResult {
        rule,
        latent_marginal: labeled.base.latent_marginal(),
        confounder_means: confounder_means(&labeled.base)?,
        alpha: labeled.alpha,
        values: labeled.values,
        ranks: labeled.ranks,
        quantiles: labeled.quantiles,
        cate,
        cate_by_quantile,
    };
    let r = Report::new("relabel", &a, &[bytes], Tolerances::from_options(&opts), result)?;
    emit(i.report.as_deref(), &r.to_json()?)
}

fn bounds_verb(a: BoundsArgs) -> Result<()> {
    let design: PipelineDesign = a.design.parse()?;
    let (joint, bytes) = load_joint(&a.joint)?;
    let opts = pipeline_options(a.latent_dim, a.seed, roles_from(&a.roles));
    let result = bounds::bounds(design, &design_joint(&joint, design, &opts.roles)?, &opts)?;
    let r = Report::new("bounds", &a, &[bytes], Tolerances::from_options(&opts), result)?;
    emit(a.report.as_deref(), &r.to_json()?)
}

fn load_graph(a: &GraphArgs) -> Result<(Dag, Vec<u8>)> {
    match (&a.graph, &a.figure) {
        (Some(p), _) => {
            let bytes = read(p)?;
            let g = Dag::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::InvalidInput(e.to_string()))?)?;
            Ok((g, bytes))
        }
        (None, Some(f)) => Ok((builtin(f)?, Vec::new())),
        (None, None) => Err(Error::InvalidInput("either --graph or --figure is required".into())),
    }
}

fn dag_check(a: GraphArgs) -> Result<()> {
    let (g, bytes) = load_graph(&a)?;
    let mut checks = BTreeMap::new();
    for id in 1..=7u8 {
        match check_proposition(&g, id) {
            Ok(r) => {
                checks.insert(format!("proposition-{id}"), r);
            }
            Err(Error::MissingRole(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let r = Report::new("dag-check", &a, &[bytes], Tolerances::default(), checks)?;
    emit(a.report.as_deref(), &r.to_json()?)
}

fn classify(a: GraphArgs) -> Result<()> {
    let (g, bytes) = load_graph(&a)?;
    let designs = classify_designs(&g)?;
    let r = Report::new("classify", &a, &[bytes], Tolerances::default(), designs)?;
    emit(a.report.as_deref(), &r.to_json()?)
}

fn end_to_end_verb(a: EndToEndArgs) -> Result<()> {
    let dir = a.golden_dir.clone().unwrap_or_else(default_golden_dir);
    let result = end_to_end(&a.fixture, &dir, a.bless)?;
    let r = Report::new("end-to-end", &a, &[], Tolerances::default(), result)?;
    emit(a.report.as_deref(), &r.to_json()?)
}
