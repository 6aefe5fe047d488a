//! Command-line front end: `generate`, `fit`, `score`, `eval`, `crossval`.
//!
//! Settings come from an optional TOML config file, then flags; flags win.
//! Every command writes `<command>.manifest.json` into its output directory
//! with the effective settings, their hash and SHA-256 digests of every input
//! and output file. Manifests carry no timestamps or absolute paths, so equal
//! runs give equal manifests.
//!
//! Exit status: 0 on success, 2 for usage and settings errors, 1 for data
//! errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{
    derive_physician_claims_features, load_cohort, Cohort, Standardization, EDGES_FILE, PATIENTS_FILE,
    PHYSICIANS_FILE, SCHEMA_FILE,
};
use crate::evaluation::{
    align, crossval, curve_and_auc, write_curve_csv, write_folds_csv, CrossvalConfig, DEFAULT_SENSITIVITY_GRID,
};
use crate::graph::{run_inference, BuildOptions, FactorGraph, InferenceConfig};
use crate::learning::{fit, FitConfig, ModelParams};
use crate::synthgen::{save_generated, sample_cohort, DegreeModel, GenConfig, GENTRUTH_FILE};

pub const PARAMS_FILE: &str = "params.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const CROSSVAL_FILE: &str = "crossval.json";

const COHORT_FILES: [&str; 4] = [PATIENTS_FILE, PHYSICIANS_FILE, EDGES_FILE, SCHEMA_FILE];

#[derive(Debug, Parser)]
#[command(name = "raregraph", version, about = "Physician-patient factor graph for rare disease screening")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a labeled synthetic cohort.
    Generate(GenerateArgs),
    /// Fit model parameters on a labeled cohort.
    Fit(FitArgs),
    /// Run inference and write posterior scores.
    Score(ScoreArgs),
    /// Evaluate physician scores against cohort labels.
    Eval(EvalArgs),
    /// K-fold cross-validation of the graph model and the features-only baseline.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// TOML settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input directory; unused by `generate`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Output directory. Defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub prior_eta: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long)]
    pub num_physicians: Option<usize>,
    #[arg(long)]
    pub num_patients: Option<usize>,
    /// Patient label rate used for sampling.
    #[arg(long)]
    pub prior_eta: Option<f64>,
    /// Fraction of the patient-feature class difference kept, in [0, 1].
    #[arg(long)]
    pub signal: Option<f64>,
    /// Generating parameters (params.json format) instead of the published profile.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Defaults to `<in>/params.json`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Enter observed labels as certain evidence.
    #[arg(long)]
    pub clamp_labels: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Defaults to `<in>/scores.csv`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Comma-separated target sensitivities.
    #[arg(long, value_delimiter = ',')]
    pub sensitivity_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sensitivity_grid: Option<Vec<f64>>,
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub generate: GenerateSection,
    pub fit: FitSection,
    pub inference: InferenceSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub num_physicians: Option<usize>,
    pub num_patients: Option<usize>,
    pub prior_eta: Option<f64>,
    pub signal: Option<f64>,
    pub claims_per_edge_mean: Option<f64>,
    pub degree: Option<DegreeModel>,
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub smoothing: Option<f64>,
    pub prior_eta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub damping: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub folds: Option<usize>,
    pub sensitivity_grid: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Settings problems map to exit 2, everything else to exit 1.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn data<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Data)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", describe(&e));
            2
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by an
/// outer message.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Crossval(a) => crossval_cmd(a),
    }
}

fn load_config(shared: &SharedArgs) -> Result<RunConfig, Failure> {
    match &shared.config {
        Some(path) => usage(RunConfig::load(path)),
        None => Ok(RunConfig::default()),
    }
}

/// Input and output directories; one of them must be given.
fn dirs(shared: &SharedArgs) -> Result<(PathBuf, PathBuf), Failure> {
    match (&shared.input, &shared.out) {
        (Some(i), Some(o)) => Ok((i.clone(), o.clone())),
        (Some(i), None) => Ok((i.clone(), i.clone())),
        _ => Err(Failure::Usage(anyhow!("--in is required"))),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    data(std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())))
}

fn inference_config(args: &InferenceArgs, cfg: &RunConfig) -> Result<InferenceConfig, Failure> {
    let d = InferenceConfig::default();
    let c = InferenceConfig {
        damping: args.damping.or(cfg.inference.damping).unwrap_or(d.damping),
        tol: args.tol.or(cfg.inference.tol).unwrap_or(d.tol),
        max_iters: args.max_iters.or(cfg.inference.max_iters).unwrap_or(d.max_iters),
    };
    usage(c.validate().map_err(Into::into))?;
    Ok(c)
}

fn fit_config(args: &FitFlags, cfg: &RunConfig) -> Result<FitConfig, Failure> {
    let d = FitConfig::default();
    let c = FitConfig {
        smoothing: args.smoothing.or(cfg.fit.smoothing).unwrap_or(d.smoothing),
        prior_eta: args.prior_eta.or(cfg.fit.prior_eta).unwrap_or(d.prior_eta),
    };
    if !(c.smoothing.is_finite() && c.smoothing >= 0.0) {
        return Err(Failure::Usage(anyhow!("smoothing {} must be non-negative", c.smoothing)));
    }
    if !(c.prior_eta > 0.0 && c.prior_eta < 1.0) {
        return Err(Failure::Usage(anyhow!("prior_eta {} must lie in (0, 1)", c.prior_eta)));
    }
    Ok(c)
}

fn grid(flag: &Option<Vec<f64>>, cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    let g = flag.clone().or_else(|| cfg.eval.sensitivity_grid.clone()).unwrap_or(DEFAULT_SENSITIVITY_GRID.to_vec());
    if g.is_empty() {
        return Err(Failure::Usage(anyhow!("sensitivity grid is empty")));
    }
    if let Some(v) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Failure::Usage(anyhow!("sensitivity grid value {v} outside [0, 1]")));
    }
    Ok(g)
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok(FileDigest { name, sha256: sha256_file(p)? })
        })
        .collect()
}

fn write_manifest<C: Serialize>(
    command: &str,
    seed: u64,
    config: &C,
    inputs: &[PathBuf],
    out_dir: &Path,
    outputs: &[PathBuf],
) -> Result<(), Failure> {
    data((|| {
        let config = serde_json::to_value(config)?;
        let manifest = Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: hex::encode(Sha256::digest(serde_json::to_string(&config)?.as_bytes())),
            config,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = out_dir.join(format!("{command}.manifest.json"));
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    })())
}

fn cohort_paths(dir: &Path) -> Vec<PathBuf> {
    COHORT_FILES.iter().map(|f| dir.join(f)).collect()
}

fn load(dir: &Path) -> Result<Cohort, Failure> {
    data(load_cohort(dir).map_err(Into::into))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.shared)?;
    let out = a.shared.out.clone().ok_or_else(|| Failure::Usage(anyhow!("generate requires --out")))?;
    let g = &cfg.generate;
    let mut gen = GenConfig::default();
    let mut inputs = Vec::new();
    if let Some(path) = a.params.as_ref().or(g.params.as_ref()) {
        gen.params = data(ModelParams::load(path).map_err(Into::into))?;
        inputs.push(path.clone());
    }
    gen.seed = a.shared.seed.or(cfg.seed).unwrap_or(gen.seed);
    gen.num_physicians = a.num_physicians.or(g.num_physicians).unwrap_or(gen.num_physicians);
    gen.num_patients = a.num_patients.or(g.num_patients).unwrap_or(gen.num_patients);
    gen.prior_eta = a.prior_eta.or(g.prior_eta).unwrap_or(gen.prior_eta);
    gen.signal = a.signal.or(g.signal).unwrap_or(gen.signal);
    gen.claims_per_edge_mean = g.claims_per_edge_mean.unwrap_or(gen.claims_per_edge_mean);
    gen.degree = g.degree.unwrap_or(gen.degree);
    usage(gen.validate().map_err(Into::into))?;

    let cohort = data(sample_cohort(&gen).map_err(Into::into))?;
    create_dir(&out)?;
    data(save_generated(&cohort, &gen, &out).map_err(Into::into))?;
    let mut outputs = cohort_paths(&out);
    outputs.push(out.join(GENTRUTH_FILE));
    // The generating parameters are echoed in gentruth.json; the manifest
    // keeps the scalar settings.
    let settings = serde_json::json!({
        "num_physicians": gen.num_physicians,
        "num_patients": gen.num_patients,
        "prior_eta": gen.prior_eta,
        "signal": gen.signal,
        "claims_per_edge_mean": gen.claims_per_edge_mean,
        "degree": gen.degree,
    });
    write_manifest("generate", gen.seed, &settings, &inputs, &out, &outputs)
}

/// Fills missing claims features from edge claim counts. `stats` wins over
/// statistics recorded in the cohort schema.
fn ensure_claims(cohort: &mut Cohort, stats: Option<Standardization>) -> Result<(), Failure> {
    if cohort.has_claims_features() {
        return Ok(());
    }
    data((|| {
        match stats {
            Some(s) => {
                let raw = cohort.raw_claims_features()?;
                cohort.set_claims_features(&raw, s);
            }
            None => derive_physician_claims_features(cohort)?,
        }
        Ok(())
    })())
}

fn fit_cmd(a: FitArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.shared)?;
    let (input, out) = dirs(&a.shared)?;
    let fc = fit_config(&a.fit, &cfg)?;
    let seed = a.shared.seed.or(cfg.seed).unwrap_or(0);
    let mut cohort = load(&input)?;
    ensure_claims(&mut cohort, None)?;
    let params = data(fit(&cohort, &fc).map_err(Into::into))?;
    create_dir(&out)?;
    let path = out.join(PARAMS_FILE);
    data(params.save(&path).map_err(Into::into))?;
    write_manifest("fit", seed, &fc, &cohort_paths(&input), &out, &[path])
}

#[derive(Serialize)]
struct ScoreSettings {
    inference: InferenceConfig,
    clamp_labels: bool,
}

fn score(a: ScoreArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.shared)?;
    let (input, out) = dirs(&a.shared)?;
    let ic = inference_config(&a.inference, &cfg)?;
    let seed = a.shared.seed.or(cfg.seed).unwrap_or(0);
    let params_path = a.params.clone().unwrap_or_else(|| input.join(PARAMS_FILE));
    let params = data(ModelParams::load(&params_path).map_err(Into::into))?;
    let mut cohort = load(&input)?;
    ensure_claims(&mut cohort, params.standardization)?;
    let options = BuildOptions { clamp_observed_labels: a.clamp_labels };
    let graph = data(FactorGraph::build(&cohort, &params, options).map_err(Into::into))?;
    let beliefs = data(run_inference(&graph, &ic).map_err(Into::into))?;
    let converged: BTreeMap<usize, bool> = beliefs.components.iter().map(|c| (c.id, c.converged)).collect();
    let nonconverged = converged.values().filter(|&&c| !c).count();
    if nonconverged > 0 {
        log::warn!("{nonconverged} loopy components did not converge within {} iterations", ic.max_iters);
    }

    create_dir(&out)?;
    let path = out.join(SCORES_FILE);
    data((|| -> anyhow::Result<()> {
        let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "entity_type,entity_id,posterior_positive,component_id,converged")?;
        for (k, d) in cohort.physicians.iter().enumerate() {
            let comp = beliefs.physician_component[k];
            let ok = converged[&(comp as usize)] as u8;
            writeln!(w, "physician,{},{},{comp},{ok}", d.id, beliefs.physician[k])?;
        }
        for (k, p) in cohort.patients.iter().enumerate() {
            let comp = beliefs.patient_component[k];
            let ok = converged[&(comp as usize)] as u8;
            writeln!(w, "patient,{},{},{comp},{ok}", p.id, beliefs.patient[k])?;
        }
        w.flush()?;
        Ok(())
    })())?;
    let mut inputs = cohort_paths(&input);
    inputs.push(params_path);
    write_manifest("score", seed, &ScoreSettings { inference: ic, clamp_labels: a.clamp_labels }, &inputs, &out, &[path])
}

/// Physician rows of a scores file, keyed by id.
pub fn read_physician_scores(path: &Path) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .quoting(false)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("entity_type") || header.get(1) != Some("entity_id") || header.get(2) != Some("posterior_positive")
    {
        bail!("{}: line 1: expected header entity_type,entity_id,posterior_positive,...", path.display());
    }
    let mut out = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", path.display()))?;
        if rec.get(0) != Some("physician") {
            continue;
        }
        let id = rec.get(1).unwrap_or_default().to_string();
        let value = rec.get(2).unwrap_or_default();
        let score: f64 = value
            .parse()
            .map_err(|_| anyhow!("{}: line {line}: bad score {value:?}", path.display()))?;
        if !score.is_finite() {
            bail!("{}: line {line}: score {score} is not finite", path.display());
        }
        if out.insert(id.clone(), score).is_some() {
            bail!("{}: line {line}: duplicate physician {id}", path.display());
        }
    }
    Ok(out)
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.shared)?;
    let (input, out) = dirs(&a.shared)?;
    let grid = grid(&a.sensitivity_grid, &cfg)?;
    let seed = a.shared.seed.or(cfg.seed).unwrap_or(0);
    let scores_path = a.scores.clone().unwrap_or_else(|| input.join(SCORES_FILE));
    let cohort = load(&input)?;
    let scores = data(read_physician_scores(&scores_path))?;
    let labels = data(
        cohort
            .physicians
            .iter()
            .map(|d| {
                d.label
                    .map(|l| (d.id.clone(), l))
                    .ok_or_else(|| anyhow!("{}: physician {} has no label", PHYSICIANS_FILE, d.id))
            })
            .collect::<anyhow::Result<BTreeMap<_, _>>>(),
    )?;
    let report = data((|| -> anyhow::Result<_> {
        let (_, s, l) = align(&scores, &labels)?;
        Ok(curve_and_auc(&s, &l, &grid)?)
    })())?;
    create_dir(&out)?;
    let metrics_path = out.join(METRICS_FILE);
    let curve_path = out.join(CURVE_FILE);
    data((|| -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(&metrics_path, text).with_context(|| format!("writing {}", metrics_path.display()))?;
        write_curve_csv(&report, &curve_path)?;
        Ok(())
    })())?;
    let mut inputs = cohort_paths(&input);
    inputs.push(scores_path);
    let settings = serde_json::json!({ "sensitivity_grid": grid });
    write_manifest("eval", seed, &settings, &inputs, &out, &[metrics_path, curve_path])
}

fn crossval_cmd(a: CrossvalArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.shared)?;
    let (input, out) = dirs(&a.shared)?;
    let config = CrossvalConfig {
        folds: a.folds.or(cfg.eval.folds).unwrap_or(10),
        seed: a.shared.seed.or(cfg.seed).unwrap_or(0),
        fit: fit_config(&a.fit, &cfg)?,
        inference: inference_config(&a.inference, &cfg)?,
        grid: grid(&a.sensitivity_grid, &cfg)?,
    };
    if config.folds < 2 {
        return Err(Failure::Usage(anyhow!("--folds must be at least 2")));
    }
    let cohort = load(&input)?;
    let report = data(crossval(&cohort, &config).map_err(Into::into))?;
    create_dir(&out)?;
    let folds_path = out.join(FOLDS_FILE);
    let json_path = out.join(CROSSVAL_FILE);
    data((|| -> anyhow::Result<()> {
        write_folds_csv(&report, &folds_path)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(&json_path, text).with_context(|| format!("writing {}", json_path.display()))?;
        Ok(())
    })())?;
    if let Some(avg) = &report.average {
        log::info!(
            "{} folds used: model auc {:.4}, baseline auc {:.4}",
            avg.folds_used,
            avg.model_auc,
            avg.baseline_auc
        );
    }
    write_manifest("crossval", config.seed, &config, &cohort_paths(&input), &out, &[folds_path, json_path])
}
