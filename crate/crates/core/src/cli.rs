//! Command-line front end. Every subcommand accepts `--config <json>`;
//! explicit flags override values from the file, and the merged settings are
//! written next to the outputs.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coxloss::breslow_baseline;
use crate::data::{
    apply_standardization, feature_moments, generate_synthetic, holdout_split, load_csv, save_csv,
    standardize_features, CsvSchema, Dataset, SyntheticConfig, LATENT_GROUP,
};
use crate::error::{Error, Result};
use crate::harness::{
    emit_report, parse_report_csv, report_markdown, run_experiment, sweep_alpha, sweep_csv, sweep_table,
    ExperimentConfig, SelectionObjective,
};
use crate::metrics::{evaluate_scores, EvalOptions, FairnessConfig, MetricsReport, METRIC_COLUMNS};
use crate::model::{Checkpoint, ModelKind};
use crate::train::{train, TrainConfig, TrainerKind};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("DROCOX_BUILD_INFO"), ")");

#[derive(Debug, Parser)]
#[command(name = "drocox", version = VERSION, about = "Distributionally robust Cox models: train, evaluate, tune")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic survival dataset with latent groups.
    Synth(SynthArgs),
    /// Train one model and write a checkpoint and a trace.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset and report every metric.
    Evaluate(EvaluateArgs),
    /// Grid search with the repeated-validation protocol.
    Tune(TuneArgs),
    /// Train the DRO trainer over a list of alphas.
    SweepAlpha(SweepArgs),
    /// Render a report CSV as a Markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct SchemaArgs {
    /// Name of the duration column.
    #[arg(long)]
    pub time_col: Option<String>,
    /// Name of the event indicator column (0 or 1).
    #[arg(long)]
    pub event_col: Option<String>,
    /// Extra categorical columns to read as group attributes.
    #[arg(long, value_delimiter = ',')]
    pub group_cols: Option<Vec<String>>,
}

impl SchemaArgs {
    fn apply(&self, schema: &mut CsvSchema) {
        if let Some(t) = &self.time_col {
            schema.time_col = t.clone();
        }
        if let Some(e) = &self.event_col {
            schema.event_col = e.clone();
        }
        if let Some(g) = &self.group_cols {
            schema.group_cols = g.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of latent groups.
    #[arg(long)]
    pub k: Option<usize>,
    /// Mixture weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub pi: Option<Vec<f64>>,
    /// Feature dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Per-group coefficients: comma-separated values, groups separated by ';'.
    #[arg(long)]
    pub coef: Option<String>,
    /// Exponential censoring rate; 0 disables censoring.
    #[arg(long)]
    pub censoring: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation CSV, used for early stopping.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// erm, dro, dro_split, dro_split_one_side, reg_individual, reg_group or reg_intersectional.
    #[arg(long)]
    pub trainer: Option<String>,
    /// linear or mlp.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Size of the first half for the split trainers.
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Early-stopping patience; 0 disables.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Group attributes for the group and intersectional penalties.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    /// Lipschitz constant of the individual fairness penalty.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Restrict the DRO dual to uncensored records.
    #[arg(long)]
    pub uncensored_only_dro: bool,
    /// Z-score features with training moments (stored in the checkpoint).
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Directory for checkpoint.json, trace.csv and config.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluation CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training CSV for the baseline hazard behind IBS.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Attributes for F_G and CI.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    /// Attributes whose product defines the F_∩ subgroups.
    #[arg(long, value_delimiter = ',')]
    pub intersect: Option<Vec<String>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Metrics CSV path.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Experiment JSON: data path, grid, rule, seeds.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub intersect: Option<Vec<String>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Selection objective: ci_percent or f_a.
    #[arg(long)]
    pub objective: Option<String>,
    /// Restrict the DRO dual to uncensored records.
    #[arg(long)]
    pub uncensored_only_dro: bool,
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub intersect: Option<Vec<String>>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Restrict the DRO dual to uncensored records.
    #[arg(long)]
    pub uncensored_only_dro: bool,
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.csv written by `tune`.
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated metric columns; all by default.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    /// Markdown output path; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("missing required setting '{what}'")))
}

fn merge<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

/// Loads a CSV, reading the synthetic ground-truth label column as a group
/// attribute when present so it never becomes a feature.
fn load(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    let has_latent = rdr.headers()?.iter().any(|h| h.trim() == LATENT_GROUP);
    if has_latent && !schema.group_cols.iter().any(|g| g == LATENT_GROUP) {
        let mut s = schema.clone();
        s.group_cols.push(LATENT_GROUP.into());
        return load_csv(path, &s);
    }
    load_csv(path, schema)
}

/// Adds every requested attribute to the columns read as groups.
fn with_groups(schema: &CsvSchema, extra: &[&[String]]) -> CsvSchema {
    let mut s = schema.clone();
    for list in extra {
        for g in *list {
            if !s.group_cols.contains(g) {
                s.group_cols.push(g.clone());
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub n: usize,
    pub k: usize,
    pub pi: Vec<f64>,
    pub d: usize,
    /// Defaults to group `g` loading 1 on every feature `j` with `j mod k = g`.
    pub coefficients: Option<Vec<Vec<f64>>>,
    pub censoring: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            n: 1000,
            k: 2,
            pi: vec![0.8, 0.2],
            d: 4,
            coefficients: None,
            censoring: 0.5,
            seed: 0,
            output: None,
        }
    }
}

fn parse_coefficients(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad coefficient '{v}'")))
                })
                .collect()
        })
        .collect()
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut s: SynthSettings = read_config(a.config.as_deref())?;
    merge(&mut s.n, &a.n);
    merge(&mut s.k, &a.k);
    merge(&mut s.pi, &a.pi);
    merge(&mut s.d, &a.d);
    merge(&mut s.censoring, &a.censoring);
    merge(&mut s.seed, &a.seed);
    if a.output.is_some() {
        s.output = a.output.clone();
    }
    if let Some(c) = &a.coef {
        s.coefficients = Some(parse_coefficients(c)?);
    }
    let coefficients = s.coefficients.clone().unwrap_or_else(|| {
        (0..s.k)
            .map(|g| (0..s.d).map(|j| if j % s.k.max(1) == g { 1.0 } else { 0.0 }).collect())
            .collect()
    });
    let cfg = SyntheticConfig {
        n: s.n,
        k: s.k,
        mixture_weights: s.pi.clone(),
        coefficients,
        feature_dim: s.d,
        censoring_rate: s.censoring,
        seed: s.seed,
    };
    let out = required(&s.output, "output")?.clone();
    let ds = generate_synthetic(&cfg)?;
    save_csv(&ds, &out)?;
    write_json(&out.with_extension("config.json"), &cfg)?;
    log::info!("wrote {} records to {}", ds.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub schema: CsvSchema,
    pub train: TrainConfig,
    pub standardize: bool,
    pub out_dir: PathBuf,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            data: None,
            validation: None,
            schema: CsvSchema::default(),
            train: TrainConfig::default(),
            standardize: false,
            out_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardization {
    means: Vec<f64>,
    stds: Vec<f64>,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut s: TrainSettings = read_config(a.config.as_deref())?;
    if a.data.is_some() {
        s.data = a.data.clone();
    }
    if a.validation.is_some() {
        s.validation = a.validation.clone();
    }
    a.schema.apply(&mut s.schema);
    let t = &mut s.train;
    if let Some(k) = &a.trainer {
        t.trainer = k.parse::<TrainerKind>()?;
    }
    if let Some(m) = &a.model {
        t.model = m.parse::<ModelKind>()?;
    }
    merge(&mut t.hidden, &a.hidden);
    if a.alpha.is_some() {
        t.alpha = a.alpha;
    }
    if a.lambda.is_some() {
        t.lambda = a.lambda;
    }
    merge(&mut t.learning_rate, &a.lr);
    merge(&mut t.max_iterations, &a.iterations);
    if a.n1.is_some() {
        t.n1 = a.n1;
    }
    merge(&mut t.seed, &a.seed);
    merge(&mut t.patience, &a.patience);
    merge(&mut t.groups, &a.groups);
    merge(&mut t.fairness.gamma, &a.gamma);
    t.uncensored_only_dro |= a.uncensored_only_dro;
    merge(&mut s.standardize, &a.standardize);
    merge(&mut s.out_dir, &a.out_dir);
    s.train.validate()?;

    let schema = with_groups(&s.schema, &[&s.train.groups]);
    let mut ds = load(required(&s.data, "data")?, &schema)?;
    let mut val = s.validation.as_ref().map(|p| load(p, &schema)).transpose()?;
    let standardization = if s.standardize {
        let (means, stds) = feature_moments(&ds);
        ds = apply_standardization(&ds, &means, &stds)?;
        val = val.map(|v| apply_standardization(&v, &means, &stds)).transpose()?;
        Some(Standardization { means, stds })
    } else {
        None
    };
    create_dir(&s.out_dir)?;
    write_json(&s.out_dir.join("config.json"), &s)?;
    let trace_path = s.out_dir.join("trace.csv");
    let (model, trace) = match train(&ds, val.as_ref(), &s.train, None) {
        Ok(r) => r,
        Err(Error::Aborted {
            iteration,
            message,
            trace,
        }) => {
            trace.save_csv(&trace_path)?;
            return Err(Error::Aborted {
                iteration,
                message,
                trace,
            });
        }
        Err(e) => return Err(e),
    };
    trace.save_csv(&trace_path)?;
    let provenance = serde_json::json!({
        "train": s.train,
        "standardization": standardization,
        "data_fingerprint": format!("{:016x}", ds.fingerprint()),
    });
    Checkpoint::from_model(&model, ds.feature_names().to_vec(), s.train.seed, provenance)
        .save(s.out_dir.join("checkpoint.json"))?;
    if let Some(last) = trace.last() {
        println!("final objective: {:?}", last.objective);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub schema: CsvSchema,
    pub groups: Vec<String>,
    pub intersect: Vec<String>,
    pub fairness: FairnessConfig,
    pub output: Option<PathBuf>,
}

/// Applies the standardization stored in a checkpoint, if any.
fn prepare_for(ck: &Checkpoint, ds: Dataset) -> Result<Dataset> {
    if ds.feature_names() != ck.feature_names.as_slice() {
        return Err(Error::Schema(format!(
            "dataset features {:?} do not match checkpoint features {:?}",
            ds.feature_names(),
            ck.feature_names
        )));
    }
    match ck.config.get("standardization") {
        Some(v) if !v.is_null() => {
            let st: Standardization = serde_json::from_value(v.clone())?;
            apply_standardization(&ds, &st.means, &st.stds)
        }
        _ => Ok(ds),
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut s: EvaluateSettings = read_config(a.config.as_deref())?;
    if a.checkpoint.is_some() {
        s.checkpoint = a.checkpoint.clone();
    }
    if a.data.is_some() {
        s.data = a.data.clone();
    }
    if a.train_data.is_some() {
        s.train_data = a.train_data.clone();
    }
    a.schema.apply(&mut s.schema);
    merge(&mut s.groups, &a.groups);
    merge(&mut s.intersect, &a.intersect);
    merge(&mut s.fairness.gamma, &a.gamma);
    if a.output.is_some() {
        s.output = a.output.clone();
    }

    let ck = Checkpoint::load(required(&s.checkpoint, "checkpoint")?)?;
    let model = ck.to_model()?;
    let schema = with_groups(&s.schema, &[&s.groups, &s.intersect]);
    let eval = prepare_for(&ck, load(required(&s.data, "data")?, &schema)?)?;
    let baseline = match &s.train_data {
        Some(p) => {
            let tr = prepare_for(
                &ck,
                load(
                    p,
                    &CsvSchema {
                        group_cols: vec![],
                        ..schema.clone()
                    },
                )?,
            )?;
            let scores = model.risk_scores(&tr.matrix())?;
            Some(breslow_baseline(&scores, tr.durations(), tr.events())?)
        }
        None => None,
    };
    let opts = EvalOptions {
        group_attributes: s.groups.clone(),
        intersect_attributes: s.intersect.clone(),
        fairness: s.fairness,
        time_grid: None,
    };
    let scores = model.risk_scores(&eval.matrix())?;
    let report = evaluate_scores(&scores, &eval, baseline.as_ref(), &opts)?;
    print!("{}", report.table());
    if let Some(out) = &s.output {
        std::fs::write(out, metrics_csv(&report)).map_err(|e| Error::io(out, e))?;
        write_json(&out.with_extension("config.json"), &s)?;
    }
    Ok(())
}

/// Header plus one row, then one `attribute,f_g,ci_percent` block when
/// several group attributes were evaluated.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
    if report.per_attribute.len() > 1 {
        out.push_str("\nattribute,f_g,ci_percent\n");
        for (name, fg, ci) in &report.per_attribute {
            out.push_str(&format!(
                "{name},{},{}\n",
                crate::metrics::format_metric(*fg),
                crate::metrics::format_metric(*ci)
            ));
        }
    }
    out
}

fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = read_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    a.schema.apply(&mut cfg.schema);
    merge(&mut cfg.groups, &a.groups);
    merge(&mut cfg.intersect, &a.intersect);
    merge(&mut cfg.repeats, &a.repeats);
    merge(&mut cfg.seed, &a.seed);
    merge(&mut cfg.max_iterations, &a.iterations);
    merge(&mut cfg.standardize, &a.standardize);
    cfg.uncensored_only_dro |= a.uncensored_only_dro;
    if let Some(o) = &a.objective {
        cfg.objective = match o.as_str() {
            "ci_percent" | "ci" => SelectionObjective::CiPercent,
            "f_a" | "fa" => SelectionObjective::FA,
            other => return Err(Error::Config(format!("unknown selection objective '{other}'"))),
        };
    }
    let out_dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let schema = with_groups(&cfg.schema, &[&cfg.groups, &cfg.intersect]);
    let ds = load(required(&cfg.data, "data")?, &schema)?;
    create_dir(&out_dir)?;
    write_json(&out_dir.join("config.json"), &cfg)?;
    let result = run_experiment(&ds, &cfg, a.jobs, &|line| log::info!("{line}"))?;
    for path in emit_report(&result, &out_dir)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub data: Option<PathBuf>,
    pub schema: CsvSchema,
    pub alphas: Vec<f64>,
    pub groups: Vec<String>,
    pub intersect: Vec<String>,
    pub train: TrainConfig,
    pub test_fraction: f64,
    pub standardize: bool,
    pub out_dir: PathBuf,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            data: None,
            schema: CsvSchema::default(),
            alphas: vec![0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            groups: Vec::new(),
            intersect: Vec::new(),
            train: TrainConfig::default(),
            test_fraction: 0.2,
            standardize: true,
            out_dir: PathBuf::from("."),
        }
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut s: SweepSettings = read_config(a.config.as_deref())?;
    if a.data.is_some() {
        s.data = a.data.clone();
    }
    a.schema.apply(&mut s.schema);
    merge(&mut s.alphas, &a.alphas);
    merge(&mut s.groups, &a.groups);
    merge(&mut s.intersect, &a.intersect);
    if let Some(m) = &a.model {
        s.train.model = m.parse()?;
    }
    merge(&mut s.train.learning_rate, &a.lr);
    merge(&mut s.train.max_iterations, &a.iterations);
    merge(&mut s.train.seed, &a.seed);
    merge(&mut s.test_fraction, &a.test_fraction);
    s.train.uncensored_only_dro |= a.uncensored_only_dro;
    merge(&mut s.standardize, &a.standardize);
    merge(&mut s.out_dir, &a.out_dir);
    s.train.trainer = TrainerKind::Dro;

    let schema = with_groups(&s.schema, &[&s.groups, &s.intersect]);
    let ds = load(required(&s.data, "data")?, &schema)?;
    let (mut tr, mut te) = holdout_split(&ds, s.test_fraction, s.train.seed)?;
    if s.standardize {
        let (sets, _, _) = standardize_features(&tr, &[te])?;
        let [a, b]: [Dataset; 2] = sets
            .try_into()
            .map_err(|_| Error::Contract("standardization returned the wrong number of sets".into()))?;
        tr = a;
        te = b;
    }
    let opts = EvalOptions {
        group_attributes: s.groups.clone(),
        intersect_attributes: s.intersect.clone(),
        fairness: s.train.fairness,
        time_grid: None,
    };
    create_dir(&s.out_dir)?;
    write_json(&s.out_dir.join("config.json"), &s)?;
    let rows = sweep_alpha(&tr, &te, &s.alphas, &s.train, &opts, a.jobs)?;
    for (name, body) in [("sweep.csv", sweep_csv(&rows)), ("sweep.md", sweep_table(&rows))] {
        let path = s.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let rows = parse_report_csv(&text)?;
    let all: Vec<String> = METRIC_COLUMNS.iter().map(|c| c.0.to_string()).collect();
    let cols = a.metrics.clone().unwrap_or(all);
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let md = report_markdown(&rows, &refs)?;
    match &a.output {
        Some(p) => std::fs::write(p, md).map_err(|e| Error::io(p, e)),
        None => {
            print!("{md}");
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Tune(a) => cmd_tune(a),
        Command::SweepAlpha(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
