//! Hyperparameter search, the repeated-validation protocol, α sweeps and
//! report files.
//!
//! Determinism: every (repeat, candidate) cell owns its model and optimizer,
//! and parallel results are gathered back in cell order before any
//! reduction, so the number of worker threads never changes an output byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{holdout_split, standardize_features, CsvSchema, Dataset, SyntheticConfig, LATENT_GROUP};
use crate::error::{Error, Result};
use crate::metrics::{
    c_index, concordance_imparity, evaluate_model, evaluate_scores, EvalOptions, FairnessConfig, MetricsReport,
    METRIC_COLUMNS,
};
use crate::model::{ModelKind, RiskModel, DEFAULT_HIDDEN};
use crate::train::{train, TrainConfig, TrainTrace, TrainerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub trainers: Vec<TrainerKind>,
    pub models: Vec<ModelKind>,
    pub learning_rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            trainers: vec![TrainerKind::Erm, TrainerKind::Dro],
            models: vec![ModelKind::Linear],
            learning_rates: vec![0.01, 0.001, 0.0001],
            alphas: vec![0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            lambdas: vec![1.0, 0.7, 0.4],
        }
    }
}

/// One grid cell. Axes that do not apply to the trainer are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub trainer: TrainerKind,
    pub model: ModelKind,
    pub learning_rate: f64,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
}

impl Candidate {
    pub fn method(&self) -> Method {
        Method {
            trainer: self.trainer,
            model: self.model,
        }
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            trainer: self.trainer,
            model: self.model,
            learning_rate: self.learning_rate,
            alpha: self.alpha,
            lambda: self.lambda,
            ..base.clone()
        }
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}/{} lr={}", self.trainer, self.model, self.learning_rate);
        if let Some(a) = self.alpha {
            let _ = write!(s, " alpha={a}");
        }
        if let Some(l) = self.lambda {
            let _ = write!(s, " lambda={l}");
        }
        s
    }
}

/// A trainer and model pair, tuned and reported as one table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub trainer: TrainerKind,
    pub model: ModelKind,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.trainer, self.model)
    }
}

fn require_axis<T>(axis: &[T], name: &str) -> Result<()> {
    if axis.is_empty() {
        Err(Error::Config(format!("grid axis '{name}' is empty")))
    } else {
        Ok(())
    }
}

impl GridSpec {
    /// Cells in lexicographic order of (trainer, model, learning rate, α, λ),
    /// each axis in its listed order. Only the axes a trainer uses are
    /// expanded for it.
    pub fn expand(&self) -> Result<Vec<Candidate>> {
        require_axis(&self.trainers, "trainers")?;
        require_axis(&self.models, "models")?;
        require_axis(&self.learning_rates, "learning_rates")?;
        let mut out = Vec::new();
        for &trainer in &self.trainers {
            let alphas: Vec<Option<f64>> = if trainer.uses_alpha() {
                require_axis(&self.alphas, "alphas")?;
                self.alphas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let lambdas: Vec<Option<f64>> = if trainer.uses_lambda() {
                require_axis(&self.lambdas, "lambdas")?;
                self.lambdas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &model in &self.models {
                for &learning_rate in &self.learning_rates {
                    for &alpha in &alphas {
                        for &lambda in &lambdas {
                            out.push(Candidate {
                                trainer,
                                model,
                                learning_rate,
                                alpha,
                                lambda,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for &trainer in &self.trainers {
            for &model in &self.models {
                let m = Method { trainer, model };
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionObjective {
    CiPercent,
    FA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Validation c-index of the unregularized reference model.
    pub reference_c_index: f64,
    pub tolerance: f64,
    pub objective: SelectionObjective,
}

impl SelectionRule {
    pub fn new(reference_c_index: f64, objective: SelectionObjective) -> Self {
        SelectionRule {
            reference_c_index,
            tolerance: 0.05,
            objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: Candidate,
    pub val_c_index: f64,
    /// Lower is better; undefined objectives are `+∞`.
    pub val_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    /// No candidate met the c-index tolerance; the highest c-index was taken.
    pub fallback: bool,
}

/// Among candidates whose validation c-index is at least
/// `(1 − tolerance) · reference`, the one with the smallest objective; if
/// none qualifies, the one with the highest c-index. Ties go to the earlier
/// candidate.
pub fn select_candidate(candidates: &[CandidateScore], rule: &SelectionRule) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to select from".into()));
    }
    if !(0.0..1.0).contains(&rule.tolerance) {
        return Err(Error::Config(format!(
            "tolerance must lie in [0, 1), got {}",
            rule.tolerance
        )));
    }
    if !rule.reference_c_index.is_finite() {
        return Err(Error::Config("reference c-index is missing".into()));
    }
    let threshold = (1.0 - rule.tolerance) * rule.reference_c_index;
    let mut best: Option<usize> = None;
    for (k, c) in candidates.iter().enumerate() {
        if c.val_c_index >= threshold && best.is_none_or(|b| c.val_objective < candidates[b].val_objective) {
            best = Some(k);
        }
    }
    if let Some(index) = best {
        return Ok(Selection { index, fallback: false });
    }
    let mut index = 0;
    for (k, c) in candidates.iter().enumerate() {
        if c.val_c_index > candidates[index].val_c_index {
            index = k;
        }
    }
    Ok(Selection { index, fallback: true })
}

fn default_repeats() -> usize {
    10
}

fn default_fraction() -> f64 {
    0.2
}

fn default_iterations() -> usize {
    500
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

fn default_true() -> bool {
    true
}

fn default_objective() -> SelectionObjective {
    SelectionObjective::CiPercent
}

fn default_tolerance() -> f64 {
    0.05
}

/// Everything an experiment needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub schema: CsvSchema,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_objective")]
    pub objective: SelectionObjective,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// One seed per repeat; defaults to `seed, seed + 1, ...`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Attributes for F_G and CI; the first drives selection.
    #[serde(default)]
    pub groups: Vec<String>,
    /// Attributes whose product defines the F_∩ subgroups.
    #[serde(default)]
    pub intersect: Vec<String>,
    #[serde(default)]
    pub fairness: FairnessConfig,
    /// Restricts the DRO dual to uncensored records.
    #[serde(default)]
    pub uncensored_only_dro: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            schema: CsvSchema::default(),
            grid: GridSpec::default(),
            objective: SelectionObjective::CiPercent,
            tolerance: 0.05,
            repeats: 10,
            seeds: None,
            seed: 0,
            test_fraction: 0.2,
            validation_fraction: 0.2,
            max_iterations: 500,
            hidden: DEFAULT_HIDDEN,
            n1: None,
            standardize: true,
            groups: Vec::new(),
            intersect: Vec::new(),
            fairness: FairnessConfig::default(),
            uncensored_only_dro: false,
        }
    }
}

impl ExperimentConfig {
    pub fn repeat_seeds(&self) -> Result<Vec<u64>> {
        match &self.seeds {
            Some(s) if s.len() != self.repeats => Err(Error::Config(format!(
                "{} seeds given for {} repeats",
                s.len(),
                self.repeats
            ))),
            Some(s) => Ok(s.clone()),
            None => Ok((0..self.repeats as u64).map(|r| self.seed.wrapping_add(r)).collect()),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            group_attributes: self.groups.clone(),
            intersect_attributes: self.intersect.clone(),
            fairness: self.fairness,
            time_grid: None,
        }
    }

    fn base_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden,
            max_iterations: self.max_iterations,
            n1: self.n1,
            seed,
            groups: self.groups.clone(),
            fairness: self.fairness,
            uncensored_only_dro: self.uncensored_only_dro,
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("selection needs at least one group attribute".into()));
        }
        if self.objective == SelectionObjective::FA && self.intersect.is_empty() {
            return Err(Error::Config("F_A selection needs intersect attributes".into()));
        }
        self.repeat_seeds()?;
        Ok(())
    }
}

/// The outcome of one repeat for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub chosen: Candidate,
    pub fallback: bool,
    pub reference_c_index: f64,
    pub val_c_index: f64,
    pub val_objective: f64,
    pub test: MetricsReport,
    #[serde(skip)]
    pub trace: TrainTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub repeats: Vec<RepeatOutcome>,
}

/// Mean and population standard deviation over the repeats where the metric
/// is defined; `None` when it is defined in none.
pub fn metric_stats(reports: &[&MetricsReport], column: &str) -> Option<(f64, f64)> {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.get(column)).collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl MethodResult {
    pub fn stats(&self, column: &str) -> Option<(f64, f64)> {
        let reports: Vec<&MetricsReport> = self.repeats.iter().map(|r| &r.test).collect();
        metric_stats(&reports, column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub methods: Vec<MethodResult>,
    pub test_fingerprint: u64,
}

impl ExperimentResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

struct RepeatData {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn prepare_repeat(train_full: &Dataset, test: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<RepeatData> {
    let (train, val) = holdout_split(train_full, cfg.validation_fraction, seed)?;
    if !cfg.standardize {
        return Ok(RepeatData {
            train,
            val,
            test: test.clone(),
        });
    }
    let (sets, _, _) = standardize_features(&train, &[val, test.clone()])?;
    let [train, val, test]: [Dataset; 3] = sets
        .try_into()
        .map_err(|_| Error::Contract("standardization returned the wrong number of sets".into()))?;
    Ok(RepeatData { train, val, test })
}

fn score_on_validation(model: &RiskModel, rd: &RepeatData, cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let val = &rd.val;
    let scores = model.risk_scores(&val.matrix())?;
    let c = c_index(&scores, val.durations(), val.events()).unwrap_or(f64::NAN);
    let objective = match cfg.objective {
        SelectionObjective::CiPercent => concordance_imparity(
            &scores,
            val.durations(),
            val.events(),
            val.require_group(&cfg.groups[0])?,
        )
        .ok(),
        SelectionObjective::FA => evaluate_scores(&scores, val, None, &cfg.eval_options())?.f_a,
    };
    Ok((c, objective.filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)))
}

struct Cell {
    repeat: usize,
    candidate: Candidate,
    reference: bool,
}

struct CellOutcome {
    model: RiskModel,
    trace: TrainTrace,
    val_c_index: f64,
    val_objective: f64,
}

fn run_in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Fixed test split, then per repeat a fresh validation split, the full grid
/// per method, the selection rule against an unregularized reference of the
/// same model kind, and evaluation of the chosen model on the common test
/// set. `progress` receives one line per finished repeat.
pub fn run_experiment(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    jobs: usize,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seeds = cfg.repeat_seeds()?;
    let candidates = cfg.grid.expand()?;
    let (train_full, test) = holdout_split(ds, cfg.test_fraction, cfg.seed)?;
    let test_fingerprint = test.fingerprint();
    let repeats: Vec<RepeatData> = seeds
        .iter()
        .map(|&s| prepare_repeat(&train_full, &test, cfg, s))
        .collect::<Result<_>>()?;
    for rd in &repeats {
        if rd.test.len() != test.len() {
            return Err(Error::Contract("test split changed across repeats".into()));
        }
    }

    let mut cells = Vec::new();
    for r in 0..repeats.len() {
        for &model in &cfg.grid.models {
            for &learning_rate in &cfg.grid.learning_rates {
                cells.push(Cell {
                    repeat: r,
                    candidate: Candidate {
                        trainer: TrainerKind::Erm,
                        model,
                        learning_rate,
                        alpha: None,
                        lambda: None,
                    },
                    reference: true,
                });
            }
        }
        for c in &candidates {
            cells.push(Cell {
                repeat: r,
                candidate: c.clone(),
                reference: false,
            });
        }
    }

    let outcomes: Vec<CellOutcome> = run_in_pool(jobs, || {
        cells
            .par_iter()
            .map(|cell| {
                let rd = &repeats[cell.repeat];
                let tc = cell.candidate.train_config(&cfg.base_train_config(seeds[cell.repeat]));
                let run = || -> Result<CellOutcome> {
                    let (model, trace) = train(&rd.train, None, &tc, None)?;
                    let (val_c_index, val_objective) = score_on_validation(&model, rd, cfg)?;
                    Ok(CellOutcome {
                        model,
                        trace,
                        val_c_index,
                        val_objective,
                    })
                };
                run().map_err(|e| {
                    e.context(format!(
                        "repeat {}, {}{}",
                        cell.repeat,
                        cell.candidate.label(),
                        if cell.reference { " (reference)" } else { "" }
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut methods: Vec<MethodResult> = cfg
        .grid
        .methods()
        .into_iter()
        .map(|method| MethodResult {
            method,
            repeats: Vec::new(),
        })
        .collect();
    let opts = cfg.eval_options();
    for (r, rd) in repeats.iter().enumerate() {
        let in_repeat: Vec<(&Cell, &CellOutcome)> =
            cells.iter().zip(&outcomes).filter(|(c, _)| c.repeat == r).collect();
        for mr in methods.iter_mut() {
            let reference = in_repeat
                .iter()
                .filter(|(c, _)| c.reference && c.candidate.model == mr.method.model)
                .map(|(_, o)| o.val_c_index)
                .fold(f64::NEG_INFINITY, f64::max);
            let mine: Vec<&(&Cell, &CellOutcome)> = in_repeat
                .iter()
                .filter(|(c, _)| !c.reference && c.candidate.method() == mr.method)
                .collect();
            let scores: Vec<CandidateScore> = mine
                .iter()
                .map(|(c, o)| CandidateScore {
                    candidate: c.candidate.clone(),
                    val_c_index: o.val_c_index,
                    val_objective: o.val_objective,
                })
                .collect();
            let rule = SelectionRule {
                reference_c_index: reference,
                tolerance: cfg.tolerance,
                objective: cfg.objective,
            };
            let sel = select_candidate(&scores, &rule).map_err(|e| e.context(format!("repeat {r}, {}", mr.method)))?;
            let (cell, outcome) = mine[sel.index];
            let report = evaluate_model(&outcome.model, Some(&rd.train), &rd.test, &opts)
                .map_err(|e| e.context(format!("repeat {r}, {}", mr.method)))?;
            mr.repeats.push(RepeatOutcome {
                repeat: r,
                seed: seeds[r],
                chosen: cell.candidate.clone(),
                fallback: sel.fallback,
                reference_c_index: reference,
                val_c_index: outcome.val_c_index,
                val_objective: outcome.val_objective,
                test: report,
                trace: outcome.trace.clone(),
            });
        }
        progress(&format!("repeat {}/{} done", r + 1, repeats.len()));
    }
    Ok(ExperimentResult {
        methods,
        test_fingerprint,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub c_index: Option<f64>,
    pub f_i: Option<f64>,
    pub f_g: Option<f64>,
    pub f_cap: Option<f64>,
    pub f_a: Option<f64>,
    pub ci_percent: Option<f64>,
}

/// Trains the DRO trainer once per `α` with `base` otherwise fixed and
/// evaluates on `test`. Rows are sorted by ascending `α`.
pub fn sweep_alpha(
    train_set: &Dataset,
    test: &Dataset,
    alphas: &[f64],
    base: &TrainConfig,
    opts: &EvalOptions,
    jobs: usize,
) -> Result<Vec<AlphaRow>> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha list is empty".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    run_in_pool(jobs, || {
        sorted
            .par_iter()
            .map(|&alpha| {
                let cfg = TrainConfig {
                    trainer: TrainerKind::Dro,
                    alpha: Some(alpha),
                    ..base.clone()
                };
                let (model, _) = train(train_set, None, &cfg, None).map_err(|e| e.context(format!("alpha {alpha}")))?;
                let r = evaluate_model(&model, None, test, opts)?;
                Ok(AlphaRow {
                    alpha,
                    c_index: r.c_index,
                    f_i: r.f_i,
                    f_g: r.f_g,
                    f_cap: r.f_cap,
                    f_a: r.f_a,
                    ci_percent: r.ci_percent,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:?}"))
}

pub fn sweep_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,c_index,f_i,f_g,f_cap,f_a,ci_percent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{},{},{},{},{},{}",
            r.alpha,
            cell(r.c_index),
            cell(r.f_i),
            cell(r.f_g),
            cell(r.f_cap),
            cell(r.f_a),
            cell(r.ci_percent)
        );
    }
    out
}

pub fn sweep_table(rows: &[AlphaRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"));
    let mut out =
        String::from("| α | c-index ↑ | F_I ↓ | F_G ↓ | F_∩ ↓ | F_A ↓ | CI(%) ↓ |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.alpha,
            fmt(r.c_index),
            fmt(r.f_i),
            fmt(r.f_g),
            fmt(r.f_cap),
            fmt(r.f_a),
            fmt(r.ci_percent)
        );
    }
    out
}

/// One row of `report.csv`: a method's mean and standard deviation per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub stats: Vec<Option<(f64, f64)>>,
}

pub fn report_rows(result: &ExperimentResult) -> Vec<ReportRow> {
    result
        .methods
        .iter()
        .map(|m| ReportRow {
            method: m.method.to_string(),
            stats: METRIC_COLUMNS.iter().map(|(c, _, _)| m.stats(c)).collect(),
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("method");
    for (c, _, _) in METRIC_COLUMNS {
        let _ = write!(out, ",{c}_mean,{c}_std");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.method);
        for s in &r.stats {
            match s {
                Some((m, sd)) => {
                    let _ = write!(out, ",{m:?},{sd:?}");
                }
                None => out.push_str(",NA,NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses the output of [`report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = 1 + 2 * METRIC_COLUMNS.len();
    if headers.len() != expected || headers.get(0) != Some("method") {
        return Err(Error::Schema(format!(
            "report header must have 'method' and {} metric columns",
            2 * METRIC_COLUMNS.len()
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |idx: usize| -> Result<Option<f64>> {
            match rec.get(idx).unwrap_or("") {
                "NA" => Ok(None),
                s => s.parse().map(Some).map_err(|_| Error::Parse {
                    row: k + 2,
                    message: format!("'{s}' is not a number"),
                }),
            }
        };
        let mut stats = Vec::new();
        for m in 0..METRIC_COLUMNS.len() {
            stats.push(match (num(1 + 2 * m)?, num(2 + 2 * m)?) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            });
        }
        rows.push(ReportRow {
            method: rec.get(0).unwrap_or("").to_string(),
            stats,
        });
    }
    Ok(rows)
}

/// Markdown table restricted to `columns`, cells as `mean (std)` with four
/// decimals and better-direction arrows in the header.
pub fn report_markdown(rows: &[ReportRow], columns: &[&str]) -> Result<String> {
    let picks = columns
        .iter()
        .map(|c| {
            METRIC_COLUMNS
                .iter()
                .position(|(name, _, _)| name == c)
                .ok_or_else(|| Error::Config(format!("unknown metric column '{c}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("| Method |");
    for &p in &picks {
        let (_, label, up) = METRIC_COLUMNS[p];
        let _ = write!(out, " {label} {} |", if up { "↑" } else { "↓" });
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(picks.len()));
    out.push('\n');
    for r in rows {
        let _ = write!(out, "| {} |", r.method);
        for &p in &picks {
            match r.stats[p] {
                Some((m, sd)) => {
                    let _ = write!(out, " {m:.4} ({sd:.4}) |");
                }
                None => out.push_str(" NA |"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct ChosenEntry<'a> {
    method: String,
    repeat: usize,
    seed: u64,
    chosen: &'a Candidate,
    fallback: bool,
    reference_c_index: f64,
    val_c_index: f64,
    val_objective: Option<f64>,
}

/// Writes `report.csv`, `report.md`, `trace.csv` (traces of the chosen
/// runs) and `chosen.json` into `dir`. Returns the written paths.
pub fn emit_report(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.methods.is_empty() || result.methods.iter().all(|m| m.repeats.is_empty()) {
        return Err(Error::Config("experiment result is empty".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = report_rows(result);
    let all: Vec<&str> = METRIC_COLUMNS.iter().map(|c| c.0).collect();
    let mut md = String::from("## Test-set metrics, mean (std) over repeats\n\n");
    md.push_str(&report_markdown(&rows, &all)?);
    let fallbacks: Vec<String> = result
        .methods
        .iter()
        .flat_map(|m| {
            m.repeats
                .iter()
                .filter(|r| r.fallback)
                .map(move |r| format!("{} (repeat {})", m.method, r.repeat))
        })
        .collect();
    if !fallbacks.is_empty() {
        let _ = write!(
            md,
            "\nNo candidate met the c-index tolerance, highest c-index used: {}\n",
            fallbacks.join(", ")
        );
    }

    let mut trace = String::from("method,repeat,iter,objective,mean_cox_loss,eta,eta_prime,val_c_index\n");
    let mut chosen = Vec::new();
    for m in &result.methods {
        for r in &m.repeats {
            let mut buf = Vec::new();
            r.trace.write_csv(&mut buf)?;
            let text = String::from_utf8_lossy(&buf);
            for line in text.lines().skip(1) {
                let _ = writeln!(trace, "{},{},{line}", m.method, r.repeat);
            }
            chosen.push(ChosenEntry {
                method: m.method.to_string(),
                repeat: r.repeat,
                seed: r.seed,
                chosen: &r.chosen,
                fallback: r.fallback,
                reference_c_index: r.reference_c_index,
                val_c_index: r.val_c_index,
                val_objective: Some(r.val_objective).filter(|v| v.is_finite()),
            });
        }
    }
    let files = [
        ("report.csv", report_csv(&rows)),
        ("report.md", md),
        ("trace.csv", trace),
        ("chosen.json", serde_json::to_string_pretty(&chosen)? + "\n"),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// The two-group synthetic benchmark: 4 features, a 0.8/0.2 mixture whose
/// groups load on disjoint feature pairs, exponential censoring at rate 0.5.
pub fn synthetic_benchmark(n: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n,
        k: 2,
        mixture_weights: vec![0.8, 0.2],
        coefficients: vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
        feature_dim: 4,
        censoring_rate: 0.5,
        seed,
    }
}

/// Default evaluation attributes for synthetic data.
pub fn latent_groups() -> Vec<String> {
    vec![LATENT_GROUP.to_string()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn cand(lr: f64) -> Candidate {
        Candidate {
            trainer: TrainerKind::Dro,
            model: ModelKind::Linear,
            learning_rate: lr,
            alpha: Some(0.2),
            lambda: None,
        }
    }

    fn score(c: f64, obj: f64, lr: f64) -> CandidateScore {
        CandidateScore {
            candidate: cand(lr),
            val_c_index: c,
            val_objective: obj,
        }
    }

    #[test]
    fn selection_examples() {
        let rule = SelectionRule::new(0.80, SelectionObjective::CiPercent);
        let one = [score(0.8, 3.0, 0.1)];
        assert_eq!(
            select_candidate(&one, &rule).unwrap(),
            Selection {
                index: 0,
                fallback: false
            }
        );
        let ab = [score(0.80, 5.0, 0.1), score(0.77, 1.0, 0.2)];
        assert_eq!(select_candidate(&ab, &rule).unwrap().index, 1);
        let low = [score(0.5, 1.0, 0.1), score(0.6, 9.0, 0.2), score(0.6, 0.0, 0.3)];
        assert_eq!(
            select_candidate(&low, &rule).unwrap(),
            Selection {
                index: 1,
                fallback: true
            }
        );
        let tie = [score(0.8, 2.0, 0.1), score(0.8, 2.0, 0.2)];
        assert_eq!(select_candidate(&tie, &rule).unwrap().index, 0);
        assert!(select_candidate(&[], &rule).is_err());
    }

    #[test]
    fn grid_expands_relevant_axes_only() {
        let g = GridSpec {
            trainers: vec![TrainerKind::Erm, TrainerKind::Dro, TrainerKind::RegGroup],
            models: vec![ModelKind::Linear, ModelKind::Mlp],
            ..GridSpec::default()
        };
        let cells = g.expand().unwrap();
        assert_eq!(cells.len(), 2 * 3 + 2 * 3 * 6 + 2 * 3 * 3);
        assert!(cells
            .iter()
            .filter(|c| c.trainer == TrainerKind::Erm)
            .all(|c| c.alpha.is_none() && c.lambda.is_none()));
        assert_eq!(cells[0].learning_rate, 0.01);
        assert_eq!(cells[1].learning_rate, 0.001);
        let empty = GridSpec {
            learning_rates: vec![],
            ..GridSpec::default()
        };
        assert!(empty.expand().is_err());
    }

    #[test]
    fn markdown_cells() {
        let rows = vec![
            ReportRow {
                method: "a".into(),
                stats: vec![Some((0.80321, 0.00021)); 9],
            },
            ReportRow {
                method: "b".into(),
                stats: vec![None; 9],
            },
        ];
        let md = report_markdown(&rows, &["c_index", "ci_percent"]).unwrap();
        let body: Vec<&str> = md.lines().skip(2).collect();
        assert_eq!(body.len(), 2);
        assert_eq!(body[0], "| a | 0.8032 (0.0002) | 0.8032 (0.0002) |");
        assert_eq!(body[1], "| b | NA | NA |");
        assert!(md.starts_with("| Method | c-index ↑ | CI(%) ↓ |"));
        let parsed = parse_report_csv(&report_csv(&rows)).unwrap();
        assert_eq!(parsed, rows);
    }

    fn small_experiment(jobs: usize) -> ExperimentResult {
        let ds = generate_synthetic(&synthetic_benchmark(300, 1)).unwrap();
        let cfg = ExperimentConfig {
            grid: GridSpec {
                trainers: vec![TrainerKind::Erm, TrainerKind::Dro],
                learning_rates: vec![0.01],
                alphas: vec![0.2, 0.5],
                ..GridSpec::default()
            },
            repeats: 2,
            max_iterations: 20,
            groups: latent_groups(),
            ..ExperimentConfig::default()
        };
        run_experiment(&ds, &cfg, jobs, &|_| {}).unwrap()
    }

    #[test]
    fn experiment_is_deterministic_across_thread_counts() {
        let a = small_experiment(1);
        let b = small_experiment(3);
        assert_eq!(a, b);
        assert_eq!(a.methods.len(), 2);
        assert!(a.methods.iter().all(|m| m.repeats.len() == 2));
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&a, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(parse_report_csv(&text).unwrap(), report_rows(&a));
    }

    #[test]
    fn empty_result_is_an_error() {
        let empty = ExperimentResult {
            methods: vec![],
            test_fingerprint: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&empty, dir.path()).is_err());
    }

    #[test]
    fn sweep_rows_sorted() {
        let ds = generate_synthetic(&synthetic_benchmark(200, 2)).unwrap();
        let (tr, te) = holdout_split(&ds, 0.3, 2).unwrap();
        let base = TrainConfig {
            max_iterations: 10,
            ..TrainConfig::default()
        };
        let opts = EvalOptions {
            group_attributes: latent_groups(),
            ..EvalOptions::default()
        };
        let rows = sweep_alpha(&tr, &te, &[0.5, 0.1, 0.3], &base, &opts, 2).unwrap();
        let a: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
        assert_eq!(a, vec![0.1, 0.3, 0.5]);
        assert_eq!(sweep_alpha(&tr, &te, &[0.2], &base, &opts, 1).unwrap().len(), 1);
        assert_eq!(sweep_csv(&rows).lines().count(), 4);
    }
}
