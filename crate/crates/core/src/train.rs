//! Full-batch training loops.
//!
//! Every objective is a function of the score vector `f = f(X; θ)` only, so
//! each trainer is the same loop: score, evaluate the objective and its
//! gradient in `f`, pull that back through the model, take one Adam step.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coxloss::{RiskSets, SplitRiskSets};
use crate::data::{default_n1, halve_indices, Dataset, SplitIndices};
use crate::dro::{dual_loss_weights, DroConfig, EtaSolution};
use crate::error::{Error, Result};
use crate::metrics::{c_index, fairness_group, group_mean_hazards, FairnessConfig};
use crate::model::{init_params, AdamState, FeatureMatrix, ModelKind, ParamVector, RiskModel, DEFAULT_HIDDEN};

/// Regularized trainers evaluate an `O(n²)` penalty on the full batch.
pub const MAX_REGULARIZED_BATCH: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Erm,
    Dro,
    DroSplit,
    DroSplitOneSide,
    RegIndividual,
    RegGroup,
    RegIntersectional,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 7] = [
        TrainerKind::Erm,
        TrainerKind::Dro,
        TrainerKind::DroSplit,
        TrainerKind::DroSplitOneSide,
        TrainerKind::RegIndividual,
        TrainerKind::RegGroup,
        TrainerKind::RegIntersectional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainerKind::Erm => "erm",
            TrainerKind::Dro => "dro",
            TrainerKind::DroSplit => "dro_split",
            TrainerKind::DroSplitOneSide => "dro_split_one_side",
            TrainerKind::RegIndividual => "reg_individual",
            TrainerKind::RegGroup => "reg_group",
            TrainerKind::RegIntersectional => "reg_intersectional",
        }
    }

    pub fn uses_alpha(self) -> bool {
        matches!(
            self,
            TrainerKind::Dro | TrainerKind::DroSplit | TrainerKind::DroSplitOneSide
        )
    }

    pub fn uses_lambda(self) -> bool {
        matches!(
            self,
            TrainerKind::RegIndividual | TrainerKind::RegGroup | TrainerKind::RegIntersectional
        )
    }

    pub fn uses_split(self) -> bool {
        matches!(self, TrainerKind::DroSplit | TrainerKind::DroSplitOneSide)
    }
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TrainerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown trainer kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub trainer: TrainerKind,
    pub model: ModelKind,
    pub hidden: usize,
    /// Minimum protected subpopulation probability; `1` reduces DRO to ERM.
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Size of `D1`; defaults to `n / 2`.
    pub n1: Option<usize>,
    pub seed: u64,
    /// Iterations without validation c-index improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Group attributes for the group and intersectional penalties.
    pub groups: Vec<String>,
    pub fairness: FairnessConfig,
    /// Restricts the DRO dual to uncensored losses; censored records get no weight.
    pub uncensored_only_dro: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            trainer: TrainerKind::Erm,
            model: ModelKind::Linear,
            hidden: DEFAULT_HIDDEN,
            alpha: None,
            lambda: None,
            learning_rate: 0.01,
            max_iterations: 500,
            n1: None,
            seed: 0,
            patience: 0,
            groups: Vec::new(),
            fairness: FairnessConfig::default(),
            uncensored_only_dro: false,
        }
    }
}

impl TrainConfig {
    /// Checks the fields that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.model == ModelKind::Mlp && self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if self.trainer.uses_alpha() {
            let alpha = self
                .alpha
                .ok_or_else(|| Error::Config(format!("trainer {} requires alpha", self.trainer)))?;
            DroConfig::from_alpha(alpha)?;
        }
        if self.trainer.uses_lambda() {
            let lambda = self
                .lambda
                .ok_or_else(|| Error::Config(format!("trainer {} requires lambda", self.trainer)))?;
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
            }
        }
        if matches!(self.trainer, TrainerKind::RegGroup | TrainerKind::RegIntersectional) && self.groups.is_empty() {
            return Err(Error::Config(format!(
                "trainer {} requires group attributes",
                self.trainer
            )));
        }
        Ok(())
    }

    /// The `D1`/`D2` halves for the split trainers on `n` records.
    pub fn split_halves(&self, n: usize) -> Result<SplitIndices> {
        let n1 = self.n1.unwrap_or_else(|| default_n1(n));
        if n1 == 0 || n1 >= n {
            return Err(Error::Config(format!("n1 must satisfy 0 < n1 < n = {n}, got {n1}")));
        }
        halve_indices(n, n1, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// The training objective at the parameters before this iteration's step.
    pub objective: f64,
    /// Average Cox loss over all training records at the same parameters.
    pub mean_cox_loss: f64,
    pub eta: Option<f64>,
    pub eta_prime: Option<f64>,
    pub val_c_index: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// True when early stopping ended the run.
    pub stopped_early: bool,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut out = String::from("iter,objective,mean_cox_loss,eta,eta_prime,val_c_index\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:?},{:?},{},{},{}\n",
                r.iter,
                r.objective,
                r.mean_cox_loss,
                opt_cell(r.eta),
                opt_cell(r.eta_prime),
                opt_cell(r.val_c_index)
            ));
        }
        writer.write_all(out.as_bytes()).map_err(|e| Error::io("<trace>", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Value of an objective and its gradient with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub mean_cox_loss: f64,
    pub eta: Option<f64>,
    pub eta_prime: Option<f64>,
    pub score_grad: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Penalty {
    Individual(FairnessConfig),
    Group(usize),
    /// Subgroup id per record, numbered in ascending order of the code tuple.
    Intersectional(Vec<usize>, usize),
}

#[derive(Debug, Clone)]
enum Kind {
    Erm,
    Dro(DroConfig),
    Split {
        dro: DroConfig,
        first: SplitRiskSets,
        second: Option<SplitRiskSets>,
    },
    Regularized {
        lambda: f64,
        penalty: Penalty,
    },
}

/// A training objective bound to one dataset, with risk sets precomputed.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    ds: &'a Dataset,
    sets: RiskSets,
    kind: Kind,
    uncensored_only: bool,
}

/// Solves the dual and returns its loss weights. With `mask`, only masked
/// losses enter the dual and the rest get weight zero.
fn dual_weights(dro: &DroConfig, losses: &[f64], mask: Option<&[bool]>) -> Result<(EtaSolution, Vec<f64>)> {
    let Some(mask) = mask else {
        let sol = dro.solve(losses)?;
        let w = dual_loss_weights(losses, &sol, dro.c);
        return Ok((sol, w));
    };
    let kept: Vec<f64> = losses.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| l).collect();
    if kept.is_empty() {
        let sol = EtaSolution {
            eta: 0.0,
            objective: 0.0,
            attained: true,
        };
        return Ok((sol, vec![0.0; losses.len()]));
    }
    let sol = dro.solve(&kept)?;
    let mut sub = dual_loss_weights(&kept, &sol, dro.c).into_iter();
    let w = mask
        .iter()
        .map(|&m| if m { sub.next().unwrap_or(0.0) } else { 0.0 })
        .collect();
    Ok((sol, w))
}

impl<'a> Objective<'a> {
    pub fn new(ds: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if ds.n_events() == 0 {
            return Err(Error::Config(
                "training data needs at least one uncensored record".into(),
            ));
        }
        let y = ds.durations();
        let kind = match cfg.trainer {
            TrainerKind::Erm => Kind::Erm,
            TrainerKind::Dro => Kind::Dro(DroConfig::from_alpha(cfg.alpha.unwrap_or(1.0))?),
            TrainerKind::DroSplit | TrainerKind::DroSplitOneSide => {
                let dro = DroConfig::from_alpha(cfg.alpha.unwrap_or(1.0))?;
                let halves = cfg.split_halves(ds.len())?;
                let first = SplitRiskSets::new(y, &halves.d1, &halves.d2)?;
                let second = if cfg.trainer == TrainerKind::DroSplit {
                    Some(SplitRiskSets::new(y, &halves.d2, &halves.d1)?)
                } else {
                    None
                };
                Kind::Split { dro, first, second }
            }
            TrainerKind::RegIndividual | TrainerKind::RegGroup | TrainerKind::RegIntersectional => {
                if ds.len() > MAX_REGULARIZED_BATCH {
                    return Err(Error::Config(format!(
                        "regularized trainers are limited to {MAX_REGULARIZED_BATCH} records, got {}",
                        ds.len()
                    )));
                }
                let penalty = match cfg.trainer {
                    TrainerKind::RegIndividual => Penalty::Individual(cfg.fairness),
                    TrainerKind::RegGroup => {
                        ds.require_group(&cfg.groups[0])?;
                        Penalty::Group(ds.groups().iter().position(|g| g.name == cfg.groups[0]).unwrap_or(0))
                    }
                    _ => {
                        let attrs = cfg
                            .groups
                            .iter()
                            .map(|g| ds.require_group(g))
                            .collect::<Result<Vec<_>>>()?;
                        let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
                        let keys: Vec<Vec<usize>> = (0..ds.len())
                            .map(|i| attrs.iter().map(|a| a.codes[i]).collect())
                            .collect();
                        for k in &keys {
                            ids.entry(k.clone()).or_insert(0);
                        }
                        for (pos, v) in ids.values_mut().enumerate() {
                            *v = pos;
                        }
                        Penalty::Intersectional(keys.iter().map(|k| ids[k]).collect(), ids.len())
                    }
                };
                Kind::Regularized {
                    lambda: cfg.lambda.unwrap_or(0.0),
                    penalty,
                }
            }
        };
        Ok(Objective {
            ds,
            sets: RiskSets::new(y),
            kind,
            uncensored_only: cfg.uncensored_only_dro,
        })
    }

    pub fn evaluate(&self, scores: &[f64]) -> Result<ObjectiveEval> {
        let n = self.ds.len();
        if scores.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: scores.len(),
            });
        }
        let events = self.ds.events();
        let losses = self.sets.losses(scores, events);
        let mean_cox_loss = losses.mean();
        let uniform = || vec![1.0 / n as f64; n];
        let eval = match &self.kind {
            Kind::Erm => ObjectiveEval {
                value: mean_cox_loss,
                mean_cox_loss,
                eta: None,
                eta_prime: None,
                score_grad: self.sets.vjp(scores, events, &uniform()),
            },
            Kind::Dro(dro) => {
                let mask = self.uncensored_only.then_some(events);
                let (sol, w) = dual_weights(dro, &losses, mask)?;
                ObjectiveEval {
                    value: sol.objective,
                    mean_cox_loss,
                    eta: sol.attained.then_some(sol.eta),
                    eta_prime: None,
                    score_grad: self.sets.vjp(scores, events, &w),
                }
            }
            Kind::Split { dro, first, second } => {
                let mask_of = |sets: &SplitRiskSets| -> Option<Vec<bool>> {
                    self.uncensored_only
                        .then(|| sets.d1().iter().map(|&i| events[i]).collect())
                };
                let l1 = first.losses(scores, events);
                let (s1, w1) = dual_weights(dro, &l1, mask_of(first).as_deref())?;
                let mut grad = first.vjp(scores, events, &w1);
                let mut value = s1.objective;
                let mut eta_prime = None;
                if let Some(second) = second {
                    let l2 = second.losses(scores, events);
                    let (s2, w2) = dual_weights(dro, &l2, mask_of(second).as_deref())?;
                    let g2 = second.vjp(scores, events, &w2);
                    grad.iter_mut().zip(&g2).for_each(|(a, b)| *a += b);
                    value += s2.objective;
                    eta_prime = s2.attained.then_some(s2.eta);
                }
                ObjectiveEval {
                    value,
                    mean_cox_loss,
                    eta: s1.attained.then_some(s1.eta),
                    eta_prime,
                    score_grad: grad,
                }
            }
            Kind::Regularized { lambda, penalty } => {
                let mut grad = self.sets.vjp(scores, events, &uniform());
                let mut value = mean_cox_loss;
                if *lambda != 0.0 {
                    let (f, g) = self.penalty(penalty, scores)?;
                    value += lambda * f;
                    grad.iter_mut().zip(&g).for_each(|(a, b)| *a += lambda * b);
                }
                ObjectiveEval {
                    value,
                    mean_cox_loss,
                    eta: None,
                    eta_prime: None,
                    score_grad: grad,
                }
            }
        };
        Ok(eval)
    }

    /// Penalty value and its subgradient in the scores: zero at ReLU and
    /// absolute-value kinks, leftmost index for max and min.
    fn penalty(&self, penalty: &Penalty, scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = scores.len();
        let h: Vec<f64> = scores.iter().map(|f| f.exp()).collect();
        let mut grad = vec![0.0; n];
        match penalty {
            Penalty::Individual(cfg) => {
                let x = self.ds.matrix();
                let mut total = 0.0;
                for i in 0..n {
                    let xi = x.row(i);
                    for j in i + 1..n {
                        let gap = h[i] - h[j];
                        let v = gap.abs() - cfg.gamma * cfg.distance.between(xi, x.row(j));
                        if v > 0.0 {
                            total += v;
                            let s = if gap > 0.0 {
                                1.0
                            } else if gap < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            grad[i] += s * h[i];
                            grad[j] -= s * h[j];
                        }
                    }
                }
                Ok((total, grad))
            }
            Penalty::Group(index) => {
                let attr = &self.ds.groups()[*index];
                let value = fairness_group(scores, attr)?;
                let (means, overall) = group_mean_hazards(scores, attr)?;
                let mut best = 0;
                for (g, m) in means.iter().enumerate() {
                    if (m - overall).abs() > (means[best] - overall).abs() {
                        best = g;
                    }
                }
                let diff = means[best] - overall;
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let size = attr.codes.iter().filter(|&&c| c == best).count() as f64;
                for i in 0..n {
                    let member = if attr.codes[i] == best { 1.0 / size } else { 0.0 };
                    grad[i] = sign * (member - 1.0 / n as f64) * h[i];
                }
                Ok((value, grad))
            }
            Penalty::Intersectional(ids, count) => {
                let mut sums = vec![(0.0, 0usize); *count];
                for (i, &s) in ids.iter().enumerate() {
                    sums[s].0 += h[i];
                    sums[s].1 += 1;
                }
                let means: Vec<f64> = sums.iter().map(|(s, k)| s / *k as f64).collect();
                let (mut hi, mut lo) = (0, 0);
                for (s, m) in means.iter().enumerate() {
                    if *m > means[hi] {
                        hi = s;
                    }
                    if *m < means[lo] {
                        lo = s;
                    }
                }
                let value = means[hi].ln() - means[lo].ln();
                if hi != lo {
                    for (i, &s) in ids.iter().enumerate() {
                        if s == hi {
                            grad[i] += h[i] / (sums[hi].1 as f64 * means[hi]);
                        } else if s == lo {
                            grad[i] -= h[i] / (sums[lo].1 as f64 * means[lo]);
                        }
                    }
                }
                Ok((value, grad))
            }
        }
    }

    pub fn value(&self, scores: &[f64]) -> Result<f64> {
        Ok(self.evaluate(scores)?.value)
    }

    /// Objective and its gradient in the model parameters.
    pub fn param_gradient(&self, model: &RiskModel) -> Result<(ObjectiveEval, ParamVector)> {
        let x: FeatureMatrix<'_> = self.ds.matrix();
        let scores = model.risk_scores(&x)?;
        let eval = self.evaluate(&scores)?;
        let grad = model.backward(&x, &eval.score_grad)?;
        Ok((eval, grad))
    }
}

/// Called after every Adam step with the iteration index and new parameters.
pub type StepObserver<'o> = &'o mut dyn FnMut(usize, &[f64]);

/// Runs `cfg.trainer` on `ds`. With `patience > 0`, `validation` is scored
/// after every step and the best parameters seen are returned.
pub fn train(
    ds: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
    mut observer: Option<StepObserver<'_>>,
) -> Result<(RiskModel, TrainTrace)> {
    let objective = Objective::new(ds, cfg)?;
    if cfg.patience > 0 && validation.is_none() {
        return Err(Error::Config("early stopping needs a validation set".into()));
    }
    let x = ds.matrix();
    let mut model = init_params(cfg.model, ds.n_features(), cfg.hidden, cfg.seed)?;
    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, ParamVector)> = None;
    let mut stale = 0;

    for iter in 0..cfg.max_iterations {
        let abort = |trace: &TrainTrace, message: String| Error::Aborted {
            iteration: iter,
            message,
            trace: Box::new(trace.clone()),
        };
        let scores = model.risk_scores(&x)?;
        let eval = objective.evaluate(&scores).map_err(|e| match e {
            Error::Numeric(m) => abort(&trace, m),
            other => other,
        })?;
        if !eval.value.is_finite() {
            return Err(abort(&trace, format!("objective is {}", eval.value)));
        }
        let grad = model.backward(&x, &eval.score_grad)?;
        if !grad.is_finite() {
            return Err(abort(&trace, "gradient is not finite".into()));
        }
        let val_c_index = match validation.filter(|_| cfg.patience > 0) {
            Some(v) => Some(c_index(&model.risk_scores(&v.matrix())?, v.durations(), v.events()).unwrap_or(f64::NAN)),
            None => None,
        };
        trace.records.push(TraceRecord {
            iter,
            objective: eval.value,
            mean_cox_loss: eval.mean_cox_loss,
            eta: eval.eta,
            eta_prime: eval.eta_prime,
            val_c_index,
        });
        if let Some(c) = val_c_index {
            if best.as_ref().is_none_or(|(b, _)| c > *b) {
                best = Some((c, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    trace.stopped_early = true;
                    break;
                }
            }
        }
        adam.update(&mut params, &grad)?;
        model.set_params(&params)?;
        if let Some(obs) = observer.as_mut() {
            obs(iter, &params);
        }
    }
    if let Some((_, p)) = best {
        model.set_params(&p)?;
    }
    Ok((model, trace))
}

fn train_as(
    ds: &Dataset,
    model: ModelKind,
    cfg: &TrainConfig,
    kinds: &[TrainerKind],
) -> Result<(RiskModel, TrainTrace)> {
    if !kinds.contains(&cfg.trainer) {
        return Err(Error::Config(format!(
            "trainer {} does not fit this entry point",
            cfg.trainer
        )));
    }
    let cfg = TrainConfig { model, ..cfg.clone() };
    train(ds, None, &cfg, None)
}

pub fn train_erm(ds: &Dataset, model: ModelKind, cfg: &TrainConfig) -> Result<(RiskModel, TrainTrace)> {
    train_as(
        ds,
        model,
        &TrainConfig {
            trainer: TrainerKind::Erm,
            ..cfg.clone()
        },
        &[TrainerKind::Erm],
    )
}

pub fn train_dro_cox(ds: &Dataset, model: ModelKind, cfg: &TrainConfig) -> Result<(RiskModel, TrainTrace)> {
    train_as(
        ds,
        model,
        &TrainConfig {
            trainer: TrainerKind::Dro,
            ..cfg.clone()
        },
        &[TrainerKind::Dro],
    )
}

pub fn train_dro_cox_split(ds: &Dataset, model: ModelKind, cfg: &TrainConfig) -> Result<(RiskModel, TrainTrace)> {
    let cfg = TrainConfig {
        trainer: TrainerKind::DroSplit,
        ..cfg.clone()
    };
    train_as(ds, model, &cfg, &[TrainerKind::DroSplit])
}

pub fn train_dro_cox_split_one_side(
    ds: &Dataset,
    model: ModelKind,
    cfg: &TrainConfig,
) -> Result<(RiskModel, TrainTrace)> {
    let cfg = TrainConfig {
        trainer: TrainerKind::DroSplitOneSide,
        ..cfg.clone()
    };
    train_as(ds, model, &cfg, &[TrainerKind::DroSplitOneSide])
}

/// `cfg.trainer` picks the penalty and must be one of the regularized kinds.
pub fn train_fair_regularized(ds: &Dataset, model: ModelKind, cfg: &TrainConfig) -> Result<(RiskModel, TrainTrace)> {
    train_as(
        ds,
        model,
        cfg,
        &[
            TrainerKind::RegIndividual,
            TrainerKind::RegGroup,
            TrainerKind::RegIntersectional,
        ],
    )
}
