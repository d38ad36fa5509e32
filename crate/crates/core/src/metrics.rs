//! Accuracy and fairness metrics for fitted Cox models.
//!
//! Fairness metrics operate on partial hazards `exp(f(x))`, never on raw
//! scores. Concordance uses one pair rule everywhere (see [`pair_credit`]),
//! so the concordance fraction of a group holding every record equals the
//! c-index exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coxloss::{average_cox_loss, breslow_baseline, survival_estimate, BaselineHazard};
use crate::data::{Dataset, GroupAttribute};
use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, RiskModel};

/// Credit for the ordered pair `(i, j)`; `None` when the pair is not
/// comparable. Time ties with two events score 1 for equal risk and ½
/// otherwise; a censored record tied with an event scores 1 only when it
/// has the lower risk.
/// Each case keeps its own branch, even where outcomes coincide.
#[inline]
#[allow(clippy::if_same_then_else)]
pub fn pair_credit(yi: f64, yj: f64, di: bool, dj: bool, fi: f64, fj: f64) -> Option<f64> {
    if (yi < yj && !di) || (yj < yi && !dj) || (yi == yj && !di && !dj) {
        return None;
    }
    let credit = if yi < yj {
        if fi > fj {
            1.0
        } else if fi == fj {
            0.5
        } else {
            0.0
        }
    } else if yi > yj {
        if fi < fj {
            1.0
        } else if fi == fj {
            0.5
        } else {
            0.0
        }
    } else if di && dj {
        if fi == fj {
            1.0
        } else {
            0.5
        }
    } else if !di && dj && fi < fj {
        1.0
    } else if di && !dj && fi > fj {
        1.0
    } else {
        0.5
    };
    Some(credit)
}

fn check_lengths(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<()> {
    for len in [durations.len(), events.len()] {
        if len != scores.len() {
            return Err(Error::Shape {
                expected: scores.len(),
                actual: len,
            });
        }
    }
    Ok(())
}

/// Numerator and denominator of the concordance fraction of every category,
/// crediting each ordered pair to the category of its first record.
fn concordance_counts(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    codes: &[usize],
    n_categories: usize,
) -> Vec<(f64, f64)> {
    let n = scores.len();
    let mut counts = vec![(0.0, 0.0); n_categories];
    for i in 0..n {
        let slot = &mut counts[codes[i]];
        for j in 0..n {
            if j == i {
                continue;
            }
            if let Some(c) = pair_credit(durations[i], durations[j], events[i], events[j], scores[i], scores[j]) {
                slot.0 += c;
                slot.1 += 1.0;
            }
        }
    }
    counts
}

/// Fraction of comparable ordered pairs ranked correctly, risk ties ½.
pub fn c_index(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<f64> {
    check_lengths(scores, durations, events)?;
    let codes = vec![0; scores.len()];
    let (num, den) = concordance_counts(scores, durations, events, &codes, 1)[0];
    if den == 0.0 {
        return Err(Error::UndefinedMetric("c-index: no comparable pairs".into()));
    }
    Ok(num / den)
}

/// Concordance fraction per category, in label order.
pub fn concordance_fractions(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    groups: &GroupAttribute,
) -> Result<Vec<f64>> {
    check_lengths(scores, durations, events)?;
    if groups.codes.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: groups.codes.len(),
        });
    }
    concordance_counts(scores, durations, events, &groups.codes, groups.n_categories())
        .into_iter()
        .zip(&groups.labels)
        .map(|((num, den), label)| {
            if den == 0.0 {
                Err(Error::UndefinedMetric(format!(
                    "concordance fraction of group '{}={label}' has no comparable pairs",
                    groups.name
                )))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

/// Largest gap between two groups' concordance fractions, in percent.
pub fn concordance_imparity(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    groups: &GroupAttribute,
) -> Result<f64> {
    if groups.n_categories() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "concordance imparity needs at least two groups in '{}'",
            groups.name
        )));
    }
    let cf = concordance_fractions(scores, durations, events, groups)?;
    let mut worst: f64 = 0.0;
    for a in 0..cf.len() {
        for b in 0..cf.len() {
            if a != b {
                worst = worst.max((cf[a] - cf[b]).abs());
            }
        }
    }
    Ok(100.0 * worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Euclidean,
    Manhattan,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub gamma: f64,
    pub distance: Distance,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            gamma: 0.01,
            distance: Distance::Euclidean,
        }
    }
}

/// `Σ_{i<j} [ |h_i − h_j| − γ·dist(x_i, x_j) ]₊` with `h = exp(f)`.
pub fn fairness_individual(scores: &[f64], x: &FeatureMatrix<'_>, cfg: &FairnessConfig) -> Result<f64> {
    if x.rows() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: x.rows(),
        });
    }
    if !(cfg.gamma >= 0.0) {
        return Err(Error::Config("gamma must be nonnegative".into()));
    }
    let h: Vec<f64> = scores.iter().map(|f| f.exp()).collect();
    let per_row: Vec<f64> = (0..h.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (i + 1..h.len())
                .map(|j| ((h[i] - h[j]).abs() - cfg.gamma * cfg.distance.between(xi, x.row(j))).max(0.0))
                .sum::<f64>()
        })
        .collect();
    Ok(per_row.iter().sum())
}

/// Mean partial hazard per category (label order) and overall.
pub fn group_mean_hazards(scores: &[f64], groups: &GroupAttribute) -> Result<(Vec<f64>, f64)> {
    if groups.codes.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: groups.codes.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("no records".into()));
    }
    let mut sums = vec![(0.0, 0usize); groups.n_categories()];
    let mut total = 0.0;
    for (f, &c) in scores.iter().zip(&groups.codes) {
        let h = f.exp();
        sums[c].0 += h;
        sums[c].1 += 1;
        total += h;
    }
    let means = sums
        .iter()
        .zip(&groups.labels)
        .map(|(&(s, k), label)| {
            if k == 0 {
                Err(Error::UndefinedMetric(format!(
                    "group '{}={label}' is empty",
                    groups.name
                )))
            } else {
                Ok(s / k as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((means, total / scores.len() as f64))
}

/// `max_g | mean_{i∈g} h_i − mean_i h_i |`.
pub fn fairness_group(scores: &[f64], groups: &GroupAttribute) -> Result<f64> {
    if groups.n_categories() == 0 {
        return Err(Error::UndefinedMetric("no groups".into()));
    }
    let (means, overall) = group_mean_hazards(scores, groups)?;
    Ok(means.iter().map(|m| (m - overall).abs()).fold(0.0, f64::max))
}

/// Mean partial hazard of every nonempty intersection of the given
/// attributes, keyed by the tuple of category codes.
pub fn intersection_means(scores: &[f64], partitions: &[&GroupAttribute]) -> Result<BTreeMap<Vec<usize>, f64>> {
    if partitions.is_empty() {
        return Err(Error::UndefinedMetric("no attributes to intersect".into()));
    }
    for p in partitions {
        if p.codes.len() != scores.len() {
            return Err(Error::Shape {
                expected: scores.len(),
                actual: p.codes.len(),
            });
        }
    }
    let mut acc: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
    for (i, f) in scores.iter().enumerate() {
        let key: Vec<usize> = partitions.iter().map(|p| p.codes[i]).collect();
        let slot = acc.entry(key).or_insert((0.0, 0));
        slot.0 += f.exp();
        slot.1 += 1;
    }
    if acc.is_empty() {
        return Err(Error::UndefinedMetric("every intersectional subgroup is empty".into()));
    }
    Ok(acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect())
}

/// `max_{s,s'} | log(h̄(s) / h̄(s')) |` over nonempty intersections.
pub fn fairness_intersectional(scores: &[f64], partitions: &[&GroupAttribute]) -> Result<f64> {
    let means = intersection_means(scores, partitions)?;
    let hi = means.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.values().copied().fold(f64::INFINITY, f64::min);
    Ok(hi.ln() - lo.ln())
}

pub fn fairness_average(f_i: f64, f_g: f64, f_cap: f64) -> f64 {
    (f_i + f_g + f_cap) / 3.0
}

/// Right-continuous nonincreasing step function starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Kaplan-Meier product-limit estimate where `counts(i)` marks the records
/// whose time is an occurrence; at-risk sets are `Y ≥ t`.
fn product_limit(durations: &[f64], counts: impl Fn(usize) -> bool) -> StepFunction {
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let n = durations.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut k = 0;
    while k < n {
        let t = durations[order[k]];
        let mut end = k;
        let mut d = 0usize;
        while end < n && durations[order[end]] == t {
            if counts(order[end]) {
                d += 1;
            }
            end += 1;
        }
        if d > 0 {
            let at_risk = (n - k) as f64;
            surv *= 1.0 - d as f64 / at_risk;
            times.push(t);
            values.push(surv);
        }
        k = end;
    }
    StepFunction { times, values }
}

/// Kaplan-Meier estimate of the censoring survival function `Ĝ`, treating
/// censored records (`δ = 0`) as the occurrences.
pub fn km_censoring(durations: &[f64], events: &[bool]) -> StepFunction {
    product_limit(durations, |i| !events[i])
}

/// Kaplan-Meier estimate of the event-time survival function.
pub fn km_survival(durations: &[f64], events: &[bool]) -> StepFunction {
    product_limit(durations, |i| events[i])
}

/// Records whose inverse censoring weight would use `Ĝ` below this are
/// dropped from that time point.
pub const MIN_CENSORING_SURVIVAL: f64 = 1e-8;

/// IPCW Brier score at time `t` given `Ŝ(t | x_i)` for every record.
pub fn brier_score_at(
    survival_at_t: &[f64],
    durations: &[f64],
    events: &[bool],
    censoring: &StepFunction,
    t: f64,
) -> Result<f64> {
    let g_t = censoring.at(t);
    let mut total = 0.0;
    let mut used = 0usize;
    for ((s, &y), &d) in survival_at_t.iter().zip(durations).zip(events) {
        if y <= t && d {
            let g = censoring.left_limit(y);
            if g < MIN_CENSORING_SURVIVAL {
                continue;
            }
            total += s * s / g;
        } else if y > t {
            if g_t < MIN_CENSORING_SURVIVAL {
                continue;
            }
            total += (1.0 - s) * (1.0 - s) / g_t;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(format!(
            "Brier score at t = {t}: no usable records"
        )));
    }
    Ok(total / used as f64)
}

/// Trapezoidal average over `grid` of the IPCW Brier score, where
/// `survival(i, t)` is the predicted `Ŝ(t | x_i)`. Clamped to `[0, 1]`
/// against rounding.
pub fn integrated_brier(
    survival: impl Fn(usize, f64) -> f64,
    durations: &[f64],
    events: &[bool],
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::UndefinedMetric("empty time grid".into()));
    }
    if durations.len() != events.len() {
        return Err(Error::Shape {
            expected: durations.len(),
            actual: events.len(),
        });
    }
    let censoring = km_censoring(durations, events);
    let scores = grid
        .iter()
        .map(|&t| {
            let s: Vec<f64> = (0..durations.len()).map(|i| survival(i, t)).collect();
            brier_score_at(&s, durations, events, &censoring, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = if grid.len() == 1 {
        scores[0]
    } else {
        let area: f64 = grid
            .windows(2)
            .zip(scores.windows(2))
            .map(|(t, b)| 0.5 * (b[0] + b[1]) * (t[1] - t[0]))
            .sum();
        area / (grid[grid.len() - 1] - grid[0])
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Cumulative/dynamic AUC at a single time with inverse-probability-of-
/// censoring weights on the cases. `None` when `t` has no case or no control.
pub fn cumulative_dynamic_auc_at(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    censoring: &StepFunction,
    t: f64,
) -> Option<f64> {
    let mut controls: Vec<f64> = scores
        .iter()
        .zip(durations)
        .filter(|(_, &y)| y > t)
        .map(|(f, _)| *f)
        .collect();
    if controls.is_empty() {
        return None;
    }
    controls.sort_by(f64::total_cmp);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&f, &y), &d) in scores.iter().zip(durations).zip(events) {
        if !(d && y <= t) {
            continue;
        }
        let g = censoring.left_limit(y);
        if g < MIN_CENSORING_SURVIVAL {
            continue;
        }
        let w = 1.0 / g;
        let below = controls.partition_point(|&c| c < f) as f64;
        let tied = controls.partition_point(|&c| c <= f) as f64 - below;
        num += w * (below + 0.5 * tied);
        den += w * controls.len() as f64;
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Per-time AUC on the valid grid points, and their weighted mean using the
/// drops of the Kaplan-Meier event survival curve between grid points.
pub fn time_dependent_auc_curve(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    grid: &[f64],
) -> Result<(Vec<(f64, f64)>, f64)> {
    check_lengths(scores, durations, events)?;
    let censoring = km_censoring(durations, events);
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&t| cumulative_dynamic_auc_at(scores, durations, events, &censoring, t).map(|a| (t, a)))
        .collect();
    if curve.is_empty() {
        return Err(Error::UndefinedMetric(
            "time-dependent AUC: no grid point has both cases and controls".into(),
        ));
    }
    let surv = km_survival(durations, events);
    let mut prev = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, auc) in &curve {
        let s = surv.at(t);
        num += auc * (prev - s);
        den += prev - s;
        prev = s;
    }
    let mean = if den > 0.0 {
        num / den
    } else {
        curve.iter().map(|(_, a)| a).sum::<f64>() / curve.len() as f64
    };
    Ok((curve, mean))
}

pub fn time_dependent_auc(scores: &[f64], durations: &[f64], events: &[bool], grid: &[f64]) -> Result<f64> {
    time_dependent_auc_curve(scores, durations, events, grid).map(|(_, m)| m)
}

/// Log partial likelihood per record; the sign flip of the average Cox loss.
pub fn test_lpl(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<f64> {
    Ok(-average_cox_loss(scores, durations, events)?)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const DEFAULT_GRID_POINTS: usize = 100;

/// `points` equally spaced times between the 5th and 95th percentiles of the
/// observed event times (linear interpolation between order statistics).
pub fn default_time_grid(durations: &[f64], events: &[bool], points: usize) -> Result<Vec<f64>> {
    let mut t: Vec<f64> = durations
        .iter()
        .zip(events)
        .filter(|(_, &d)| d)
        .map(|(y, _)| *y)
        .collect();
    if t.is_empty() || points == 0 {
        return Err(Error::UndefinedMetric("time grid needs at least one event".into()));
    }
    t.sort_by(f64::total_cmp);
    let lo = quantile(&t, 0.05);
    let hi = quantile(&t, 0.95);
    if points == 1 || hi <= lo {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|k| lo + step * k as f64).collect())
}

/// Mean Cox loss of the members of each category, using risk sets over the
/// whole evaluation set.
pub fn group_mean_cox_losses(losses: &[f64], groups: &GroupAttribute) -> Vec<f64> {
    let mut acc = vec![(0.0, 0usize); groups.n_categories()];
    for (l, &c) in losses.iter().zip(&groups.codes) {
        acc[c].0 += l;
        acc[c].1 += 1;
    }
    acc.into_iter()
        .map(|(s, k)| if k == 0 { f64::NAN } else { s / k as f64 })
        .collect()
}

/// One evaluation run. `None` is an undefined metric, rendered as `NA`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub c_index: Option<f64>,
    pub auc: Option<f64>,
    pub lpl: Option<f64>,
    pub ibs: Option<f64>,
    pub f_i: Option<f64>,
    pub f_g: Option<f64>,
    pub f_cap: Option<f64>,
    pub f_a: Option<f64>,
    pub ci_percent: Option<f64>,
    /// `(attribute, F_G, CI%)` for every evaluated group attribute.
    #[serde(default)]
    pub per_attribute: Vec<(String, Option<f64>, Option<f64>)>,
}

/// Column name, header label and whether higher is better.
pub const METRIC_COLUMNS: [(&str, &str, bool); 9] = [
    ("c_index", "c-index", true),
    ("auc", "AUC (C/D, IPCW)", true),
    ("lpl", "LPL", true),
    ("ibs", "IBS", false),
    ("f_i", "F_I", false),
    ("f_g", "F_G", false),
    ("f_cap", "F_cap", false),
    ("f_a", "F_A", false),
    ("ci_percent", "CI(%)", false),
];

pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => "NA".into(),
    }
}

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.c_index,
            self.auc,
            self.lpl,
            self.ibs,
            self.f_i,
            self.f_g,
            self.f_cap,
            self.f_a,
            self.ci_percent,
        ]
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        METRIC_COLUMNS
            .iter()
            .position(|(c, _, _)| *c == column)
            .and_then(|k| self.values()[k])
    }

    pub fn csv_header() -> String {
        METRIC_COLUMNS.iter().map(|c| c.0).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| format_metric(*v))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Two-column text block with better-direction arrows.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for ((_, label, up), v) in METRIC_COLUMNS.iter().zip(self.values()) {
            let arrow = if *up { "↑" } else { "↓" };
            let value = v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(out, "{:<18} {value}", format!("{label} {arrow}"));
        }
        for (attr, fg, ci) in &self.per_attribute {
            let _ = writeln!(
                out,
                "{:<18} F_G={} CI(%)={}",
                format!("[{attr}]"),
                fg.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}")),
                ci.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}")),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Attributes for F_G and CI. The first one fills the report's headline
    /// `f_g`, `ci_percent` and `f_a`.
    pub group_attributes: Vec<String>,
    /// Attributes whose product defines the F_∩ subgroups.
    pub intersect_attributes: Vec<String>,
    pub fairness: FairnessConfig,
    /// Evaluation times for AUC and IBS; defaults to [`default_time_grid`].
    pub time_grid: Option<Vec<f64>>,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if matches!(e.root(), Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores `eval` with `model` and fills every metric that is defined. The
/// survival curves for IBS use a Breslow baseline fitted on `train`; without
/// it IBS is `NA`.
pub fn evaluate_model(
    model: &RiskModel,
    train: Option<&Dataset>,
    eval: &Dataset,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let scores = model.risk_scores(&eval.matrix())?;
    let baseline = match train {
        Some(tr) => {
            let s = model.risk_scores(&tr.matrix())?;
            Some(breslow_baseline(&s, tr.durations(), tr.events())?)
        }
        None => None,
    };
    evaluate_scores(&scores, eval, baseline.as_ref(), opts)
}

pub fn evaluate_scores(
    scores: &[f64],
    eval: &Dataset,
    baseline: Option<&BaselineHazard>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let y = eval.durations();
    let d = eval.events();
    let grid = match &opts.time_grid {
        Some(g) => Some(g.clone()),
        None => defined(default_time_grid(y, d, DEFAULT_GRID_POINTS).map(|_| 0.0))?
            .map(|_| default_time_grid(y, d, DEFAULT_GRID_POINTS))
            .transpose()?,
    };
    let mut report = MetricsReport {
        c_index: defined(c_index(scores, y, d))?,
        lpl: defined(test_lpl(scores, y, d))?,
        ..MetricsReport::default()
    };
    if let Some(grid) = &grid {
        report.auc = defined(time_dependent_auc(scores, y, d, grid))?;
        if let Some(bh) = baseline {
            report.ibs = defined(integrated_brier(|i, t| survival_estimate(bh, scores[i], t), y, d, grid))?;
        }
    }
    if eval.len() >= 2 {
        report.f_i = Some(fairness_individual(scores, &eval.matrix(), &opts.fairness)?);
    }
    for name in &opts.group_attributes {
        let g = eval.require_group(name)?;
        let fg = defined(fairness_group(scores, g))?;
        let ci = defined(concordance_imparity(scores, y, d, g))?;
        report.per_attribute.push((name.clone(), fg, ci));
    }
    if let Some((_, fg, ci)) = report.per_attribute.first() {
        report.f_g = *fg;
        report.ci_percent = *ci;
    }
    if !opts.intersect_attributes.is_empty() {
        let parts = opts
            .intersect_attributes
            .iter()
            .map(|a| eval.require_group(a))
            .collect::<Result<Vec<_>>>()?;
        report.f_cap = defined(fairness_intersectional(scores, &parts))?;
    }
    if let (Some(a), Some(b), Some(c)) = (report.f_i, report.f_g, report.f_cap) {
        report.f_a = Some(fairness_average(a, b, c));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn attr(codes: &[usize]) -> GroupAttribute {
        let labels: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
        GroupAttribute::from_labels("g", &labels)
    }

    #[test]
    fn c_index_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        assert_eq!(c_index(&[4.0, 3.0, 2.0, 1.0], &y, &e).unwrap(), 1.0);
        assert_eq!(c_index(&[0.0; 4], &y, &e).unwrap(), 0.5);
        assert!(matches!(
            c_index(&[0.0, 1.0], &[1.0, 2.0], &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn c_index_rank_invariance() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(8);
        let s: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..80).map(|_| f64::from(rng.random_range(0..30u32))).collect();
        let e: Vec<bool> = (0..80).map(|_| rng.random_bool(0.7)).collect();
        let base = c_index(&s, &y, &e).unwrap();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        let aff: Vec<f64> = s.iter().map(|v| 3.0 * v + 1.0).collect();
        assert_eq!(c_index(&exp, &y, &e).unwrap(), base);
        assert_eq!(c_index(&aff, &y, &e).unwrap(), base);
    }

    #[test]
    fn imparity_examples() {
        let y = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let e = [true; 6];
        let s = [30.0, 20.0, 10.0, 0.0, 0.0, 0.0];
        let g = attr(&[0, 0, 0, 1, 1, 1]);
        let cf = concordance_fractions(&s, &y, &e, &g).unwrap();
        assert!(cf[0] > cf[1]);

        let y = [1.0, 2.0, 10.0, 20.0];
        let e = [true; 4];
        let g = attr(&[0, 0, 1, 1]);
        let s = [4.0, 3.0, -4.0, -3.0];
        // Each group-1 record wins both cross pairs and loses its within pair.
        let cf = concordance_fractions(&s, &y, &e, &g).unwrap();
        assert_eq!(cf[0], 1.0);
        assert_eq!(cf[1], 2.0 / 3.0);

        let same = attr(&[0, 1, 0, 1]);
        let s = [1.0, 1.0, 2.0, 2.0];
        let y = [5.0, 5.0, 7.0, 7.0];
        let e = [true, true, false, false];
        assert_eq!(concordance_imparity(&s, &y, &e, &same).unwrap(), 0.0);
        assert!(concordance_imparity(&s, &y, &e, &attr(&[0, 0, 0, 0])).is_err());
    }

    #[test]
    fn imparity_full_gap() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        let g = attr(&[0, 0, 1, 1]);
        let s = [10.0, 9.0, 0.0, 1.0];
        let cf = concordance_fractions(&s, &y, &e, &g).unwrap();
        assert_eq!(cf[0], 1.0);
        assert_eq!(cf[1], 2.0 / 3.0);
        let ci = concordance_imparity(&s, &y, &e, &g).unwrap();
        assert_abs_diff_eq!(ci, 100.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn imparity_undefined_group_is_named() {
        let g = GroupAttribute::from_labels("sex", &["F", "M", "M"]);
        let err = concordance_imparity(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &[false, true, true], &g).unwrap_err();
        assert!(err.to_string().contains("sex=F"), "{err}");
    }

    #[test]
    fn all_inclusive_group_equals_c_index() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(9);
        let s: Vec<f64> = (0..60).map(|_| f64::from(rng.random_range(0..5u32))).collect();
        let y: Vec<f64> = (0..60).map(|_| f64::from(rng.random_range(0..10u32))).collect();
        let e: Vec<bool> = (0..60).map(|_| rng.random_bool(0.5)).collect();
        let cf = concordance_fractions(&s, &y, &e, &attr(&[0; 60])).unwrap();
        assert_eq!(cf[0], c_index(&s, &y, &e).unwrap());
    }

    #[test]
    fn individual_fairness_examples() {
        let x = [0.0, 0.0, 6.0, 8.0];
        let m = FeatureMatrix::new(&x, 2).unwrap();
        let cfg = FairnessConfig::default();
        let v = fairness_individual(&[0.0, 2f64.ln()], &m, &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.9, epsilon = 1e-12);
        assert_eq!(fairness_individual(&[0.3, 0.3], &m, &cfg).unwrap(), 0.0);
        let big = FairnessConfig { gamma: 1e9, ..cfg };
        assert_eq!(fairness_individual(&[0.0, 2f64.ln()], &m, &big).unwrap(), 0.0);
    }

    #[test]
    fn group_fairness_examples() {
        let s = [0.0, 0.0, 3f64.ln(), 3f64.ln()];
        let g = attr(&[0, 0, 1, 1]);
        assert_abs_diff_eq!(fairness_group(&s, &g).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fairness_group(&s, &attr(&[0; 4])).unwrap(), 0.0, epsilon = 1e-15);
        let permuted = [3f64.ln(), 0.0, 3f64.ln(), 0.0];
        let gp = attr(&[1, 0, 1, 0]);
        assert_abs_diff_eq!(fairness_group(&permuted, &gp).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intersectional_examples() {
        let a = attr(&[0, 0, 1, 1]);
        let b = attr(&[0, 1, 0, 1]);
        assert_eq!(fairness_intersectional(&[0.2; 4], &[&a, &b]).unwrap(), 0.0);
        let two = attr(&[0, 1]);
        assert_abs_diff_eq!(
            fairness_intersectional(&[1.0, 0.0], &[&two]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(fairness_intersectional(&[], &[]).is_err());
    }

    #[test]
    fn average_examples() {
        assert_eq!(fairness_average(0.0, 0.0, 0.0), 0.0);
        assert_eq!(fairness_average(3.0, 0.0, 0.0), 1.0);
        // Reported DRO-COX fairness row: F_I, F_G, F_cap -> F_A.
        assert_abs_diff_eq!(fairness_average(0.2793, 0.4694, 0.7880), 0.5122, epsilon = 5e-5);
    }

    #[test]
    fn km_censoring_examples() {
        let g = km_censoring(&[1.0, 2.0, 3.0], &[true, true, true]);
        assert_eq!(g.at(10.0), 1.0);
        let g = km_censoring(&[1.0, 2.0], &[false, true]);
        assert_eq!(g.at(0.5), 1.0);
        assert_eq!(g.at(1.0), 0.5);
        assert_eq!(g.at(5.0), 0.5);
        assert_eq!(g.left_limit(1.0), 1.0);
    }

    #[test]
    fn brier_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        let grid = [1.5, 2.5, 3.5];
        let oracle = |i: usize, t: f64| if t < y[i] { 1.0 } else { 0.0 };
        assert_eq!(integrated_brier(oracle, &y, &e, &grid).unwrap(), 0.0);
        assert_abs_diff_eq!(
            integrated_brier(|_, _| 0.5, &y, &e, &grid).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(integrated_brier(|_, _| 0.5, &y, &e, &[]).is_err());
    }

    #[test]
    fn brier_in_unit_interval() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(10);
        for _ in 0..20 {
            let n = 50;
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            let e: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let grid: Vec<f64> = (1..20).map(|k| k as f64 * 0.4).collect();
            let v = integrated_brier(|i, t| p[i].powf(t), &y, &e, &grid).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn auc_examples() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let e = [true; 5];
        let grid = [1.5, 2.5, 3.5, 4.5];
        let perfect = [5.0, 4.0, 3.0, 2.0, 1.0];
        let (curve, mean) = time_dependent_auc_curve(&perfect, &y, &e, &grid).unwrap();
        assert!(curve.iter().all(|(_, a)| *a == 1.0));
        assert_eq!(mean, 1.0);
        assert_eq!(time_dependent_auc(&[1.0; 5], &y, &e, &grid).unwrap(), 0.5);
        assert!(time_dependent_auc(&perfect, &y, &e, &[10.0]).is_err());
    }

    #[test]
    fn auc_single_time_is_mann_whitney() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(11);
        let n = 40;
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u32))).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let e = vec![true; n];
        let t = 5.0;
        let cases: Vec<f64> = (0..n).filter(|&i| y[i] <= t).map(|i| s[i]).collect();
        let controls: Vec<f64> = (0..n).filter(|&i| y[i] > t).map(|i| s[i]).collect();
        // Rank-sum form of the Mann-Whitney statistic with midranks.
        let mut pooled: Vec<(f64, bool)> = cases
            .iter()
            .map(|&v| (v, true))
            .chain(controls.iter().map(|&v| (v, false)))
            .collect();
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ranks = vec![0.0; pooled.len()];
        let mut k = 0;
        while k < pooled.len() {
            let mut end = k;
            while end < pooled.len() && pooled[end].0 == pooled[k].0 {
                end += 1;
            }
            let mid = (k + end + 1) as f64 / 2.0;
            ranks[k..end].iter_mut().for_each(|r| *r = mid);
            k = end;
        }
        let r_cases: f64 = pooled.iter().zip(&ranks).filter(|(p, _)| p.1).map(|(_, r)| r).sum();
        let n1 = cases.len() as f64;
        let n0 = controls.len() as f64;
        let u = r_cases - n1 * (n1 + 1.0) / 2.0;
        let expected = u / (n1 * n0);
        let got = time_dependent_auc(&s, &y, &e, &[t]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn lpl_examples() {
        assert_eq!(test_lpl(&[0.1, 0.2], &[1.0, 2.0], &[false, false]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            test_lpl(&[0.0, 0.0], &[1.0, 2.0], &[true, true]).unwrap(),
            -0.3466,
            epsilon = 1e-4
        );
    }

    #[test]
    fn grid_defaults() {
        let y: Vec<f64> = (1..=101).map(f64::from).collect();
        let e = vec![true; 101];
        let g = default_time_grid(&y, &e, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[99], 96.0, epsilon = 1e-12);
    }

    #[test]
    fn report_renders_na() {
        let r = MetricsReport {
            c_index: Some(0.75),
            ..MetricsReport::default()
        };
        assert_eq!(r.csv_row(), "0.75,NA,NA,NA,NA,NA,NA,NA,NA");
        assert!(r.table().contains("NA"));
        assert_eq!(MetricsReport::csv_header().split(',').count(), 9);
    }
}
