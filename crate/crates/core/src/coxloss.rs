//! Negative log partial likelihood of the Cox model, per record and on
//! average, the sample-split variant, their score gradients, and the
//! Breslow baseline hazard used to reconstruct survival curves.
//!
//! Risk sets use `Y_j >= Y_i` (Breslow tie handling): a record tied with an
//! event time, censored or not, is at risk at that time.

use std::io::Write;
use std::ops::Deref;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-record Cox losses `ℓ_i`. Censored records hold exactly 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossVector(pub Vec<f64>);

impl LossVector {
    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for LossVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for LossVector {
    fn from(v: Vec<f64>) -> Self {
        LossVector(v)
    }
}

/// Streaming log-sum-exp that rescales whenever a new maximum arrives.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    /// `Σ exp(x - max)`.
    sum: f64,
}

impl LogSumExp {
    const EMPTY: LogSumExp = LogSumExp {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Signed weighted sums `Σ w_i exp(a_i)` kept as two log-sum-exps.
#[derive(Debug, Clone, Copy)]
struct SignedLse {
    pos: LogSumExp,
    neg: LogSumExp,
}

impl SignedLse {
    const EMPTY: SignedLse = SignedLse {
        pos: LogSumExp::EMPTY,
        neg: LogSumExp::EMPTY,
    };

    fn add(&mut self, weight: f64, log_term: f64) {
        if weight > 0.0 {
            self.pos.add(weight.ln() + log_term);
        } else if weight < 0.0 {
            self.neg.add((-weight).ln() + log_term);
        }
    }

    /// `exp(shift) · Σ w_i exp(a_i)`.
    fn eval_shifted(&self, shift: f64) -> f64 {
        let part = |l: &LogSumExp| {
            if l.sum == 0.0 {
                0.0
            } else {
                (shift + l.value()).exp()
            }
        };
        part(&self.pos) - part(&self.neg)
    }
}

fn check_inputs(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Contract("empty input".into()));
    }
    if durations.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: durations.len(),
        });
    }
    if events.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: events.len(),
        });
    }
    if durations.iter().any(|y| !(*y >= 0.0)) {
        return Err(Error::Contract("durations must be nonnegative".into()));
    }
    Ok(())
}

/// Records ordered by observed time, grouped into runs of equal time.
/// Built once per dataset and reused across training iterations.
#[derive(Debug, Clone)]
pub struct RiskSets {
    /// Indices sorted by descending duration (ties by ascending index).
    order: Vec<usize>,
    /// Start offsets of equal-duration runs within `order`, plus `order.len()`.
    runs: Vec<usize>,
}

impl RiskSets {
    pub fn new(durations: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..durations.len()).collect();
        order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]).then(a.cmp(&b)));
        let mut runs = vec![0];
        for k in 1..order.len() {
            if durations[order[k]] != durations[order[k - 1]] {
                runs.push(k);
            }
        }
        runs.push(order.len());
        RiskSets { order, runs }
    }

    fn run_slices(&self) -> impl DoubleEndedIterator<Item = &[usize]> {
        self.runs.windows(2).map(|w| &self.order[w[0]..w[1]])
    }

    /// `log Σ_{j: Y_j ≥ Y_i} exp(f_j)` for every record.
    fn log_risk_sums(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; scores.len()];
        let mut acc = LogSumExp::EMPTY;
        for run in self.run_slices() {
            for &i in run {
                acc.add(scores[i]);
            }
            let v = acc.value();
            for &i in run {
                out[i] = v;
            }
        }
        out
    }

    pub fn losses(&self, scores: &[f64], events: &[bool]) -> LossVector {
        let log_s = self.log_risk_sums(scores);
        LossVector(
            (0..scores.len())
                .map(|i| {
                    if events[i] {
                        // The risk set contains i itself, so the loss is >= 0.
                        (log_s[i] - scores[i]).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    /// `∂/∂f_k Σ_i w_i ℓ_i` for every `k`:
    /// `-w_k δ_k + exp(f_k) Σ_{i: δ_i = 1, Y_i ≤ Y_k} w_i / S_i`.
    pub fn vjp(&self, scores: &[f64], events: &[bool], weights: &[f64]) -> Vec<f64> {
        let log_s = self.log_risk_sums(scores);
        let mut grad = vec![0.0; scores.len()];
        let mut acc = SignedLse::EMPTY;
        for run in self.run_slices().rev() {
            for &i in run {
                if events[i] {
                    acc.add(weights[i], -log_s[i]);
                }
            }
            for &k in run {
                let own = if events[k] { weights[k] } else { 0.0 };
                grad[k] = acc.eval_shifted(scores[k]) - own;
            }
        }
        grad
    }
}

/// `ℓ_i = -δ_i [f_i - log Σ_{j: Y_j ≥ Y_i} exp(f_j)]` for every record.
pub fn individual_cox_losses(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<LossVector> {
    check_inputs(scores, durations, events)?;
    Ok(RiskSets::new(durations).losses(scores, events))
}

/// Quadratic-time evaluation of the same losses, used as a reference.
pub fn individual_cox_losses_naive(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<LossVector> {
    check_inputs(scores, durations, events)?;
    let n = scores.len();
    Ok(LossVector(
        (0..n)
            .map(|i| {
                if !events[i] {
                    return 0.0;
                }
                let m = (0..n)
                    .filter(|&j| durations[j] >= durations[i])
                    .map(|j| scores[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..n)
                    .filter(|&j| durations[j] >= durations[i])
                    .map(|j| (scores[j] - m).exp())
                    .sum();
                m + s.ln() - scores[i]
            })
            .collect(),
    ))
}

/// Mean of the individual losses over all `n` records.
pub fn average_cox_loss(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<f64> {
    Ok(individual_cox_losses(scores, durations, events)?.mean())
}

/// Gradient of `Σ_i ℓ_i` with respect to the score vector.
pub fn cox_loss_upstream(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    cox_loss_vjp(scores, durations, events, &vec![1.0; scores.len()])
}

/// Gradient of `Σ_i w_i ℓ_i` with respect to the score vector.
pub fn cox_loss_vjp(scores: &[f64], durations: &[f64], events: &[bool], weights: &[f64]) -> Result<Vec<f64>> {
    check_inputs(scores, durations, events)?;
    if weights.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: weights.len(),
        });
    }
    Ok(RiskSets::new(durations).vjp(scores, events, weights))
}

/// Risk sets for the split loss: each record of `D1` is compared only with
/// itself and the records of `D2`.
#[derive(Debug, Clone)]
pub struct SplitRiskSets {
    d1: Vec<usize>,
    /// `D2` sorted by descending duration.
    d2_desc: Vec<usize>,
    /// For each position in `d1`, how many `D2` records have `Y_j ≥ Y_i`.
    reach: Vec<usize>,
}

impl SplitRiskSets {
    pub fn new(durations: &[f64], d1: &[usize], d2: &[usize]) -> Result<Self> {
        if d1.is_empty() {
            return Err(Error::Contract("D1 must be nonempty".into()));
        }
        let mut in_d2 = vec![false; durations.len()];
        for &j in d2 {
            if j >= durations.len() {
                return Err(Error::Contract(format!("index {j} out of range")));
            }
            in_d2[j] = true;
        }
        if let Some(&i) = d1.iter().find(|&&i| i >= durations.len() || in_d2[i]) {
            return Err(Error::Contract(format!("record {i} belongs to D2 or is out of range")));
        }
        let mut d2_desc = d2.to_vec();
        d2_desc.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]).then(a.cmp(&b)));
        let reach = d1
            .iter()
            .map(|&i| d2_desc.partition_point(|&j| durations[j] >= durations[i]))
            .collect();
        Ok(SplitRiskSets {
            d1: d1.to_vec(),
            d2_desc,
            reach,
        })
    }

    pub fn d1(&self) -> &[usize] {
        &self.d1
    }

    /// `log Φ_i` for each member of `D1`.
    fn log_phi(&self, scores: &[f64]) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(self.d2_desc.len() + 1);
        let mut acc = LogSumExp::EMPTY;
        prefix.push(acc);
        for &j in &self.d2_desc {
            acc.add(scores[j]);
            prefix.push(acc);
        }
        self.d1
            .iter()
            .zip(&self.reach)
            .map(|(&i, &c)| {
                let mut l = prefix[c];
                l.add(scores[i]);
                l.value()
            })
            .collect()
    }

    /// Split losses for the members of `D1`, in `D1` order.
    pub fn losses(&self, scores: &[f64], events: &[bool]) -> LossVector {
        let log_phi = self.log_phi(scores);
        LossVector(
            self.d1
                .iter()
                .zip(&log_phi)
                .map(|(&i, lp)| if events[i] { (lp - scores[i]).max(0.0) } else { 0.0 })
                .collect(),
        )
    }

    /// Gradient over all `n` scores of `Σ_{i∈D1} w_i ℓ̃_i`, where `weights`
    /// is indexed like `D1`.
    pub fn vjp(&self, scores: &[f64], events: &[bool], weights: &[f64]) -> Vec<f64> {
        let log_phi = self.log_phi(scores);
        let mut grad = vec![0.0; scores.len()];
        let mut buckets = vec![SignedLse::EMPTY; self.d2_desc.len()];
        for (pos, &i) in self.d1.iter().enumerate() {
            if !events[i] {
                continue;
            }
            let w = weights[pos];
            grad[i] += w * ((scores[i] - log_phi[pos]).exp() - 1.0);
            let c = self.reach[pos];
            if c > 0 {
                buckets[c - 1].add(w, -log_phi[pos]);
            }
        }
        // D2 member at descending position p is in Φ_i iff p < reach_i.
        let mut acc = SignedLse::EMPTY;
        for p in (0..self.d2_desc.len()).rev() {
            let b = buckets[p];
            if b.pos.sum > 0.0 {
                acc.pos.add(b.pos.value());
            }
            if b.neg.sum > 0.0 {
                acc.neg.add(b.neg.value());
            }
            let j = self.d2_desc[p];
            grad[j] += acc.eval_shifted(scores[j]);
        }
        grad
    }
}

/// `-δ_i [f_i - log(exp(f_i) + Σ_{j∈D2: Y_j ≥ Y_i} exp(f_j))]`.
pub fn split_individual_loss(
    i: usize,
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    d2: &[usize],
) -> Result<f64> {
    check_inputs(scores, durations, events)?;
    if i >= scores.len() {
        return Err(Error::Contract(format!("index {i} out of range")));
    }
    if d2.contains(&i) {
        return Err(Error::Contract(format!("record {i} is a member of D2")));
    }
    if !events[i] {
        return Ok(0.0);
    }
    let mut acc = LogSumExp::EMPTY;
    acc.add(scores[i]);
    for &j in d2 {
        if durations[j] >= durations[i] {
            acc.add(scores[j]);
        }
    }
    Ok((acc.value() - scores[i]).max(0.0))
}

/// Split losses for every member of `d1` against `d2`.
pub fn split_losses(
    scores: &[f64],
    durations: &[f64],
    events: &[bool],
    d1: &[usize],
    d2: &[usize],
) -> Result<LossVector> {
    check_inputs(scores, durations, events)?;
    Ok(SplitRiskSets::new(durations, d1, d2)?.losses(scores, events))
}

/// Breslow step estimate of the baseline hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHazard {
    /// Distinct event times, strictly increasing.
    pub times: Vec<f64>,
    pub increments: Vec<f64>,
    /// `Ĥ₀(t_j)`, the running sum of `increments`.
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    /// Right-continuous `Ĥ₀(t) = Σ_j 1[t_j ≤ t] ĥ₀_j`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&tj| tj <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "hazard_increment", "cumulative_hazard"])?;
        for ((t, h), c) in self.times.iter().zip(&self.increments).zip(&self.cumulative) {
            w.write_record([format!("{t:?}"), format!("{h:?}"), format!("{c:?}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// `ĥ₀_j = d_j / Σ_i 1[Y_i ≥ t_j] exp(f_i)` at each distinct event time.
pub fn breslow_baseline(scores: &[f64], durations: &[f64], events: &[bool]) -> Result<BaselineHazard> {
    check_inputs(scores, durations, events)?;
    if !events.iter().any(|&e| e) {
        return Err(Error::Contract("Breslow estimator needs at least one event".into()));
    }
    let sets = RiskSets::new(durations);
    let mut times = Vec::new();
    let mut increments = Vec::new();
    let mut acc = LogSumExp::EMPTY;
    for run in sets.run_slices() {
        for &i in run {
            acc.add(scores[i]);
        }
        let d = run.iter().filter(|&&i| events[i]).count();
        if d > 0 {
            times.push(durations[run[0]]);
            // d / (exp(max) · sum), exact for f ≡ 0.
            increments.push(d as f64 / acc.sum * (-acc.max).exp());
        }
    }
    times.reverse();
    increments.reverse();
    let cumulative = increments
        .iter()
        .scan(0.0, |s, h| {
            *s += h;
            Some(*s)
        })
        .collect();
    Ok(BaselineHazard {
        times,
        increments,
        cumulative,
    })
}

/// `Ŝ(t | x) = exp(-Ĥ₀(t) · exp(f(x)))`.
pub fn survival_estimate(bh: &BaselineHazard, score: f64, t: f64) -> f64 {
    let h = bh.cumulative_hazard(t);
    if h == 0.0 {
        return 1.0;
    }
    (-h * score.exp()).exp()
}
