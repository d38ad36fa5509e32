//! Log partial hazard functions `f(x; θ)`: a linear score and a two-layer
//! ReLU network, with exact backward passes and an Adam optimizer.

use std::ops::{Deref, DerefMut};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, Dataset};
use crate::error::{Error, Result};

/// Hidden width used for the nonlinear model unless overridden.
pub const DEFAULT_HIDDEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "mlp" | "nonlinear" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

/// Borrowed row-major `rows × cols` matrix of feature vectors.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMatrix<'a> {
    data: &'a [f64],
    cols: usize,
}

impl<'a> FeatureMatrix<'a> {
    pub fn new(data: &'a [f64], cols: usize) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::Shape {
                expected: cols,
                actual: data.len(),
            });
        }
        Ok(FeatureMatrix { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl Dataset {
    pub fn matrix(&self) -> FeatureMatrix<'_> {
        FeatureMatrix {
            data: self.features(),
            cols: self.n_features(),
        }
    }
}

/// All model parameters as one flat vector.
///
/// Canonical order: `Linear` is just its weights; `Mlp` is `W1` row-major
/// (`hidden × input_dim`), then `b1`, then `W2`, then `b2`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum RiskModel {
    Linear {
        weights: Vec<f64>,
    },
    Mlp {
        input_dim: usize,
        hidden: usize,
        /// `hidden × input_dim`, row-major.
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

impl RiskModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            RiskModel::Linear { .. } => ModelKind::Linear,
            RiskModel::Mlp { .. } => ModelKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RiskModel::Linear { weights } => weights.len(),
            RiskModel::Mlp { input_dim, .. } => *input_dim,
        }
    }

    pub fn hidden(&self) -> Option<usize> {
        match self {
            RiskModel::Linear { .. } => None,
            RiskModel::Mlp { hidden, .. } => Some(*hidden),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            RiskModel::Linear { weights } => weights.len(),
            RiskModel::Mlp { input_dim, hidden, .. } => hidden * input_dim + 2 * hidden + 1,
        }
    }

    pub fn params(&self) -> ParamVector {
        match self {
            RiskModel::Linear { weights } => ParamVector(weights.clone()),
            RiskModel::Mlp { w1, b1, w2, b2, .. } => {
                let mut v = Vec::with_capacity(self.n_params());
                v.extend_from_slice(w1);
                v.extend_from_slice(b1);
                v.extend_from_slice(w2);
                v.push(*b2);
                ParamVector(v)
            }
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape {
                expected: self.n_params(),
                actual: params.len(),
            });
        }
        match self {
            RiskModel::Linear { weights } => weights.copy_from_slice(params),
            RiskModel::Mlp {
                input_dim,
                hidden,
                w1,
                b1,
                w2,
                b2,
            } => {
                let (h, d) = (*hidden, *input_dim);
                let (a, rest) = params.split_at(h * d);
                let (b, rest) = rest.split_at(h);
                let (c, rest) = rest.split_at(h);
                w1.copy_from_slice(a);
                b1.copy_from_slice(b);
                w2.copy_from_slice(c);
                *b2 = rest[0];
            }
        }
        Ok(())
    }

    /// Same architecture with parameters replaced by `params`.
    pub fn with_params(&self, params: &[f64]) -> Result<RiskModel> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    fn check_dim(&self, x: &FeatureMatrix<'_>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            RiskModel::Linear { weights } => dot(weights, x),
            RiskModel::Mlp {
                input_dim,
                hidden,
                w1,
                b1,
                w2,
                b2,
            } => {
                let mut out = *b2;
                for k in 0..*hidden {
                    let z = dot(&w1[k * input_dim..(k + 1) * input_dim], x) + b1[k];
                    if z > 0.0 {
                        out += w2[k] * z;
                    }
                }
                out
            }
        }
    }

    /// `f(x_i; θ)` for every row of `x`.
    pub fn risk_scores(&self, x: &FeatureMatrix<'_>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..x.rows()).map(|i| self.score(x.row(i))).collect())
    }

    /// Gradient of `Σ_i upstream_i · f(x_i; θ)` with respect to θ. The ReLU
    /// derivative at exactly zero is taken to be zero.
    pub fn backward(&self, x: &FeatureMatrix<'_>, upstream: &[f64]) -> Result<ParamVector> {
        self.check_dim(x)?;
        if upstream.len() != x.rows() {
            return Err(Error::Shape {
                expected: x.rows(),
                actual: upstream.len(),
            });
        }
        let mut grad = ParamVector::zeros(self.n_params());
        match self {
            RiskModel::Linear { .. } => {
                for (i, &u) in upstream.iter().enumerate() {
                    if u != 0.0 {
                        for (g, xv) in grad.iter_mut().zip(x.row(i)) {
                            *g += u * xv;
                        }
                    }
                }
            }
            RiskModel::Mlp {
                input_dim,
                hidden,
                w1,
                b1,
                w2,
                ..
            } => {
                let (h, d) = (*hidden, *input_dim);
                let (g_w1, rest) = grad.split_at_mut(h * d);
                let (g_b1, rest) = rest.split_at_mut(h);
                let (g_w2, g_b2) = rest.split_at_mut(h);
                for (i, &u) in upstream.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    let xi = x.row(i);
                    g_b2[0] += u;
                    for k in 0..h {
                        let z = dot(&w1[k * d..(k + 1) * d], xi) + b1[k];
                        if z > 0.0 {
                            g_w2[k] += u * z;
                            let dz = u * w2[k];
                            g_b1[k] += dz;
                            for (g, xv) in g_w1[k * d..(k + 1) * d].iter_mut().zip(xi) {
                                *g += dz * xv;
                            }
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform_fan_in(rng: &mut impl Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Draws every weight matrix and bias of fan-in `m` from `U[-1/√m, 1/√m]`,
/// the default initialization of common deep-learning frameworks. The
/// linear model has no intercept; it is absorbed by the baseline hazard.
pub fn init_params(kind: ModelKind, input_dim: usize, hidden: usize, seed: u64) -> Result<RiskModel> {
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    match kind {
        ModelKind::Linear => Ok(RiskModel::Linear {
            weights: uniform_fan_in(&mut rng, input_dim, input_dim),
        }),
        ModelKind::Mlp => {
            if hidden == 0 {
                return Err(Error::Config("hidden width must be positive".into()));
            }
            let w1 = uniform_fan_in(&mut rng, input_dim, hidden * input_dim);
            let b1 = uniform_fan_in(&mut rng, input_dim, hidden);
            let w2 = uniform_fan_in(&mut rng, hidden, hidden);
            let b2 = uniform_fan_in(&mut rng, hidden, 1)[0];
            Ok(RiskModel::Mlp {
                input_dim,
                hidden,
                w1,
                b1,
                w2,
                b2,
            })
        }
    }
}

/// Adam with bias-corrected moments. Defaults: β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One in-place update of `params` along `grad`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::Shape {
                expected: self.first_moment.len(),
                actual: grad.len().min(params.len()),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient component {i} at step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(
    mut state: AdamState,
    mut params: ParamVector,
    grad: &ParamVector,
) -> Result<(ParamVector, AdamState)> {
    state.update(&mut params, grad)?;
    Ok((params, state))
}

/// On-disk model: variant, dimensions, flat parameters and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub variant: ModelKind,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    pub params: ParamVector,
    #[serde(default)]
    pub feature_names: Vec<String>,
    pub seed: u64,
    /// The training configuration that produced the parameters.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model(model: &RiskModel, feature_names: Vec<String>, seed: u64, config: serde_json::Value) -> Self {
        Checkpoint {
            variant: model.kind(),
            input_dim: model.input_dim(),
            hidden: model.hidden(),
            params: model.params(),
            feature_names,
            seed,
            config,
        }
    }

    pub fn to_model(&self) -> Result<RiskModel> {
        let template = match self.variant {
            ModelKind::Linear => RiskModel::Linear {
                weights: vec![0.0; self.input_dim],
            },
            ModelKind::Mlp => {
                let h = self
                    .hidden
                    .ok_or_else(|| Error::Schema("mlp checkpoint without hidden width".into()))?;
                RiskModel::Mlp {
                    input_dim: self.input_dim,
                    hidden: h,
                    w1: vec![0.0; h * self.input_dim],
                    b1: vec![0.0; h],
                    w2: vec![0.0; h],
                    b2: 0.0,
                }
            }
        };
        if !self.params.is_finite() {
            return Err(Error::Schema("checkpoint holds non-finite parameters".into()));
        }
        template.with_params(&self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(data: &[f64], cols: usize) -> FeatureMatrix<'_> {
        FeatureMatrix::new(data, cols).unwrap()
    }

    #[test]
    fn linear_scores() {
        let zero = RiskModel::Linear {
            weights: vec![0.0, 0.0],
        };
        assert_eq!(zero.risk_scores(&mat(&[1.0, 2.0, 3.0, 4.0], 2)).unwrap(), [0.0, 0.0]);
        let m = RiskModel::Linear {
            weights: vec![1.0, 2.0],
        };
        assert_eq!(m.risk_scores(&mat(&[3.0, 4.0], 2)).unwrap(), [11.0]);
        assert!(matches!(
            m.risk_scores(&mat(&[1.0, 2.0, 3.0], 3)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn mlp_hand_evaluation() {
        let m = RiskModel::Mlp {
            input_dim: 2,
            hidden: 2,
            w1: vec![1.0, 0.0, 0.0, 1.0],
            b1: vec![0.0, 0.0],
            w2: vec![1.0, 1.0],
            b2: 0.0,
        };
        // relu(-1) + relu(2)
        assert_eq!(m.risk_scores(&mat(&[-1.0, 2.0], 2)).unwrap(), [2.0]);
    }

    #[test]
    fn backward_basics() {
        let m = init_params(ModelKind::Mlp, 3, 4, 1).unwrap();
        let x = [0.3, -1.0, 2.0, 1.0, 1.0, 1.0];
        let g = m.backward(&mat(&x, 3), &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let lin = RiskModel::Linear {
            weights: vec![0.5, -0.5, 2.0],
        };
        let g = lin.backward(&mat(&x[..3], 3), &[2.5]).unwrap();
        assert_eq!(g.0, vec![0.75, -2.5, 5.0]);
    }

    #[test]
    fn relu_kink_has_zero_derivative() {
        let m = RiskModel::Mlp {
            input_dim: 1,
            hidden: 1,
            w1: vec![1.0],
            b1: vec![0.0],
            w2: vec![3.0],
            b2: 0.0,
        };
        let g = m.backward(&mat(&[0.0], 1), &[1.0]).unwrap();
        assert_eq!(g.0, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn init_bounds_counts_and_determinism() {
        let lin = init_params(ModelKind::Linear, 6, DEFAULT_HIDDEN, 3).unwrap();
        assert_eq!(lin.n_params(), 6);
        assert!(lin.params().iter().all(|w| w.abs() <= 1.0 / 6f64.sqrt()));
        let mlp = init_params(ModelKind::Mlp, 6, 24, 3).unwrap();
        assert_eq!(mlp.n_params(), 193);
        assert_eq!(mlp.params().len(), 193);
        assert_eq!(mlp, init_params(ModelKind::Mlp, 6, 24, 3).unwrap());
        assert_ne!(mlp, init_params(ModelKind::Mlp, 6, 24, 4).unwrap());
        if let RiskModel::Mlp { w1, w2, .. } = &mlp {
            assert!(w1.iter().all(|w| w.abs() <= 1.0 / 6f64.sqrt()));
            assert!(w2.iter().all(|w| w.abs() <= 1.0 / 24f64.sqrt()));
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let state = AdamState::new(3, 0.1);
        let p = ParamVector(vec![1.0, -2.0, 3.0]);
        let (q, s) = adam_step(state, p.clone(), &ParamVector::zeros(3)).unwrap();
        assert_eq!(q, p);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step() {
        let (q, _) = adam_step(AdamState::new(1, 0.1), ParamVector(vec![0.0]), &ParamVector(vec![1.0])).unwrap();
        assert_abs_diff_eq!(q[0], -0.1 / (1.0 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn adam_is_not_linear_in_learning_rate() {
        let g = ParamVector(vec![0.7]);
        let (p1, s1) = adam_step(AdamState::new(1, 0.1), ParamVector(vec![0.0]), &g).unwrap();
        let (twice, _) = adam_step(s1, p1, &g).unwrap();
        let (once, _) = adam_step(AdamState::new(1, 0.2), ParamVector(vec![0.0]), &g).unwrap();
        assert_ne!(twice[0], once[0]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut s = AdamState::new(1, 0.1);
        let mut p = vec![0.0];
        assert!(matches!(s.update(&mut p, &[f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_params(ModelKind::Mlp, 3, 5, 9).unwrap();
        let ck = Checkpoint::from_model(
            &m,
            vec!["a".into(), "b".into(), "c".into()],
            9,
            serde_json::json!({"lr": 0.01}),
        );
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_model().unwrap(), m);
    }
}
