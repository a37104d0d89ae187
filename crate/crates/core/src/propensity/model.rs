//! Logistic regression and one-hidden-layer networks trained with Adam on
//! binary cross-entropy, with early stopping on validation accuracy.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::textfeat::FeatureVector;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Oracle,
    /// Constant score; every estimator then reduces to the difference in means.
    Unadjusted,
    Logistic,
    Neural,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    UnigramBinary,
    BigramBinary,
    BigramCount,
    Lda,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::UnigramBinary,
        FeatureKind::BigramBinary,
        FeatureKind::BigramCount,
        FeatureKind::Lda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::UnigramBinary => "unigram_binary",
            FeatureKind::BigramBinary => "bigram_binary",
            FeatureKind::BigramCount => "bigram_count",
            FeatureKind::Lda => "lda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 1e-3,
            max_epochs: 100,
            batch_size: 32,
            l2: 0.0,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<usize>,
    #[serde(default)]
    pub train: TrainParams,
}

impl ModelSpec {
    pub fn oracle() -> Self {
        Self::bare(ModelKind::Oracle)
    }

    pub fn unadjusted() -> Self {
        Self::bare(ModelKind::Unadjusted)
    }

    pub fn external() -> Self {
        Self::bare(ModelKind::External)
    }

    fn bare(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            features: None,
            hidden_size: None,
            train: TrainParams::default(),
        }
    }

    pub fn logistic(features: FeatureKind) -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            features: Some(features),
            hidden_size: None,
            train: TrainParams::default(),
        }
    }

    /// One hidden layer of 10 rectified-linear units.
    pub fn neural(features: FeatureKind) -> Self {
        ModelSpec {
            kind: ModelKind::Neural,
            features: Some(features),
            hidden_size: Some(10),
            train: TrainParams::default(),
        }
    }

    pub fn with_train(mut self, train: TrainParams) -> Self {
        self.train = train;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let trainable = matches!(self.kind, ModelKind::Logistic | ModelKind::Neural);
        if trainable != self.features.is_some() {
            return Err(Error::Parameter(format!(
                "{}: features must be set exactly for logistic and neural models",
                self.label()
            )));
        }
        if (self.kind == ModelKind::Neural) != self.hidden_size.is_some() {
            return Err(Error::Parameter("hidden_size must be set exactly for neural models".into()));
        }
        if self.hidden_size == Some(0) {
            return Err(Error::Parameter("hidden_size must be positive".into()));
        }
        if trainable {
            let t = &self.train;
            if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) || t.batch_size == 0 || t.l2 < 0.0 {
                return Err(Error::Parameter(format!("invalid training parameters {t:?}")));
            }
        }
        Ok(())
    }

    /// Short identifier such as `logistic_bigram_count` or `oracle`.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            ModelKind::Oracle => "oracle",
            ModelKind::Unadjusted => "unadjusted",
            ModelKind::Logistic => "logistic",
            ModelKind::Neural => "neural",
            ModelKind::External => "external",
        };
        match self.features {
            Some(f) => format!("{kind}_{}", f.as_str()),
            None => kind.to_string(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Model input: feature rows and treatments only. Outcomes, latent classes
/// and true propensities never reach the fitting code.
#[derive(Debug, Clone)]
pub struct LabeledFeatures {
    pub dim: usize,
    pub rows: Vec<FeatureVector>,
    pub treatments: Vec<bool>,
}

impl LabeledFeatures {
    pub fn new(dim: usize, rows: Vec<FeatureVector>, treatments: Vec<bool>) -> Result<Self> {
        if rows.len() != treatments.len() {
            return Err(Error::Parameter(format!(
                "{} feature rows but {} treatments",
                rows.len(),
                treatments.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.dim != dim) {
            return Err(Error::Shape { expected: dim, got: r.dim });
        }
        Ok(LabeledFeatures { dim, rows, treatments })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

/// Trained parameters.
///
/// Logistic layout: `[w_0 .. w_{d-1}, b]`. Neural layout:
/// `[W1 (feature-major, d*h), b1 (h), w2 (h), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub dim: usize,
    pub parameters: Vec<f64>,
    /// Per-column divisor applied to inputs (maximum absolute training value).
    pub input_scale: Vec<f64>,
    pub validation_accuracy: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

#[derive(Clone, Copy)]
enum Arch {
    Logistic,
    Neural { hidden: usize },
}

impl Arch {
    fn of(spec: &ModelSpec) -> Arch {
        match (spec.kind, spec.hidden_size) {
            (ModelKind::Neural, Some(h)) => Arch::Neural { hidden: h },
            _ => Arch::Logistic,
        }
    }

    fn n_params(self, dim: usize) -> usize {
        match self {
            Arch::Logistic => dim + 1,
            Arch::Neural { hidden } => dim * hidden + 2 * hidden + 1,
        }
    }

    /// Indices of bias parameters, which are not L2-penalized.
    fn is_bias(self, dim: usize, i: usize) -> bool {
        match self {
            Arch::Logistic => i == dim,
            Arch::Neural { hidden } => {
                let b1 = dim * hidden;
                (b1..b1 + hidden).contains(&i) || i == b1 + 2 * hidden
            }
        }
    }
}

/// Forward pass returning the logit; `hidden_buf` receives pre-activations.
fn logit(arch: Arch, params: &[f64], scale: &[f64], x: &FeatureVector, hidden_buf: &mut Vec<f64>) -> f64 {
    match arch {
        Arch::Logistic => {
            let dim = scale.len();
            let mut z = params[dim];
            for &(c, v) in &x.entries {
                let c = c as usize;
                z += params[c] * v / scale[c];
            }
            z
        }
        Arch::Neural { hidden } => {
            let dim = scale.len();
            let b1 = dim * hidden;
            hidden_buf.clear();
            hidden_buf.extend_from_slice(&params[b1..b1 + hidden]);
            for &(c, v) in &x.entries {
                let c = c as usize;
                let xv = v / scale[c];
                let row = &params[c * hidden..(c + 1) * hidden];
                for (h, w) in hidden_buf.iter_mut().zip(row) {
                    *h += w * xv;
                }
            }
            let w2 = &params[b1 + hidden..b1 + 2 * hidden];
            let mut z = params[b1 + 2 * hidden];
            for (h, w) in hidden_buf.iter().zip(w2) {
                z += h.max(0.0) * w;
            }
            z
        }
    }
}

/// Adds d(loss)/d(params) for one example, given d(loss)/d(logit) = `dz`.
fn accumulate_grad(
    arch: Arch,
    params: &[f64],
    scale: &[f64],
    x: &FeatureVector,
    pre: &[f64],
    dz: f64,
    grad: &mut [f64],
) {
    let dim = scale.len();
    match arch {
        Arch::Logistic => {
            for &(c, v) in &x.entries {
                let c = c as usize;
                grad[c] += dz * v / scale[c];
            }
            grad[dim] += dz;
        }
        Arch::Neural { hidden } => {
            let b1 = dim * hidden;
            let w2 = b1 + hidden;
            let b2 = w2 + hidden;
            grad[b2] += dz;
            for j in 0..hidden {
                if pre[j] > 0.0 {
                    grad[w2 + j] += dz * pre[j];
                    let dh = dz * params[w2 + j];
                    grad[b1 + j] += dh;
                    for &(c, v) in &x.entries {
                        let c = c as usize;
                        grad[c * hidden + j] += dh * v / scale[c];
                    }
                }
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from the logit: softplus(z) - t z.
fn bce(z: f64, t: bool) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - if t { z } else { 0.0 }
}

fn evaluate(arch: Arch, params: &[f64], scale: &[f64], data: &LabeledFeatures) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let mut buf = Vec::new();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &t) in data.rows.iter().zip(&data.treatments) {
        let z = logit(arch, params, scale, x, &mut buf);
        loss += bce(z, t);
        if (sigmoid(z) >= 0.5) == t {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    (loss / n, correct as f64 / n)
}

fn init_params(arch: Arch, dim: usize, seed: u64) -> Vec<f64> {
    let mut p = vec![0.0; arch.n_params(dim)];
    if let Arch::Neural { hidden } = arch {
        let mut rng = substream(seed, &[b"init"]);
        let a1 = 1.0 / (dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let b1 = dim * hidden;
        for v in &mut p[..b1 + hidden] {
            *v = rng.random_range(-a1..a1);
        }
        for v in &mut p[b1 + hidden..b1 + 2 * hidden] {
            *v = rng.random_range(-a2..a2);
        }
    }
    p
}

fn input_scale(dim: usize, data: &LabeledFeatures) -> Vec<f64> {
    let mut s = vec![0.0f64; dim];
    for r in &data.rows {
        for &(c, v) in &r.entries {
            let c = c as usize;
            s[c] = s[c].max(v.abs());
        }
    }
    s.iter_mut().for_each(|v| {
        if *v == 0.0 {
            *v = 1.0
        }
    });
    s
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a logistic or neural propensity model.
///
/// After every epoch the model is scored on `validation`; the parameters with
/// the best validation accuracy (ties broken by lower validation loss) are
/// kept, and training stops after `patience` epochs without improvement.
/// With an empty validation set the training set is monitored instead.
pub fn fit(spec: &ModelSpec, train: &LabeledFeatures, validation: &LabeledFeatures) -> Result<FittedModel> {
    spec.validate()?;
    if !matches!(spec.kind, ModelKind::Logistic | ModelKind::Neural) {
        return Err(Error::Fit(format!("{} models are not trained", spec.label())));
    }
    if train.is_empty() {
        return Err(Error::Fit("empty training set".into()));
    }
    let dim = train.dim;
    if dim == 0 {
        return Err(Error::Fit("feature dimension is zero".into()));
    }
    if validation.dim != dim {
        return Err(Error::Shape {
            expected: dim,
            got: validation.dim,
        });
    }
    let monitor = if validation.is_empty() { train } else { validation };
    let arch = Arch::of(spec);
    let tp = &spec.train;
    let scale = input_scale(dim, train);
    let mut params = init_params(arch, dim, tp.seed);
    let n_params = params.len();
    let mut adam = Adam::new(n_params);
    let mut grad = vec![0.0; n_params];
    let mut pre = Vec::new();

    let (val_loss, val_acc) = evaluate(arch, &params, &scale, monitor);
    let mut best = (val_acc, val_loss, params.clone(), 0usize);
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=tp.max_epochs {
        order.shuffle(&mut substream(tp.seed, &[b"epoch", &(epoch as u64).to_le_bytes()]));
        for batch in order.chunks(tp.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &train.rows[i];
                let z = logit(arch, &params, &scale, x, &mut pre);
                let dz = sigmoid(z) - if train.treatments[i] { 1.0 } else { 0.0 };
                accumulate_grad(arch, &params, &scale, x, &pre, dz, &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            for (i, g) in grad.iter_mut().enumerate() {
                *g *= inv;
                if tp.l2 > 0.0 && !arch.is_bias(dim, i) {
                    *g += tp.l2 * params[i];
                }
            }
            adam.update(&mut params, &grad, tp.learning_rate);
        }
        epochs_run = epoch;
        let (train_loss, _) = evaluate(arch, &params, &scale, train);
        if !train_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let (val_loss, val_acc) = evaluate(arch, &params, &scale, monitor);
        history.push(EpochStats {
            epoch,
            train_loss,
            validation_loss: val_loss,
            validation_accuracy: val_acc,
        });
        let improved = val_acc > best.0 || (val_acc == best.0 && val_loss < best.1);
        if improved {
            best = (val_acc, val_loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tp.patience {
                break;
            }
        }
    }

    Ok(FittedModel {
        version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        dim,
        parameters: best.2,
        input_scale: scale,
        validation_accuracy: best.0,
        epochs_run,
        best_epoch: best.3,
        history,
    })
}

impl FittedModel {
    /// Zero-weight logistic model that predicts 0.5 everywhere.
    pub fn zero_logistic(spec: ModelSpec, dim: usize) -> FittedModel {
        FittedModel {
            version: MODEL_FORMAT_VERSION,
            spec,
            dim,
            parameters: vec![0.0; dim + 1],
            input_scale: vec![1.0; dim],
            validation_accuracy: 0.0,
            epochs_run: 0,
            best_epoch: 0,
            history: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<FittedModel> {
        let m: FittedModel = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parameter(format!("unsupported model version {}", m.version)));
        }
        let expected = Arch::of(&m.spec).n_params(m.dim);
        if m.parameters.len() != expected || m.input_scale.len() != m.dim {
            return Err(Error::Shape {
                expected,
                got: m.parameters.len(),
            });
        }
        Ok(m)
    }
}

/// Estimated P(T=1 | x), before clipping.
pub fn predict(model: &FittedModel, features: &FeatureVector) -> Result<f64> {
    if features.dim != model.dim {
        return Err(Error::Shape {
            expected: model.dim,
            got: features.dim,
        });
    }
    let z = logit(Arch::of(&model.spec), &model.parameters, &model.input_scale, features, &mut Vec::new());
    Ok(sigmoid(z))
}
