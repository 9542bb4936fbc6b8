//! Small forecasting experiments: linear and one-hidden-layer models trained
//! with hand-written backpropagation on synthetic hybrid series, the
//! SSNR x horizon error surface and the pure-sinusoid spectral experiment.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{optimal_mse_baseline, spearman, BaselineMode, SurfacePoint};
use crate::error::{EobError, Result};
use crate::losses::{
    harmonized_l1, harmonized_l2, temporal_l1, temporal_l2, update_ema, EmaMagnitudes, HarmonizedConfig, LossEval,
    Norm,
};
use crate::processes::{
    synthesize_deterministic, synthesize_hybrid, ArSpec, DeterministicSpec, HybridSpec, InnovationDist,
    InnovationKind,
};
use crate::rng::{self, derive_seed};
use crate::transforms::{dft_forward, Spectrum, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Linear,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn slope(self, pre: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub kind: ModelKind,
    pub input_len: usize,
    pub output_len: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_hidden() -> usize {
    64
}

impl ModelSpec {
    pub fn linear(input_len: usize, output_len: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Linear,
            input_len,
            output_len,
            hidden: default_hidden(),
            activation: Activation::Tanh,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.output_len == 0 {
            return Err(EobError::invalid("model", "input_len and output_len must be at least 1"));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden == 0 {
            return Err(EobError::invalid("hidden", "must be at least 1"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (i, o, h) = (self.input_len, self.output_len, self.hidden);
        match self.kind {
            ModelKind::Linear => o * i + o,
            ModelKind::Mlp1 => h * i + h + o * h + o,
        }
    }
}

/// Parameters in one flat vector. Linear: `[W (o x i) | b]`; MLP:
/// `[W1 (h x i) | b1 | W2 (o x h) | b2]`, all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Model {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(spec.init_seed, 7);
        let mut params = Vec::with_capacity(spec.param_count());
        let mut layer = |fan_in: usize, count: usize, params: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..count).map(|_| rng.random_range(-bound..bound)));
        };
        let (i, o, h) = (spec.input_len, spec.output_len, spec.hidden);
        match spec.kind {
            ModelKind::Linear => layer(i, o * i + o, &mut params),
            ModelKind::Mlp1 => {
                layer(i, h * i + h, &mut params);
                layer(h, o * h + o, &mut params);
            }
        }
        Ok(Model { spec, params })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let (i, o, h) = (self.spec.input_len, self.spec.output_len, self.spec.hidden);
        let p = &self.params;
        match self.spec.kind {
            ModelKind::Linear => (0..o).map(|r| dot(&p[r * i..(r + 1) * i], x) + p[o * i + r]).collect(),
            ModelKind::Mlp1 => {
                let hidden = self.hidden(x);
                let base = h * i + h;
                (0..o)
                    .map(|r| dot(&p[base + r * h..base + (r + 1) * h], &hidden.1) + p[base + o * h + r])
                    .collect()
            }
        }
    }

    /// Pre-activations and activations of the hidden layer.
    fn hidden(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (i, h) = (self.spec.input_len, self.spec.hidden);
        let p = &self.params;
        let pre: Vec<f64> = (0..h).map(|r| dot(&p[r * i..(r + 1) * i], x) + p[h * i + r]).collect();
        let act = pre.iter().map(|&v| self.spec.activation.apply(v)).collect();
        (pre, act)
    }

    /// Adds `d loss / d params` for one sample to `grad`, given
    /// `d loss / d output`.
    pub fn accumulate_grad(&self, x: &[f64], grad_out: &[f64], grad: &mut [f64]) {
        let (i, o, h) = (self.spec.input_len, self.spec.output_len, self.spec.hidden);
        match self.spec.kind {
            ModelKind::Linear => {
                for r in 0..o {
                    let g = grad_out[r];
                    if g == 0.0 {
                        continue;
                    }
                    for (w, &xv) in grad[r * i..(r + 1) * i].iter_mut().zip(x) {
                        *w += g * xv;
                    }
                    grad[o * i + r] += g;
                }
            }
            ModelKind::Mlp1 => {
                let (pre, act) = self.hidden(x);
                let base = h * i + h;
                let p = &self.params;
                let mut back = vec![0.0; h];
                for r in 0..o {
                    let g = grad_out[r];
                    let row = base + r * h;
                    for c in 0..h {
                        grad[row + c] += g * act[c];
                        back[c] += g * p[row + c];
                    }
                    grad[base + o * h + r] += g;
                }
                for c in 0..h {
                    let d = back[c] * self.spec.activation.slope(pre[c], act[c]);
                    if d == 0.0 {
                        continue;
                    }
                    for (w, &xv) in grad[c * i..(c + 1) * i].iter_mut().zip(x) {
                        *w += d * xv;
                    }
                    grad[h * i + c] += d;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "adam_beta1")]
        beta1: f64,
        #[serde(default = "adam_beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn adam_beta1() -> f64 {
    0.9
}
fn adam_beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: adam_beta1(),
            beta2: adam_beta2(),
            eps: adam_eps(),
        }
    }
}

struct OptState {
    opt: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    fn new(opt: Optimizer, lr: f64, n: usize) -> Self {
        OptState {
            opt,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.opt {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for k in 0..params.len() {
                    let g = grad[k];
                    self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
                    self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
                    let mh = self.m[k] / c1;
                    let vh = self.v[k] / c2;
                    params[k] -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossConfig {
    /// Point-wise loss on the forecast window.
    Temporal {
        #[serde(default = "norm_l2")]
        norm: Norm,
    },
    Harmonized(HarmonizedConfig),
}

fn norm_l2() -> Norm {
    Norm::L2
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::Temporal { norm: Norm::L2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub loss: LossConfig,
    /// Chronological train fraction of the series.
    #[serde(default = "default_split")]
    pub split: f64,
    /// Trailing fraction of the training windows held out for early stopping.
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_split() -> f64 {
    0.7
}
fn default_val() -> f64 {
    0.2
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::default(),
            lr: default_lr(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            batch_size: default_batch(),
            loss: LossConfig::default(),
            split: default_split(),
            val_fraction: default_val(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(EobError::invalid("lr", format!("must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(EobError::invalid("split", format!("must lie in (0, 1), got {}", self.split)));
        }
        if !(self.val_fraction >= 0.0 && self.val_fraction < 1.0) {
            return Err(EobError::invalid("val_fraction", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(EobError::invalid("batch_size", "must be at least 1"));
        }
        if let LossConfig::Harmonized(h) = &self.loss {
            h.validate()?;
        }
        Ok(())
    }
}

/// Input/target window pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Windows {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Windows {
    /// Stride-1 windows of `history` inputs followed by `horizon` targets.
    pub fn from_series(series: &[f64], history: usize, horizon: usize) -> Self {
        let span = history + horizon;
        let count = (series.len() + 1).saturating_sub(span);
        Windows {
            inputs: (0..count).map(|s| series[s..s + history].to_vec()).collect(),
            targets: (0..count).map(|s| series[s + history..s + span].to_vec()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits off the trailing `fraction` of windows.
    pub fn split_tail(mut self, fraction: f64) -> (Self, Self) {
        let tail = ((self.len() as f64) * fraction).round() as usize;
        let head = self.len() - tail.min(self.len());
        let val = Windows {
            inputs: self.inputs.split_off(head),
            targets: self.targets.split_off(head),
        };
        (self, val)
    }
}

/// Per-point mean squared error of `model` on `data`.
pub fn evaluate_mse(model: &Model, data: &Windows) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let total: f64 = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, y)| {
            model
                .predict(x)
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / (data.len() * model.spec.output_len) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: Model,
    pub train_curve: Vec<f64>,
    /// Validation MSE per epoch (empty without a validation set).
    pub val_curve: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Objective {
    loss: LossConfig,
    transform: Option<Transform<f64>>,
    ema: Option<EmaMagnitudes<f64>>,
}

impl Objective {
    fn new(loss: LossConfig, horizon: usize) -> Result<Self> {
        Ok(match loss {
            LossConfig::Temporal { .. } => Objective {
                loss,
                transform: None,
                ema: None,
            },
            LossConfig::Harmonized(cfg) => Objective {
                loss,
                transform: Some(cfg.transform_for(horizon)?),
                ema: Some(EmaMagnitudes::new(horizon, cfg.beta)?),
            },
        })
    }

    /// Updates the magnitude average with the batch-mean target magnitudes.
    fn observe(&mut self, coeffs: &[&Spectrum<f64>]) -> Result<()> {
        if let Some(ema) = &self.ema {
            let n = ema.len();
            let mut m = vec![0.0; n];
            for c in coeffs {
                for (acc, v) in m.iter_mut().zip(c.magnitudes()) {
                    *acc += v;
                }
            }
            let k = coeffs.len().max(1) as f64;
            m.iter_mut().for_each(|v| *v /= k);
            self.ema = Some(update_ema(ema, &m)?);
        }
        Ok(())
    }

    /// Loss per forecast point and its gradient in the prediction.
    fn eval(&self, target: &[f64], target_coeffs: Option<&Spectrum<f64>>, pred: &[f64]) -> Result<LossEval<f64>> {
        let scale = 1.0 / target.len() as f64;
        let out = match (&self.loss, &self.transform, &self.ema, target_coeffs) {
            (LossConfig::Temporal { norm: Norm::L2 }, ..) => temporal_l2(target, pred)?,
            (LossConfig::Temporal { norm: Norm::L1 }, ..) => temporal_l1(target, pred)?,
            (LossConfig::Harmonized(cfg), Some(t), Some(ema), Some(f)) => {
                let f_hat = t.forward(pred)?;
                match cfg.norm {
                    Norm::L1 => harmonized_l1(f, &f_hat, ema, cfg, t)?,
                    Norm::L2 => harmonized_l2(f, &f_hat, ema, cfg, t)?,
                }
            }
            _ => unreachable!("harmonized objective always carries its transform"),
        };
        Ok(out.scaled(scale))
    }
}

/// Mini-batch training with early stopping on validation MSE. The best
/// validation parameters are returned.
pub fn train_model(spec: ModelSpec, train: &Windows, val: &Windows, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = Model::new(spec)?;
    if train.is_empty() {
        return Err(EobError::InsufficientData("no training windows".into()));
    }
    for (x, y) in train.inputs.iter().zip(&train.targets).chain(val.inputs.iter().zip(&val.targets)) {
        crate::error::check_len(spec.input_len, x.len())?;
        crate::error::check_len(spec.output_len, y.len())?;
    }
    let mut objective = Objective::new(cfg.loss, spec.output_len)?;
    let target_coeffs: Option<Vec<Spectrum<f64>>> = match &objective.transform {
        Some(t) => Some(train.targets.iter().map(|y| t.forward(y)).collect::<Result<_>>()?),
        None => None,
    };

    let mut opt = OptState::new(cfg.optimizer, cfg.lr, model.params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng::stream(cfg.seed, 11);
    let mut grad = vec![0.0; model.params.len()];
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            if let Some(tc) = &target_coeffs {
                let refs: Vec<&Spectrum<f64>> = batch.iter().map(|&i| &tc[i]).collect();
                objective.observe(&refs)?;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &train.inputs[i];
                let pred = model.predict(x);
                let coeffs = target_coeffs.as_ref().map(|tc| &tc[i]);
                let l = objective.eval(&train.targets[i], coeffs, &pred)?;
                epoch_loss += l.value;
                model.accumulate_grad(x, &l.grad, &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut model.params, &grad);
        }
        epoch_loss /= train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(EobError::Diverged { epoch, loss: epoch_loss });
        }
        train_curve.push(epoch_loss);
        let score = if val.is_empty() { epoch_loss } else { evaluate_mse(&model, val) };
        if !val.is_empty() {
            val_curve.push(score);
        }
        if !score.is_finite() {
            return Err(EobError::Diverged { epoch, loss: score });
        }
        if score < best.0 {
            best = (score, model.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let epochs_run = train_curve.len();
    if epochs_run > 0 {
        model.params = best.1;
    }
    Ok(TrainOutcome {
        model,
        train_curve,
        val_curve,
        best_epoch: best.2,
        epochs_run,
    })
}

/// Axes and synthesis settings of the error-surface grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub ssnr_x_values: Vec<f64>,
    pub horizons: Vec<usize>,
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default = "default_series_length")]
    pub series_length: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ssnr_z")]
    pub ssnr_z: f64,
    #[serde(default = "default_sigma_eps2")]
    pub sigma_eps2: f64,
    #[serde(default = "default_harmonics")]
    pub harmonics: usize,
    #[serde(default = "default_max_freq")]
    pub max_freq: u32,
    /// Sinusoid period in samples; the series length when absent.
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default = "default_innovation")]
    pub innovation: InnovationKind,
}

fn default_history() -> usize {
    64
}
fn default_series_length() -> usize {
    5000
}
fn default_reps() -> usize {
    3
}
fn default_ssnr_z() -> f64 {
    32.0
}
fn default_sigma_eps2() -> f64 {
    0.25
}
fn default_harmonics() -> usize {
    16
}
fn default_max_freq() -> u32 {
    32
}
fn default_innovation() -> InnovationKind {
    InnovationKind::Gaussian
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            ssnr_x_values: vec![32.0, 104.0, 176.0, 248.0, 320.0],
            horizons: vec![64, 128],
            history: default_history(),
            series_length: default_series_length(),
            replications: default_reps(),
            seed: 0,
            ssnr_z: default_ssnr_z(),
            sigma_eps2: default_sigma_eps2(),
            harmonics: default_harmonics(),
            max_freq: default_max_freq(),
            period: None,
            innovation: default_innovation(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ssnr_x_values.is_empty() || self.horizons.is_empty() {
            return Err(EobError::invalid("grid", "ssnr_x_values and horizons must be nonempty"));
        }
        if self.replications == 0 {
            return Err(EobError::invalid("replications", "must be at least 1"));
        }
        if self.history == 0 || self.horizons.contains(&0) {
            return Err(EobError::invalid("horizons", "history and horizons must be at least 1"));
        }
        if !(self.ssnr_z >= 1.0) {
            return Err(EobError::invalid("ssnr_z", "must be at least 1"));
        }
        if let Some(s) = self.ssnr_x_values.iter().find(|&&s| !(s >= self.ssnr_z)) {
            return Err(EobError::invalid(
                "ssnr_x_values",
                format!("{s} is below ssnr_z = {}", self.ssnr_z),
            ));
        }
        Ok(())
    }

    /// Hybrid process for one `(SSNR_x, replication)` cell.
    pub fn process(&self, ssnr_x: f64, replication: usize) -> Result<HybridSpec> {
        let innovation = InnovationDist::calibrated(self.innovation, self.sigma_eps2)?;
        let ar = ArSpec::ar1_for_ssnr(self.ssnr_z, innovation, self.sigma_eps2)?;
        let ssnr_v = ssnr_x - self.ssnr_z;
        let det = if ssnr_v > 0.0 {
            let a = DeterministicSpec::<f64>::amplitude_for_ssnr(ssnr_v, self.harmonics, self.sigma_eps2)?;
            let period = self.period.unwrap_or(self.series_length as f64);
            let seed = derive_seed(self.seed, 1000 + replication as u64);
            Some(DeterministicSpec::random(self.harmonics, self.max_freq, a, period, seed)?)
        } else {
            None
        };
        Ok(HybridSpec {
            det,
            ar,
            length: self.series_length,
        })
    }
}

/// Z-score statistics of the training segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn fit(x: &[f64]) -> Self {
        let n = x.len().max(1) as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Scaler { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

/// Chronological split, z-scoring with training statistics, windowing.
pub struct Prepared {
    pub train: Windows,
    pub val: Windows,
    pub test: Windows,
    pub scaler: Scaler,
}

pub fn prepare(series: &[f64], history: usize, horizon: usize, cfg: &TrainConfig) -> Result<Prepared> {
    let cut = ((series.len() as f64) * cfg.split).round() as usize;
    let scaler = Scaler::fit(&series[..cut]);
    let z = scaler.apply(series);
    let (train, val) = Windows::from_series(&z[..cut], history, horizon).split_tail(cfg.val_fraction);
    let test = Windows::from_series(&z[cut..], history, horizon);
    if train.is_empty() || test.is_empty() {
        return Err(EobError::InsufficientData(format!(
            "series of length {} is too short for history {history} and horizon {horizon}",
            series.len()
        )));
    }
    Ok(Prepared {
        train,
        val,
        test,
        scaler,
    })
}

/// One trained cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub replication: usize,
    pub point: SurfacePoint,
    /// Base sinusoid amplitude `A` used for the cell.
    pub amplitude: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub ssnr_x: f64,
    pub horizon: usize,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub records: Vec<GridRecord>,
    pub failures: Vec<CellFailure>,
}

impl GridResult {
    pub fn points(&self) -> Vec<SurfacePoint> {
        self.records.iter().map(|r| r.point).collect()
    }
}

fn run_cell(grid: &GridSpec, model: &ModelSpec, cfg: &TrainConfig, ssnr_x: f64, horizon: usize, rep: usize) -> Result<GridRecord> {
    let process = grid.process(ssnr_x, rep)?;
    let series = synthesize_hybrid(&process, derive_seed(grid.seed, rep as u64))?;
    let mut cell_cfg = *cfg;
    cell_cfg.seed = derive_seed(cfg.seed, rep as u64);
    let data = prepare(&series, grid.history, horizon, &cell_cfg)?;
    let spec = ModelSpec {
        input_len: grid.history,
        output_len: horizon,
        init_seed: derive_seed(model.init_seed, rep as u64),
        ..*model
    };
    let out = train_model(spec, &data.train, &data.val, &cell_cfg)?;
    let mse_actual = evaluate_mse(&out.model, &data.test) * data.scaler.std * data.scaler.std;
    let sigma_x2 = ssnr_x * grid.sigma_eps2;
    let mse_opt = optimal_mse_baseline(&process.ar, horizon, BaselineMode::Asymptotic)?;
    Ok(GridRecord {
        replication: rep,
        point: SurfacePoint::new(ssnr_x, horizon, mse_actual, sigma_x2, mse_opt)?,
        amplitude: process.det.as_ref().map_or(0.0, |d| d.base_amplitude),
        epochs_run: out.epochs_run,
    })
}

/// Trains one model per `(SSNR_x, horizon, replication)` cell in parallel on
/// the current rayon pool. Failed cells are reported, not fatal. The series
/// of a cell depends only on `(grid.seed, SSNR_x, replication)`, so runs
/// with different losses see identical data.
pub fn run_grid(grid: &GridSpec, model: &ModelSpec, cfg: &TrainConfig) -> Result<GridResult> {
    grid.validate()?;
    cfg.validate()?;
    let cells: Vec<(f64, usize, usize)> = grid
        .ssnr_x_values
        .iter()
        .flat_map(|&s| {
            grid.horizons
                .iter()
                .flat_map(move |&h| (0..grid.replications).map(move |r| (s, h, r)))
        })
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(s, h, r)| (s, h, r, run_cell(grid, model, cfg, s, h, r)))
        .collect();
    let mut out = GridResult::default();
    for (ssnr_x, horizon, replication, res) in results {
        match res {
            Ok(rec) => out.records.push(rec),
            Err(e) => {
                log::warn!("cell ssnr_x={ssnr_x} h={horizon} rep={replication} failed: {e}");
                out.failures.push(CellFailure {
                    ssnr_x,
                    horizon,
                    replication,
                    error: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTrend {
    pub horizon: usize,
    /// Distinct SSNR_x levels, ascending.
    pub ssnr_x: Vec<f64>,
    /// Replication-averaged inefficiency per level.
    pub mean_inefficiency: Vec<f64>,
    /// Replication-averaged relative MSE per level.
    pub mean_mse_relative: Vec<f64>,
    /// Spearman correlation of SSNR_x with the averaged inefficiency.
    pub spearman_inefficiency: f64,
    /// Adjacent increases of the averaged relative MSE.
    pub mse_relative_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub horizons: Vec<HorizonTrend>,
}

/// Per horizon: replication averages per SSNR_x level and their rank
/// correlation with SSNR_x.
pub fn paradox_trend_test(points: &[SurfacePoint]) -> Result<TrendReport> {
    let mut horizons: Vec<usize> = points.iter().map(|p| p.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut out = Vec::new();
    for h in horizons {
        let mut levels: Vec<f64> = points.iter().filter(|p| p.horizon == h).map(|p| p.ssnr_x).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() < 4 {
            return Err(EobError::InsufficientData(format!(
                "horizon {h} has {} SSNR levels, need at least 4",
                levels.len()
            )));
        }
        let mean_of = |s: f64, f: fn(&SurfacePoint) -> f64| {
            let vals: Vec<f64> = points.iter().filter(|p| p.horizon == h && p.ssnr_x == s).map(f).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let eta: Vec<f64> = levels.iter().map(|&s| mean_of(s, |p| p.inefficiency)).collect();
        let rel: Vec<f64> = levels.iter().map(|&s| mean_of(s, |p| p.mse_relative)).collect();
        out.push(HorizonTrend {
            horizon: h,
            spearman_inefficiency: spearman(&levels, &eta)?,
            mse_relative_violations: rel.windows(2).filter(|w| w[1] > w[0]).count(),
            ssnr_x: levels,
            mean_inefficiency: eta,
            mean_mse_relative: rel,
        });
    }
    if out.is_empty() {
        return Err(EobError::InsufficientData("no points".into()));
    }
    Ok(TrendReport { horizons: out })
}

/// Settings of the pure-sinusoid experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsightConfig {
    #[serde(default = "default_insight_k")]
    pub harmonics: usize,
    #[serde(default = "default_fmax")]
    pub fmax: u32,
    #[serde(default = "default_insight_len")]
    pub series_length: usize,
    #[serde(default = "default_insight_history")]
    pub history: usize,
    /// Forecast length; also the sinusoid period, so every tone falls on a
    /// DFT bin of the forecast window.
    #[serde(default = "default_history")]
    pub horizon: usize,
    #[serde(default = "default_insight_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_insight_model")]
    pub model: ModelSpec,
    #[serde(default = "default_insight_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub harmonized: HarmonizedConfig,
}

fn default_insight_k() -> usize {
    3
}
fn default_fmax() -> u32 {
    15
}
fn default_insight_len() -> usize {
    2000
}
fn default_insight_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_insight_history() -> usize {
    48
}
fn default_insight_model() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::Mlp1,
        activation: Activation::Relu,
        ..ModelSpec::linear(default_insight_history(), default_history())
    }
}
fn default_insight_train() -> TrainConfig {
    TrainConfig::default()
}

impl Default for InsightConfig {
    fn default() -> Self {
        InsightConfig {
            harmonics: default_insight_k(),
            fmax: default_fmax(),
            series_length: default_insight_len(),
            history: default_insight_history(),
            horizon: default_history(),
            seeds: default_insight_seeds(),
            model: default_insight_model(),
            train: default_insight_train(),
            harmonized: HarmonizedConfig::default(),
        }
    }
}

/// Spectral quality of forecasts on the test windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralScore {
    /// Out-of-band prediction energy over total prediction energy.
    pub leakage: f64,
    /// Mean absolute in-band amplitude error over the mean true in-band
    /// amplitude.
    pub in_band_amp_error: f64,
    pub test_mse: f64,
    /// Strongest predicted bin in `1..=horizon/2` (mean amplitude).
    pub dominant_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightRun {
    pub seed: u64,
    pub freqs: Vec<u32>,
    pub temporal: SpectralScore,
    pub harmonized: SpectralScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub runs: Vec<InsightRun>,
}

/// Scores predictions against targets; `freqs` are the in-band bins
/// (their mirrors are in band too).
pub fn spectral_score(preds: &[Vec<f64>], targets: &[Vec<f64>], freqs: &[u32]) -> Result<SpectralScore> {
    let h = targets.first().map_or(0, |t| t.len());
    if h == 0 || preds.len() != targets.len() {
        return Err(EobError::invalid("preds", "need matching nonempty prediction and target sets"));
    }
    let mut in_band = vec![false; h];
    for &k in freqs {
        let k = k as usize % h;
        in_band[k] = true;
        in_band[(h - k) % h] = true;
    }
    let (mut out_e, mut tot_e, mut amp_err, mut amp_true, mut sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut mean_amp = vec![0.0; h];
    for (p, t) in preds.iter().zip(targets) {
        crate::error::check_len(h, p.len())?;
        let (fp, ft) = (dft_forward(p), dft_forward(t));
        let (ap, at) = (fp.magnitudes(), ft.magnitudes());
        for k in 0..h {
            let e = ap[k] * ap[k];
            tot_e += e;
            mean_amp[k] += ap[k];
            if in_band[k] {
                amp_err += (ap[k] - at[k]).abs();
                amp_true += at[k];
            } else {
                out_e += e;
            }
        }
        sq += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let dominant_bin = (1..=h / 2)
        .max_by(|&a, &b| mean_amp[a].total_cmp(&mean_amp[b]))
        .unwrap_or(0);
    Ok(SpectralScore {
        leakage: if tot_e > 0.0 { out_e / tot_e } else { 0.0 },
        in_band_amp_error: if amp_true > 0.0 { amp_err / amp_true } else { 0.0 },
        test_mse: sq / (preds.len() * h) as f64,
        dominant_bin,
    })
}

/// Trains the same model on pure sinusoids under temporal MSE and under the
/// harmonized loss, once per seed, and scores the test forecasts in the
/// original units.
pub fn insight_experiment(cfg: &InsightConfig) -> Result<InsightReport> {
    if cfg.harmonics == 0 || cfg.harmonics > cfg.fmax as usize {
        return Err(EobError::invalid("harmonics", "need 1 <= K <= fmax"));
    }
    if 2 * cfg.fmax as usize >= cfg.horizon {
        return Err(EobError::invalid("fmax", "must stay below the horizon's Nyquist bin"));
    }
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let det = DeterministicSpec::random(cfg.harmonics, cfg.fmax, 1.0, cfg.horizon as f64, seed)?;
            let series = synthesize_deterministic(&det, cfg.series_length)?;
            let score = |loss: LossConfig| -> Result<SpectralScore> {
                let train_cfg = TrainConfig {
                    loss,
                    seed,
                    ..cfg.train
                };
                let data = prepare(&series, cfg.history, cfg.horizon, &train_cfg)?;
                let spec = ModelSpec {
                    input_len: cfg.history,
                    output_len: cfg.horizon,
                    init_seed: derive_seed(cfg.model.init_seed, seed),
                    ..cfg.model
                };
                let out = train_model(spec, &data.train, &data.val, &train_cfg)?;
                let sc = data.scaler;
                let unscale = |v: Vec<f64>| v.into_iter().map(|y| y * sc.std + sc.mean).collect::<Vec<_>>();
                let preds: Vec<Vec<f64>> = data.test.inputs.iter().map(|x| unscale(out.model.predict(x))).collect();
                let targets: Vec<Vec<f64>> = data.test.targets.iter().map(|y| unscale(y.clone())).collect();
                spectral_score(&preds, &targets, &det.freqs)
            };
            Ok(InsightRun {
                seed,
                freqs: det.freqs.clone(),
                temporal: score(LossConfig::Temporal { norm: Norm::L2 })?,
                harmonized: score(LossConfig::Harmonized(cfg.harmonized))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InsightReport { runs })
}
