//! Loss, model assembly and the mini-batch training loop for the three
//! pipelines: PCA → circuit, MPS alone, and MPS → circuit end to end.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::{embed_image, fit_pca, pca_project, ImageVector, PcaModel, IMAGE_PIXELS};
use crate::mps::MpsModel;
use crate::optim::{Adam, AdamConfig, Optimizer, RmsProp, RmsPropConfig};
use crate::vqc::{vqc_backward, vqc_forward, FeatureInput, VqcParams, N_PARAMS};

/// RNG stream ids carved out of one seed.
const INIT_STREAM: u64 = 0;
const VQC_INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PcaVqc,
    MpsClassifier,
    MpsVqc,
}

impl Mode {
    pub fn uses_mps(self) -> bool {
        matches!(self, Mode::MpsClassifier | Mode::MpsVqc)
    }

    pub fn uses_vqc(self) -> bool {
        matches!(self, Mode::PcaVqc | Mode::MpsVqc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PcaVqc => "pca-vqc",
            Mode::MpsClassifier => "mps-classifier",
            Mode::MpsVqc => "mps-vqc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca-vqc" => Ok(Mode::PcaVqc),
            "mps-classifier" => Ok(Mode::MpsClassifier),
            "mps-vqc" => Ok(Mode::MpsVqc),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Bond dimension; `None` for `pca-vqc`.
    pub chi: Option<usize>,
    /// Chain position of the output leg; `None` for `pca-vqc`.
    pub output_site: Option<usize>,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub workers: usize,
    pub digits: (u8, u8),
}

pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH: usize = 100;
pub const DEFAULT_OUTPUT_SITE: usize = IMAGE_PIXELS / 2;

impl TrainConfig {
    /// Per-mode defaults.
    pub fn defaults(mode: Mode) -> Self {
        let base = Self {
            mode,
            chi: Some(1),
            output_site: Some(DEFAULT_OUTPUT_SITE),
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: DEFAULT_BATCH,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            workers: 1,
            digits: (3, 6),
        };
        match mode {
            Mode::PcaVqc => Self {
                chi: None,
                output_site: None,
                optimizer: OptimizerKind::Rmsprop,
                learning_rate: 0.01,
                ..base
            },
            Mode::MpsClassifier => Self {
                learning_rate: 1e-3,
                ..base
            },
            Mode::MpsVqc => Self {
                learning_rate: 1e-4,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.digits.0 == self.digits.1 || self.digits.0 > 9 || self.digits.1 > 9 {
            return bad(format!("invalid digit pair {:?}", self.digits));
        }
        if !(0.0..1.0).contains(&self.rmsprop_alpha) {
            return bad(format!("rmsprop alpha {} outside [0, 1)", self.rmsprop_alpha));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps >= 0.0 && self.rmsprop_eps >= 0.0) {
            return bad("epsilons must be nonnegative".into());
        }
        if self.mode.uses_mps() {
            match self.chi {
                Some(c) if c >= 1 => {}
                _ => return bad(format!("{} needs a bond dimension ≥ 1", self.mode)),
            }
            match self.output_site {
                Some(k) if k < IMAGE_PIXELS => {}
                _ => return bad(format!("output site must lie in 0..{IMAGE_PIXELS}")),
            }
        } else if self.chi.is_some() || self.output_site.is_some() {
            return bad("pca-vqc has no MPS: chi/output_site do not apply".into());
        }
        Ok(())
    }

    fn build_optimizer(&self, n_params: usize) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(
                AdamConfig {
                    lr: self.learning_rate,
                    beta1: self.adam_beta1,
                    beta2: self.adam_beta2,
                    eps: self.adam_eps,
                },
                n_params,
            )),
            OptimizerKind::Rmsprop => Optimizer::RmsProp(RmsProp::new(
                RmsPropConfig {
                    lr: self.learning_rate,
                    alpha: self.rmsprop_alpha,
                    eps: self.rmsprop_eps,
                },
                n_params,
            )),
        }
    }
}

/// Softmax cross-entropy over two scores.
pub fn loss_and_grad(scores: [f64; 2], label: u8) -> Result<(f64, [f64; 2])> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite scores {scores:?}")));
    }
    if label > 1 {
        return Err(Error::input(format!("label {label} is not 0 or 1")));
    }
    let p = softmax(scores);
    let m = scores[0].max(scores[1]);
    let lse = m + ((scores[0] - m).exp() + (scores[1] - m).exp()).ln();
    let loss = lse - scores[label as usize];
    let mut grad = p;
    grad[label as usize] -= 1.0;
    Ok((loss, grad))
}

pub fn softmax(scores: [f64; 2]) -> [f64; 2] {
    let m = scores[0].max(scores[1]);
    let e = [(scores[0] - m).exp(), (scores[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

/// Class with the larger score; ties go to class 0.
pub fn predict(scores: [f64; 2]) -> u8 {
    u8::from(scores[1] > scores[0])
}

/// VQC angles start uniform in `[0, 2π)`.
pub fn init_vqc_params(seed: u64) -> VqcParams {
    let mut rng = seeded_rng(seed, VQC_INIT_STREAM);
    let mut a = [0.0; N_PARAMS];
    for v in &mut a {
        *v = rng.random_range(0.0..std::f64::consts::TAU);
    }
    VqcParams::new(a).expect("finite angles")
}

/// The trainable pipeline of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum HybridModel {
    PcaVqc { pca: PcaModel, vqc: VqcParams },
    MpsClassifier { mps: MpsModel },
    MpsVqc { mps: MpsModel, vqc: VqcParams },
}

/// Per-sample loss, gradient and correctness.
#[derive(Clone, Debug)]
pub struct SampleGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub correct: bool,
}

impl HybridModel {
    /// Fresh model for `config`; the PCA baseline is fit on `train` here.
    pub fn init(config: &TrainConfig, train: &LabeledDataset) -> Result<Self> {
        config.validate()?;
        let vqc = init_vqc_params(config.seed);
        Ok(match config.mode {
            Mode::PcaVqc => HybridModel::PcaVqc {
                pca: fit_pca(&train.images)?,
                vqc,
            },
            Mode::MpsClassifier => HybridModel::MpsClassifier {
                mps: calibrated_mps(config, 2, train)?,
            },
            Mode::MpsVqc => HybridModel::MpsVqc {
                mps: calibrated_mps(config, 4, train)?,
                vqc,
            },
        })
    }

    pub fn mode(&self) -> Mode {
        match self {
            HybridModel::PcaVqc { .. } => Mode::PcaVqc,
            HybridModel::MpsClassifier { .. } => Mode::MpsClassifier,
            HybridModel::MpsVqc { .. } => Mode::MpsVqc,
        }
    }

    pub fn mps(&self) -> Option<&MpsModel> {
        match self {
            HybridModel::MpsClassifier { mps } | HybridModel::MpsVqc { mps, .. } => Some(mps),
            HybridModel::PcaVqc { .. } => None,
        }
    }

    pub fn vqc(&self) -> Option<&VqcParams> {
        match self {
            HybridModel::PcaVqc { vqc, .. } | HybridModel::MpsVqc { vqc, .. } => Some(vqc),
            HybridModel::MpsClassifier { .. } => None,
        }
    }

    /// Trainable parameter count; MPS entries come first, then circuit angles.
    pub fn n_params(&self) -> usize {
        self.mps().map_or(0, |m| m.n_params()) + self.vqc().map_or(0, |_| N_PARAMS)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.mps().map(|m| m.flat_params()).unwrap_or_default();
        if let Some(v) = self.vqc() {
            out.extend_from_slice(v.as_slice());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Usage(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        match self {
            HybridModel::PcaVqc { vqc, .. } => *vqc = VqcParams::from_slice(flat)?,
            HybridModel::MpsClassifier { mps } => mps.set_flat_params(flat)?,
            HybridModel::MpsVqc { mps, vqc } => {
                let n = mps.n_params();
                mps.set_flat_params(&flat[..n])?;
                *vqc = VqcParams::from_slice(&flat[n..])?;
            }
        }
        Ok(())
    }

    /// Two class scores for one image.
    pub fn scores(&self, img: &ImageVector) -> Result<[f64; 2]> {
        match self {
            HybridModel::PcaVqc { pca, vqc } => Ok(vqc_forward(&FeatureInput::new(pca_project(pca, img)?)?, vqc)),
            HybridModel::MpsClassifier { mps } => mps.classify_logits(&embed_image(img)),
            HybridModel::MpsVqc { mps, vqc } => {
                let t = mps.forward(&embed_image(img))?;
                Ok(vqc_forward(&FeatureInput::from_slice(t.output())?, vqc))
            }
        }
    }

    /// Loss and full parameter gradient for one labelled image.
    pub fn sample_grad(&self, img: &ImageVector, label: u8) -> Result<SampleGrad> {
        let mut grad = Vec::with_capacity(self.n_params());
        let (loss, scores) = match self {
            HybridModel::PcaVqc { pca, vqc } => {
                let x = FeatureInput::new(pca_project(pca, img)?)?;
                let scores = vqc_forward(&x, vqc);
                let (loss, gs) = loss_and_grad(scores, label)?;
                grad.extend_from_slice(&vqc_backward(&x, vqc, &gs).params);
                (loss, scores)
            }
            HybridModel::MpsClassifier { mps } => {
                let t = mps.forward(&embed_image(img))?;
                let scores = [t.output()[0], t.output()[1]];
                let (loss, gs) = loss_and_grad(scores, label)?;
                grad.extend_from_slice(mps.backward(&t, &gs)?.grad.flat());
                (loss, scores)
            }
            HybridModel::MpsVqc { mps, vqc } => {
                let t = mps.forward(&embed_image(img))?;
                let x = FeatureInput::from_slice(t.output())?;
                let scores = vqc_forward(&x, vqc);
                let (loss, gs) = loss_and_grad(scores, label)?;
                let vg = vqc_backward(&x, vqc, &gs);
                grad.extend_from_slice(mps.backward(&t, &vg.x)?.grad.flat());
                grad.extend_from_slice(&vg.params);
                (loss, scores)
            }
        };
        Ok(SampleGrad {
            loss,
            grad,
            correct: predict(scores) == label,
        })
    }

    /// Loss only, for finite-difference probes.
    pub fn sample_loss(&self, img: &ImageVector, label: u8) -> Result<f64> {
        Ok(loss_and_grad(self.scores(img)?, label)?.0)
    }
}

/// The MPS draws from its own seed so the circuit and shuffle streams stay
/// independent of the bond dimension.
fn mps_seed(seed: u64) -> u64 {
    seeded_rng(seed, INIT_STREAM).random()
}

fn calibrated_mps(config: &TrainConfig, d_out: usize, train: &LabeledDataset) -> Result<MpsModel> {
    let mut mps = MpsModel::init(
        IMAGE_PIXELS,
        config.chi.unwrap_or(1),
        d_out,
        config.output_site.unwrap_or(DEFAULT_OUTPUT_SITE),
        mps_seed(config.seed),
    )?;
    // the classifier's scores feed the loss directly, so only the circuit
    // front end (whose arctan encoding saturates) is recalibrated
    if config.mode == Mode::MpsVqc {
        calibrate_output_scale(&mut mps, &train.images)?;
    }
    Ok(mps)
}

/// Rescale the chain so the median output norm over `images` is 1.
///
/// Every identity site contributes a factor `cos + sin ∈ [1, √2]`, so a
/// freshly initialized chain of hundreds of sites produces outputs many
/// orders of magnitude above 1, where the circuit's arctan encoding is flat.
/// The correction is spread evenly over all sites (each shrinks by the
/// `n`-th root) so every tensor keeps entries of order one and per-entry
/// optimizer steps stay small relative to the weights. Returns the total
/// factor applied to the output.
pub fn calibrate_output_scale(mps: &mut MpsModel, images: &[ImageVector]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::input("cannot calibrate on an empty image set"));
    }
    let mut norms = images
        .iter()
        .map(|img| {
            let out = mps.forward(&embed_image(img))?;
            Ok(out.output().iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    norms.sort_by(f64::total_cmp);
    let median = norms[norms.len() / 2];
    if !(median.is_finite() && median > 0.0) {
        return Err(Error::Numeric(format!("median initial output norm is {median}")));
    }
    let factor = 1.0 / median;
    let per_site = factor.powf(1.0 / mps.n_sites() as f64);
    for i in 0..mps.n_sites() {
        mps.scale_site(i, per_site);
    }
    Ok(factor)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in metrics {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.train_acc, m.test_loss, m.test_acc
        ));
    }
    s
}

pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<()> {
    std::fs::File::create(path)?.write_all(metrics_csv(metrics).as_bytes())?;
    Ok(())
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub final_metrics: EpochMetrics,
    pub best_test_acc: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn new(config: &TrainConfig, metrics: &[EpochMetrics], wall_seconds: f64) -> Option<Self> {
        Some(Self {
            config: config.clone(),
            final_metrics: *metrics.last()?,
            best_test_acc: metrics.iter().map(|m| m.test_acc).fold(f64::NEG_INFINITY, f64::max),
            wall_seconds,
        })
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-sample results in index order; parallel when `parallel` is set.
fn map_ordered<T: Send>(
    indices: &[usize],
    parallel: bool,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        indices.par_iter().map(|&i| f(i)).collect()
    } else {
        indices.iter().map(|&i| f(i)).collect()
    }
}

fn evaluate_inner(model: &HybridModel, data: &LabeledDataset, parallel: bool) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::input("cannot evaluate on an empty dataset"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let per = map_ordered(&idx, parallel, |i| {
        let scores = model.scores(&data.images[i])?;
        let label = data.labels[i];
        Ok((loss_and_grad(scores, label)?.0, predict(scores) == label))
    })?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (l, c) in per {
        loss += l;
        correct += usize::from(c);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mean loss and accuracy over a split.
pub fn evaluate(model: &HybridModel, data: &LabeledDataset) -> Result<(f64, f64)> {
    evaluate_inner(model, data, false)
}

pub fn evaluate_with_workers(model: &HybridModel, data: &LabeledDataset, workers: usize) -> Result<(f64, f64)> {
    with_pool(workers, || evaluate_inner(model, data, workers > 1))?
}

/// Mean loss and mean gradient over a batch, reduced in sample order.
pub fn batch_grad(model: &HybridModel, data: &LabeledDataset, batch: &[usize], parallel: bool) -> Result<(f64, Vec<f64>)> {
    let per = map_ordered(batch, parallel, |i| model.sample_grad(&data.images[i], data.labels[i]))?;
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for s in per {
        loss += s.loss;
        for (g, x) in grad.iter_mut().zip(&s.grad) {
            *g += x;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub model: HybridModel,
    pub wall_seconds: f64,
}

/// Run the configured experiment. `on_epoch` sees each epoch's metrics as
/// soon as they are computed.
pub fn train(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    mut on_epoch: impl FnMut(&EpochMetrics) + Send,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::input("training and test sets must be non-empty"));
    }
    let start = Instant::now();
    let mut model = HybridModel::init(config, train_set)?;
    let mut optimizer = config.build_optimizer(model.n_params());
    let mut shuffle_rng = seeded_rng(config.seed, SHUFFLE_STREAM);
    let parallel = config.workers > 1;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    with_pool(config.workers, || -> Result<()> {
        for epoch in 1..=config.epochs {
            order.shuffle(&mut shuffle_rng);
            for (b, batch) in order.chunks(config.batch_size).enumerate() {
                let (_, grad) = batch_grad(&model, train_set, batch, parallel).map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                    other => other,
                })?;
                let mut params = model.flat_params();
                optimizer.step(&mut params, &grad)?;
                model.set_flat_params(&params)?;
            }
            let (train_loss, train_acc) = evaluate_inner(&model, train_set, parallel)?;
            let (test_loss, test_acc) = evaluate_inner(&model, test_set, parallel)?;
            let m = EpochMetrics {
                epoch,
                train_loss,
                train_acc,
                test_loss,
                test_acc,
            };
            on_epoch(&m);
            metrics.push(m);
        }
        Ok(())
    })??;

    Ok(TrainOutcome {
        metrics,
        model,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
