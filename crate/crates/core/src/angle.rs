//! Siamese rotation regressor.
//!
//! Both frames of a pair pass through one shared convolutional trunk; the
//! two embeddings are concatenated and a small dense head regresses the
//! rotation between them. The head ends in a relu, so predicted angles are
//! never negative. Internally the head predicts `angle / 90`.

use std::path::Path;

use heterodet_nn::{Adam, Checkpoint, Gradients, LayerSpec, Metadata, Network, Optimizer, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::pairs::{sample_pairs, sample_pairs_with, split_sources};
use crate::datagen::rotate::rotate_image;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::raster::GrayImage;

/// Frames are square with this side after preprocessing.
pub const FRAME_SIZE: usize = 64;
/// Full-scale angle: `σ_l = angle / FULL_SCALE_DEGREES`.
pub const FULL_SCALE_DEGREES: f32 = 90.0;
/// Default decision threshold for the image modality alone.
pub const DEFAULT_ANGLE_THRESHOLD: f32 = 30.0;
/// Smallest corpus accepted by [`pretrain`].
pub const MIN_PRETRAIN_IMAGES: usize = 100;

const CHECKPOINT_KIND: &str = "angle-net";
const EMBEDDING: usize = 64 * 8 * 8;
/// Predictions average over these quarter turns applied to both frames of a pair.
const VIEWS: [f32; 4] = [0.0, 90.0, 180.0, -90.0];

/// A preprocessed 64×64 grayscale frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub timestamp: f64,
    image: GrayImage,
}

impl FrameSample {
    pub fn new(timestamp: f64, image: GrayImage) -> Result<Self> {
        if image.width() != FRAME_SIZE || image.height() != FRAME_SIZE {
            return Err(Error::InvalidInput(format!(
                "frame must be {FRAME_SIZE}x{FRAME_SIZE}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self {
            timestamp,
            image: image.clamp01(),
        })
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn pixels(&self) -> &[f32] {
        self.image.pixels()
    }
}

/// Center-crops to a square, resamples to 64×64 and clamps to `[0, 1]`.
pub fn preprocess(image: &GrayImage, timestamp: f64) -> FrameSample {
    let square = if image.width() == image.height() {
        image.clone()
    } else {
        image.center_crop_square()
    };
    FrameSample {
        timestamp,
        image: square.resize(FRAME_SIZE, FRAME_SIZE).clamp01(),
    }
}

/// Reads any supported raster file and preprocesses it.
pub fn load_frame(path: impl AsRef<Path>, timestamp: f64) -> Result<FrameSample> {
    Ok(preprocess(&GrayImage::load(path)?, timestamp))
}

/// Reference/candidate frames; `label` (degrees) is present only on
/// synthetic training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePair {
    pub reference: FrameSample,
    pub candidate: FrameSample,
    pub label: Option<f32>,
}

pub fn sigma_angle(angle_degrees: f32) -> Result<f32> {
    if !(angle_degrees >= 0.0) {
        return Err(Error::NegativeDegree {
            modality: "image angle",
            value: angle_degrees,
        });
    }
    Ok(angle_degrees / FULL_SCALE_DEGREES)
}

/// Abnormal iff `angle >= threshold`.
pub fn classify_by_angle(angle_degrees: f32, threshold_degrees: f32) -> Result<Label> {
    if !(threshold_degrees > 0.0) {
        return Err(Error::InvalidInput(format!("angle threshold must be positive, got {threshold_degrees}")));
    }
    Ok(if angle_degrees >= threshold_degrees {
        Label::Abnormal
    } else {
        Label::Normal
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingState {
    Untrained,
    Pretrained,
    Finetuned,
}

impl TrainingState {
    fn code(self) -> f64 {
        match self {
            TrainingState::Untrained => 0.0,
            TrainingState::Pretrained => 1.0,
            TrainingState::Finetuned => 2.0,
        }
    }

    fn from_code(v: f64) -> Result<Self> {
        match v as i64 {
            0 => Ok(TrainingState::Untrained),
            1 => Ok(TrainingState::Pretrained),
            2 => Ok(TrainingState::Finetuned),
            _ => Err(Error::InvalidInput(format!("unknown training state {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleConfig {
    pub seed: u64,
    pub epochs: u32,
    /// Fresh training pairs drawn each epoch.
    pub pairs_per_epoch: usize,
    pub validation_pairs: usize,
    pub batch_size: usize,
    /// Training pairs drawn from each augmented view; they share its reference frame.
    pub pairs_per_view: usize,
    pub learning_rate: f32,
    /// The head's learning rate as a fraction of the trunk's.
    pub head_lr_factor: f32,
    /// Learning rate multiplier applied over the last third of training.
    pub final_lr_factor: f32,
    /// Mirror and pre-rotate each training source before drawing a pair.
    pub augment: bool,
}

impl Default for AngleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 30,
            pairs_per_epoch: 4500,
            validation_pairs: 400,
            batch_size: 16,
            pairs_per_view: 4,
            learning_rate: 1e-3,
            head_lr_factor: 0.1,
            final_lr_factor: 0.1,
            augment: true,
        }
    }
}

impl AngleConfig {
    /// Shorter schedule for fine-tuning a pretrained model on deployment frames.
    pub fn finetune() -> Self {
        Self {
            epochs: 3,
            pairs_per_epoch: 1000,
            validation_pairs: 100,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    pub epochs: u32,
    pub pairs_seen: usize,
    /// Mean training loss of the last epoch, in normalized units (`angle/90`).
    pub train_mse: f32,
    pub validation_mse: f32,
    pub validation_mae: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    /// Mean squared error of `angle / 90`.
    pub mse: f32,
    /// Mean absolute error in degrees.
    pub mae: f32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleModel {
    trunk: Network,
    head: Network,
    state: TrainingState,
    reference: Option<FrameSample>,
    seed: u64,
    epochs: u32,
    final_loss: f32,
}

fn trunk_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv2d(16, 3),
        LayerSpec::maxpool(2),
        LayerSpec::relu(),
        LayerSpec::conv2d(32, 3),
        LayerSpec::maxpool(2),
        LayerSpec::relu(),
        LayerSpec::conv2d(64, 3),
        LayerSpec::maxpool(2),
        LayerSpec::relu(),
        LayerSpec::Flatten,
    ]
}

fn head_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::dense(128), LayerSpec::relu(), LayerSpec::dense(1), LayerSpec::relu()]
}

/// Pixels are shifted to zero mean range `[-1, 1]` before the trunk.
#[inline]
fn input_value(p: f32) -> f32 {
    2.0 * p - 1.0
}

impl AngleModel {
    /// Freshly initialized, untrained network.
    pub fn init(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Network::new(&[1, FRAME_SIZE, FRAME_SIZE], &trunk_specs(), &mut rng)?;
        let mut head = Network::new(&[2 * EMBEDDING], &head_specs(), &mut rng)?;
        // start the output relu inside its active region, near mid-scale
        head.params_mut()[2].data_mut().iter_mut().for_each(|w| *w *= 0.05);
        head.params_mut()[3].data_mut()[0] = 0.5;
        Ok(Self {
            trunk,
            head,
            state: TrainingState::Untrained,
            reference: None,
            seed,
            epochs: 0,
            final_loss: f32::NAN,
        })
    }

    pub fn state(&self) -> TrainingState {
        self.state
    }

    pub fn trunk(&self) -> &Network {
        &self.trunk
    }

    pub fn head(&self) -> &Network {
        &self.head
    }

    /// Default reference frame recorded during fine-tuning (the first normal frame).
    pub fn reference_frame(&self) -> Option<&FrameSample> {
        self.reference.as_ref()
    }

    pub fn set_reference_frame(&mut self, frame: Option<FrameSample>) {
        self.reference = frame;
    }

    fn require_trained(&self) -> Result<()> {
        if self.state == TrainingState::Untrained {
            return Err(Error::Untrained("angle network has not been pretrained"));
        }
        Ok(())
    }

    fn frames_tensor<'a>(frames: impl Iterator<Item = &'a FrameSample>) -> Result<Tensor> {
        let mut data = Vec::new();
        let mut n = 0;
        for f in frames {
            data.extend(f.pixels().iter().map(|&p| input_value(p)));
            n += 1;
        }
        Ok(Tensor::new(vec![n, 1, FRAME_SIZE, FRAME_SIZE], data)?)
    }

    /// Trunk embeddings of several frames, one row each. A row holds the
    /// embeddings of every quarter-turn view of the frame, back to back.
    pub fn embed(&self, frames: &[FrameSample]) -> Result<Vec<Vec<f32>>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let views = quarter_views(frames.iter())?;
        let out = self.trunk.forward_batch(&Self::frames_tensor(views.iter())?)?;
        Ok(out.data().chunks(VIEWS.len() * EMBEDDING).map(<[f32]>::to_vec).collect())
    }

    /// Angles (degrees) for one reference embedding against several
    /// candidate embeddings, both as returned by [`AngleModel::embed`].
    pub fn predict_from_embeddings(&self, reference: &[f32], candidates: &[Vec<f32>]) -> Result<Vec<f32>> {
        self.require_trained()?;
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let width = VIEWS.len() * EMBEDDING;
        let mut data = Vec::with_capacity(candidates.len() * 2 * width);
        for c in candidates {
            if reference.len() != width || c.len() != width {
                return Err(Error::FeatureCount {
                    what: "angle embedding",
                    expected: width,
                    actual: c.len().min(reference.len()),
                });
            }
            for (r, v) in reference.chunks(EMBEDDING).zip(c.chunks(EMBEDDING)) {
                data.extend_from_slice(r);
                data.extend_from_slice(v);
            }
        }
        let rows = candidates.len() * VIEWS.len();
        let out = self.head.forward_batch(&Tensor::new(vec![rows, 2 * EMBEDDING], data)?)?;
        Ok(view_means(out.data()))
    }

    /// Estimated rotation (degrees, ≥ 0) of `candidate` relative to `reference`.
    pub fn predict_angle(&self, reference: &FrameSample, candidate: &FrameSample) -> Result<f32> {
        self.require_trained()?;
        Ok(self.predict_pairs(std::slice::from_ref(&(reference.clone(), candidate.clone())))?[0])
    }

    pub fn predict_pairs(&self, pairs: &[(FrameSample, FrameSample)]) -> Result<Vec<f32>> {
        self.require_trained()?;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(32) {
            out.extend(self.forward_pairs(chunk.iter().map(|(a, b)| (a, b)))?);
        }
        Ok(out)
    }

    fn forward_pairs<'a>(&self, pairs: impl Iterator<Item = (&'a FrameSample, &'a FrameSample)> + Clone) -> Result<Vec<f32>> {
        let references = quarter_views(pairs.clone().map(|p| p.0))?;
        let candidates = quarter_views(pairs.map(|p| p.1))?;
        let x = Self::frames_tensor(references.iter().chain(candidates.iter()))?;
        let b = references.len();
        let emb = self.trunk.forward_batch(&x)?;
        let out = self.head.forward_batch(&pair_rows(&emb, &(0..b).collect::<Vec<_>>())?)?;
        Ok(view_means(out.data()))
    }

    /// Validation metrics over labeled pairs. Works on any training state so
    /// an untrained network can serve as a baseline.
    pub fn evaluate(&self, pairs: &[AnglePair]) -> Result<PairMetrics> {
        let mut se = 0.0f64;
        let mut ae = 0.0f64;
        let mut count = 0;
        for chunk in pairs.chunks(32) {
            let pred = self.forward_pairs(chunk.iter().map(|p| (&p.reference, &p.candidate)))?;
            for (p, y) in chunk.iter().zip(pred) {
                let label = p
                    .label
                    .ok_or_else(|| Error::InvalidInput("evaluation pairs must carry labels".into()))?;
                let d = (y - label) as f64;
                se += (d / FULL_SCALE_DEGREES as f64).powi(2);
                ae += d.abs();
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        Ok(PairMetrics {
            mse: (se / n) as f32,
            mae: (ae / n) as f32,
            count,
        })
    }

    /// One Adam step over a batch of labeled pairs; returns the batch loss.
    fn train_batch(&mut self, batch: &[AnglePair], opt_trunk: &mut Adam, opt_head: &mut Adam) -> Result<f32> {
        let b = batch.len();
        // pairs cut from one view arrive together, so their shared reference
        // goes through the trunk once
        let mut references: Vec<&FrameSample> = Vec::new();
        let mut reference_of = Vec::with_capacity(b);
        for p in batch {
            if references.last().is_none_or(|r| **r != p.reference) {
                references.push(&p.reference);
            }
            reference_of.push(references.len() - 1);
        }
        let x = Self::frames_tensor(references.iter().copied().chain(batch.iter().map(|p| &p.candidate)))?;
        let trunk_trace = self.trunk.trace(&x)?;
        let emb = trunk_trace.output();
        let head_in = pair_rows(&emb, &reference_of)?;
        let head_trace = self.head.trace(&head_in)?;
        let out = head_trace.output();
        let target = Tensor::new(
            vec![b, 1],
            batch
                .iter()
                .map(|p| p.label.unwrap_or(0.0) / FULL_SCALE_DEGREES)
                .collect(),
        )?;
        let loss = heterodet_nn::mse_loss(&target, &out)?;
        let grad = heterodet_nn::mse_grad(&target, &out)?;
        let mut head_grads = Gradients::zeros_for(&self.head);
        let d_in = self
            .head
            .backward(&head_trace, &grad, &mut head_grads, true)?
            .expect("input gradient requested");
        let d_emb = unpair_rows(&d_in, &reference_of, references.len())?;
        let mut trunk_grads = Gradients::zeros_for(&self.trunk);
        self.trunk.backward(&trunk_trace, &d_emb, &mut trunk_grads, false)?;
        opt_trunk.step(self.trunk.params_mut(), &trunk_grads);
        opt_head.step(self.head.params_mut(), &head_grads);
        Ok(loss)
    }

    fn fit<F>(&mut self, config: &AngleConfig, validation: &[AnglePair], mut draw: F) -> Result<AngleReport>
    where
        F: FnMut(u32) -> Result<Vec<AnglePair>>,
    {
        if config.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        if config.pairs_per_view == 0 {
            return Err(Error::InvalidInput("at least one pair per view is required".into()));
        }
        let mut opt_trunk = Adam::new(config.learning_rate)?;
        let mut opt_head = Adam::new(config.learning_rate * config.head_lr_factor)?;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xa11_0ff5e7);
        let mut train_mse = f32::NAN;
        let mut pairs_seen = 0;
        let decay_from = config.epochs - config.epochs / 3;
        for epoch in 0..config.epochs {
            if epoch == decay_from && config.epochs >= 3 {
                let lr = config.learning_rate * config.final_lr_factor;
                opt_trunk.set_learning_rate(lr)?;
                opt_head.set_learning_rate(lr * config.head_lr_factor)?;
            }
            let mut groups: Vec<Vec<AnglePair>> = draw(epoch)?.chunks(config.pairs_per_view).map(<[AnglePair]>::to_vec).collect();
            groups.shuffle(&mut shuffle_rng);
            let pairs: Vec<AnglePair> = groups.into_iter().flatten().collect();
            let mut total = 0.0f64;
            for batch in pairs.chunks(config.batch_size) {
                total += self.train_batch(batch, &mut opt_trunk, &mut opt_head)? as f64 * batch.len() as f64;
            }
            pairs_seen += pairs.len();
            train_mse = (total / pairs.len().max(1) as f64) as f32;
        }
        let val = self.evaluate(validation)?;
        self.epochs += config.epochs;
        self.final_loss = train_mse;
        Ok(AngleReport {
            epochs: config.epochs,
            pairs_seen,
            train_mse,
            validation_mse: val.mse,
            validation_mae: val.mae,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut vectors = Vec::new();
        let mut scalars = vec![("state".to_string(), self.state.code())];
        if let Some(r) = &self.reference {
            scalars.push(("reference_timestamp".into(), r.timestamp));
            vectors.push(("reference_frame".into(), r.pixels().to_vec()));
        }
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            networks: vec![("trunk".into(), self.trunk.clone()), ("head".into(), self.head.clone())],
            metadata: Metadata {
                seed: self.seed,
                epochs: self.epochs,
                final_loss: self.final_loss,
                scalars,
                vectors,
            },
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(Error::WrongModelKind {
                expected: CHECKPOINT_KIND,
                found: c.kind.clone(),
            });
        }
        let net = |name: &'static str| {
            c.network(name)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("angle checkpoint lacks `{name}` network")))
        };
        let (trunk, head) = (net("trunk")?, net("head")?);
        let fresh = Self::init(0)?;
        if trunk.specs() != fresh.trunk.specs() || head.specs() != fresh.head.specs() || trunk.input_shape() != fresh.trunk.input_shape() {
            return Err(Error::InvalidInput("angle checkpoint architecture does not match".into()));
        }
        let m = &c.metadata;
        let reference = match m.vector("reference_frame") {
            Some(px) => Some(FrameSample::new(
                m.scalar("reference_timestamp").unwrap_or(0.0),
                GrayImage::new(FRAME_SIZE, FRAME_SIZE, px.to_vec())?,
            )?),
            None => None,
        };
        Ok(Self {
            trunk,
            head,
            state: TrainingState::from_code(m.scalar("state").unwrap_or(0.0))?,
            reference,
            seed: m.seed,
            epochs: m.epochs,
            final_loss: m.final_loss,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `[2B, E]` → `[B, 2E]`, pairing row `i` with row `B + i`.
/// Every quarter-turn view of each frame, grouped by frame.
fn quarter_views<'a>(frames: impl Iterator<Item = &'a FrameSample>) -> Result<Vec<FrameSample>> {
    let mut out = Vec::new();
    for f in frames {
        for &theta in &VIEWS {
            out.push(if theta == 0.0 { f.clone() } else { rotate_frame(f, theta)? });
        }
    }
    Ok(out)
}

/// Degrees from normalized head outputs, averaged over each group of views.
fn view_means(outputs: &[f32]) -> Vec<f32> {
    outputs
        .chunks(VIEWS.len())
        .map(|v| v.iter().sum::<f32>() / VIEWS.len() as f32 * FULL_SCALE_DEGREES)
        .collect()
}

/// Head input rows `[reference, candidate]` from trunk embeddings laid out
/// as the distinct references followed by one candidate per pair.
fn pair_rows(emb: &Tensor, reference_of: &[usize]) -> Result<Tensor> {
    let e = emb.shape()[1];
    let d = emb.data();
    let refs = emb.shape()[0] - reference_of.len();
    let mut out = Vec::with_capacity(2 * reference_of.len() * e);
    for (i, &r) in reference_of.iter().enumerate() {
        out.extend_from_slice(&d[r * e..(r + 1) * e]);
        out.extend_from_slice(&d[(refs + i) * e..(refs + i + 1) * e]);
    }
    Ok(Tensor::new(vec![reference_of.len(), 2 * e], out)?)
}

/// Adjoint of [`pair_rows`]: a shared reference collects the gradient of
/// every pair it appears in.
fn unpair_rows(x: &Tensor, reference_of: &[usize], refs: usize) -> Result<Tensor> {
    let e = x.shape()[1] / 2;
    let d = x.data();
    let b = reference_of.len();
    let mut out = vec![0.0; (refs + b) * e];
    for (i, &r) in reference_of.iter().enumerate() {
        let row = &d[i * 2 * e..(i + 1) * 2 * e];
        out[r * e..(r + 1) * e].iter_mut().zip(&row[..e]).for_each(|(o, g)| *o += g);
        out[(refs + i) * e..(refs + i + 1) * e].copy_from_slice(&row[e..]);
    }
    Ok(Tensor::new(vec![refs + b, e], out)?)
}

/// Trains a fresh network on rotation pairs drawn from `corpus`, split 80/20
/// by source image. Fresh training pairs are drawn every epoch; the
/// validation pairs are fixed.
pub fn pretrain(corpus: &[GrayImage], config: &AngleConfig) -> Result<(AngleModel, AngleReport)> {
    if corpus.len() < MIN_PRETRAIN_IMAGES {
        return Err(Error::InvalidInput(format!(
            "pretraining corpus has {} images; at least {MIN_PRETRAIN_IMAGES} are required",
            corpus.len()
        )));
    }
    let (train_sources, val_sources) = split_sources(corpus.len(), config.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11d);
    let validation = sample_pairs(corpus, &val_sources, config.validation_pairs, &mut val_rng)?;
    let mut model = AngleModel::init(config.seed)?;
    let report = model.fit(config, &validation, |epoch| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1 + epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        sample_pairs_with(corpus, &train_sources, config.pairs_per_epoch, config.augment, config.pairs_per_view, &mut rng)
    })?;
    model.state = TrainingState::Pretrained;
    Ok((model, report))
}

/// Validation pairs [`pretrain`] would hold out for `corpus` under `config`.
pub fn pretrain_validation_pairs(corpus: &[GrayImage], config: &AngleConfig) -> Result<Vec<AnglePair>> {
    let (_, val_sources) = split_sources(corpus.len(), config.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11d);
    sample_pairs(corpus, &val_sources, config.validation_pairs, &mut val_rng)
}

fn frame_images(frames: &[FrameSample]) -> Vec<GrayImage> {
    frames.iter().map(|f| f.image().clone()).collect()
}

/// Continues training on rotation pairs built from normal frames only; the
/// rotation labels are self-applied. The first frame becomes the model's
/// default reference.
pub fn finetune(model: &AngleModel, normal_frames: &[FrameSample], config: &AngleConfig) -> Result<(AngleModel, AngleReport)> {
    if normal_frames.is_empty() {
        return Err(Error::InvalidInput("fine-tuning needs at least one normal frame".into()));
    }
    model.require_trained()?;
    let images = frame_images(normal_frames);
    let (mut train_sources, val_sources) = split_sources(images.len(), config.seed);
    if train_sources.is_empty() {
        train_sources = val_sources.clone();
    }
    let val_from = if val_sources.is_empty() { &train_sources } else { &val_sources };
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xf1e7);
    let validation = sample_pairs(&images, val_from, config.validation_pairs, &mut val_rng)?;
    let mut tuned = model.clone();
    let report = tuned.fit(config, &validation, |epoch| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(101 + epoch as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
        sample_pairs_with(&images, &train_sources, config.pairs_per_epoch, config.augment, config.pairs_per_view, &mut rng)
    })?;
    tuned.state = TrainingState::Finetuned;
    tuned.reference = Some(normal_frames[0].clone());
    Ok((tuned, report))
}

/// Rotates a preprocessed frame in place of a raw image (used for synthetic
/// deployment frames and tests).
pub fn rotate_frame(frame: &FrameSample, theta_degrees: f32) -> Result<FrameSample> {
    FrameSample::new(frame.timestamp, rotate_image(frame.image(), theta_degrees)?)
}
