//! Per-pixel multinomial logistic regression trained with mini-batch SGD.

use serde::{Deserialize, Serialize};

use crate::bank::InstanceBank;
use crate::dataset::{load_sample, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::{build_report, Aggregation, ConfusionMatrix, EvalReport, MiouPolicy};
use crate::model::{ClassMap, Raster, Sample, SemanticMask, IGNORE};
use crate::paste::{augment_sample, AugmentConfig};
use crate::rng::{derive_rng, DetRng, RngState};
use crate::scalar::Scalar;

/// Linear scores `W x + b` per class over the band values of one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelClassifier<T> {
    class_count: usize,
    bands: usize,
    /// Row-major `class_count × (bands + 1)`; the last column is the bias.
    weights: Vec<T>,
}

impl<T: Scalar> PixelClassifier<T> {
    pub fn zeros(class_count: usize, bands: usize) -> Self {
        PixelClassifier { class_count, bands, weights: vec![T::zero(); class_count * (bands + 1)] }
    }

    pub fn from_weights(class_count: usize, bands: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != class_count * (bands + 1) {
            return Err(Error::Config(format!(
                "{class_count} classes over {bands} bands need {} weights, got {}",
                class_count * (bands + 1),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(PixelClassifier { class_count, bands, weights })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn scores_into(&self, x: &[T], out: &mut [T]) {
        let stride = self.bands + 1;
        for (k, score) in out.iter_mut().enumerate() {
            let row = &self.weights[k * stride..(k + 1) * stride];
            *score = row[..self.bands].iter().zip(x).fold(row[self.bands], |acc, (&w, &v)| acc + w * v);
        }
    }

    /// Argmax class; ties go to the lower id.
    pub fn predict_pixel(&self, x: &[T]) -> u8 {
        let mut scores = vec![T::zero(); self.class_count];
        self.scores_into(x, &mut scores);
        argmax(&scores)
    }

    pub fn predict(&self, image: &Raster<T>) -> Result<SemanticMask> {
        if image.bands() != self.bands {
            return Err(Error::BandMismatch { expected: self.bands, actual: image.bands() });
        }
        let mut x = vec![T::zero(); self.bands];
        let mut scores = vec![T::zero(); self.class_count];
        let mut values = Vec::with_capacity(image.height() * image.width());
        for r in 0..image.height() {
            for c in 0..image.width() {
                for (b, v) in x.iter_mut().enumerate() {
                    *v = image.get(b, r, c);
                }
                self.scores_into(&x, &mut scores);
                values.push(argmax(&scores));
            }
        }
        SemanticMask::new(image.height(), image.width(), values)
    }

    /// Mean cross-entropy over a batch; `features` is `labels.len() × bands`, row-major.
    pub fn loss(&self, features: &[T], labels: &[u8]) -> T {
        self.loss_and_gradient(features, labels).0
    }

    /// Mean cross-entropy and its gradient with respect to the weights:
    /// `dL/dW[k] = mean over pixels of (softmax_k - [y == k]) * (x, 1)`.
    pub fn loss_and_gradient(&self, features: &[T], labels: &[u8]) -> (T, Vec<T>) {
        let n = labels.len();
        let stride = self.bands + 1;
        let mut grad = vec![T::zero(); self.weights.len()];
        if n == 0 {
            return (T::zero(), grad);
        }
        let mut loss = T::zero();
        let mut probs = vec![T::zero(); self.class_count];
        for (i, &y) in labels.iter().enumerate() {
            let x = &features[i * self.bands..(i + 1) * self.bands];
            self.scores_into(x, &mut probs);
            let max = probs.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                sum = sum + *p;
            }
            for p in probs.iter_mut() {
                *p = *p / sum;
            }
            loss = loss - probs[y as usize].max(T::min_positive_value()).ln();
            for (k, &p) in probs.iter().enumerate() {
                let delta = if k == y as usize { p - T::one() } else { p };
                let row = &mut grad[k * stride..(k + 1) * stride];
                for (g, &v) in row[..self.bands].iter_mut().zip(x) {
                    *g = *g + delta * v;
                }
                row[self.bands] = row[self.bands] + delta;
            }
        }
        let inv = T::one() / T::lit(n as f64);
        grad.iter_mut().for_each(|g| *g = *g * inv);
        (loss * inv, grad)
    }

    /// Rewrites weights learned on `(x - offset) / scale` to act on raw `x`.
    fn unstandardize(&mut self, offset: &[T], scale: &[T]) {
        let stride = self.bands + 1;
        for row in self.weights.chunks_mut(stride) {
            let mut bias = row[self.bands];
            for b in 0..self.bands {
                row[b] = row[b] / scale[b];
                bias = bias - row[b] * offset[b];
            }
            row[self.bands] = bias;
        }
    }

    fn step(&mut self, grad: &[T], learning_rate: T) {
        for (w, &g) in self.weights.iter_mut().zip(grad) {
            *w = *w - learning_rate * g;
        }
    }
}

fn argmax<T: Scalar>(scores: &[T]) -> u8 {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best as u8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_pixels: usize,
    /// SGD steps taken on each (augmented) sample per epoch.
    pub batches_per_sample: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.5, batch_pixels: 512, batches_per_sample: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: PixelClassifier<T>,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

// Pixel draws use their own stream family so they never alias augmentation draws.
const PIXEL_SEED_SALT: u64 = 0x9158_9A1C_E0D2_7B43;
const ORDER_STREAM: u64 = u64::MAX;

/// Trains from zero weights. When `augment` is not a no-op, every sample is
/// passed through [`augment_sample`] with `derive_rng(train.seed, epoch, index)`
/// before its pixels are drawn.
pub fn train_pixel_classifier<T: Scalar>(
    train: &[Sample<T>],
    class_count: usize,
    bank: Option<&InstanceBank<T>>,
    augment: &AugmentConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let first = train.first().ok_or_else(|| Error::Config("training set is empty".into()))?;
    let bands = first.bands();
    if let Some(bad) = train.iter().find(|s| s.bands() != bands) {
        return Err(Error::BandMismatch { expected: bands, actual: bad.bands() });
    }
    if augment.n_paste > 0 && bank.is_none() {
        return Err(Error::Config("n_paste > 0 needs an instance bank".into()));
    }
    if config.batch_pixels == 0 {
        return Err(Error::Config("batch_pixels must be positive".into()));
    }
    augment.validate()?;
    let empty;
    let bank = match bank {
        Some(b) => b,
        None => {
            empty = InstanceBank::new(ClassMap::numbered(class_count)?);
            &empty
        }
    };

    let (offset, scale) = band_standardization(train);
    let mut model = PixelClassifier::zeros(class_count, bands);
    let lr = T::lit(config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut order_rng = RngState::new(config.seed, ORDER_STREAM).generator();
    let mut features = Vec::with_capacity(config.batch_pixels * bands);
    let mut labels = Vec::with_capacity(config.batch_pixels);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        // linear decay to a tenth of the initial rate
        let frac = if config.epochs > 1 { epoch as f64 / (config.epochs - 1) as f64 } else { 0.0 };
        let lr = lr * T::lit(1.0 - 0.9 * frac);
        order_rng.shuffle(&mut order);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for &index in &order {
            let stream = derive_rng(config.seed, epoch as u64, index as u64);
            let augmented;
            let sample = if augment.is_noop() {
                &train[index]
            } else {
                augmented = augment_sample(&train[index], bank, augment, stream)?.sample;
                &augmented
            };
            let mut pixel_rng = DetRng::from_state(RngState::new(config.seed ^ PIXEL_SEED_SALT, stream.stream));
            for _ in 0..config.batches_per_sample {
                draw_batch(sample, &mut pixel_rng, config.batch_pixels, &mut features, &mut labels);
                for (i, v) in features.iter_mut().enumerate() {
                    let b = i % bands;
                    *v = (*v - offset[b]) / scale[b];
                }
                if labels.is_empty() {
                    continue;
                }
                let (loss, grad) = model.loss_and_gradient(&features, &labels);
                model.step(&grad, lr);
                loss_sum += loss.to_f64().unwrap_or(f64::NAN);
                batches += 1;
            }
        }
        epoch_losses.push(if batches > 0 { loss_sum / batches as f64 } else { 0.0 });
    }
    model.unstandardize(&offset, &scale);
    Ok(TrainOutcome { model, epoch_losses })
}

/// Per-band mean and standard deviation over every training pixel (scale 1 for a constant band).
fn band_standardization<T: Scalar>(train: &[Sample<T>]) -> (Vec<T>, Vec<T>) {
    let bands = train[0].bands();
    let mut sum = vec![0.0f64; bands];
    let mut sq = vec![0.0f64; bands];
    let mut n = 0usize;
    for s in train {
        for b in 0..bands {
            for v in s.image().band(b) {
                let v = v.to_f64().unwrap_or(0.0);
                sum[b] += v;
                sq[b] += v * v;
            }
        }
        n += s.height() * s.width();
    }
    let n = n.max(1) as f64;
    let mut offset = Vec::with_capacity(bands);
    let mut scale = Vec::with_capacity(bands);
    for b in 0..bands {
        let mean = sum[b] / n;
        let sd = (sq[b] / n - mean * mean).max(0.0).sqrt();
        offset.push(T::lit(mean));
        scale.push(T::lit(if sd > 1e-12 { sd } else { 1.0 }));
    }
    (offset, scale)
}

/// Uniform pixel draws with replacement; ignore pixels are skipped.
fn draw_batch<T: Scalar>(sample: &Sample<T>, g: &mut DetRng, n: usize, features: &mut Vec<T>, labels: &mut Vec<u8>) {
    features.clear();
    labels.clear();
    let (h, w) = (sample.height(), sample.width());
    for _ in 0..n {
        let p = g.below_usize(h * w);
        let (r, c) = (p / w, p % w);
        let y = sample.mask().get(r, c);
        if y == IGNORE {
            continue;
        }
        labels.push(y);
        features.extend(sample.image().pixel(r, c));
    }
}

/// Argmax prediction on every sample, scored with the metrics pipeline.
pub fn evaluate_classifier<T: Scalar>(
    model: &PixelClassifier<T>,
    samples: &[Sample<T>],
    class_map: &ClassMap,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    if class_map.len() != model.class_count() {
        return Err(Error::Config(format!(
            "model has {} classes, class map {}",
            model.class_count(),
            class_map.len()
        )));
    }
    let matrices = samples
        .iter()
        .map(|s| {
            let pred = model.predict(s.image())?;
            let mut m = ConfusionMatrix::new(class_map.len());
            m.accumulate(s.mask(), &pred)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    build_report(class_map, &matrices, aggregation, MiouPolicy::ExcludeUndefined)
}

/// [`evaluate_classifier`] over the samples listed in a manifest.
pub fn evaluate_manifest<T: Scalar>(
    model: &PixelClassifier<T>,
    manifest: &DatasetManifest,
    class_map: &ClassMap,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    let samples = manifest
        .entries
        .iter()
        .map(|e| load_sample::<T>(e).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    evaluate_classifier(model, &samples, class_map, aggregation)
}
