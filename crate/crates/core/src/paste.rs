//! Online cut-and-paste augmentation.
//!
//! Each round draws a class uniformly among the non-empty bank classes, then
//! an instance uniformly within that class, optionally flips/rotates it,
//! draws a top-left corner where the whole instance fits, and hard-pastes it
//! through its mask. Later pastes overwrite earlier ones. After all rounds the
//! sample may get a joint flip/rotation.

use serde::{Deserialize, Serialize};

use crate::bank::InstanceBank;
use crate::error::{Error, Result};
use crate::extraction::InstanceRecord;
use crate::geometry::Transform;
use crate::model::Sample;
use crate::rng::{DetRng, RngState};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// Top-left uniform over all positions where the instance lies fully inside
    /// the sample; oversized instances are center-cropped first.
    #[default]
    FullFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub n_paste: usize,
    pub pre_paste_augment: bool,
    pub post_augment: bool,
    pub flip_probability: f64,
    pub placement: PlacementPolicy,
    pub global_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            n_paste: 100,
            pre_paste_augment: false,
            post_augment: true,
            flip_probability: 0.5,
            placement: PlacementPolicy::FullFit,
            global_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip_probability must lie in [0, 1], got {}",
                self.flip_probability
            )));
        }
        Ok(())
    }

    /// No pasting and no standard augmentation.
    pub fn is_noop(&self) -> bool {
        self.n_paste == 0 && !self.post_augment
    }
}

/// Audit record of one paste.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasteEvent {
    pub instance_id: String,
    pub class_id: u8,
    pub transform: Transform,
    /// `(row, col)` of the (possibly cropped) instance's top-left corner.
    pub top_left: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented<T> {
    pub sample: Sample<T>,
    pub events: Vec<PasteEvent>,
    /// Joint transform applied after pasting; identity when disabled.
    pub post_transform: Transform,
}

/// Class uniform over non-empty classes, then instance uniform within it.
pub fn sample_instance<'b, T: Scalar>(
    bank: &'b InstanceBank<T>,
    rng: &mut DetRng,
) -> Result<&'b InstanceRecord<T>> {
    let classes = bank.non_empty_classes();
    if classes.is_empty() {
        return Err(Error::EmptyBank);
    }
    let class = classes[rng.below_usize(classes.len())];
    let members = bank.class(class);
    Ok(&members[rng.below_usize(members.len())])
}

/// Independent flips with probability `flip_probability`, then 0..=3 quarter turns.
pub fn draw_transform(rng: &mut DetRng, flip_probability: f64) -> Transform {
    let hflip = rng.bernoulli(flip_probability);
    let vflip = rng.bernoulli(flip_probability);
    let quarter_turns = rng.below(4) as u8;
    Transform { hflip, vflip, quarter_turns }
}

/// Applies `transform` to patch and mask together; class, count and provenance carry over.
pub fn transform_instance<T: Scalar>(instance: &InstanceRecord<T>, transform: Transform) -> InstanceRecord<T> {
    if transform.is_identity() {
        return instance.clone();
    }
    InstanceRecord {
        patch: transform.apply_raster(&instance.patch),
        mask: transform.apply_binary(&instance.mask),
        ..instance.clone()
    }
}

/// Identity when disabled (no draws are consumed); otherwise a random flip/rotation.
pub fn pre_paste_transform<T: Scalar>(
    instance: &InstanceRecord<T>,
    rng: &mut DetRng,
    enabled: bool,
    flip_probability: f64,
) -> (InstanceRecord<T>, Transform) {
    if !enabled {
        return (instance.clone(), Transform::IDENTITY);
    }
    let t = draw_transform(rng, flip_probability);
    (transform_instance(instance, t), t)
}

/// Center-crops an instance to at most `max_height × max_width`.
pub fn fit_instance<T: Scalar>(instance: InstanceRecord<T>, max_height: usize, max_width: usize) -> InstanceRecord<T> {
    let (h, w) = (instance.height(), instance.width());
    if h <= max_height && w <= max_width {
        return instance;
    }
    let (nh, nw) = (h.min(max_height), w.min(max_width));
    let (top, left) = ((h - nh) / 2, (w - nw) / 2);
    let mask = instance.mask.crop(top, left, nh, nw).expect("crop inside instance");
    InstanceRecord {
        patch: instance.patch.crop(top, left, nh, nw).expect("crop inside instance"),
        pixel_count: mask.count(),
        mask,
        ..instance
    }
}

/// Hard, mask-gated paste; pixels outside the instance mask are untouched.
pub fn paste_in_place<T: Scalar>(
    sample: &mut Sample<T>,
    instance: &InstanceRecord<T>,
    top_left: (usize, usize),
) -> Result<()> {
    if instance.bands() != sample.bands() {
        return Err(Error::BandMismatch { expected: sample.bands(), actual: instance.bands() });
    }
    let (top, left) = top_left;
    let (h, w) = (instance.height(), instance.width());
    if top + h > sample.height() || left + w > sample.width() {
        return Err(Error::Config(format!(
            "{h}x{w} instance at ({top},{left}) does not fit a {}x{} sample",
            sample.height(),
            sample.width()
        )));
    }
    for r in 0..h {
        for c in 0..w {
            if !instance.mask.get(r, c) {
                continue;
            }
            sample.mask.set(top + r, left + c, instance.class_id);
            for b in 0..sample.image.bands() {
                sample.image.set_unchecked(b, top + r, left + c, instance.patch.get(b, r, c));
            }
        }
    }
    Ok(())
}

pub fn paste<T: Scalar>(sample: &Sample<T>, instance: &InstanceRecord<T>, top_left: (usize, usize)) -> Result<Sample<T>> {
    let mut out = sample.clone();
    paste_in_place(&mut out, instance, top_left)?;
    Ok(out)
}

/// Runs `config.n_paste` paste rounds followed by the optional joint
/// flip/rotation. Output is a pure function of the inputs and `rng`.
pub fn augment_sample<T: Scalar>(
    sample: &Sample<T>,
    bank: &InstanceBank<T>,
    config: &AugmentConfig,
    rng: RngState,
) -> Result<Augmented<T>> {
    config.validate()?;
    let mut g = rng.generator();
    let mut out = sample.clone();
    let mut events = Vec::with_capacity(config.n_paste);

    for _ in 0..config.n_paste {
        let chosen = sample_instance(bank, &mut g)?;
        let (moved, transform) =
            pre_paste_transform(chosen, &mut g, config.pre_paste_augment, config.flip_probability);
        let fitted = fit_instance(moved, out.height(), out.width());
        let row = g.below_usize(out.height() - fitted.height() + 1);
        let col = g.below_usize(out.width() - fitted.width() + 1);
        paste_in_place(&mut out, &fitted, (row, col))?;
        events.push(PasteEvent {
            instance_id: chosen.id.clone(),
            class_id: chosen.class_id,
            transform,
            top_left: (row, col),
        });
    }

    let post_transform = if config.post_augment { draw_transform(&mut g, 0.5) } else { Transform::IDENTITY };
    if !post_transform.is_identity() {
        out = Sample {
            image: post_transform.apply_raster(&out.image),
            mask: post_transform.apply_mask(&out.mask),
            sample_id: out.sample_id,
            aoi_id: out.aoi_id,
        };
    }
    Ok(Augmented { sample: out, events, post_transform })
}

/// Re-applies a paste log to `sample`, reproducing the pre-post-augmentation result.
pub fn replay_pastes<T: Scalar>(
    sample: &Sample<T>,
    bank: &InstanceBank<T>,
    events: &[PasteEvent],
) -> Result<Sample<T>> {
    let mut out = sample.clone();
    for event in events {
        let rec = bank
            .get(&event.instance_id)
            .ok_or_else(|| Error::Bank(format!("unknown instance id {}", event.instance_id)))?;
        let fitted = fit_instance(transform_instance(rec, event.transform), out.height(), out.width());
        paste_in_place(&mut out, &fitted, event.top_left)?;
    }
    Ok(out)
}
