//! Synthetic imbalanced multispectral segmentation data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{write_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::formats::{self, dtype_for};
use crate::model::{ClassMap, Raster, Sample, SemanticMask};
use crate::rng::{DetRng, RngState};
use crate::scalar::{Dtype, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub image_size: usize,
    pub bands: usize,
    /// Class 0 is the background, class `C-1` the rare class, the rest are common.
    pub class_count: usize,
    pub rare_class_pixel_fraction: f64,
    /// `class_count × bands` band means.
    pub band_mean_per_class: Vec<Vec<f64>>,
    pub band_noise_sigma: f64,
    pub train_images: usize,
    pub test_images: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let class_count = 6;
        let bands = 4;
        SyntheticConfig {
            image_size: 64,
            bands,
            class_count,
            rare_class_pixel_fraction: 0.01,
            band_mean_per_class: default_band_means(class_count, bands),
            band_noise_sigma: 0.1,
            train_images: 40,
            test_images: 10,
            seed: 0,
        }
    }
}

/// Background sits at 0.3 in every band; common class `k` raises band
/// `(k - 1) % bands` by 0.4; the rare class sits at 0.4 in every band, close
/// enough to the background that class priors decide its boundary.
pub fn default_band_means(class_count: usize, bands: usize) -> Vec<Vec<f64>> {
    (0..class_count)
        .map(|k| {
            let mut means = vec![0.3; bands];
            if k == 0 {
                // background
            } else if k == class_count - 1 {
                means.iter_mut().for_each(|m| *m = 0.4);
            } else {
                means[(k - 1) % bands] += 0.4;
            }
            means
        })
        .collect()
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size == 0 || self.bands == 0 {
            return bad("image_size and bands must be positive".into());
        }
        if self.class_count == 0 || self.class_count > 254 {
            return bad(format!("class_count must lie in 1..=254, got {}", self.class_count));
        }
        if !(self.rare_class_pixel_fraction > 0.0 && self.rare_class_pixel_fraction < 0.5) {
            return bad(format!(
                "rare_class_pixel_fraction must lie in (0, 0.5), got {}",
                self.rare_class_pixel_fraction
            ));
        }
        if self.class_count >= 2 && self.rare_budget(self.train_images) == 0 {
            return bad(format!(
                "rare_class_pixel_fraction {} gives no rare pixels over {} {}x{} training images",
                self.rare_class_pixel_fraction, self.train_images, self.image_size, self.image_size
            ));
        }
        if self.band_mean_per_class.len() != self.class_count
            || self.band_mean_per_class.iter().any(|m| m.len() != self.bands)
        {
            return bad(format!("band_mean_per_class must be {}x{}", self.class_count, self.bands));
        }
        if self.band_mean_per_class.iter().flatten().any(|v| !v.is_finite()) {
            return bad("band means must be finite".into());
        }
        if !(self.band_noise_sigma.is_finite() && self.band_noise_sigma >= 0.0) {
            return bad("band_noise_sigma must be finite and non-negative".into());
        }
        if self.train_images == 0 {
            return bad("train_images must be positive".into());
        }
        Ok(())
    }

    /// Rare pixels in a split of `images` images.
    fn rare_budget(&self, images: usize) -> usize {
        (self.rare_class_pixel_fraction * (self.image_size * self.image_size * images) as f64).round() as usize
    }

    fn shape_sides(&self) -> (usize, usize) {
        let max_side = (self.image_size / 3).max(2);
        ((self.image_size / 8).clamp(1, max_side), max_side)
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        ClassMap::new((0..self.class_count).map(|k| match k {
            0 => "background".to_string(),
            _ if k == self.class_count - 1 => "rare".to_string(),
            _ => format!("common_{k}"),
        }))
    }

    pub fn rare_class(&self) -> Option<u8> {
        (self.class_count >= 2).then(|| (self.class_count - 1) as u8)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset<T> {
    pub class_map: ClassMap,
    pub train: Vec<Sample<T>>,
    pub test: Vec<Sample<T>>,
}

const TRAIN_STREAM: u64 = 1 << 40;
const TEST_STREAM: u64 = 2 << 40;

/// Generates both splits; identical configs give identical datasets.
///
/// The rare class is rare by object count rather than object size: a few
/// images per split each receive one rare blob about the size of a common
/// shape, painted last, so the split holds the requested rare share exactly
/// (up to rounding).
pub fn gen_synthetic<T: Scalar>(config: &SyntheticConfig) -> Result<SyntheticDataset<T>> {
    config.validate()?;
    let class_map = config.class_map()?;
    let make = |count: usize, stream: u64, prefix: &str| -> Result<Vec<Sample<T>>> {
        let rare = rare_allocation(config, count, stream);
        (0..count)
            .map(|i| {
                let mut g = RngState::new(config.seed, stream + i as u64).generator();
                generate_image(config, &mut g, rare[i], format!("{prefix}_{i:04}"), format!("{prefix}_aoi{i:04}"))
            })
            .collect()
    };
    Ok(SyntheticDataset {
        train: make(config.train_images, TRAIN_STREAM, "train")?,
        test: make(config.test_images, TEST_STREAM, "test")?,
        class_map,
    })
}

/// Rare pixels per image of one split.
fn rare_allocation(config: &SyntheticConfig, count: usize, stream: u64) -> Vec<usize> {
    let mut out = vec![0; count];
    let budget = config.rare_budget(count);
    if config.rare_class().is_none() || count == 0 || budget == 0 {
        return out;
    }
    let (min_side, max_side) = config.shape_sides();
    let typical = ((min_side + max_side) / 2).pow(2).max(1);
    let plane = config.image_size * config.image_size;
    let min_images = budget.div_ceil(plane);
    let k = (budget as f64 / typical as f64).round().clamp(min_images.max(1) as f64, count as f64) as usize;
    let mut order: Vec<usize> = (0..count).collect();
    RngState::new(config.seed, stream - 1).generator().shuffle(&mut order);
    for (j, &i) in order[..k].iter().enumerate() {
        out[i] = budget / k + usize::from(j < budget % k);
    }
    out
}
fn paint_shape(labels: &mut [u8], size: usize, g: &mut DetRng, class: u8, min_side: usize, max_side: usize) -> usize {
    let side_h = min_side + g.below_usize(max_side - min_side + 1);
    let side_w = min_side + g.below_usize(max_side - min_side + 1);
    let (side_h, side_w) = (side_h.min(size), side_w.min(size));
    let top = g.below_usize(size - side_h + 1);
    let left = g.below_usize(size - side_w + 1);
    let ellipse = g.bernoulli(0.5);
    let mut painted = 0;
    for r in 0..side_h {
        for c in 0..side_w {
            if ellipse {
                let dy = (2.0 * r as f64 + 1.0) / side_h as f64 - 1.0;
                let dx = (2.0 * c as f64 + 1.0) / side_w as f64 - 1.0;
                if dx * dx + dy * dy > 1.0 {
                    continue;
                }
            }
            let p = (top + r) * size + left + c;
            if labels[p] != class {
                labels[p] = class;
                painted += 1;
            }
        }
    }
    painted
}

/// Exactly `area` pixels, filled column by column inside a box of random height.
fn paint_blob(labels: &mut [u8], size: usize, g: &mut DetRng, class: u8, area: usize, min_side: usize, max_side: usize) {
    let lo = min_side.max(area.div_ceil(size)).min(size);
    let hi = max_side.max(lo).min(size);
    let h = lo + g.below_usize(hi - lo + 1);
    let w = area.div_ceil(h);
    let top = g.below_usize(size - h + 1);
    let left = g.below_usize(size - w + 1);
    for i in 0..area {
        let (r, c) = (i % h, i / h);
        labels[(top + r) * size + left + c] = class;
    }
}

fn generate_image<T: Scalar>(
    config: &SyntheticConfig,
    g: &mut DetRng,
    rare_pixels: usize,
    sample_id: String,
    aoi_id: String,
) -> Result<Sample<T>> {
    let size = config.image_size;
    let c = config.class_count;
    let mut labels = vec![0u8; size * size];

    if c >= 3 {
        let common = c - 2;
        let shapes = 4 + g.below_usize(5);
        let (min_side, max_side) = config.shape_sides();
        for _ in 0..shapes {
            let class = 1 + g.below_usize(common) as u8;
            paint_shape(&mut labels, size, g, class, min_side, max_side);
        }
    }
    if let (Some(rare), true) = (config.rare_class(), rare_pixels > 0) {
        let (min_side, max_side) = config.shape_sides();
        paint_blob(&mut labels, size, g, rare, rare_pixels, min_side, max_side);
    }

    let plane = size * size;
    let mut samples = vec![T::zero(); plane * config.bands];
    for b in 0..config.bands {
        for p in 0..plane {
            let mean = config.band_mean_per_class[labels[p] as usize][b];
            let v = mean + config.band_noise_sigma * g.standard_normal();
            samples[b * plane + p] = T::lit(v);
        }
    }
    let image = Raster::new(size, size, config.bands, samples)?;
    let mask = SemanticMask::new(size, size, labels)?;
    Sample::new(image, mask, sample_id, aoi_id)
}

/// SHA-256 over the encoded image and mask bytes of every sample, in split order.
pub fn dataset_digest<T: Scalar>(samples: &[&Sample<T>]) -> String {
    let mut hasher = Sha256::new();
    for s in samples {
        hasher.update(s.sample_id.as_bytes());
        let image = formats::encode_raster(s.image(), T::NATIVE_DTYPE).expect("native dtype is lossless");
        hasher.update(&image);
        hasher.update(formats::encode_label_mask(s.mask()).expect("mask encodes"));
    }
    hex::encode(hasher.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrittenDataset {
    pub class_map: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Writes `classmap.json` and `train/`, `test/` splits (manifest, images, masks).
pub fn write_synthetic<T: Scalar>(dataset: &SyntheticDataset<T>, dir: &Path) -> Result<WrittenDataset> {
    let class_map = dir.join("classmap.json");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dataset.class_map.save(&class_map)?;
    let mut manifests = Vec::new();
    for (name, samples) in [("train", &dataset.train), ("test", &dataset.test)] {
        let split = dir.join(name);
        let (images, masks) = (split.join("images"), split.join("masks"));
        for d in [&images, &masks] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let mut entries = Vec::with_capacity(samples.len());
        for s in samples {
            let image_path = images.join(format!("{}.msra", s.sample_id));
            let mask_path = masks.join(format!("{}.mskl", s.sample_id));
            formats::write_raster(&image_path, s.image(), dtype_for(s.image(), Dtype::F32))?;
            formats::write_label_mask(&mask_path, s.mask())?;
            entries.push(ManifestEntry {
                sample_id: s.sample_id.clone(),
                image_path,
                mask_path,
                aoi_id: s.aoi_id.clone(),
                date: "2019-01-01".into(),
            });
        }
        let manifest = split.join("manifest.csv");
        write_manifest(&manifest, &entries)?;
        manifests.push(manifest);
    }
    let test_manifest = manifests.pop().expect("two splits");
    let train_manifest = manifests.pop().expect("two splits");
    Ok(WrittenDataset { class_map, train_manifest, test_manifest })
}
