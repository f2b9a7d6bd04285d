//! Shared domain types: rasters, label masks, class maps and paired samples.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reserved mask value for pixels excluded from extraction, pasting and scoring.
pub const IGNORE: u8 = 255;

/// Largest number of classes a mask byte can address next to `IGNORE`.
pub const MAX_CLASSES: usize = 255;

/// H×W×B multispectral image stored band-sequentially: index `(b * H + r) * W + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    bands: usize,
    samples: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn new(height: usize, width: usize, bands: usize, samples: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Dimensions(format!(
                "raster must be non-empty, got {height}x{width}x{bands}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| Error::Dimensions("raster size overflows".into()))?;
        if samples.len() != expected {
            return Err(Error::Dimensions(format!(
                "{height}x{width}x{bands} raster needs {expected} samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Raster { height, width, bands, samples })
    }

    pub fn filled(height: usize, width: usize, bands: usize, value: T) -> Result<Self> {
        Self::new(height, width, bands, vec![value; height * width * bands])
    }

    // Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        bands: usize,
        samples: Vec<T>,
    ) -> Self {
        debug_assert_eq!(samples.len(), height * width * bands);
        Raster { height, width, bands, samples }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn band(&self, band: usize) -> &[T] {
        let plane = self.height * self.width;
        &self.samples[band * plane..(band + 1) * plane]
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> T {
        self.samples[(band * self.height + row) * self.width + col]
    }

    /// Overwrites one sample; non-finite values are rejected.
    pub fn set(&mut self, band: usize, row: usize, col: usize, value: T) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite((band * self.height + row) * self.width + col));
        }
        self.samples[(band * self.height + row) * self.width + col] = value;
        Ok(())
    }

    #[inline]
    pub(crate) fn set_unchecked(&mut self, band: usize, row: usize, col: usize, value: T) {
        self.samples[(band * self.height + row) * self.width + col] = value;
    }

    /// The `bands` values of pixel `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.bands).map(move |b| self.get(b, row, col))
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Dimensions(format!(
                "crop {height}x{width} at ({top},{left}) outside {}x{} raster",
                self.height, self.width
            )));
        }
        let mut samples = Vec::with_capacity(height * width * self.bands);
        for b in 0..self.bands {
            for r in top..top + height {
                let start = (b * self.height + r) * self.width + left;
                samples.extend_from_slice(&self.samples[start..start + width]);
            }
        }
        Ok(Raster::from_parts_unchecked(height, width, self.bands, samples))
    }

    pub fn cast<U: Scalar>(&self) -> Raster<U> {
        let samples = self
            .samples
            .iter()
            .map(|v| U::from(*v).expect("finite float converts"))
            .collect();
        Raster::from_parts_unchecked(self.height, self.width, self.bands, samples)
    }
}

/// H×W per-pixel class ids, row-major; `IGNORE` marks excluded pixels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SemanticMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl SemanticMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimensions(format!("mask must be non-empty, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::Dimensions(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(SemanticMask { height, width, values })
    }

    /// Builds a mask and checks every non-ignore id against `class_map`.
    pub fn new_checked(
        height: usize,
        width: usize,
        values: Vec<u8>,
        class_map: &ClassMap,
    ) -> Result<Self> {
        let mask = Self::new(height, width, values)?;
        mask.validate(class_map)?;
        Ok(mask)
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, values: Vec<u8>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        SemanticMask { height, width, values }
    }

    pub fn validate(&self, class_map: &ClassMap) -> Result<()> {
        let class_count = class_map.len();
        match self.values.iter().find(|&&v| v != IGNORE && v as usize >= class_count) {
            Some(&class_id) => Err(Error::ClassOutOfRange { class_id, class_count }),
            None => Ok(()),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.values[row * self.width + col] = value;
    }

    /// Distinct non-ignore class ids present.
    pub fn classes_present(&self) -> BTreeSet<u8> {
        let mut seen = [false; 256];
        for &v in &self.values {
            seen[v as usize] = true;
        }
        (0..IGNORE).filter(|&c| seen[c as usize]).collect()
    }
}

/// Binary instance mask, row-major, `true` = instance pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(Error::Dimensions(format!(
                "{height}x{width} binary mask with {} values",
                bits.len()
            )));
        }
        Ok(BinaryMask { height, width, bits })
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), height * width);
        BinaryMask { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when each of the four border rows/columns holds at least one set pixel.
    pub fn is_tight(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let top = (0..w).any(|c| self.get(0, c));
        let bottom = (0..w).any(|c| self.get(h - 1, c));
        let left = (0..h).any(|r| self.get(r, 0));
        let right = (0..h).any(|r| self.get(r, w - 1));
        top && bottom && left && right
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Dimensions(format!(
                "crop {height}x{width} at ({top},{left}) outside {}x{} mask",
                self.height, self.width
            )));
        }
        let bits = (top..top + height)
            .flat_map(|r| self.bits[r * self.width + left..r * self.width + left + width].iter())
            .copied()
            .collect();
        Ok(BinaryMask::from_parts_unchecked(height, width, bits))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
}

#[derive(Serialize, Deserialize)]
struct ClassMapFile {
    classes: Vec<ClassEntry>,
}

/// Dense, ordered list of class names; ids are exactly `0..C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::ClassMap("at least one class is required".into()));
        }
        if names.len() > MAX_CLASSES {
            return Err(Error::ClassMap(format!(
                "{} classes exceed the limit of {MAX_CLASSES}",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::ClassMap(format!("duplicate class name {name:?}")));
            }
        }
        Ok(ClassMap { names })
    }

    pub fn from_entries(entries: &[ClassEntry]) -> Result<Self> {
        for (expected, entry) in entries.iter().enumerate() {
            if entry.id as usize != expected {
                return Err(Error::ClassMap(format!(
                    "class ids must be 0..C in order; position {expected} has id {}",
                    entry.id
                )));
            }
        }
        Self::new(entries.iter().map(|e| e.name.clone()))
    }

    /// Classes named `class_0 .. class_{n-1}`.
    pub fn numbered(count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| format!("class_{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class_id: u8) -> Option<&str> {
        self.names.get(class_id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entries(&self) -> Vec<ClassEntry> {
        self.names
            .iter()
            .enumerate()
            .map(|(id, name)| ClassEntry { id: id as u8, name: name.clone() })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = ClassMapFile { classes: self.entries() };
        serde_json::to_string_pretty(&file).expect("class map serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassMapFile = serde_json::from_str(text)
            .map_err(|source| Error::Json { context: "class map".into(), source })?;
        Self::from_entries(&file.classes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// An image paired with its label mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub(crate) image: Raster<T>,
    pub(crate) mask: SemanticMask,
    pub sample_id: String,
    pub aoi_id: String,
}

impl<T: Scalar> Sample<T> {
    pub fn new(
        image: Raster<T>,
        mask: SemanticMask,
        sample_id: impl Into<String>,
        aoi_id: impl Into<String>,
    ) -> Result<Self> {
        if image.height() != mask.height() || image.width() != mask.width() {
            return Err(Error::Dimensions(format!(
                "image is {}x{} but mask is {}x{}",
                image.height(),
                image.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(Sample { image, mask, sample_id: sample_id.into(), aoi_id: aoi_id.into() })
    }

    pub fn image(&self) -> &Raster<T> {
        &self.image
    }

    pub fn mask(&self) -> &SemanticMask {
        &self.mask
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn bands(&self) -> usize {
        self.image.bands()
    }

    pub fn into_parts(self) -> (Raster<T>, SemanticMask) {
        (self.image, self.mask)
    }
}
