//! Flips and quarter-turn rotations applied jointly to rasters and masks.
//!
//! A [`Transform`] applies, in order: horizontal flip (mirror columns),
//! vertical flip (mirror rows), then `quarter_turns` clockwise 90° rotations.
//! All of them are pixel permutations, so values are never interpolated.

use serde::{Deserialize, Serialize};

use crate::model::{BinaryMask, Raster, SemanticMask};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    /// Clockwise quarter turns, 0..=3.
    pub quarter_turns: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { hflip: false, vflip: false, quarter_turns: 0 };

    pub fn is_identity(&self) -> bool {
        !self.hflip && !self.vflip && self.quarter_turns % 4 == 0
    }

    /// Output `(height, width)` for an input of the given shape.
    pub fn output_shape(&self, height: usize, width: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 1 {
            (width, height)
        } else {
            (height, width)
        }
    }

    /// Source `(row, col)` that lands on output `(row, col)`.
    #[inline]
    fn source_of(&self, height: usize, width: usize, row: usize, col: usize) -> (usize, usize) {
        // Undo the rotation first (it was applied last), then the flips.
        let (mut r, mut c) = (row, col);
        let (mut h, mut w) = self.output_shape(height, width);
        for _ in 0..self.quarter_turns % 4 {
            // Clockwise turn maps (r, c) in an h'×w' grid from (h'' - 1 - c, r)
            // of the pre-turn w×h grid; invert one turn at a time.
            let (pre_h, pre_w) = (w, h);
            let (sr, sc) = (pre_h - 1 - c, r);
            r = sr;
            c = sc;
            h = pre_h;
            w = pre_w;
        }
        debug_assert_eq!((h, w), (height, width));
        if self.vflip {
            r = height - 1 - r;
        }
        if self.hflip {
            c = width - 1 - c;
        }
        (r, c)
    }

    /// Permutes a row-major `height × width` grid.
    pub fn apply_grid<E: Copy>(&self, height: usize, width: usize, data: &[E]) -> (usize, usize, Vec<E>) {
        debug_assert_eq!(data.len(), height * width);
        let (oh, ow) = self.output_shape(height, width);
        if self.is_identity() {
            return (oh, ow, data.to_vec());
        }
        let mut out = Vec::with_capacity(data.len());
        for r in 0..oh {
            for c in 0..ow {
                let (sr, sc) = self.source_of(height, width, r, c);
                out.push(data[sr * width + sc]);
            }
        }
        (oh, ow, out)
    }

    pub fn apply_raster<T: Scalar>(&self, raster: &Raster<T>) -> Raster<T> {
        if self.is_identity() {
            return raster.clone();
        }
        let (h, w) = (raster.height(), raster.width());
        let (oh, ow) = self.output_shape(h, w);
        let mut samples = Vec::with_capacity(raster.samples().len());
        for b in 0..raster.bands() {
            let (_, _, plane) = self.apply_grid(h, w, raster.band(b));
            samples.extend(plane);
        }
        Raster::from_parts_unchecked(oh, ow, raster.bands(), samples)
    }

    pub fn apply_mask(&self, mask: &SemanticMask) -> SemanticMask {
        let (oh, ow, values) = self.apply_grid(mask.height(), mask.width(), mask.values());
        SemanticMask::from_parts_unchecked(oh, ow, values)
    }

    pub fn apply_binary(&self, mask: &BinaryMask) -> BinaryMask {
        let (oh, ow, bits) = self.apply_grid(mask.height(), mask.width(), mask.bits());
        BinaryMask::from_parts_unchecked(oh, ow, bits)
    }
}
