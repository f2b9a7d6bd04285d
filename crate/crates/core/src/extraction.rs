//! Per-class connected components and instance cutting.
//!
//! A label mask is split into maximal same-class regions; each region becomes
//! one [`InstanceRecord`]: the bounding-box crop of the image plus a binary
//! mask of the region inside that box. Taken together, the records of one
//! mask partition its non-ignore pixels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMask, Raster, Sample, SemanticMask, IGNORE};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!("connectivity must be 4 or 8, got {other:?}"))),
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// 1-based, in order of first appearance in a row-major scan.
    pub index: u32,
    pub class_id: u8,
    pub pixel_count: usize,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub height: usize,
    pub width: usize,
    /// Row-major; 0 for ignore pixels.
    pub component_ids: Vec<u32>,
    pub components: Vec<Component>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // Slot 0 is the background label.
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling; same-class pixels joined under `connectivity`
/// share a component, ignore pixels get id 0.
pub fn connected_components(mask: &SemanticMask, connectivity: Connectivity) -> ComponentLabeling {
    let (h, w) = (mask.height(), mask.width());
    let values = mask.values();
    let mut provisional = vec![0u32; h * w];
    let mut sets = DisjointSet::new();

    // Neighbours already visited in a row-major scan.
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };

    for r in 0..h {
        for c in 0..w {
            let class = values[r * w + c];
            if class == IGNORE {
                continue;
            }
            let mut label = 0u32;
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if values[n] != class {
                    continue;
                }
                let other = provisional[n];
                label = if label == 0 { sets.find(other) } else { sets.union(label, other) };
            }
            provisional[r * w + c] = if label == 0 { sets.make() } else { label };
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut components: Vec<Component> = Vec::new();
    let mut component_ids = vec![0u32; h * w];
    for r in 0..h {
        for c in 0..w {
            let p = provisional[r * w + c];
            if p == 0 {
                continue;
            }
            let root = sets.find(p) as usize;
            if final_of_root[root] == 0 {
                components.push(Component {
                    index: components.len() as u32 + 1,
                    class_id: values[r * w + c],
                    pixel_count: 0,
                    bbox: BBox { top: r, left: c, height: 1, width: 1 },
                });
                final_of_root[root] = components.len() as u32;
            }
            let id = final_of_root[root];
            component_ids[r * w + c] = id;
            let comp = &mut components[id as usize - 1];
            comp.pixel_count += 1;
            grow(&mut comp.bbox, r, c);
        }
    }

    ComponentLabeling { height: h, width: w, component_ids, components }
}

fn grow(bbox: &mut BBox, r: usize, c: usize) {
    let bottom = (bbox.top + bbox.height).max(r + 1);
    let right = (bbox.left + bbox.width).max(c + 1);
    bbox.top = bbox.top.min(r);
    bbox.left = bbox.left.min(c);
    bbox.height = bottom - bbox.top;
    bbox.width = right - bbox.left;
}

/// One extracted object: image crop, binary shape mask, class and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRecord<T> {
    /// Bank-assigned id; empty until the record enters a bank.
    pub id: String,
    pub class_id: u8,
    pub patch: Raster<T>,
    pub mask: BinaryMask,
    pub pixel_count: usize,
    pub source_sample_id: String,
    pub source_bbox: BBox,
}

impl<T: Scalar> InstanceRecord<T> {
    /// Checks shape agreement, the pixel count and bbox tightness.
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::Bank(format!("instance {:?}: {msg}", self.id));
        if self.mask.height() != self.patch.height() || self.mask.width() != self.patch.width() {
            return Err(ctx(format!(
                "mask {}x{} does not match patch {}x{}",
                self.mask.height(),
                self.mask.width(),
                self.patch.height(),
                self.patch.width()
            )));
        }
        let count = self.mask.count();
        if count != self.pixel_count {
            return Err(ctx(format!("pixel_count {} but mask has {count} set pixels", self.pixel_count)));
        }
        if count == 0 || !self.mask.is_tight() {
            return Err(ctx("mask does not touch all four bbox edges".into()));
        }
        if self.source_bbox.height != self.mask.height() || self.source_bbox.width != self.mask.width() {
            return Err(ctx("source bbox size differs from mask size".into()));
        }
        if self.class_id == IGNORE {
            return Err(ctx("instances cannot carry the ignore class".into()));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn bands(&self) -> usize {
        self.patch.bands()
    }
}

/// Cuts one record per component of at least `min_pixels` pixels, in component order.
pub fn extract_instances<T: Scalar>(
    sample: &Sample<T>,
    connectivity: Connectivity,
    min_pixels: usize,
) -> Vec<InstanceRecord<T>> {
    let labeling = connected_components(sample.mask(), connectivity);
    let w = labeling.width;
    labeling
        .components
        .iter()
        .filter(|comp| comp.pixel_count >= min_pixels.max(1))
        .map(|comp| {
            let b = comp.bbox;
            let bits = (b.top..b.top + b.height)
                .flat_map(|r| (b.left..b.left + b.width).map(move |c| (r, c)))
                .map(|(r, c)| labeling.component_ids[r * w + c] == comp.index)
                .collect();
            InstanceRecord {
                id: String::new(),
                class_id: comp.class_id,
                patch: sample.image().crop(b.top, b.left, b.height, b.width).expect("bbox inside image"),
                mask: BinaryMask::from_parts_unchecked(b.height, b.width, bits),
                pixel_count: comp.pixel_count,
                source_sample_id: sample.sample_id.clone(),
                source_bbox: b,
            }
        })
        .collect()
}
