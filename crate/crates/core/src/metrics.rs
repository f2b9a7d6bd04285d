//! Confusion counts, per-class IoU and mean IoU.
//!
//! For class `i`, with `A_i` the ground-truth pixels and `B_i` the predicted
//! ones: `|A_i ∩ B_i| = counts[i][i]` and
//! `|A_i ∪ B_i| = row_sum(i) + col_sum(i) - counts[i][i]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassMap, SemanticMask, IGNORE};

/// C×C pixel counts, row = ground truth, column = prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        ConfusionMatrix { class_count, counts: vec![0; class_count * class_count] }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.class_count + pred]
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class * self.class_count..(class + 1) * self.class_count].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.class_count).map(|r| self.get(r, class)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one image pair. Ground-truth ignore pixels are skipped.
    pub fn accumulate(&mut self, gt: &SemanticMask, pred: &SemanticMask) -> Result<()> {
        if gt.height() != pred.height() || gt.width() != pred.width() {
            return Err(Error::Metrics(format!(
                "ground truth is {}x{} but prediction is {}x{}",
                gt.height(),
                gt.width(),
                pred.height(),
                pred.width()
            )));
        }
        let c = self.class_count;
        if let Some(&bad) = pred.values().iter().find(|&&p| p as usize >= c) {
            return Err(Error::Metrics(format!("predicted class {bad} out of range for {c} classes")));
        }
        if let Some(&bad) = gt.values().iter().find(|&&g| g != IGNORE && g as usize >= c) {
            return Err(Error::Metrics(format!("ground-truth class {bad} out of range for {c} classes")));
        }
        for (&g, &p) in gt.values().iter().zip(pred.values()) {
            if g != IGNORE {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_count != self.class_count {
            return Err(Error::Metrics(format!(
                "cannot merge {}-class and {}-class matrices",
                self.class_count, other.class_count
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `None` where the union is empty.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.class_count)
            .map(|i| {
                let inter = self.get(i, i);
                let union = self.row_sum(i) + self.col_sum(i) - inter;
                (union > 0).then(|| inter as f64 / union as f64)
            })
            .collect()
    }

    pub fn miou(&self, policy: MiouPolicy) -> Result<f64> {
        mean_iou(&self.iou_per_class(), policy)
    }

    /// Row-major `C×C` counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Functional form of [`ConfusionMatrix::accumulate`].
pub fn accumulate_confusion(gt: &SemanticMask, pred: &SemanticMask, mut matrix: ConfusionMatrix) -> Result<ConfusionMatrix> {
    matrix.accumulate(gt, pred)?;
    Ok(matrix)
}

pub fn iou_per_class(matrix: &ConfusionMatrix) -> Vec<Option<f64>> {
    matrix.iou_per_class()
}

pub fn miou(matrix: &ConfusionMatrix) -> Result<f64> {
    matrix.miou(MiouPolicy::ExcludeUndefined)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiouPolicy {
    /// Average only classes with a non-empty union.
    #[default]
    ExcludeUndefined,
    /// Sum defined IoUs and divide by the class count.
    DivideByClassCount,
}

impl FromStr for MiouPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude-undefined" => Ok(MiouPolicy::ExcludeUndefined),
            "divide-by-class-count" => Ok(MiouPolicy::DivideByClassCount),
            other => Err(Error::Config(format!("unknown mIoU policy {other:?}"))),
        }
    }
}

impl fmt::Display for MiouPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiouPolicy::ExcludeUndefined => "exclude-undefined",
            MiouPolicy::DivideByClassCount => "divide-by-class-count",
        })
    }
}

pub fn mean_iou(ious: &[Option<f64>], policy: MiouPolicy) -> Result<f64> {
    let defined: Vec<f64> = ious.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Metrics("no class has a defined IoU".into()));
    }
    let sum: f64 = defined.iter().sum();
    Ok(match policy {
        MiouPolicy::ExcludeUndefined => sum / defined.len() as f64,
        MiouPolicy::DivideByClassCount => sum / ious.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// One confusion matrix over the whole dataset.
    #[default]
    Global,
    /// Mean of per-image scores.
    PerImage,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Aggregation::Global),
            "per-image" => Ok(Aggregation::PerImage),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Global => "global",
            Aggregation::PerImage => "per-image",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: u8,
    pub name: String,
    pub iou: Option<f64>,
    pub gt_pixels: u64,
    pub pred_pixels: u64,
}

/// JSON evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregation: Aggregation,
    pub policy: MiouPolicy,
    pub images: usize,
    pub evaluated_pixels: u64,
    pub classes: Vec<ClassScore>,
    pub miou: f64,
}

impl EvalReport {
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(|c| c.iou).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Scores already-accumulated per-image matrices.
pub fn build_report(
    class_map: &ClassMap,
    per_image: &[ConfusionMatrix],
    aggregation: Aggregation,
    policy: MiouPolicy,
) -> Result<EvalReport> {
    let c = class_map.len();
    let mut global = ConfusionMatrix::new(c);
    for m in per_image {
        global.merge(m)?;
    }
    let (ious, miou) = match aggregation {
        Aggregation::Global => {
            let ious = global.iou_per_class();
            let miou = mean_iou(&ious, policy)?;
            (ious, miou)
        }
        Aggregation::PerImage => {
            let mut sums = vec![0.0; c];
            let mut hits = vec![0usize; c];
            let mut image_scores = Vec::new();
            for m in per_image {
                let ious = m.iou_per_class();
                for (i, v) in ious.iter().enumerate() {
                    if let Some(v) = v {
                        sums[i] += v;
                        hits[i] += 1;
                    }
                }
                if let Ok(score) = mean_iou(&ious, policy) {
                    image_scores.push(score);
                }
            }
            if image_scores.is_empty() {
                return Err(Error::Metrics("no image has a defined IoU".into()));
            }
            let ious = (0..c).map(|i| (hits[i] > 0).then(|| sums[i] / hits[i] as f64)).collect();
            (ious, image_scores.iter().sum::<f64>() / image_scores.len() as f64)
        }
    };
    let classes = (0..c)
        .map(|i| ClassScore {
            class_id: i as u8,
            name: class_map.names()[i].clone(),
            iou: ious[i],
            gt_pixels: global.row_sum(i),
            pred_pixels: global.col_sum(i),
        })
        .collect();
    Ok(EvalReport {
        aggregation,
        policy,
        images: per_image.len(),
        evaluated_pixels: global.total(),
        classes,
        miou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(h: usize, w: usize, v: &[u8]) -> SemanticMask {
        SemanticMask::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let gt = m(2, 3, &[0, 1, 2, 2, 1, 0]);
        let cm = accumulate_confusion(&gt, &gt, ConfusionMatrix::new(3)).unwrap();
        let trace: u64 = (0..3).map(|i| cm.get(i, i)).sum();
        assert_eq!(trace, 6);
        assert_eq!(cm.total(), 6);
        assert!(cm.iou_per_class().iter().all(|v| *v == Some(1.0)));
        assert_eq!(miou(&cm).unwrap(), 1.0);
    }

    #[test]
    fn ignore_pixels_do_not_count() {
        let gt = m(1, 2, &[IGNORE, 1]);
        let pred = m(1, 2, &[0, 1]);
        let cm = accumulate_confusion(&gt, &pred, ConfusionMatrix::new(2)).unwrap();
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.get(1, 1), 1);
    }

    #[test]
    fn worked_two_by_two() {
        let gt = m(2, 2, &[0, 0, 1, 1]);
        let pred = m(2, 2, &[0, 1, 1, 1]);
        let cm = accumulate_confusion(&gt, &pred, ConfusionMatrix::new(2)).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1)), (1, 1, 0, 2));
        assert_eq!(cm.iou_per_class(), vec![Some(0.5), Some(2.0 / 3.0)]);
        assert_eq!(miou(&cm).unwrap(), (0.5 + 2.0 / 3.0) / 2.0);
        assert!((miou(&cm).unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_undefined() {
        let gt = m(1, 2, &[0, 0]);
        let cm = accumulate_confusion(&gt, &gt, ConfusionMatrix::new(3)).unwrap();
        assert_eq!(cm.iou_per_class(), vec![Some(1.0), None, None]);
        assert_eq!(cm.miou(MiouPolicy::ExcludeUndefined).unwrap(), 1.0);
        assert!((cm.miou(MiouPolicy::DivideByClassCount).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_over_defined_set() {
        assert_eq!(mean_iou(&[None, Some(0.4), None], MiouPolicy::ExcludeUndefined).unwrap(), 0.4);
        assert!(mean_iou(&[None, None], MiouPolicy::ExcludeUndefined).is_err());
        assert!(miou(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn accumulate_errors() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(cm.accumulate(&m(1, 2, &[0, 0]), &m(2, 1, &[0, 0])).is_err());
        assert!(cm.accumulate(&m(1, 2, &[0, 0]), &m(1, 2, &[0, 2])).is_err());
        assert!(cm.accumulate(&m(1, 2, &[0, 0]), &m(1, 2, &[0, IGNORE])).is_err());
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn per_image_aggregation() {
        let cmap = ClassMap::numbered(2).unwrap();
        let a = accumulate_confusion(&m(1, 2, &[0, 0]), &m(1, 2, &[0, 0]), ConfusionMatrix::new(2)).unwrap();
        let b = accumulate_confusion(&m(1, 2, &[0, 1]), &m(1, 2, &[1, 1]), ConfusionMatrix::new(2)).unwrap();
        let per = build_report(&cmap, &[a.clone(), b.clone()], Aggregation::PerImage, MiouPolicy::ExcludeUndefined)
            .unwrap();
        // image a: 1.0; image b: IoU0 = 0, IoU1 = 1/2 -> 0.25
        assert!((per.miou - 0.625).abs() < 1e-15);
        let global = build_report(&cmap, &[a, b], Aggregation::Global, MiouPolicy::ExcludeUndefined).unwrap();
        // global: counts00=2, 01=1, 11=1 -> IoU0 = 2/3, IoU1 = 1/2
        assert!((global.miou - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert_eq!(global.classes[0].gt_pixels, 3);
        assert_eq!(global.classes[1].pred_pixels, 2);
        let json = global.to_json();
        assert!(json.contains("\"miou\""));
    }
}
