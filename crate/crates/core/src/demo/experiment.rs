//! Baseline vs cut-and-paste comparison over several training seeds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::{evaluate_classifier, train_pixel_classifier, TrainConfig};
use super::synthetic::{dataset_digest, gen_synthetic, SyntheticConfig, SyntheticDataset};
use crate::bank::InstanceBank;
use crate::error::Result;
use crate::extraction::{extract_instances, Connectivity};
use crate::metrics::Aggregation;
use crate::paste::AugmentConfig;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub n_paste: usize,
    pub pre_paste_augment: bool,
}

impl Variant {
    pub fn baseline() -> Self {
        Variant { name: "baseline".into(), n_paste: 0, pre_paste_augment: false }
    }

    pub fn cut_paste(n_paste: usize, pre_paste_augment: bool) -> Self {
        let suffix = if pre_paste_augment { " +pre" } else { "" };
        Variant { name: format!("C&P N={n_paste}{suffix}"), n_paste, pre_paste_augment }
    }
}

/// Baseline followed by every `(n_paste, pre_paste_augment)` combination.
pub fn grid_variants(n_values: &[usize], pre_paste: &[bool]) -> Vec<Variant> {
    let mut variants = vec![Variant::baseline()];
    for &pre in pre_paste {
        for &n in n_values {
            variants.push(Variant::cut_paste(n, pre));
        }
    }
    variants
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticConfig,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    /// Standard flips/rotations after pasting, for every variant including the baseline.
    pub post_augment: bool,
    pub connectivity: Connectivity,
    pub min_pixels: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synthetic: SyntheticConfig::default(),
            variants: vec![Variant::baseline(), Variant::cut_paste(50, false)],
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            post_augment: true,
            connectivity: Connectivity::Four,
            min_pixels: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: String,
    pub n_paste: usize,
    pub pre_paste_augment: bool,
    pub seed: u64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    /// Digest of the training and test data this run consumed.
    pub dataset_digest: String,
    pub final_train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub n_paste: usize,
    pub pre_paste_augment: bool,
    pub runs: usize,
    pub mean_miou: f64,
    pub std_miou: f64,
    pub mean_iou: Vec<Option<f64>>,
    pub std_iou: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub class_names: Vec<String>,
    pub rare_class: Option<u8>,
    pub dataset_digest: String,
    pub bank_instances: usize,
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

/// Generates the dataset once, extracts a bank from its training split, then
/// trains and evaluates every `(variant, seed)` pair. Runs execute in
/// parallel on the current rayon pool; each run is deterministic.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let dataset: SyntheticDataset<T> = gen_synthetic(&config.synthetic)?;
    let digest = digest_of(&dataset);
    let bank = InstanceBank::from_extracted(
        dataset.class_map.clone(),
        dataset.train.iter().flat_map(|s| extract_instances(s, config.connectivity, config.min_pixels)),
    )?;

    let jobs: Vec<(&Variant, u64)> =
        config.variants.iter().flat_map(|v| config.seeds.iter().map(move |&s| (v, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(variant, seed)| run_one(config, &dataset, &bank, variant, seed))
        .collect::<Result<Vec<_>>>()?;

    let summary = config
        .variants
        .iter()
        .map(|v| summarize(v, &runs, dataset.class_map.len()))
        .collect();
    Ok(ExperimentReport {
        class_names: dataset.class_map.names().to_vec(),
        rare_class: config.synthetic.rare_class(),
        dataset_digest: digest,
        bank_instances: bank.total_count(),
        runs,
        summary,
    })
}

fn digest_of<T: Scalar>(dataset: &SyntheticDataset<T>) -> String {
    let all: Vec<_> = dataset.train.iter().chain(&dataset.test).collect();
    dataset_digest(&all)
}

fn run_one<T: Scalar>(
    config: &ExperimentConfig,
    dataset: &SyntheticDataset<T>,
    bank: &InstanceBank<T>,
    variant: &Variant,
    seed: u64,
) -> Result<RunRow> {
    let augment = AugmentConfig {
        n_paste: variant.n_paste,
        pre_paste_augment: variant.pre_paste_augment,
        post_augment: config.post_augment,
        global_seed: seed,
        ..AugmentConfig::default()
    };
    let train = TrainConfig { seed, ..config.train.clone() };
    let outcome = train_pixel_classifier(
        &dataset.train,
        dataset.class_map.len(),
        Some(bank),
        &augment,
        &train,
    )?;
    let report = evaluate_classifier(&outcome.model, &dataset.test, &dataset.class_map, Aggregation::Global)?;
    Ok(RunRow {
        variant: variant.name.clone(),
        n_paste: variant.n_paste,
        pre_paste_augment: variant.pre_paste_augment,
        seed,
        per_class_iou: report.per_class_iou(),
        miou: report.miou,
        dataset_digest: digest_of(dataset),
        final_train_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
    })
}

/// Mean and sample standard deviation (n - 1; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn summarize(variant: &Variant, runs: &[RunRow], class_count: usize) -> SummaryRow {
    let mine: Vec<&RunRow> = runs.iter().filter(|r| r.variant == variant.name).collect();
    let (mean_miou, std_miou) = mean_std(&mine.iter().map(|r| r.miou).collect::<Vec<_>>());
    let (mut mean_iou, mut std_iou) = (Vec::new(), Vec::new());
    for k in 0..class_count {
        let vals: Vec<f64> = mine.iter().filter_map(|r| r.per_class_iou[k]).collect();
        if vals.is_empty() {
            mean_iou.push(None);
            std_iou.push(None);
        } else {
            let (m, s) = mean_std(&vals);
            mean_iou.push(Some(m));
            std_iou.push(Some(s));
        }
    }
    SummaryRow {
        variant: variant.name.clone(),
        n_paste: variant.n_paste,
        pre_paste_augment: variant.pre_paste_augment,
        runs: mine.len(),
        mean_miou,
        std_miou,
        mean_iou,
        std_iou,
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary_for(&self, variant: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    /// Aligned text table: per-run rows, then `mean (std)` rows per variant. IoUs in percent.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let mut header = vec!["variant".to_string(), "pre".into(), "seed".into()];
        header.extend(self.class_names.iter().cloned());
        header.push("mIoU".into());

        let mut rows: Vec<Vec<String>> = Vec::new();
        for r in &self.runs {
            let mut row = vec![r.variant.clone(), yes_no(r.pre_paste_augment), r.seed.to_string()];
            row.extend(r.per_class_iou.iter().map(|&v| pct(v)));
            row.push(pct(Some(r.miou)));
            rows.push(row);
        }
        let runs_end = rows.len();
        for s in &self.summary {
            let mut row = vec![s.variant.clone(), yes_no(s.pre_paste_augment), "mean (std)".into()];
            for (m, sd) in s.mean_iou.iter().zip(&s.std_iou) {
                row.push(match (m, sd) {
                    (Some(m), Some(sd)) => format!("{:.1} ({:.1})", 100.0 * m, 100.0 * sd),
                    _ => "-".into(),
                });
            }
            row.push(format!("{:.1} ({:.1})", 100.0 * s.mean_miou, 100.0 * s.std_miou));
            rows.push(row);
        }

        let widths: Vec<usize> = (0..header.len())
            .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i < 3 {
                    let _ = write!(out, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(out, "{cell:>w$}", w = widths[i]);
                }
            }
            out.trim_end().to_string() + "\n"
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)) + "\n";
        let mut out = line(&header);
        out.push_str(&rule);
        for (i, row) in rows.iter().enumerate() {
            if i == runs_end {
                out.push_str(&rule);
            }
            out.push_str(&line(row));
        }
        out
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            synthetic: SyntheticConfig { image_size: 24, train_images: 4, test_images: 2, ..Default::default() },
            variants: grid_variants(&[10, 100], &[true, false]),
            seeds: vec![0, 1],
            train: TrainConfig { epochs: 2, batches_per_sample: 1, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn report_shape() {
        let cfg = tiny();
        let report = run_experiment::<f32>(&cfg).unwrap();
        assert_eq!(report.runs.len(), cfg.variants.len() * cfg.seeds.len());
        assert_eq!(report.summary.len(), cfg.variants.len());
        assert!(report.summary.iter().all(|s| s.runs == 2));
        assert!(report.runs.iter().all(|r| r.dataset_digest == report.dataset_digest));
        let table = report.to_table();
        assert_eq!(table.lines().count(), 2 + report.runs.len() + 1 + report.summary.len());
        assert!(table.contains("C&P N=100 +pre"));
        let back: ExperimentReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back.runs.len(), report.runs.len());
    }

    #[test]
    fn deterministic_report() {
        let cfg = tiny();
        assert_eq!(run_experiment::<f32>(&cfg).unwrap(), run_experiment::<f32>(&cfg).unwrap());
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
