use anyhow::Result;
use cutpaste::bank::{bank_stats, load_bank, ClassStats};
use cutpaste::dataset::{class_histogram, load_manifest};
use cutpaste::model::ClassMap;
use cutpaste::InstanceBank64;
use serde::Serialize;

use crate::{emit, StatsArgs};

#[derive(Serialize)]
struct ClassPixels<'a> {
    class_id: usize,
    name: &'a str,
    pixels: u64,
    share: f64,
}

#[derive(Serialize)]
struct Stats<'a> {
    samples: usize,
    total_pixels: u64,
    histogram: Vec<ClassPixels<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bank: Option<Vec<ClassStats>>,
}

pub fn run(args: &StatsArgs) -> Result<()> {
    let class_map = ClassMap::load(&args.classmap)?;
    let manifest = load_manifest(&args.manifest)?;
    let counts = class_histogram(&manifest, &class_map)?;
    let total: u64 = counts.iter().sum();
    let bank = match &args.bank {
        Some(dir) => {
            let bank: InstanceBank64 = load_bank(dir)?;
            Some(bank_stats(&bank))
        }
        None => None,
    };
    let stats = Stats {
        samples: manifest.len(),
        total_pixels: total,
        histogram: class_map
            .names()
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(class_id, (name, &pixels))| ClassPixels {
                class_id,
                name,
                pixels,
                share: if total > 0 { pixels as f64 / total as f64 } else { 0.0 },
            })
            .collect(),
        bank,
    };
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&stats)? + "\n"))
}
