use anyhow::{Context, Result};
use cutpaste::bank::{save_bank, InstanceBank};
use cutpaste::dataset::{load_manifest, load_sample};
use cutpaste::extraction::extract_instances;
use cutpaste::model::ClassMap;
use cutpaste::InstanceRecord64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ExtractArgs;

#[derive(Serialize)]
struct ClassCount<'a> {
    class_id: usize,
    name: &'a str,
    instances: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    samples: usize,
    instances: usize,
    classes: Vec<ClassCount<'a>>,
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let class_map = ClassMap::load(&args.classmap)?;
    let manifest = load_manifest(&args.manifest)?;

    // per-sample records in manifest order, so ids do not depend on scheduling
    let per_sample = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<Vec<InstanceRecord64>> {
            let (sample, _) = load_sample::<f64>(entry)?;
            sample
                .mask()
                .validate(&class_map)
                .with_context(|| format!("sample {}", entry.sample_id))?;
            Ok(extract_instances(&sample, args.connectivity, args.min_pixels))
        })
        .collect::<Result<Vec<_>>>()?;

    let bank = InstanceBank::from_extracted(class_map.clone(), per_sample.into_iter().flatten())?;
    let saved = save_bank(&bank, &args.out)?;
    log::info!("saved {} instances to {}", saved.total, args.out.display());

    let summary = Summary {
        samples: manifest.len(),
        instances: saved.total,
        classes: class_map
            .names()
            .iter()
            .enumerate()
            .map(|(class_id, name)| ClassCount { class_id, name, instances: saved.per_class[class_id] })
            .collect(),
    };
    crate::stdout(&(serde_json::to_string_pretty(&summary)? + "\n"))
}
