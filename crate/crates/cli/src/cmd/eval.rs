use anyhow::{bail, Context, Result};
use cutpaste::dataset::load_manifest;
use cutpaste::formats::read_label_mask;
use cutpaste::metrics::{build_report, ConfusionMatrix};
use cutpaste::model::ClassMap;
use rayon::prelude::*;

use crate::{emit, EvalArgs};

pub fn run(args: &EvalArgs) -> Result<()> {
    let class_map = ClassMap::load(&args.classmap)?;
    let manifest = load_manifest(&args.manifest)?;
    // every prediction must exist before any work is done
    for e in &manifest.entries {
        let p = args.pred_dir.join(format!("{}.mskl", e.sample_id));
        if !p.is_file() {
            bail!("missing prediction for sample {}: {}", e.sample_id, p.display());
        }
    }
    let matrices = manifest
        .entries
        .par_iter()
        .map(|e| -> Result<ConfusionMatrix> {
            let gt = read_label_mask(&e.mask_path)?;
            gt.validate(&class_map).with_context(|| format!("ground truth of {}", e.sample_id))?;
            let pred = read_label_mask(&args.pred_dir.join(format!("{}.mskl", e.sample_id)))?;
            let mut m = ConfusionMatrix::new(class_map.len());
            m.accumulate(&gt, &pred).with_context(|| format!("sample {}", e.sample_id))?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = build_report(&class_map, &matrices, args.aggregation, args.policy)?;
    emit(args.out.as_deref(), &report.to_json())
}
