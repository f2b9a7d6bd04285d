use anyhow::Result;
use cutpaste::dataset::{load_manifest, split_dataset};
use cutpaste::model::ClassMap;

use crate::{emit, SplitArgs};

pub fn run(args: &SplitArgs, seed: u64) -> Result<()> {
    let class_map = ClassMap::load(&args.classmap)?;
    let manifest = load_manifest(&args.manifest)?;
    let split = split_dataset(&manifest, &class_map, args.val_fraction, seed, args.max_attempts)?;
    log::info!(
        "{} train / {} val samples (val fraction {:.4}, {} attempts)",
        split.train_ids.len(),
        split.val_ids.len(),
        split.val_fraction_realized,
        split.attempts
    );
    emit(args.out.as_deref(), &split.to_json())
}
