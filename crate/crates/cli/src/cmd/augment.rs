use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cutpaste::bank::{load_bank, InstanceBank};
use cutpaste::dataset::{load_manifest, load_sample, write_manifest, ManifestEntry};
use cutpaste::formats::{dtype_for, write_label_mask, write_raster};
use cutpaste::paste::{augment_sample, AugmentConfig, PasteEvent, PlacementPolicy};
use cutpaste::geometry::Transform;
use cutpaste::{derive_rng, InstanceBank64};
use rayon::prelude::*;
use serde::Serialize;

use crate::AugmentArgs;

#[derive(Serialize)]
struct EventLog<'a> {
    sample_id: &'a str,
    seed: u64,
    epoch: u64,
    sample_index: usize,
    events: &'a [PasteEvent],
    post_transform: Transform,
}

pub fn run(args: &AugmentArgs, seed: u64) -> Result<()> {
    let config = AugmentConfig {
        n_paste: args.n_paste,
        pre_paste_augment: args.pre_paste_augment.is_on(),
        post_augment: args.post_augment.is_on(),
        flip_probability: args.flip_probability,
        placement: PlacementPolicy::FullFit,
        global_seed: seed,
    };
    config.validate()?;
    let manifest = load_manifest(&args.manifest)?;
    let bank: InstanceBank64 = match (&args.bank, args.n_paste) {
        (Some(dir), _) => load_bank(dir)?,
        (None, 0) => InstanceBank::new(cutpaste::ClassMap::numbered(255)?),
        (None, _) => bail!("--bank is required when --n-paste is above 0"),
    };
    if args.n_paste > 0 && bank.is_empty() {
        bail!("instance bank is empty; nothing to paste (use --n-paste 0)");
    }

    let images = args.out.join("images");
    let masks = args.out.join("masks");
    let events = args.out.join("events");
    for d in [&images, &masks, &events] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }

    let entries = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| -> Result<ManifestEntry> {
            let (sample, dtype) = load_sample::<f64>(entry)?;
            sample
                .mask()
                .validate(bank.class_map())
                .with_context(|| format!("sample {} against the bank's class map", entry.sample_id))?;
            if let Some(b) = bank.bands().filter(|&b| b != sample.bands()) {
                bail!("sample {} has {} bands, bank instances {b}", entry.sample_id, sample.bands());
            }
            let rng = derive_rng(seed, args.epoch, index as u64);
            let out = augment_sample(&sample, &bank, &config, rng)
                .with_context(|| format!("augmenting {}", entry.sample_id))?;

            let image_path: PathBuf = images.join(format!("{}.msra", entry.sample_id));
            let mask_path: PathBuf = masks.join(format!("{}.mskl", entry.sample_id));
            let image = out.sample.image();
            write_raster(&image_path, image, dtype_for(image, dtype))?;
            write_label_mask(&mask_path, out.sample.mask())?;
            let log = EventLog {
                sample_id: &entry.sample_id,
                seed,
                epoch: args.epoch,
                sample_index: index,
                events: &out.events,
                post_transform: out.post_transform,
            };
            let log_path = events.join(format!("{}.json", entry.sample_id));
            fs::write(&log_path, serde_json::to_string_pretty(&log)? + "\n")
                .with_context(|| format!("writing {}", log_path.display()))?;
            Ok(ManifestEntry { image_path, mask_path, ..entry.clone() })
        })
        .collect::<Result<Vec<_>>>()?;

    write_manifest(&args.out.join("manifest.csv"), &entries)?;
    log::info!("augmented {} samples into {}", entries.len(), args.out.display());
    Ok(())
}
