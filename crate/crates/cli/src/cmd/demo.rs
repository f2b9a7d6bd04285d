use std::fs;

use anyhow::{ensure, Context, Result};
use cutpaste::demo::experiment::{grid_variants, run_experiment, ExperimentConfig};
use cutpaste::demo::synthetic::{default_band_means, gen_synthetic, write_synthetic, SyntheticConfig};
use cutpaste::demo::TrainConfig;
use cutpaste::extraction::Connectivity;

use crate::DemoArgs;

pub fn config_from(args: &DemoArgs, seed: u64) -> Result<ExperimentConfig> {
    ensure!(args.runs > 0, "--runs must be positive");
    ensure!(!args.n_paste.is_empty(), "--n-paste needs at least one value");
    let mut pre: Vec<bool> = args.pre_paste_augment.iter().map(|t| t.is_on()).collect();
    pre.dedup();
    let synthetic = SyntheticConfig {
        image_size: args.image_size,
        bands: args.bands,
        class_count: args.classes,
        rare_class_pixel_fraction: args.rare_fraction,
        band_mean_per_class: default_band_means(args.classes, args.bands),
        band_noise_sigma: args.noise_sigma,
        train_images: args.train_images,
        test_images: args.test_images,
        seed: args.data_seed,
    };
    synthetic.validate()?;
    ensure!(args.test_images > 0, "--test-images must be positive");
    ensure!(args.batch_pixels > 0, "--batch-pixels must be positive");
    Ok(ExperimentConfig {
        synthetic,
        variants: grid_variants(&args.n_paste, &pre),
        seeds: (0..args.runs).map(|k| seed.wrapping_add(k)).collect(),
        train: TrainConfig {
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            batch_pixels: args.batch_pixels,
            batches_per_sample: args.batches_per_sample,
            seed,
        },
        post_augment: args.post_augment.is_on(),
        connectivity: Connectivity::Four,
        min_pixels: 1,
    })
}

pub fn run(args: &DemoArgs, seed: u64) -> Result<()> {
    let config = config_from(args, seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if args.write_data {
        let data = gen_synthetic::<f32>(&config.synthetic)?;
        write_synthetic(&data, &args.out.join("data"))?;
    }
    let report = run_experiment::<f32>(&config)?;
    let table = report.to_table();
    let json_path = args.out.join("report.json");
    let text_path = args.out.join("report.txt");
    fs::write(&json_path, report.to_json()).with_context(|| format!("writing {}", json_path.display()))?;
    fs::write(&text_path, &table).with_context(|| format!("writing {}", text_path.display()))?;
    crate::stdout(&table)
}
