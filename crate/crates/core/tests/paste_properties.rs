//! Property tests of the paste engine over randomized samples and banks.

use std::collections::BTreeSet;

use cutpaste::bank::InstanceBank;
use cutpaste::extraction::{extract_instances, Connectivity};
use cutpaste::paste::{augment_sample, fit_instance, replay_pastes, sample_instance, transform_instance, AugmentConfig};
use cutpaste::{derive_rng, ClassMap, DetRng, Raster, RngState, Sample, SemanticMask, IGNORE};
use rayon::prelude::*;

const CLASSES: usize = 5;

fn random_sample(g: &mut DetRng, id: &str, h: usize, w: usize, bands: usize) -> Sample<f32> {
    // blocky labels with a little ignore
    let cell = 1 + g.below_usize(4);
    let grid: Vec<u8> = (0..(h / cell + 1) * (w / cell + 1)).map(|_| g.below_usize(CLASSES) as u8).collect();
    let labels: Vec<u8> = (0..h * w)
        .map(|p| {
            let (r, c) = (p / w, p % w);
            if g.below(30) == 0 {
                IGNORE
            } else {
                grid[(r / cell) * (w / cell + 1) + c / cell]
            }
        })
        .collect();
    let samples = (0..h * w * bands).map(|_| g.below(1000) as f32 / 7.0).collect();
    Sample::new(
        Raster::new(h, w, bands, samples).unwrap(),
        SemanticMask::new(h, w, labels).unwrap(),
        id.to_string(),
        format!("aoi_{id}"),
    )
    .unwrap()
}

fn dataset(seed: u64, n: usize) -> (Vec<Sample<f32>>, InstanceBank<f32>) {
    let mut g = DetRng::seeded(seed);
    let samples: Vec<_> = (0..n)
        .map(|i| {
            let (h, w) = (8 + g.below_usize(25), 8 + g.below_usize(25));
            random_sample(&mut g, &format!("s{i}"), h, w, 3)
        })
        .collect();
    let bank = InstanceBank::from_extracted(
        ClassMap::numbered(CLASSES).unwrap(),
        samples.iter().flat_map(|s| extract_instances(s, Connectivity::Four, 1)),
    )
    .unwrap();
    (samples, bank)
}

fn configs() -> Vec<AugmentConfig> {
    let mut out = Vec::new();
    for n_paste in [0, 1, 7, 40] {
        for pre in [false, true] {
            for post in [false, true] {
                out.push(AugmentConfig { n_paste, pre_paste_augment: pre, post_augment: post, ..Default::default() });
            }
        }
    }
    out
}

#[test]
fn deterministic_replay_of_same_rng() {
    let (samples, bank) = dataset(1, 6);
    for cfg in configs() {
        for (i, s) in samples.iter().enumerate() {
            let rng = derive_rng(9, 2, i as u64);
            let a = augment_sample(s, &bank, &cfg, rng).unwrap();
            let b = augment_sample(s, &bank, &cfg, rng).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn pixels_outside_pasted_masks_are_unchanged() {
    let (samples, bank) = dataset(2, 8);
    for cfg in configs().into_iter().filter(|c| !c.post_augment) {
        for (i, s) in samples.iter().enumerate() {
            let out = augment_sample(s, &bank, &cfg, derive_rng(3, 0, i as u64)).unwrap();
            let mut touched = vec![false; s.height() * s.width()];
            for e in &out.events {
                let inst = fit_instance(transform_instance(bank.get(&e.instance_id).unwrap(), e.transform), s.height(), s.width());
                for r in 0..inst.height() {
                    for c in 0..inst.width() {
                        if inst.mask.get(r, c) {
                            touched[(e.top_left.0 + r) * s.width() + e.top_left.1 + c] = true;
                        }
                    }
                }
            }
            for r in 0..s.height() {
                for c in 0..s.width() {
                    if touched[r * s.width() + c] {
                        continue;
                    }
                    assert_eq!(out.sample.mask().get(r, c), s.mask().get(r, c));
                    for b in 0..s.bands() {
                        assert_eq!(out.sample.image().get(b, r, c).to_bits(), s.image().get(b, r, c).to_bits());
                    }
                }
            }
        }
    }
}

fn pixel_multiset(s: &Sample<f32>) -> Vec<(Vec<u32>, u8)> {
    let mut v: Vec<_> = (0..s.height())
        .flat_map(|r| (0..s.width()).map(move |c| (r, c)))
        .map(|(r, c)| (s.image().pixel(r, c).map(f32::to_bits).collect(), s.mask().get(r, c)))
        .collect();
    v.sort();
    v
}

#[test]
fn replay_reproduces_pre_post_sample_and_post_is_a_permutation() {
    let (samples, bank) = dataset(4, 8);
    for cfg in configs() {
        for (i, s) in samples.iter().enumerate() {
            let out = augment_sample(s, &bank, &cfg, derive_rng(5, 1, i as u64)).unwrap();
            let pasted = replay_pastes(s, &bank, &out.events).unwrap();
            assert_eq!(pixel_multiset(&pasted), pixel_multiset(&out.sample));
            let t = out.post_transform;
            assert_eq!(&t.apply_raster(pasted.image()), out.sample.image());
            assert_eq!(&t.apply_mask(pasted.mask()), out.sample.mask());
            if !cfg.post_augment {
                assert!(t.is_identity());
                assert_eq!(pasted, out.sample);
            }
        }
    }
}

#[test]
fn labels_stay_within_original_and_bank_classes() {
    let (samples, bank) = dataset(6, 6);
    let bank_classes: BTreeSet<u8> = bank.non_empty_classes().into_iter().collect();
    for cfg in configs() {
        for (i, s) in samples.iter().enumerate() {
            let out = augment_sample(s, &bank, &cfg, derive_rng(7, 0, i as u64)).unwrap();
            let allowed: BTreeSet<u8> = s.mask().classes_present().union(&bank_classes).copied().collect();
            assert!(out.sample.mask().classes_present().is_subset(&allowed));
            let ignore_before = s.mask().values().iter().filter(|&&v| v == IGNORE).count();
            let ignore_after = out.sample.mask().values().iter().filter(|&&v| v == IGNORE).count();
            assert!(ignore_after <= ignore_before, "pasting never writes ignore");
        }
    }
}

#[test]
fn parallel_map_equals_serial_map() {
    let (samples, bank) = dataset(8, 24);
    let cfg = AugmentConfig { n_paste: 20, pre_paste_augment: true, ..Default::default() };
    let run = |i: usize, s: &Sample<f32>| augment_sample(s, &bank, &cfg, derive_rng(11, 4, i as u64)).unwrap();
    let serial: Vec<_> = samples.iter().enumerate().map(|(i, s)| run(i, s)).collect();
    let parallel: Vec<_> = samples.par_iter().enumerate().map(|(i, s)| run(i, s)).collect();
    assert_eq!(serial, parallel);
}

fn bank_with_counts(counts: &[usize]) -> InstanceBank<f32> {
    let mut bank = InstanceBank::new(ClassMap::numbered(counts.len()).unwrap());
    let mut g = DetRng::seeded(0);
    for (class, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let s = random_sample(&mut g, "src", 2, 2, 1);
            let sample = Sample::new(
                s.image().clone(),
                SemanticMask::filled(2, 2, class as u8).unwrap(),
                "src",
                "a",
            )
            .unwrap();
            for rec in extract_instances(&sample, Connectivity::Four, 1) {
                bank.push_extracted(rec).unwrap();
            }
        }
    }
    bank
}

#[test]
fn class_draws_pass_chi_square_uniformity() {
    let bank = bank_with_counts(&[1, 3, 30, 300]);
    let mut g = RngState::new(42, 0).generator();
    let n = 10_000;
    let mut hits = [0usize; 4];
    for _ in 0..n {
        hits[sample_instance(&bank, &mut g).unwrap().class_id as usize] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = hits.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
    // df = 3, significance 0.001
    assert!(chi2 < 16.266, "chi2 {chi2} hits {hits:?}");
}

#[test]
fn one_versus_ninety_nine_instances_split_evenly() {
    let bank = bank_with_counts(&[1, 99]);
    let mut g = RngState::new(3, 3).generator();
    let a = (0..10_000).filter(|_| sample_instance(&bank, &mut g).unwrap().class_id == 0).count();
    let f = a as f64 / 10_000.0;
    assert!((0.47..=0.53).contains(&f), "{f}");
}

#[test]
fn instances_within_a_class_are_uniform() {
    let bank = bank_with_counts(&[4]);
    let mut g = RngState::new(5, 0).generator();
    let mut hits = std::collections::HashMap::new();
    for _ in 0..8_000 {
        *hits.entry(sample_instance(&bank, &mut g).unwrap().id.clone()).or_insert(0usize) += 1;
    }
    assert_eq!(hits.len(), 4);
    let chi2: f64 = hits.values().map(|&h| (h as f64 - 2000.0).powi(2) / 2000.0).sum();
    assert!(chi2 < 16.266, "{hits:?}");
}
