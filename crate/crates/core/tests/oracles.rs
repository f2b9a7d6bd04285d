//! Library results checked against brute-force oracles written independently here.

use std::collections::{BTreeSet, HashSet};

use cutpaste::bank::{load_bank, save_bank, InstanceBank};
use cutpaste::dataset::{split_items, SplitItem};
use cutpaste::extraction::{extract_instances, Connectivity};
use cutpaste::metrics::{ConfusionMatrix, MiouPolicy};
use cutpaste::{ClassMap, DetRng, Raster, Sample, SemanticMask, IGNORE};

struct Case {
    items: Vec<SplitItem>,
    aois: Vec<String>,
}

fn random_case(g: &mut DetRng, classes: usize) -> Case {
    let n_aoi = 2 + g.below_usize(7);
    let mut items = Vec::new();
    let aois: Vec<String> = (0..n_aoi).map(|a| format!("aoi{a}")).collect();
    for aoi in &aois {
        let members = 1 + g.below_usize(4);
        for m in 0..members {
            let histogram = (0..classes).map(|_| if g.below(10) < 6 { 1 + g.below(50) } else { 0 }).collect();
            items.push(SplitItem { sample_id: format!("{aoi}_s{m}"), aoi_id: aoi.clone(), histogram });
        }
    }
    Case { items, aois }
}

/// Validation sample count of every coverage-valid AOI subset.
fn valid_val_counts(case: &Case, classes: usize) -> Vec<usize> {
    let n = case.aois.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) - 1 {
        let in_val = |aoi: &str| {
            let idx = case.aois.iter().position(|a| a == aoi).unwrap();
            mask & (1 << idx) != 0
        };
        let mut train = vec![0u64; classes];
        let mut val = vec![0u64; classes];
        let mut count = 0;
        for it in &case.items {
            let side = if in_val(&it.aoi_id) {
                count += 1;
                &mut val
            } else {
                &mut train
            };
            for (s, h) in side.iter_mut().zip(&it.histogram) {
                *s += h;
            }
        }
        let ok = (0..classes).all(|k| train[k] + val[k] == 0 || (train[k] > 0 && val[k] > 0));
        if ok {
            out.push(count);
        }
    }
    out
}

#[test]
fn split_matches_brute_force_on_feasible_cases() {
    let classes = 3;
    let cm = ClassMap::numbered(classes).unwrap();
    let mut g = DetRng::seeded(17);
    let mut checked = 0;
    while checked < 60 {
        let case = random_case(&mut g, classes);
        let valid = valid_val_counts(&case, classes);
        let frac = 0.1 + 0.8 * g.next_f64();
        let seed = g.next_u64();
        let result = split_items(&case.items, &cm, frac, seed, 10_000);
        if valid.is_empty() {
            assert!(result.is_err());
            continue;
        }
        let split = result.unwrap();
        let n = case.items.len() as f64;
        let best = valid.iter().map(|&c| (c as f64 / n - frac).abs()).fold(f64::INFINITY, f64::min);
        assert!(((split.val_ids.len() as f64 / n - frac).abs() - best).abs() < 1e-12, "not the closest split");

        let val: HashSet<&str> = split.val_ids.iter().map(String::as_str).collect();
        let aoi_of = |id: &str| case.items.iter().find(|it| it.sample_id == id).unwrap().aoi_id.clone();
        let val_aois: BTreeSet<String> = split.val_ids.iter().map(|id| aoi_of(id)).collect();
        let train_aois: BTreeSet<String> = split.train_ids.iter().map(|id| aoi_of(id)).collect();
        assert!(val_aois.is_disjoint(&train_aois));
        assert_eq!(split.val_ids.len() + split.train_ids.len(), case.items.len());
        for k in 0..classes {
            let (mut t, mut v) = (0, 0);
            for it in &case.items {
                if val.contains(it.sample_id.as_str()) {
                    v += it.histogram[k];
                } else {
                    t += it.histogram[k];
                }
            }
            assert!(t + v == 0 || (t > 0 && v > 0), "class {k} on one side only");
        }
        checked += 1;
    }
}

#[test]
fn split_with_class_in_one_aoi_fails_after_budget() {
    let cm = ClassMap::numbered(2).unwrap();
    let items: Vec<SplitItem> = (0..4)
        .map(|a| SplitItem {
            sample_id: format!("s{a}"),
            aoi_id: format!("a{a}"),
            histogram: vec![10, if a == 2 { 5 } else { 0 }],
        })
        .collect();
    let err = split_items(&items, &cm, 0.25, 0, 200).unwrap_err().to_string();
    assert!(err.contains("class_1") || err.contains('1'), "{err}");
}

fn random_label(g: &mut DetRng, h: usize, w: usize, classes: usize, ignore: bool) -> SemanticMask {
    let values = (0..h * w)
        .map(|_| if ignore && g.below(8) == 0 { IGNORE } else { g.below_usize(classes) as u8 })
        .collect();
    SemanticMask::new(h, w, values).unwrap()
}

#[test]
fn iou_matches_direct_set_computation() {
    let mut g = DetRng::seeded(5);
    for _ in 0..150 {
        let (h, w, c) = (1 + g.below_usize(24), 1 + g.below_usize(24), 1 + g.below_usize(6));
        let gt = random_label(&mut g, h, w, c, true);
        let pred = random_label(&mut g, h, w, c, false);
        let mut m = ConfusionMatrix::new(c);
        m.accumulate(&gt, &pred).unwrap();
        let ious = m.iou_per_class();
        let mut defined = Vec::new();
        for k in 0..c as u8 {
            let a: HashSet<usize> = (0..h * w).filter(|&p| gt.values()[p] == k).collect();
            let b: HashSet<usize> =
                (0..h * w).filter(|&p| gt.values()[p] != IGNORE && pred.values()[p] == k).collect();
            let union = a.union(&b).count();
            match ious[k as usize] {
                None => assert_eq!(union, 0),
                Some(v) => {
                    let direct = a.intersection(&b).count() as f64 / union as f64;
                    assert!((v - direct).abs() < 1e-12);
                    defined.push(direct);
                }
            }
        }
        if let Ok(mean) = m.miou(MiouPolicy::ExcludeUndefined) {
            assert!((mean - defined.iter().sum::<f64>() / defined.len() as f64).abs() < 1e-12);
        } else {
            assert!(defined.is_empty());
        }
    }
}

#[test]
fn bank_round_trip_of_extracted_f64_instances() {
    let mut g = DetRng::seeded(23);
    let cm = ClassMap::numbered(4).unwrap();
    let mut records = Vec::new();
    for i in 0..12 {
        let (h, w, bands) = (1 + g.below_usize(20), 1 + g.below_usize(20), 1 + g.below_usize(3));
        let mask = random_label(&mut g, h, w, 4, true);
        // mix of integral, f32-exact and full f64 values
        let samples = (0..h * w * bands)
            .map(|_| match g.below(3) {
                0 => g.below(60_000) as f64,
                1 => (g.next_f64() as f32) as f64,
                _ => g.standard_normal(),
            })
            .collect();
        let sample = Sample::new(Raster::new(h, w, bands, samples).unwrap(), mask, format!("s{i}"), "a").unwrap();
        records.extend(extract_instances(&sample, Connectivity::Eight, 1));
    }
    // bands differ between samples, so bank them per band count
    for bands in 1..=3 {
        let bank = InstanceBank::from_extracted(cm.clone(), records.iter().filter(|r| r.bands() == bands).cloned()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bank(&bank, dir.path()).unwrap();
        let back: InstanceBank<f64> = load_bank(dir.path()).unwrap();
        assert_eq!(back.total_count(), bank.total_count());
        for (a, b) in bank.iter().zip(back.iter()) {
            assert_eq!(a, b);
            let bits = |r: &Raster<f64>| r.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.patch), bits(&b.patch));
        }
    }
}
