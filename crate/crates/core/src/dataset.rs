//! Dataset manifests, class histograms and AOI-disjoint train/validation splits.
//!
//! Manifest CSV header: `sample_id,image_path,mask_path,aoi_id,date`.
//! Relative paths resolve against the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;
use crate::model::{ClassMap, Raster, Sample, SemanticMask, IGNORE};
use crate::rng::{DetRng, RngState};
use crate::scalar::{Dtype, Scalar};

pub const MANIFEST_HEADER: [&str; 5] = ["sample_id", "image_path", "mask_path", "aoi_id", "date"];

/// Stream id reserved for split search draws.
const SPLIT_STREAM: u64 = 0x5350_4C49_5400_0000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub aoi_id: String,
    pub date: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct RawRow {
    sample_id: String,
    image_path: String,
    mask_path: String,
    aoi_id: String,
    date: String,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn looks_like_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 10
        && b[..10].iter().enumerate().all(|(i, &ch)| match i {
            4 | 7 => ch == b'-',
            _ => ch.is_ascii_digit(),
        })
}

/// Parses and validates a manifest; errors name the 1-based data row.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest { row: 0, message: format!("{}: {e}", path.display()) })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest { row: 0, message: format!("unreadable header: {e}") })?;
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Manifest {
            row: 0,
            message: format!("header must be {:?}", MANIFEST_HEADER.join(",")),
        });
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let row_no = i + 1;
        let fail = |message: String| Error::Manifest { row: row_no, message };
        let raw = row.map_err(|e| fail(format!("malformed row: {e}")))?;
        if raw.sample_id.is_empty() {
            return Err(fail("empty sample_id".into()));
        }
        if !seen.insert(raw.sample_id.clone()) {
            return Err(fail(format!("duplicate sample_id {:?}", raw.sample_id)));
        }
        if !looks_like_iso_date(&raw.date) {
            return Err(fail(format!("date {:?} is not ISO-8601 (YYYY-MM-DD)", raw.date)));
        }
        let image_path = base.join(&raw.image_path);
        let mask_path = base.join(&raw.mask_path);
        for p in [&image_path, &mask_path] {
            if !p.is_file() {
                return Err(fail(format!("missing file {}", p.display())));
            }
        }
        entries.push(ManifestEntry {
            sample_id: raw.sample_id,
            image_path,
            mask_path,
            aoi_id: raw.aoi_id,
            date: raw.date,
        });
    }
    Ok(DatasetManifest { entries })
}

/// Writes a manifest; paths under the manifest's directory are stored relative to it.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let rel = |p: &Path| -> String {
        p.strip_prefix(&base).unwrap_or(p).to_string_lossy().replace('\\', "/")
    };
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Manifest { row: 0, message: format!("{}: {e}", path.display()) })?;
    let io = |e: csv::Error| Error::Manifest { row: 0, message: format!("{}: {e}", path.display()) };
    writer.write_record(MANIFEST_HEADER).map_err(io)?;
    for e in entries {
        writer
            .write_record([
                e.sample_id.as_str(),
                &rel(&e.image_path),
                &rel(&e.mask_path),
                e.aoi_id.as_str(),
                e.date.as_str(),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads one manifest entry; also returns the on-disk image dtype.
pub fn load_sample<T: Scalar>(entry: &ManifestEntry) -> Result<(Sample<T>, Dtype)> {
    let (image, dtype): (Raster<T>, Dtype) = formats::read_raster(&entry.image_path)?;
    let mask = formats::read_label_mask(&entry.mask_path)?;
    let sample = Sample::new(image, mask, entry.sample_id.clone(), entry.aoi_id.clone())
        .map_err(|e| Error::format(entry.sample_id.clone(), e.to_string()))?;
    Ok((sample, dtype))
}

pub fn mask_histogram(mask: &SemanticMask, class_map: &ClassMap) -> Result<Vec<u64>> {
    mask.validate(class_map)?;
    let mut counts = vec![0u64; class_map.len()];
    for &v in mask.values() {
        if v != IGNORE {
            counts[v as usize] += 1;
        }
    }
    Ok(counts)
}

/// Non-ignore pixel counts for every sample, in manifest order.
pub fn per_sample_histograms(manifest: &DatasetManifest, class_map: &ClassMap) -> Result<Vec<Vec<u64>>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let mask = formats::read_label_mask(&e.mask_path)?;
            mask_histogram(&mask, class_map)
                .map_err(|err| Error::format(e.mask_path.display().to_string(), err.to_string()))
        })
        .collect()
}

/// Dataset-wide non-ignore pixel counts per class.
pub fn class_histogram(manifest: &DatasetManifest, class_map: &ClassMap) -> Result<Vec<u64>> {
    let per_sample = per_sample_histograms(manifest, class_map)?;
    let mut total = vec![0u64; class_map.len()];
    for h in per_sample {
        for (t, v) in total.iter_mut().zip(h) {
            *t += v;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPresence {
    pub class_names: Vec<String>,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub seed: u64,
    pub val_fraction_requested: f64,
    pub val_fraction_realized: f64,
    pub attempts: usize,
    pub class_presence: ClassPresence,
}

impl SplitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes") + "\n"
    }
}

/// Minimal per-sample view the split search works on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitItem {
    pub sample_id: String,
    pub aoi_id: String,
    pub histogram: Vec<u64>,
}

pub fn split_dataset(
    manifest: &DatasetManifest,
    class_map: &ClassMap,
    val_fraction: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<SplitResult> {
    let histograms = per_sample_histograms(manifest, class_map)?;
    let items: Vec<SplitItem> = manifest
        .entries
        .iter()
        .zip(histograms)
        .map(|(e, histogram)| SplitItem { sample_id: e.sample_id.clone(), aoi_id: e.aoi_id.clone(), histogram })
        .collect();
    split_items(&items, class_map, val_fraction, seed, max_attempts)
}

struct Aoi {
    members: Vec<usize>,
    pixels: Vec<u64>,
}

struct Tier {
    distance: f64,
    goals: Vec<usize>,
}

/// Tier `j` among the live ones with weight `2^-j`, so close sizes get most attempts.
fn pick_tier(rng: &mut DetRng, exhausted: &[bool]) -> Option<usize> {
    let live: Vec<usize> = (0..exhausted.len()).filter(|&t| !exhausted[t]).collect();
    let mut i = 0;
    while i + 1 < live.len() && rng.bernoulli(0.5) {
        i += 1;
    }
    live.get(i).copied()
}

/// Counts of AOI subsets by total sample count, for exact-size uniform sampling.
struct SubsetCounter {
    sizes: Vec<usize>,
    /// `prefix[i][s]`: subsets of the first `i` AOIs summing to `s` (as f64; exact well past 2^53 subsets is not needed).
    prefix: Vec<Vec<f64>>,
}

impl SubsetCounter {
    fn new(sizes: &[usize]) -> Self {
        let n: usize = sizes.iter().sum();
        let mut prefix = vec![vec![0.0; n + 1]];
        prefix[0][0] = 1.0;
        for &size in sizes {
            let prev = prefix.last().unwrap();
            let mut next = prev.clone();
            for s in size..=n {
                next[s] += prev[s - size];
            }
            prefix.push(next);
        }
        SubsetCounter { sizes: sizes.to_vec(), prefix }
    }

    fn count(&self, sum: usize) -> f64 {
        self.prefix.last().map_or(0.0, |p| p[sum])
    }

    /// Uniform random subset with exactly `sum` samples; `sum` must be reachable.
    fn sample(&self, mut sum: usize, rng: &mut DetRng) -> Vec<bool> {
        let mut chosen = vec![false; self.sizes.len()];
        for i in (0..self.sizes.len()).rev() {
            let size = self.sizes[i];
            let with = if sum >= size { self.prefix[i][sum - size] } else { 0.0 };
            let total = self.prefix[i + 1][sum];
            if with > 0.0 && rng.next_f64() * total < with {
                chosen[i] = true;
                sum -= size;
            }
        }
        chosen
    }
}

/// Randomized rejection search over whole-AOI assignments.
///
/// Achievable validation sizes are grouped by distance to the requested
/// fraction. Each attempt picks a size (closer sizes far more often), draws a
/// uniformly random AOI subset of exactly that many samples, and checks that
/// every class with pixels appears on both sides. The closest valid
/// assignment wins; the search stops early once every closer size has been
/// exhausted, which makes it exact on small AOI counts.
pub fn split_items(
    items: &[SplitItem],
    class_map: &ClassMap,
    val_fraction: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<SplitResult> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    if items.is_empty() {
        return Err(Error::Split("manifest is empty".into()));
    }
    let c = class_map.len();
    if let Some(bad) = items.iter().find(|it| it.histogram.len() != c) {
        return Err(Error::Split(format!("sample {} has a histogram of the wrong length", bad.sample_id)));
    }

    let mut aois: Vec<Aoi> = Vec::new();
    let mut aoi_index: HashMap<&str, usize> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        let k = *aoi_index.entry(item.aoi_id.as_str()).or_insert_with(|| {
            aois.push(Aoi { members: Vec::new(), pixels: vec![0; c] });
            aois.len() - 1
        });
        aois[k].members.push(i);
        for (p, v) in aois[k].pixels.iter_mut().zip(&item.histogram) {
            *p += v;
        }
    }
    if aois.len() < 2 {
        return Err(Error::Split("at least two AOIs are needed for a disjoint split".into()));
    }

    let n = items.len();
    let target = val_fraction * n as f64;
    let sizes: Vec<usize> = aois.iter().map(|a| a.members.len()).collect();
    let counter = SubsetCounter::new(&sizes);

    // sizes grouped by distance to the target, closest first
    let mut tiers: Vec<Tier> = Vec::new();
    let mut candidates: Vec<usize> = (1..n).filter(|&s| counter.count(s) > 0.0).collect();
    candidates.sort_by(|&a, &b| (a as f64 - target).abs().total_cmp(&(b as f64 - target).abs()).then(a.cmp(&b)));
    for s in candidates {
        let d = (s as f64 - target).abs();
        match tiers.last_mut() {
            Some(t) if t.distance == d => t.goals.push(s),
            _ => tiers.push(Tier { distance: d, goals: vec![s] }),
        }
    }
    let mut seen: Vec<HashSet<Vec<bool>>> = vec![HashSet::new(); tiers.len()];
    let mut exhausted = vec![false; tiers.len()];

    let total: Vec<u64> = (0..c).map(|k| aois.iter().map(|a| a.pixels[k]).sum()).collect();
    let required: Vec<usize> = (0..c).filter(|&k| total[k] > 0).collect();

    let mut rng = DetRng::from_state(RngState::new(seed, SPLIT_STREAM));
    let mut best: Option<(usize, Vec<bool>, usize)> = None;
    let mut missing_val = vec![0usize; c];
    let mut missing_train = vec![0usize; c];

    for attempt in 1..=max_attempts {
        let Some(tier) = pick_tier(&mut rng, &exhausted) else { break };
        let goal = tiers[tier].goals[rng.below_usize(tiers[tier].goals.len())];
        let in_val = counter.sample(goal, &mut rng);
        let possible: f64 = tiers[tier].goals.iter().map(|&g| counter.count(g)).sum();
        if possible <= max_attempts as f64 {
            seen[tier].insert(in_val.clone());
            exhausted[tier] = seen[tier].len() as f64 >= possible;
        }

        let mut ok = true;
        for &k in &required {
            let val_pixels: u64 = aois.iter().zip(&in_val).filter(|(_, &v)| v).map(|(a, _)| a.pixels[k]).sum();
            if val_pixels == 0 {
                missing_val[k] += 1;
                ok = false;
            } else if val_pixels == total[k] {
                missing_train[k] += 1;
                ok = false;
            }
        }
        if ok && best.as_ref().is_none_or(|(t, _, _)| tier < *t) {
            best = Some((tier, in_val, attempt));
        }
        // closest possible once every closer tier is used up
        if let Some((t, _, _)) = &best {
            if exhausted[..*t].iter().all(|&e| e) {
                break;
            }
        }
    }

    let Some((_, in_val, attempts)) = best else {
        let worst = (0..c).max_by_key(|&k| (missing_val[k] + missing_train[k], std::cmp::Reverse(k))).unwrap_or(0);
        return Err(Error::Split(format!(
            "no AOI assignment in {max_attempts} attempts put class {worst} ({}) in both splits \
             (absent from validation {} times, from training {} times)",
            class_map.names()[worst],
            missing_val[worst],
            missing_train[worst]
        )));
    };

    let mut val_flags = vec![false; n];
    for (a, aoi) in aois.iter().enumerate() {
        if in_val[a] {
            for &m in &aoi.members {
                val_flags[m] = true;
            }
        }
    }
    let mut presence = ClassPresence { class_names: class_map.names().to_vec(), train: vec![0; c], val: vec![0; c] };
    let (mut train_ids, mut val_ids) = (Vec::new(), Vec::new());
    for (item, &is_val) in items.iter().zip(&val_flags) {
        let (ids, counts) = if is_val { (&mut val_ids, &mut presence.val) } else { (&mut train_ids, &mut presence.train) };
        ids.push(item.sample_id.clone());
        for (t, v) in counts.iter_mut().zip(&item.histogram) {
            *t += v;
        }
    }
    Ok(SplitResult {
        val_fraction_realized: val_ids.len() as f64 / n as f64,
        train_ids,
        val_ids,
        seed,
        val_fraction_requested: val_fraction,
        attempts,
        class_presence: presence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn item(id: &str, aoi: &str, hist: &[u64]) -> SplitItem {
        SplitItem { sample_id: id.into(), aoi_id: aoi.into(), histogram: hist.to_vec() }
    }

    fn write_pair(dir: &Path, id: &str, mask: &SemanticMask) {
        let img = Raster::<f32>::filled(mask.height(), mask.width(), 1, 1.0).unwrap();
        formats::write_raster(&dir.join(format!("{id}.msra")), &img, Dtype::U8).unwrap();
        formats::write_label_mask(&dir.join(format!("{id}.mskl")), mask).unwrap();
    }

    #[test]
    fn header_only_manifest_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "sample_id,image_path,mask_path,aoi_id,date\n").unwrap();
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn manifest_rows_in_order_and_duplicates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = SemanticMask::filled(2, 2, 0).unwrap();
        for id in ["a", "b", "c"] {
            write_pair(dir.path(), id, &m);
        }
        let p = dir.path().join("m.csv");
        let mut text = String::from("sample_id,image_path,mask_path,aoi_id,date\n");
        for id in ["c", "a", "b"] {
            text.push_str(&format!("{id},{id}.msra,{id}.mskl,x,2019-01-01\n"));
        }
        fs::write(&p, &text).unwrap();
        let ids: Vec<String> = load_manifest(&p).unwrap().entries.into_iter().map(|e| e.sample_id).collect();
        assert_eq!(ids, ["c", "a", "b"]);

        text.push_str("a,a.msra,a.mskl,x,2019-02-01\n");
        fs::write(&p, &text).unwrap();
        match load_manifest(&p).unwrap_err() {
            Error::Manifest { row, message } => {
                assert_eq!(row, 4);
                assert!(message.contains("duplicate"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn manifest_missing_file_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "sample_id,image_path,mask_path,aoi_id,date\nz,nope.msra,nope.mskl,x,2019-01-01\n").unwrap();
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("nope.msra"), "{err}");
        fs::write(&p, "sample_id,image_path,mask_path,aoi_id,date\nz,only-two\n").unwrap();
        assert!(load_manifest(&p).unwrap_err().to_string().contains("row 1"));
        fs::write(&p, "id,img\n").unwrap();
        assert!(load_manifest(&p).is_err());
    }

    #[test]
    fn histogram_examples() {
        let dir = tempfile::tempdir().unwrap();
        let cm = ClassMap::numbered(2).unwrap();
        let m = SemanticMask::new(2, 2, vec![0, 0, 1, IGNORE]).unwrap();
        write_pair(dir.path(), "a", &m);
        write_pair(dir.path(), "b", &m);
        write_pair(dir.path(), "ign", &SemanticMask::filled(2, 2, IGNORE).unwrap());
        let entry = |id: &str| ManifestEntry {
            sample_id: id.into(),
            image_path: dir.path().join(format!("{id}.msra")),
            mask_path: dir.path().join(format!("{id}.mskl")),
            aoi_id: "x".into(),
            date: "2019-01-01".into(),
        };
        let one = DatasetManifest { entries: vec![entry("a")] };
        assert_eq!(class_histogram(&one, &cm).unwrap(), vec![2, 1]);
        let two = DatasetManifest { entries: vec![entry("a"), entry("b")] };
        assert_eq!(class_histogram(&two, &cm).unwrap(), vec![4, 2]);
        let ign = DatasetManifest { entries: vec![entry("ign")] };
        assert_eq!(class_histogram(&ign, &cm).unwrap(), vec![0, 0]);
        let broken = DatasetManifest {
            entries: vec![ManifestEntry { mask_path: dir.path().join("missing.mskl"), ..entry("a") }],
        };
        assert!(class_histogram(&broken, &cm).unwrap_err().to_string().contains("missing.mskl"));
    }

    #[test]
    fn manifest_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", &SemanticMask::filled(1, 1, 0).unwrap());
        let entries = vec![ManifestEntry {
            sample_id: "a".into(),
            image_path: dir.path().join("a.msra"),
            mask_path: dir.path().join("a.mskl"),
            aoi_id: "x".into(),
            date: "2019-01-01".into(),
        }];
        let p = dir.path().join("m.csv");
        write_manifest(&p, &entries).unwrap();
        assert!(fs::read_to_string(&p).unwrap().contains("a,a.msra,a.mskl,x,2019-01-01"));
        assert_eq!(load_manifest(&p).unwrap().entries, entries);
    }

    #[test]
    fn two_aoi_split() {
        let cm = ClassMap::numbered(2).unwrap();
        let items = vec![item("a", "A", &[5, 5]), item("b", "B", &[3, 2])];
        let s = split_items(&items, &cm, 0.5, 1, 100).unwrap();
        assert_eq!(s.train_ids.len(), 1);
        assert_eq!(s.val_ids.len(), 1);
        assert_eq!(s.val_fraction_realized, 0.5);
    }

    #[test]
    fn class_in_single_aoi_is_infeasible() {
        let cm = ClassMap::new(["bg", "rare"]).unwrap();
        let items =
            vec![item("a", "A", &[5, 1]), item("b", "B", &[5, 0]), item("c", "C", &[5, 0])];
        let err = split_items(&items, &cm, 0.3, 1, 50).unwrap_err().to_string();
        assert!(err.contains("class 1 (rare)") && err.contains("50 attempts"), "{err}");
    }

    #[test]
    fn split_is_deterministic_and_aoi_disjoint() {
        let cm = ClassMap::numbered(3).unwrap();
        let items: Vec<SplitItem> = (0..40)
            .map(|i| item(&format!("s{i}"), &format!("aoi{}", i % 9), &[1, (i % 3 == 0) as u64, (i % 2) as u64]))
            .collect();
        let a = split_items(&items, &cm, 0.2, 77, 1000).unwrap();
        let b = split_items(&items, &cm, 0.2, 77, 1000).unwrap();
        assert_eq!(a, b);
        let aoi_of: HashMap<&str, &str> = items.iter().map(|i| (i.sample_id.as_str(), i.aoi_id.as_str())).collect();
        let train: HashSet<&str> = a.train_ids.iter().map(|id| aoi_of[id.as_str()]).collect();
        assert!(a.val_ids.iter().all(|id| !train.contains(aoi_of[id.as_str()])));
        assert!(a.class_presence.val.iter().all(|&v| v > 0));
        assert!(a.class_presence.train.iter().all(|&v| v > 0));
        let different: Vec<SplitResult> = (0..10).map(|s| split_items(&items, &cm, 0.2, s, 1000).unwrap()).collect();
        assert!(different.iter().any(|r| r.val_ids != a.val_ids));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let cm = ClassMap::numbered(1).unwrap();
        let items = vec![item("a", "A", &[1]), item("b", "B", &[1])];
        assert!(split_items(&items, &cm, 0.0, 1, 10).is_err());
        assert!(split_items(&items, &cm, 1.0, 1, 10).is_err());
        assert!(split_items(&[], &cm, 0.5, 1, 10).is_err());
    }
}
