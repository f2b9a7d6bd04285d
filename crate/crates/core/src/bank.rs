//! Persistent, class-grouped instance bank.
//!
//! Directory layout:
//!
//! ```text
//! <dir>/classmap.json
//! <dir>/manifest.jsonl      one JSON object per instance, class-major order
//! <dir>/data/<id>.patch     raster blob
//! <dir>/data/<id>.mask      binary mask blob
//! ```
//!
//! Saving is not safe against concurrent writers to the same directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{BBox, InstanceRecord};
use crate::formats::{self, lossless_dtype};
use crate::model::ClassMap;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CLASSMAP_FILE: &str = "classmap.json";
pub const DATA_DIR: &str = "data";
/// Present while a save is in progress; a bank directory holding it is not loadable.
pub const INCOMPLETE_MARKER: &str = ".incomplete";

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBank<T> {
    class_map: ClassMap,
    per_class: Vec<Vec<InstanceRecord<T>>>,
    index: HashMap<String, (u8, usize)>,
    next_serial: u64,
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub id: String,
    pub class_id: u8,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub pixel_count: usize,
    pub source_sample_id: String,
    pub bbox: BBox,
}

impl<T: Scalar> InstanceBank<T> {
    pub fn new(class_map: ClassMap) -> Self {
        let per_class = vec![Vec::new(); class_map.len()];
        InstanceBank { class_map, per_class, index: HashMap::new(), next_serial: 1 }
    }

    /// Builds a bank from freshly extracted records, assigning ids
    /// `i00000001, i00000002, ...` in iteration order.
    pub fn from_extracted(
        class_map: ClassMap,
        records: impl IntoIterator<Item = InstanceRecord<T>>,
    ) -> Result<Self> {
        let mut bank = Self::new(class_map);
        for rec in records {
            bank.push_extracted(rec)?;
        }
        Ok(bank)
    }

    pub fn push_extracted(&mut self, mut record: InstanceRecord<T>) -> Result<&str> {
        record.id = format!("i{:08}", self.next_serial);
        self.insert(record)
    }

    /// Adds a record that already carries an id.
    pub fn insert(&mut self, record: InstanceRecord<T>) -> Result<&str> {
        if record.class_id as usize >= self.class_map.len() {
            return Err(Error::Bank(format!(
                "instance {}: class id {} out of range for {} classes",
                record.id,
                record.class_id,
                self.class_map.len()
            )));
        }
        if !valid_id(&record.id) {
            return Err(Error::Bank(format!("invalid instance id {:?}", record.id)));
        }
        if self.index.contains_key(&record.id) {
            return Err(Error::Bank(format!("duplicate instance id {}", record.id)));
        }
        if let Some(serial) = record.id.strip_prefix('i').and_then(|s| s.parse::<u64>().ok()) {
            self.next_serial = self.next_serial.max(serial + 1);
        }
        let class = record.class_id;
        let list = &mut self.per_class[class as usize];
        self.index.insert(record.id.clone(), (class, list.len()));
        list.push(record);
        Ok(&list.last().expect("just pushed").id)
    }

    pub fn class_map(&self) -> &ClassMap {
        &self.class_map
    }

    pub fn class(&self, class_id: u8) -> &[InstanceRecord<T>] {
        self.per_class.get(class_id as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_count(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_count() == 0
    }

    /// Class ids holding at least one instance, ascending.
    pub fn non_empty_classes(&self) -> Vec<u8> {
        (0..self.per_class.len())
            .filter(|&c| !self.per_class[c].is_empty())
            .map(|c| c as u8)
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&InstanceRecord<T>> {
        self.index.get(id).map(|&(c, i)| &self.per_class[c as usize][i])
    }

    /// All records in class-major, then insertion, order.
    pub fn iter(&self) -> impl Iterator<Item = &InstanceRecord<T>> {
        self.per_class.iter().flatten()
    }

    /// Band count of the first record, if any.
    pub fn bands(&self) -> Option<usize> {
        self.iter().next().map(InstanceRecord::bands)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    pub class_id: u8,
    pub name: String,
    pub instance_count: usize,
    pub total_pixels: u64,
    pub min_pixels: usize,
    pub median_pixels: f64,
    pub max_pixels: usize,
}

/// Per-class size statistics; classes without instances report zeros.
pub fn bank_stats<T: Scalar>(bank: &InstanceBank<T>) -> Vec<ClassStats> {
    bank.class_map
        .names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut sizes: Vec<usize> = bank.per_class[c].iter().map(|r| r.pixel_count).collect();
            sizes.sort_unstable();
            let n = sizes.len();
            let median = match n {
                0 => 0.0,
                _ if n % 2 == 1 => sizes[n / 2] as f64,
                _ => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
            };
            ClassStats {
                class_id: c as u8,
                name: name.clone(),
                instance_count: n,
                total_pixels: sizes.iter().map(|&s| s as u64).sum(),
                min_pixels: sizes.first().copied().unwrap_or(0),
                median_pixels: median,
                max_pixels: sizes.last().copied().unwrap_or(0),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SaveSummary {
    pub total: usize,
    /// Instance count per class id.
    pub per_class: Vec<usize>,
}

/// Writes the bank under `dir` (created if needed). On failure every file
/// written by this call is removed, the marker included.
pub fn save_bank<T: Scalar>(bank: &InstanceBank<T>, dir: &Path) -> Result<SaveSummary> {
    let mut seen = HashMap::new();
    for rec in bank.iter() {
        if seen.insert(rec.id.as_str(), ()).is_some() {
            return Err(Error::Bank(format!("duplicate instance id {}", rec.id)));
        }
        if !valid_id(&rec.id) {
            return Err(Error::Bank(format!("invalid instance id {:?}", rec.id)));
        }
    }

    let data_dir = dir.join(DATA_DIR);
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_bank_files(bank, dir, &data_dir, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    let _ = fs::remove_file(&marker);
    result?;

    Ok(SaveSummary {
        total: bank.total_count(),
        per_class: bank.per_class.iter().map(Vec::len).collect(),
    })
}

fn write_bank_files<T: Scalar>(
    bank: &InstanceBank<T>,
    dir: &Path,
    data_dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    // Stale blobs from an earlier save would survive otherwise.
    for entry in fs::read_dir(data_dir).map_err(|e| Error::io(data_dir, e))? {
        let path = entry.map_err(|e| Error::io(data_dir, e))?.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("patch" | "mask")) {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }

    let mut manifest = String::new();
    for rec in bank.iter() {
        let patch_path = data_dir.join(format!("{}.patch", rec.id));
        let mask_path = data_dir.join(format!("{}.mask", rec.id));
        let patch = formats::encode_raster(&rec.patch, lossless_dtype(&rec.patch))?;
        let mask = formats::encode_binary_mask(&rec.mask)?;
        fs::write(&patch_path, patch).map_err(|e| Error::io(&patch_path, e))?;
        written.push(patch_path);
        fs::write(&mask_path, mask).map_err(|e| Error::io(&mask_path, e))?;
        written.push(mask_path);

        let line = ManifestLine {
            id: rec.id.clone(),
            class_id: rec.class_id,
            height: rec.height(),
            width: rec.width(),
            bands: rec.bands(),
            pixel_count: rec.pixel_count,
            source_sample_id: rec.source_sample_id.clone(),
            bbox: rec.source_bbox,
        };
        manifest.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        manifest.push('\n');
    }

    let classmap_path = dir.join(CLASSMAP_FILE);
    bank.class_map.save(&classmap_path)?;
    written.push(classmap_path);
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    written.push(manifest_path);
    Ok(())
}

/// Loads and validates a bank written by [`save_bank`].
pub fn load_bank<T: Scalar>(dir: &Path) -> Result<InstanceBank<T>> {
    if dir.join(INCOMPLETE_MARKER).exists() {
        return Err(Error::Bank(format!("{} holds an incomplete save", dir.display())));
    }
    let class_map = ClassMap::load(&dir.join(CLASSMAP_FILE))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str::<ManifestLine>(l).map_err(|source| Error::Json {
                context: format!("{} line {}", manifest_path.display(), n + 1),
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let data_dir = dir.join(DATA_DIR);
    let records = lines
        .par_iter()
        .map(|line| load_record(&data_dir, line, class_map.len()))
        .collect::<Result<Vec<_>>>()?;

    let mut bank = InstanceBank::new(class_map);
    for rec in records {
        bank.insert(rec)?;
    }
    Ok(bank)
}

fn load_record<T: Scalar>(data_dir: &Path, line: &ManifestLine, class_count: usize) -> Result<InstanceRecord<T>> {
    let fail = |msg: String| Error::Bank(format!("instance {}: {msg}", line.id));
    if !valid_id(&line.id) {
        return Err(fail("invalid id".into()));
    }
    if line.class_id as usize >= class_count {
        return Err(fail(format!("class id {} out of range for {class_count} classes", line.class_id)));
    }
    let read = |ext: &str| {
        let path = data_dir.join(format!("{}.{ext}", line.id));
        fs::read(&path).map_err(|e| fail(format!("missing or unreadable blob {}: {e}", path.display())))
    };
    let patch_bytes = read("patch")?;
    let mask_bytes = read("mask")?;
    let (patch, _) = formats::decode_raster::<T>(&patch_bytes, "patch blob").map_err(|e| fail(e.to_string()))?;
    let mask = formats::decode_binary_mask(&mask_bytes, "mask blob").map_err(|e| fail(e.to_string()))?;
    if (patch.height(), patch.width(), patch.bands()) != (line.height, line.width, line.bands) {
        return Err(fail(format!(
            "size mismatch: manifest says {}x{}x{}, patch blob is {}x{}x{}",
            line.height,
            line.width,
            line.bands,
            patch.height(),
            patch.width(),
            patch.bands()
        )));
    }
    let record = InstanceRecord {
        id: line.id.clone(),
        class_id: line.class_id,
        patch,
        mask,
        pixel_count: line.pixel_count,
        source_sample_id: line.source_sample_id.clone(),
        source_bbox: line.bbox,
    };
    record.validate().map_err(|e| fail(e.to_string()))?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinaryMask, Raster};

    fn record(class_id: u8, size: usize) -> InstanceRecord<f32> {
        InstanceRecord {
            id: String::new(),
            class_id,
            patch: Raster::new(1, size, 2, (0..2 * size).map(|v| v as f32 * 0.25).collect()).unwrap(),
            mask: BinaryMask::new(1, size, vec![true; size]).unwrap(),
            pixel_count: size,
            source_sample_id: format!("s{class_id}"),
            source_bbox: BBox { top: 0, left: 0, height: 1, width: size },
        }
    }

    #[test]
    fn ids_are_sequential() {
        let bank = InstanceBank::from_extracted(
            ClassMap::numbered(2).unwrap(),
            vec![record(1, 1), record(0, 2), record(1, 3)],
        )
        .unwrap();
        let ids: Vec<&str> = bank.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["i00000002", "i00000001", "i00000003"]);
        assert_eq!(bank.get("i00000003").unwrap().pixel_count, 3);
    }

    #[test]
    fn rejects_duplicates_and_bad_classes() {
        let mut bank = InstanceBank::new(ClassMap::numbered(2).unwrap());
        let mut r = record(0, 1);
        r.id = "a".into();
        bank.insert(r.clone()).unwrap();
        assert!(bank.insert(r).unwrap_err().to_string().contains("duplicate"));
        assert!(bank.push_extracted(record(2, 1)).is_err());
        let mut bad = record(0, 1);
        bad.id = "../x".into();
        assert!(bank.insert(bad).is_err());
    }

    #[test]
    fn stats_examples() {
        let cm = ClassMap::numbered(2).unwrap();
        let empty = InstanceBank::<f32>::new(cm.clone());
        for s in bank_stats(&empty) {
            assert_eq!((s.instance_count, s.total_pixels, s.min_pixels, s.max_pixels), (0, 0, 0, 0));
            assert_eq!(s.median_pixels, 0.0);
        }
        let bank = InstanceBank::from_extracted(cm, vec![record(0, 9), record(0, 1), record(0, 5)]).unwrap();
        let stats = bank_stats(&bank);
        assert_eq!(stats.len(), 2);
        assert_eq!(
            (stats[0].min_pixels, stats[0].median_pixels, stats[0].max_pixels, stats[0].total_pixels),
            (1, 5.0, 9, 15)
        );
        assert_eq!(stats[1].instance_count, 0);
    }

    #[test]
    fn even_count_median_averages() {
        let bank =
            InstanceBank::from_extracted(ClassMap::numbered(1).unwrap(), vec![record(0, 2), record(0, 5)]).unwrap();
        assert_eq!(bank_stats(&bank)[0].median_pixels, 3.5);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bank = InstanceBank::<f32>::new(ClassMap::numbered(3).unwrap());
        let summary = save_bank(&bank, dir.path()).unwrap();
        assert_eq!(summary.total, 0);
        assert_eq!(fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap(), "");
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        assert_eq!(load_bank::<f32>(dir.path()).unwrap(), bank);
    }

    #[test]
    fn one_per_class_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bank = InstanceBank::from_extracted(
            ClassMap::numbered(3).unwrap(),
            vec![record(0, 2), record(1, 3), record(2, 4)],
        )
        .unwrap();
        let summary = save_bank(&bank, dir.path()).unwrap();
        assert_eq!(summary.per_class, vec![1, 1, 1]);
        assert_eq!(load_bank::<f32>(dir.path()).unwrap(), bank);
    }

    #[test]
    fn corrupt_magic_names_instance() {
        let dir = tempfile::tempdir().unwrap();
        let bank =
            InstanceBank::from_extracted(ClassMap::numbered(2).unwrap(), vec![record(0, 2), record(1, 2)]).unwrap();
        save_bank(&bank, dir.path()).unwrap();
        let blob = dir.path().join(DATA_DIR).join("i00000002.patch");
        let mut bytes = fs::read(&blob).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        fs::write(&blob, bytes).unwrap();
        let err = load_bank::<f32>(dir.path()).unwrap_err().to_string();
        assert!(err.contains("i00000002") && err.contains("magic"), "{err}");
    }

    #[test]
    fn load_rejects_inconsistencies() {
        let cm = ClassMap::numbered(2).unwrap();
        let bank = InstanceBank::from_extracted(cm, vec![record(1, 3)]).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_bank(&bank, dir.path()).unwrap();
        fs::remove_file(dir.path().join(DATA_DIR).join("i00000001.mask")).unwrap();
        assert!(load_bank::<f32>(dir.path()).unwrap_err().to_string().contains("missing"));

        let dir = tempfile::tempdir().unwrap();
        save_bank(&bank, dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest).unwrap();
        fs::write(&manifest, text.replace("\"width\":3", "\"width\":4")).unwrap();
        assert!(load_bank::<f32>(dir.path()).unwrap_err().to_string().contains("size mismatch"));

        fs::write(&manifest, text.replace("\"class_id\":1", "\"class_id\":7")).unwrap();
        assert!(load_bank::<f32>(dir.path()).unwrap_err().to_string().contains("out of range"));

        fs::write(&manifest, &text).unwrap();
        fs::write(dir.path().join(INCOMPLETE_MARKER), b"").unwrap();
        assert!(load_bank::<f32>(dir.path()).unwrap_err().to_string().contains("incomplete"));
    }

    #[test]
    fn failed_save_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let bank = InstanceBank::from_extracted(ClassMap::numbered(1).unwrap(), vec![record(0, 1)]).unwrap();
        // A directory where the manifest file should go makes the final write fail.
        fs::create_dir_all(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(save_bank(&bank, dir.path()).is_err());
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        assert!(!dir.path().join(DATA_DIR).join("i00000001.patch").exists());
        assert!(!dir.path().join(CLASSMAP_FILE).exists());
    }

    #[test]
    fn resave_drops_stale_blobs() {
        let dir = tempfile::tempdir().unwrap();
        let cm = ClassMap::numbered(1).unwrap();
        save_bank(&InstanceBank::from_extracted(cm.clone(), vec![record(0, 1), record(0, 2)]).unwrap(), dir.path())
            .unwrap();
        save_bank(&InstanceBank::from_extracted(cm, vec![record(0, 1)]).unwrap(), dir.path()).unwrap();
        assert!(!dir.path().join(DATA_DIR).join("i00000002.patch").exists());
    }
}
