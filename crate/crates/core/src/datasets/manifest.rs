use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    MuN,
    SWD,
    Tri,
    B10,
    PhA,
    CSD,
    /// Generated corpora used for desk-scale experiments.
    Syn,
}

impl DatasetId {
    pub const ALL: [DatasetId; 7] =
        [DatasetId::MuN, DatasetId::SWD, DatasetId::Tri, DatasetId::B10, DatasetId::PhA, DatasetId::CSD, DatasetId::Syn];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::MuN => "MuN",
            DatasetId::SWD => "SWD",
            DatasetId::Tri => "Tri",
            DatasetId::B10 => "B10",
            DatasetId::PhA => "PhA",
            DatasetId::CSD => "CSD",
            DatasetId::Syn => "Syn",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown dataset id {s:?}")))
    }
}

/// One recording with its annotation and work/version identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub dataset_id: DatasetId,
    pub audio_path: PathBuf,
    /// A note table, or a directory whose `.csv` files are per-stem note
    /// tables merged by union.
    pub annotation_path: PathBuf,
    #[serde(default)]
    pub cycle_id: String,
    #[serde(default)]
    pub version_id: String,
    #[serde(default)]
    pub movement_label: String,
    #[serde(default)]
    pub split_tags: BTreeSet<String>,
}

/// An ordered collection of track records, stored as JSON lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    records: Vec<TrackRecord>,
    index: HashMap<String, usize>,
}

impl Manifest {
    pub fn new(records: Vec<TrackRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        let mut identities = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.track_id.is_empty() {
                return Err(invalid(format!("record {i} has an empty track_id")));
            }
            if index.insert(r.track_id.clone(), i).is_some() {
                return Err(invalid(format!("duplicate track_id {:?}", r.track_id)));
            }
            let has_identity = !(r.cycle_id.is_empty() && r.version_id.is_empty() && r.movement_label.is_empty());
            if has_identity
                && !identities.insert((r.dataset_id, r.cycle_id.clone(), r.version_id.clone(), r.movement_label.clone()))
            {
                return Err(invalid(format!(
                    "track {:?} repeats (cycle, version, movement) = ({:?}, {:?}, {:?}) within {}",
                    r.track_id, r.cycle_id, r.version_id, r.movement_label, r.dataset_id
                )));
            }
        }
        Ok(Self { records, index })
    }

    /// Reads a JSON-lines manifest. Relative paths are resolved against the
    /// manifest's directory. Blank lines and lines starting with `#` are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut r: TrackRecord = serde_json::from_str(line)
                .map_err(|e| Error::format(format!("{}:{}", path.display(), lineno + 1), e))?;
            if r.audio_path.is_relative() {
                r.audio_path = base.join(&r.audio_path);
            }
            if r.annotation_path.is_relative() {
                r.annotation_path = base.join(&r.annotation_path);
            }
            records.push(r);
        }
        Self::new(records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::format("manifest record", e))?;
            out.push(b'\n');
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, track_id: &str) -> Option<&TrackRecord> {
        self.index.get(track_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, track_id: &str) -> bool {
        self.index.contains_key(track_id)
    }

    pub fn dataset(&self, id: DatasetId) -> impl Iterator<Item = &TrackRecord> {
        self.records.iter().filter(move |r| r.dataset_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, cycle: &str, version: &str, movement: &str) -> TrackRecord {
        TrackRecord {
            track_id: id.into(),
            dataset_id: DatasetId::MuN,
            audio_path: format!("{id}.wav").into(),
            annotation_path: format!("{id}.csv").into(),
            cycle_id: cycle.into(),
            version_id: version.into(),
            movement_label: movement.into(),
            split_tags: BTreeSet::new(),
        }
    }

    #[test]
    fn roundtrip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = Manifest::new(vec![rec("1", "c", "v", "1"), rec("2", "c", "v", "2")]).unwrap();
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("2").unwrap().audio_path, dir.path().join("2.wav"));
    }

    #[test]
    fn rejects_duplicates() {
        assert!(Manifest::new(vec![rec("1", "c", "v", "1"), rec("1", "c", "v", "2")]).is_err());
        assert!(Manifest::new(vec![rec("1", "c", "v", "1"), rec("2", "c", "v", "1")]).is_err());
    }

    #[test]
    fn dataset_ids_parse() {
        assert_eq!("swd".parse::<DatasetId>().unwrap(), DatasetId::SWD);
        assert!("xyz".parse::<DatasetId>().is_err());
    }
}
