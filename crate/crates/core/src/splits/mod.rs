//! Named train/validation/test partitions, their leakage rules and a
//! validator. Split definitions live in `data/splits.tsv`.

mod table;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetId, Manifest, TrackRecord};
use crate::error::{Error, Result};

pub use table::{musicnet_metadata, MusicNetEntry};
pub use validate::{validate_split, Finding, FindingKind, ValidationReport};

use table::{Row, Selector};

/// Names accepted by [`get_split`] besides [`TAGS_SPLIT`].
pub const SPLIT_NAMES: [&str; 10] = [
    "MuN-3",
    "MuN-10",
    "MuN-10a",
    "MuN-10b",
    "MuN-10c",
    "MuN-10full",
    "SWD-version",
    "SWD-song",
    "SWD-neither",
    "mixed",
];

/// Split read from each record's `split_tags` (`train`, `validation`, `test`).
pub const TAGS_SPLIT: &str = "tags";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
    Excluded,
}

impl Partition {
    pub const ALL: [Partition; 4] = [Partition::Train, Partition::Validation, Partition::Test, Partition::Excluded];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
            Partition::Excluded => "excluded",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// No work cycle appears in both train and test.
    CycleDisjoint,
    /// No version appears in more than one of train, validation and test.
    VersionDisjoint,
    /// No song (movement label) appears in more than one partition.
    SongDisjoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub rule: Rule,
    pub dataset: DatasetId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    /// Tracks of the covered datasets that take part in no partition.
    pub excluded: BTreeSet<String>,
    pub constraints: Vec<Constraint>,
    pub provenance: String,
    /// Evaluate only this many leading seconds of each test track.
    pub test_max_seconds: Option<f64>,
}

impl SplitSpec {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            train: BTreeSet::new(),
            validation: BTreeSet::new(),
            test: BTreeSet::new(),
            excluded: BTreeSet::new(),
            constraints: Vec::new(),
            provenance: String::new(),
            test_max_seconds: None,
        }
    }

    pub fn tracks(&self, partition: Partition) -> &BTreeSet<String> {
        match partition {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
            Partition::Excluded => &self.excluded,
        }
    }

    pub fn tracks_mut(&mut self, partition: Partition) -> &mut BTreeSet<String> {
        match partition {
            Partition::Train => &mut self.train,
            Partition::Validation => &mut self.validation,
            Partition::Test => &mut self.test,
            Partition::Excluded => &mut self.excluded,
        }
    }

    pub fn partition_of(&self, track_id: &str) -> Option<Partition> {
        Partition::ALL.into_iter().find(|&p| self.tracks(p).contains(track_id))
    }
}

/// SWD versions held out for testing and validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwdVersions {
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    /// Seed of the validation-track draw for the MusicNet splits.
    pub validation_seed: u64,
    /// Overrides the number of sampled validation tracks.
    pub validation_count: Option<usize>,
    /// Overrides the SWD version hold-out.
    pub swd_versions: Option<SwdVersions>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { validation_seed: 2024, validation_count: None, swd_versions: None }
    }
}

/// Cycle, version and movement of a track. Empty manifest fields fall back
/// to the committed MusicNet table, or to the `Work-NN_VERSION` naming of SWD.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrackIdentity {
    pub cycle: String,
    pub version: String,
    pub movement: String,
}

pub fn track_identity(record: &TrackRecord) -> TrackIdentity {
    let mut id = TrackIdentity {
        cycle: record.cycle_id.clone(),
        version: record.version_id.clone(),
        movement: record.movement_label.clone(),
    };
    let fill = |slot: &mut String, v: &str| {
        if slot.is_empty() {
            *slot = v.to_string();
        }
    };
    match record.dataset_id {
        DatasetId::MuN => {
            if let Some(e) = musicnet_table().get(record.track_id.as_str()) {
                fill(&mut id.cycle, &e.cycle_id);
                fill(&mut id.version, &e.version_id);
                fill(&mut id.movement, &e.movement_label);
            }
        }
        DatasetId::SWD => {
            // e.g. Schubert_D911-05_HU33
            let parts: Vec<&str> = record.track_id.split('_').collect();
            if let [_, work, version] = parts[..] {
                if let Some((cycle, song)) = work.rsplit_once('-') {
                    fill(&mut id.cycle, cycle);
                    fill(&mut id.movement, song);
                }
                fill(&mut id.version, version);
            }
        }
        _ => {}
    }
    id
}

fn musicnet_table() -> &'static HashMap<String, MusicNetEntry> {
    static TABLE: std::sync::OnceLock<HashMap<String, MusicNetEntry>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| musicnet_metadata().into_iter().map(|e| (e.track_id.clone(), e)).collect())
}

fn leading_number(label: &str) -> Option<u32> {
    let digits: String = label.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Numeric IDs sort numerically, others lexically after them.
fn natural_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

pub fn get_split(name: &str, manifest: &Manifest) -> Result<SplitSpec> {
    get_split_with(name, manifest, &SplitOptions::default())
}

pub fn get_split_with(name: &str, manifest: &Manifest, options: &SplitOptions) -> Result<SplitSpec> {
    let rows = table::parse(table::SPLIT_TABLE)?;
    resolve(name, &rows, manifest, options, 0)
}

fn from_tags(manifest: &Manifest) -> SplitSpec {
    let mut spec = SplitSpec::empty(TAGS_SPLIT);
    spec.provenance = "partitions taken from manifest split tags".into();
    for r in manifest.records() {
        let part = if r.split_tags.contains("test") {
            Partition::Test
        } else if r.split_tags.contains("validation") || r.split_tags.contains("val") {
            Partition::Validation
        } else if r.split_tags.contains("train") {
            Partition::Train
        } else {
            continue;
        };
        spec.tracks_mut(part).insert(r.track_id.clone());
    }
    spec
}

struct Assignment<'a> {
    split: &'a str,
    parts: BTreeMap<String, Partition>,
}

impl Assignment<'_> {
    fn assign(&mut self, track: &str, part: Partition) -> Result<()> {
        match self.parts.insert(track.to_string(), part) {
            Some(old) if old != part => Err(Error::Config(format!(
                "split {} puts track {track} in both {} and {}",
                self.split,
                old.as_str(),
                part.as_str()
            ))),
            _ => Ok(()),
        }
    }

    fn is_free(&self, track: &str) -> bool {
        !self.parts.contains_key(track)
    }
}

fn resolve(
    name: &str,
    rows: &[(String, Row)],
    manifest: &Manifest,
    options: &SplitOptions,
    depth: usize,
) -> Result<SplitSpec> {
    if depth > 8 {
        return Err(Error::Config(format!("split {name} includes itself")));
    }
    if name == TAGS_SPLIT {
        return Ok(from_tags(manifest));
    }
    let mine: Vec<&Row> = rows.iter().filter(|(n, _)| n == name).map(|(_, r)| r).collect();
    if mine.is_empty() {
        return Err(Error::UnknownSplit(name.to_string()));
    }
    let mut constraints = Vec::new();
    let mut provenance = String::new();
    let mut test_max_seconds = None;
    let mut selectors: Vec<(Option<Partition>, Selector)> = Vec::new();
    let mut intersect = None;
    for row in &mine {
        match row {
            Row::Assign(p, s) => selectors.push((Some(*p), s.clone())),
            Row::Include(s) => selectors.push((None, s.clone())),
            Row::Intersect(a, b) => intersect = Some((a, b)),
            Row::Constraint(rule, ds) => constraints.push(Constraint { rule: *rule, dataset: *ds }),
            Row::TestMaxSeconds(s) => test_max_seconds = Some(*s),
            Row::Note(n) => provenance = n.clone(),
        }
    }
    if let Some(versions) = &options.swd_versions {
        if selectors.iter().any(|(_, s)| matches!(s, Selector::Version(DatasetId::SWD, _))) {
            selectors.retain(|(_, s)| !matches!(s, Selector::Version(DatasetId::SWD, _)));
            for (part, list) in [(Partition::Test, &versions.test), (Partition::Validation, &versions.validation)] {
                selectors.extend(list.iter().map(|v| (Some(part), Selector::Version(DatasetId::SWD, v.clone()))));
            }
            provenance = format!("versions {} test; {} validation", versions.test.join(", "), versions.validation.join(", "));
        }
    }

    if let Some((a, b)) = intersect {
        let by_version = resolve(a, rows, manifest, options, depth + 1)?;
        let by_song = resolve(b, rows, manifest, options, depth + 1)?;
        let mut spec = generate_neither_split(&by_version, &by_song)?;
        spec.name = name.to_string();
        spec.provenance = provenance;
        for c in constraints {
            if !spec.constraints.contains(&c) {
                spec.constraints.push(c);
            }
        }
        return Ok(spec);
    }

    selectors.sort_by_key(|(_, s)| s.rank());
    let mut state = Assignment { split: name, parts: BTreeMap::new() };
    let mut missing = Vec::new();
    let identities: HashMap<&str, TrackIdentity> =
        manifest.records().iter().map(|r| (r.track_id.as_str(), track_identity(r))).collect();
    for (part, sel) in &selectors {
        match sel {
            Selector::Track(ds, id) => match manifest.get(id) {
                None => missing.push(id.clone()),
                Some(r) if r.dataset_id != *ds => {
                    return Err(Error::Config(format!("track {id} belongs to {}, not {ds}", r.dataset_id)));
                }
                Some(_) => state.assign(id, part.expect("track rows carry a partition"))?,
            },
            Selector::Cycle(ds, _) | Selector::Version(ds, _) | Selector::Movements(ds, ..) => {
                let matches = |ident: &TrackIdentity| match sel {
                    Selector::Cycle(_, c) => &ident.cycle == c,
                    Selector::Version(_, v) => &ident.version == v,
                    Selector::Movements(_, a, b) => leading_number(&ident.movement).is_some_and(|m| (*a..=*b).contains(&m)),
                    _ => unreachable!(),
                };
                for r in manifest.dataset(*ds) {
                    if state.is_free(&r.track_id) && matches(&identities[r.track_id.as_str()]) {
                        state.assign(&r.track_id, part.expect("filter rows carry a partition"))?;
                    }
                }
            }
            Selector::Split(sub) => {
                let inner = resolve(sub, rows, manifest, options, depth + 1)?;
                for p in Partition::ALL {
                    for id in inner.tracks(p) {
                        state.assign(id, p)?;
                    }
                }
                for c in inner.constraints {
                    if !constraints.contains(&c) {
                        constraints.push(c);
                    }
                }
            }
            Selector::Sample(ds, n) => {
                let part = part.expect("sample rows carry a partition");
                let n = if part == Partition::Validation { options.validation_count.unwrap_or(*n) } else { *n };
                let blocked: BTreeSet<&str> = state
                    .parts
                    .iter()
                    .filter(|(_, &p)| matches!(p, Partition::Test | Partition::Excluded))
                    .filter_map(|(id, _)| manifest.get(id).filter(|r| r.dataset_id == *ds))
                    .map(|r| identities[r.track_id.as_str()].cycle.as_str())
                    .filter(|c| !c.is_empty())
                    .collect();
                let mut pool: Vec<&str> = manifest
                    .dataset(*ds)
                    .map(|r| r.track_id.as_str())
                    .filter(|id| state.is_free(id) && !blocked.contains(identities[id].cycle.as_str()))
                    .collect();
                pool.sort_by(|a, b| natural_order(a, b));
                pool.shuffle(&mut ChaCha8Rng::seed_from_u64(options.validation_seed));
                if pool.len() < n {
                    log::warn!("split {name}: only {} of {n} requested {ds} tracks available", pool.len());
                }
                for id in pool.into_iter().take(n) {
                    state.assign(id, part)?;
                }
            }
            Selector::Rest(ds) => {
                let part = part.expect("remainder rows carry a partition");
                for r in manifest.dataset(*ds) {
                    if state.is_free(&r.track_id) {
                        state.assign(&r.track_id, part)?;
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort_by(|a, b| natural_order(a, b));
        return Err(Error::MissingTracks { split: name.to_string(), missing });
    }
    let mut spec = SplitSpec::empty(name);
    for (id, p) in state.parts {
        spec.tracks_mut(p).insert(id);
    }
    spec.constraints = constraints;
    spec.provenance = provenance;
    spec.test_max_seconds = test_max_seconds;
    Ok(spec)
}

/// Keeps only tracks that fall in the same partition of both inputs. Tracks
/// in no intersection cell are excluded.
pub fn generate_neither_split(by_version: &SplitSpec, by_song: &SplitSpec) -> Result<SplitSpec> {
    let mut spec = SplitSpec::empty(format!("{}&{}", by_version.name, by_song.name));
    for p in [Partition::Train, Partition::Validation, Partition::Test] {
        *spec.tracks_mut(p) = by_version.tracks(p).intersection(by_song.tracks(p)).cloned().collect();
    }
    if spec.test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "intersection of {} and {} has an empty test set",
            by_version.name, by_song.name
        )));
    }
    let everything = Partition::ALL.into_iter().flat_map(|p| by_version.tracks(p).iter().chain(by_song.tracks(p)));
    for id in everything {
        if spec.partition_of(id).is_none() {
            spec.excluded.insert(id.clone());
        }
    }
    for c in by_version.constraints.iter().chain(&by_song.constraints) {
        if !spec.constraints.contains(c) {
            spec.constraints.push(*c);
        }
    }
    spec.provenance = format!("intersection of {} and {}", by_version.name, by_song.name);
    Ok(spec)
}
