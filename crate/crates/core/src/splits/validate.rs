use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{track_identity, Partition, Rule, SplitSpec, TrackIdentity};
use crate::datasets::{DatasetId, Manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingKind {
    /// A track sits in two partitions.
    Overlap,
    /// A referenced track is absent from the manifest.
    MissingTrack,
    CycleLeak,
    VersionLeak,
    SongLeak,
    /// Test tracks share cycle and version with training tracks.
    SharedRecording,
    /// Recordings of one movement in different versions sit in different
    /// partitions.
    VersionDuplicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    /// Whether a declared constraint (or disjointness) is broken.
    pub violation: bool,
    pub tracks: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub split: String,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.violation)
    }

    pub fn is_valid(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.findings.iter().filter(|f| f.kind == kind).count()
    }

    pub fn summary(&self) -> String {
        let mut lines = vec![format!(
            "split {}: {} finding(s), {} violation(s)",
            self.split,
            self.findings.len(),
            self.violations().count()
        )];
        for f in &self.findings {
            let tag = if f.violation { "VIOLATION" } else { "note" };
            lines.push(format!("  [{tag}] {:?}: {} ({})", f.kind, f.detail, f.tracks.join(", ")));
        }
        lines.join("\n")
    }
}

const SCORED: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

/// Checks disjointness, the split's declared leakage rules, and reports
/// recordings shared between train and test. Never fails; problems become
/// report entries.
pub fn validate_split(spec: &SplitSpec, manifest: &Manifest) -> ValidationReport {
    let mut findings = Vec::new();
    let parts = Partition::ALL;
    for (i, &a) in parts.iter().enumerate() {
        for &b in &parts[i + 1..] {
            let both: Vec<String> = spec.tracks(a).intersection(spec.tracks(b)).cloned().collect();
            if !both.is_empty() {
                findings.push(Finding {
                    kind: FindingKind::Overlap,
                    violation: true,
                    detail: format!("tracks in both {} and {}", a.as_str(), b.as_str()),
                    tracks: both,
                });
            }
        }
    }

    // (track, dataset, identity, partition) for every scored track in the manifest.
    let mut tracks = Vec::new();
    let mut missing = Vec::new();
    for p in SCORED {
        for id in spec.tracks(p) {
            match manifest.get(id) {
                Some(r) => tracks.push((id.as_str(), r.dataset_id, track_identity(r), p)),
                None => missing.push(id.clone()),
            }
        }
    }
    if !missing.is_empty() {
        findings.push(Finding {
            kind: FindingKind::MissingTrack,
            violation: true,
            detail: "not in the manifest".into(),
            tracks: missing,
        });
    }

    for c in &spec.constraints {
        let (kind, key, scope): (_, fn(&TrackIdentity) -> &str, &[Partition]) = match c.rule {
            Rule::CycleDisjoint => (FindingKind::CycleLeak, |i| &i.cycle, &[Partition::Train, Partition::Test]),
            Rule::VersionDisjoint => (FindingKind::VersionLeak, |i| &i.version, &SCORED),
            Rule::SongDisjoint => (FindingKind::SongLeak, |i| &i.movement, &SCORED),
        };
        let mut groups: BTreeMap<&str, (BTreeSet<Partition>, Vec<&str>)> = BTreeMap::new();
        for (id, ds, ident, p) in &tracks {
            let k = key(ident);
            if *ds == c.dataset && scope.contains(p) && !k.is_empty() {
                let g = groups.entry(k).or_default();
                g.0.insert(*p);
                g.1.push(id);
            }
        }
        for (k, (ps, ids)) in groups {
            if ps.len() > 1 {
                let names: Vec<&str> = ps.iter().map(|p| p.as_str()).collect();
                findings.push(Finding {
                    kind,
                    violation: true,
                    detail: format!("{} {k:?} spans {}", c.dataset, names.join(" and ")),
                    tracks: ids.into_iter().map(String::from).collect(),
                });
            }
        }
    }

    let mut train_recordings = BTreeSet::new();
    for (_, ds, ident, p) in &tracks {
        if *p == Partition::Train && !ident.cycle.is_empty() && !ident.version.is_empty() {
            train_recordings.insert((*ds, ident.cycle.as_str(), ident.version.as_str()));
        }
    }
    let mut shared: BTreeMap<(DatasetId, &str, &str), Vec<String>> = BTreeMap::new();
    for (id, ds, ident, p) in &tracks {
        let key = (*ds, ident.cycle.as_str(), ident.version.as_str());
        if *p == Partition::Test && train_recordings.contains(&key) {
            shared.entry(key).or_default().push(id.to_string());
        }
    }
    for ((ds, cycle, version), ids) in shared {
        findings.push(Finding {
            kind: FindingKind::SharedRecording,
            violation: false,
            detail: format!("{ds} cycle {cycle:?} version {version:?} also in train"),
            tracks: ids,
        });
    }

    let mut movements: BTreeMap<(&str, &str), Vec<(&str, &str, Partition)>> = BTreeMap::new();
    for (id, ds, ident, p) in &tracks {
        if *ds == DatasetId::MuN && !ident.cycle.is_empty() && !ident.movement.is_empty() {
            movements.entry((&ident.cycle, &ident.movement)).or_default().push((id, &ident.version, *p));
        }
    }
    for ((cycle, movement), group) in movements {
        let versions: BTreeSet<&str> = group.iter().map(|g| g.1).collect();
        let parts: BTreeSet<Partition> = group.iter().map(|g| g.2).collect();
        if versions.len() > 1 && parts.len() > 1 {
            findings.push(Finding {
                kind: FindingKind::VersionDuplicate,
                violation: false,
                detail: format!("{cycle} {movement} recorded in {} versions across partitions", versions.len()),
                tracks: group.iter().map(|g| g.0.to_string()).collect(),
            });
        }
    }

    ValidationReport { split: spec.name.clone(), findings }
}
