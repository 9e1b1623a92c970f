use std::str::FromStr;

use crate::datasets::DatasetId;
use crate::error::{Error, Result};

use super::{Partition, Rule};

pub(crate) const SPLIT_TABLE: &str = include_str!("../../data/splits.tsv");
pub(crate) const MUSICNET_METADATA: &str = include_str!("../../data/musicnet_metadata.tsv");

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Selector {
    Track(DatasetId, String),
    Cycle(DatasetId, String),
    Version(DatasetId, String),
    Movements(DatasetId, u32, u32),
    Split(String),
    Sample(DatasetId, usize),
    Rest(DatasetId),
}

impl Selector {
    /// Resolution order: explicit tracks, attribute filters, included
    /// splits, seeded samples, remainders.
    pub(crate) fn rank(&self) -> u8 {
        match self {
            Selector::Track(..) => 0,
            Selector::Cycle(..) | Selector::Version(..) | Selector::Movements(..) => 1,
            Selector::Split(_) => 2,
            Selector::Sample(..) => 3,
            Selector::Rest(_) => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Row {
    Assign(Partition, Selector),
    Include(Selector),
    Intersect(String, String),
    Constraint(Rule, DatasetId),
    TestMaxSeconds(f64),
    Note(String),
}

fn bad(line: usize, reason: impl Into<String>) -> Error {
    Error::format(format!("split table line {line}"), reason.into())
}

fn parse_selector(line: usize, text: &str) -> Result<Selector> {
    if let Some(name) = text.strip_prefix("split:") {
        return Ok(Selector::Split(name.to_string()));
    }
    let (ds, rest) = text.split_once(':').ok_or_else(|| bad(line, format!("selector {text:?} lacks a dataset")))?;
    let ds = DatasetId::from_str(ds).map_err(|e| bad(line, e.to_string()))?;
    if rest == "*" {
        return Ok(Selector::Rest(ds));
    }
    let Some((key, value)) = rest.split_once('=') else {
        return Ok(Selector::Track(ds, rest.to_string()));
    };
    match key {
        "cycle" => Ok(Selector::Cycle(ds, value.into())),
        "version" => Ok(Selector::Version(ds, value.into())),
        "movement" => {
            let (a, b) = value.split_once("..").unwrap_or((value, value));
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) if a <= b => Ok(Selector::Movements(ds, a, b)),
                _ => Err(bad(line, format!("bad movement range {value:?}"))),
            }
        }
        "sample" => value.parse().map(|n| Selector::Sample(ds, n)).map_err(|_| bad(line, "bad sample size")),
        _ => Err(bad(line, format!("unknown selector key {key:?}"))),
    }
}

/// Parses the split table into `(split name, row)` pairs in file order.
pub(crate) fn parse(text: &str) -> Result<Vec<(String, Row)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(line, format!("expected 3 tab-separated columns, got {}", cols.len())));
        }
        if !header_seen {
            header_seen = true;
            if cols == ["split", "partition", "selector"] {
                continue;
            }
        }
        let (name, kind, value) = (cols[0].to_string(), cols[1], cols[2].trim());
        let row = match kind {
            "train" | "validation" | "test" | "exclude" => {
                let part = match kind {
                    "train" => Partition::Train,
                    "validation" => Partition::Validation,
                    "test" => Partition::Test,
                    _ => Partition::Excluded,
                };
                let sel = parse_selector(line, value)?;
                if matches!(sel, Selector::Split(_)) {
                    return Err(bad(line, "split inclusion needs partition `all`"));
                }
                Row::Assign(part, sel)
            }
            "all" => match parse_selector(line, value)? {
                sel @ Selector::Split(_) => Row::Include(sel),
                _ => return Err(bad(line, "partition `all` takes a split:NAME selector")),
            },
            "intersect" => {
                let (a, b) = value.split_once(',').ok_or_else(|| bad(line, "intersect needs two split names"))?;
                Row::Intersect(a.trim().into(), b.trim().into())
            }
            "constraint" => {
                let (ds, rule) = value.split_once(':').ok_or_else(|| bad(line, "constraint needs DS:rule"))?;
                let ds = DatasetId::from_str(ds).map_err(|e| bad(line, e.to_string()))?;
                let rule = match rule {
                    "cycle" => Rule::CycleDisjoint,
                    "version" => Rule::VersionDisjoint,
                    "song" => Rule::SongDisjoint,
                    _ => return Err(bad(line, format!("unknown rule {rule:?}"))),
                };
                Row::Constraint(rule, ds)
            }
            "option" => match value.split_once('=') {
                Some(("test_max_seconds", v)) => {
                    Row::TestMaxSeconds(v.parse().map_err(|_| bad(line, "bad test_max_seconds"))?)
                }
                _ => return Err(bad(line, format!("unknown option {value:?}"))),
            },
            "note" => Row::Note(value.into()),
            _ => return Err(bad(line, format!("unknown partition {kind:?}"))),
        };
        rows.push((name, row));
    }
    Ok(rows)
}

/// Identity of a MusicNet track from the committed metadata table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MusicNetEntry {
    pub track_id: String,
    pub composer: String,
    pub cycle_id: String,
    pub version_id: String,
    pub movement_label: String,
}

pub fn musicnet_metadata() -> Vec<MusicNetEntry> {
    MUSICNET_METADATA
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            MusicNetEntry {
                track_id: c[0].into(),
                composer: c[1].into(),
                cycle_id: c[2].into(),
                version_id: c[3].into(),
                movement_label: c[4].into(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_parses() {
        let rows = parse(SPLIT_TABLE).unwrap();
        assert!(rows.iter().any(|(n, r)| n == "SWD-neither" && matches!(r, Row::Intersect(..))));
        assert_eq!(musicnet_metadata().len(), 37);
    }

    #[test]
    fn selectors() {
        assert_eq!(parse_selector(1, "MuN:2303").unwrap(), Selector::Track(DatasetId::MuN, "2303".into()));
        assert_eq!(parse_selector(1, "SWD:movement=14..16").unwrap(), Selector::Movements(DatasetId::SWD, 14, 16));
        assert_eq!(parse_selector(1, "MuN:sample=27").unwrap(), Selector::Sample(DatasetId::MuN, 27));
        assert!(parse_selector(1, "SWD:movement=9..3").is_err());
        assert!(parse_selector(1, "XYZ:1").is_err());
        assert!(parse("a\tbogus\tMuN:1\n").is_err());
    }
}
