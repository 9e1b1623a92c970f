use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetId;
use crate::error::{Error, Result};

/// Source rate of MusicNet's sample-indexed label files.
pub const MUSICNET_RATE: f64 = 44100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: f64,
    pub offset: f64,
    pub pitch: u8,
}

impl NoteEvent {
    pub fn new(onset: f64, offset: f64, pitch: u8) -> Result<Self> {
        if !(onset.is_finite() && offset.is_finite()) || offset <= onset {
            return Err(Error::InvalidArgument(format!("note needs offset > onset, got {onset}..{offset}")));
        }
        if pitch > 127 {
            return Err(Error::InvalidArgument(format!("MIDI pitch {pitch} out of range")));
        }
        Ok(Self { onset, offset, pitch })
    }
}

/// Table layouts understood by the ingestion adapters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnnotationFormat {
    /// MusicNet labels: `start_time,end_time,instrument,note,...` with times
    /// in samples at the given rate.
    MusicNet { source_rate: f64 },
    /// Any table with onset/offset columns in seconds and a MIDI pitch
    /// column, comma or semicolon separated (SWD, multi-track stems, and the
    /// normalized cache `onset_sec,offset_sec,midi_pitch`).
    Seconds,
}

impl AnnotationFormat {
    pub fn for_dataset(id: DatasetId) -> Self {
        match id {
            DatasetId::MuN => AnnotationFormat::MusicNet { source_rate: MUSICNET_RATE },
            _ => AnnotationFormat::Seconds,
        }
    }
}

const ONSET_NAMES: [&str; 5] = ["onset_sec", "onset", "start", "start_time", "start_sec"];
const OFFSET_NAMES: [&str; 5] = ["offset_sec", "offset", "end", "end_time", "end_sec"];
const PITCH_NAMES: [&str; 4] = ["midi_pitch", "pitch", "note", "midi"];

/// Loads notes from a file, or from every `.csv` file in a directory (stems
/// merged by union). Notes come back sorted by onset, then pitch.
pub fn load_notes(path: &Path, format: AnnotationFormat) -> Result<Vec<NoteEvent>> {
    let mut notes = Vec::new();
    if path.is_dir() {
        let mut stems: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        stems.sort();
        for stem in stems {
            notes.extend(read_table(&stem, format)?);
        }
    } else {
        notes = read_table(path, format)?;
    }
    notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
    Ok(notes)
}

fn read_table(path: &Path, format: AnnotationFormat) -> Result<Vec<NoteEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, format).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

pub fn parse_table(text: &str, format: AnnotationFormat) -> Result<Vec<NoteEvent>> {
    let first = text.lines().next().unwrap_or_default();
    let delimiter = if first.matches(';').count() > first.matches(',').count() { b';' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format("note table", e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let column = |names: &[&str]| {
        names.iter().find_map(|n| headers.iter().position(|h| h == n)).ok_or_else(|| {
            Error::format("note table", format!("none of the columns {names:?} found in header {headers:?}"))
        })
    };
    let (on, off, pitch) = (column(&ONSET_NAMES)?, column(&OFFSET_NAMES)?, column(&PITCH_NAMES)?);
    let scale = match format {
        AnnotationFormat::MusicNet { source_rate } => 1.0 / source_rate,
        AnnotationFormat::Seconds => 1.0,
    };
    let mut notes = Vec::new();
    let mut skipped = 0;
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::format("note table", e))?;
        let field = |c: usize| -> Result<f64> {
            row.get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::format("note table", format!("row {}: bad value in column {c}", i + 2)))
        };
        let p = field(pitch)?;
        if !(0.0..=127.0).contains(&p) || p.fract() != 0.0 {
            return Err(Error::format("note table", format!("row {}: pitch {p} is not a MIDI number", i + 2)));
        }
        match NoteEvent::new(field(on)? * scale, field(off)? * scale, p as u8) {
            Ok(n) => notes.push(n),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} note(s) with non-positive duration");
    }
    Ok(notes)
}

/// Writes the normalized per-track cache (`onset_sec,offset_sec,midi_pitch`).
pub fn save_notes(path: &Path, notes: &[NoteEvent]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path.display().to_string(), e))?;
    let fail = |e: csv::Error| Error::format(path.display().to_string(), e);
    w.write_record(["onset_sec", "offset_sec", "midi_pitch"]).map_err(fail)?;
    for n in notes {
        w.write_record([n.onset.to_string(), n.offset.to_string(), n.pitch.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
