use std::path::Path;

use serde::{Deserialize, Serialize};

use super::annotations::NoteEvent;
use super::{LOWEST_MIDI, N_PITCHES};
use crate::container;
use crate::error::{invalid, Error, Result};
use crate::signal::{frame_time, FRAME_RATE};

/// Binary frame x pitch activity over MIDI 24..=95.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PianoRoll {
    activity: Vec<u8>,
    n_frames: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    dtype: String,
    shape: [usize; 2],
    lowest_midi: u8,
    frame_rate: f64,
}

impl PianoRoll {
    pub fn zeros(n_frames: usize) -> Self {
        Self { activity: vec![0; n_frames * N_PITCHES], n_frames }
    }

    pub fn from_activity(activity: Vec<u8>, n_frames: usize) -> Result<Self> {
        if activity.len() != n_frames * N_PITCHES {
            return Err(Error::Shape { expected: vec![n_frames, N_PITCHES], actual: vec![activity.len()] });
        }
        if activity.iter().any(|&v| v > 1) {
            return Err(invalid("piano roll entries must be 0 or 1"));
        }
        Ok(Self { activity, n_frames })
    }

    /// Sets cell `(k, p)` iff a note of pitch `p + 24` has
    /// `onset <= frame_time(k) < offset`. Returns the roll and the number of
    /// notes dropped for lying outside MIDI 24..=95.
    pub fn rasterize(notes: &[NoteEvent], n_frames: usize) -> Result<(Self, usize)> {
        if n_frames == 0 {
            return Err(invalid("a piano roll needs at least one frame"));
        }
        let mut roll = Self::zeros(n_frames);
        let mut dropped = 0;
        for note in notes {
            let Some(p) = note.pitch.checked_sub(LOWEST_MIDI).filter(|&p| (p as usize) < N_PITCHES) else {
                dropped += 1;
                continue;
            };
            // Start from an estimate and settle boundaries with the exact inequality.
            let time = |k: usize| frame_time(k as i64).expect("non-negative");
            let mut k = (note.onset * FRAME_RATE).floor().max(0.0) as usize;
            while k > 0 && time(k - 1) >= note.onset {
                k -= 1;
            }
            while k < n_frames && time(k) < note.onset {
                k += 1;
            }
            while k < n_frames && time(k) < note.offset {
                roll.activity[k * N_PITCHES + p as usize] = 1;
                k += 1;
            }
        }
        if dropped > 0 {
            log::info!("dropped {dropped} note(s) outside MIDI {LOWEST_MIDI}..={}", LOWEST_MIDI as usize + N_PITCHES - 1);
        }
        Ok((roll, dropped))
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_rate(&self) -> f64 {
        FRAME_RATE
    }

    pub fn activity(&self) -> &[u8] {
        &self.activity
    }

    pub fn row(&self, frame: usize) -> &[u8] {
        &self.activity[frame * N_PITCHES..(frame + 1) * N_PITCHES]
    }

    pub fn get(&self, frame: usize, pitch_index: usize) -> bool {
        self.activity[frame * N_PITCHES + pitch_index] == 1
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: "pianoroll".into(),
            dtype: "u8".into(),
            shape: [self.n_frames, N_PITCHES],
            lowest_midi: LOWEST_MIDI,
            frame_rate: FRAME_RATE,
        };
        container::write(path, &header, &self.activity)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload): (Header, _) = container::read(path)?;
        if header.kind != "pianoroll" || header.dtype != "u8" || header.shape[1] != N_PITCHES {
            return Err(Error::format(path.display().to_string(), "not a piano-roll container"));
        }
        Self::from_activity(payload, header.shape[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_note() {
        let notes = [NoteEvent::new(0.0, 1.0, 60).unwrap()];
        let (roll, dropped) = PianoRoll::rasterize(&notes, 100).unwrap();
        assert_eq!(dropped, 0);
        // Frame 43 is centred at 0.9985 s, still inside the note.
        for k in 0..100 {
            assert_eq!(roll.get(k, 36), k <= 43, "frame {k}");
        }
        assert_eq!(roll.activity().iter().map(|&v| v as usize).sum::<usize>(), 44);
    }

    #[test]
    fn empty_and_out_of_range() {
        let (roll, dropped) = PianoRoll::rasterize(&[], 10).unwrap();
        assert_eq!((roll, dropped), (PianoRoll::zeros(10), 0));
        let (roll, dropped) = PianoRoll::rasterize(&[NoteEvent::new(0.0, 1.0, 20).unwrap()], 10).unwrap();
        assert_eq!(dropped, 1);
        assert!(roll.activity().iter().all(|&v| v == 0));
        assert!(PianoRoll::rasterize(&[], 0).is_err());
    }

    #[test]
    fn container_roundtrip() {
        let notes = [NoteEvent::new(0.1, 0.3, 95).unwrap(), NoteEvent::new(0.2, 0.9, 24).unwrap()];
        let (roll, _) = PianoRoll::rasterize(&notes, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.roll");
        roll.save(&path).unwrap();
        assert_eq!(PianoRoll::load(&path).unwrap(), roll);
    }
}
