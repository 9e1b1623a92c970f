//! Binary container shared by feature caches, target caches and checkpoints.
//!
//! Layout: the 4-byte magic `MPEC`, a little-endian `u32` format version, a
//! little-endian `u32` header length, a UTF-8 JSON header of that length and
//! finally the raw payload. Numeric payloads are little-endian; the header
//! states the element type and shape so any language can read the file.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MPEC";
const VERSION: u32 = 1;

pub fn write<H: Serialize>(path: &Path, header: &H, payload: &[u8]) -> Result<()> {
    let head = serde_json::to_vec(header).map_err(|e| Error::format("container header", e))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write to a sibling file first so readers never observe a torn container.
    let tmp = path.with_extension("partial");
    let mut out = Vec::with_capacity(12 + head.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(head.len() as u32).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(payload);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&out).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let what = || path.display().to_string();
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format(what(), "not an MPEC container"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(what(), format!("unsupported container version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + len {
        return Err(Error::format(what(), "truncated header"));
    }
    let header = serde_json::from_slice(&bytes[12..12 + len]).map_err(|e| Error::format(what(), e))?;
    Ok((header, bytes[12 + len..].to_vec()))
}

pub fn f32_to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn bytes_to_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format("f32 payload", "length is not a multiple of 4"));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let header = serde_json::json!({"kind": "test", "shape": [2]});
        write(&path, &header, &f32_to_bytes(&[1.5, -2.0])).unwrap();
        let (h, payload): (serde_json::Value, _) = read(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(bytes_to_f32(&payload).unwrap(), vec![1.5, -2.0]);

        fs::write(&path, b"nope").unwrap();
        assert!(read::<serde_json::Value>(&path).is_err());
    }
}
