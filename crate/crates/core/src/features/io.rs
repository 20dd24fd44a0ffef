//! Binary feature files.
//!
//! Layout: the magic bytes `CCF1`, a little-endian `u32` row count `n`, a
//! little-endian `u32` dimension `d`, then `n·d` little-endian `f32` values
//! in row-major order. Row identifiers live in a JSON array next to the
//! file, at the same path with `.json` appended.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CcplError, Result};

use super::FeatureSet;

pub const MAGIC: [u8; 4] = *b"CCF1";
const HEADER_LEN: usize = 12;

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_features(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let count = u32::try_from(fs.len())
        .map_err(|_| CcplError::InvalidParameter("too many feature rows".into()))?;
    let dim = u32::try_from(fs.dim())
        .map_err(|_| CcplError::InvalidParameter("feature dimension too large".into()))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * fs.data().len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    for v in fs.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;

    let manifest = serde_json::to_string_pretty(fs.ids())?;
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 {
        return Err(CcplError::TruncatedFile {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(CcplError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CcplError::TruncatedFile {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("in bounds"));
    let count = read_u32(4) as usize;
    let dim = read_u32(8) as usize;
    let expected = HEADER_LEN as u64 + 4 * count as u64 * dim as u64;
    if (bytes.len() as u64) < expected {
        return Err(CcplError::TruncatedFile {
            expected,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(CcplError::InvalidParameter(format!(
            "feature file has {} trailing bytes",
            bytes.len() as u64 - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();

    let ids: Vec<String> = serde_json::from_str(&std::fs::read_to_string(manifest_path(path))?)?;
    if ids.len() != count {
        return Err(CcplError::ManifestMismatch {
            manifest: ids.len(),
            count,
        });
    }
    FeatureSet::new(ids, dim, data)
}
