//! `DIPT` packed patch archives.
//!
//! ```text
//! magic    b"DIPT"
//! version  u16
//! size     u32           patch side (targets are size/2 x size)
//! count    u32
//! count fixed-size records:
//!   source_id u32, origin_row u32, origin_col u32
//!   input          f32 x size*size
//!   target_even_t  f32 x size*size/2
//!   target_odd_t1  f32 x size*size/2
//! ```
//!
//! Everything is little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::PatchTriplet;
use crate::codec::{put_f32s, Reader, Truncated};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"DIPT";
pub const ARCHIVE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a patch archive (bad magic bytes)")]
    NotArchive,
    #[error("unsupported archive version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("truncated archive: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("invalid patch size {0}")]
    PatchSize(u32),
    #[error("patches of mixed sizes cannot share an archive ({0} vs {1})")]
    MixedSizes(usize, usize),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
}

impl From<Truncated> for ArchiveError {
    fn from(t: Truncated) -> Self {
        ArchiveError::Truncated {
            offset: t.offset,
            needed: t.needed,
        }
    }
}

pub fn write_archive(patches: &[PatchTriplet]) -> Result<Vec<u8>, ArchiveError> {
    let size = patches.first().map_or(super::PATCH_SIZE, |p| p.size);
    let record = 12 + 8 * size * size;
    let mut out = Vec::with_capacity(14 + record * patches.len());
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&(size as u32).to_le_bytes());
    out.extend_from_slice(&(patches.len() as u32).to_le_bytes());
    for p in patches {
        if p.size != size {
            return Err(ArchiveError::MixedSizes(size, p.size));
        }
        out.extend_from_slice(&p.source_id.to_le_bytes());
        out.extend_from_slice(&p.origin_row.to_le_bytes());
        out.extend_from_slice(&p.origin_col.to_le_bytes());
        put_f32s(&mut out, &p.input);
        put_f32s(&mut out, &p.target_even_t);
        put_f32s(&mut out, &p.target_odd_t1);
    }
    Ok(out)
}

pub fn read_archive(bytes: &[u8]) -> Result<Vec<PatchTriplet>, ArchiveError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| ArchiveError::NotArchive)? != ARCHIVE_MAGIC {
        return Err(ArchiveError::NotArchive);
    }
    let version = r.u16()?;
    if version != ARCHIVE_VERSION {
        return Err(ArchiveError::Version {
            found: version,
            expected: ARCHIVE_VERSION,
        });
    }
    let size = r.u32()?;
    if size == 0 || size % 2 != 0 || size > 1 << 14 {
        return Err(ArchiveError::PatchSize(size));
    }
    let size = size as usize;
    let count = r.u32()? as usize;
    let half = size * size / 2;
    let record = 12 + 8 * size * size;
    if r.remaining() < count.saturating_mul(record) {
        return Err(ArchiveError::Truncated {
            offset: r.position(),
            needed: count * record - r.remaining(),
        });
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(PatchTriplet {
            size,
            source_id: r.u32()?,
            origin_row: r.u32()?,
            origin_col: r.u32()?,
            input: r.f32s(size * size)?,
            target_even_t: r.f32s(half)?,
            target_odd_t1: r.f32s(half)?,
        });
    }
    if r.remaining() != 0 {
        return Err(ArchiveError::TrailingBytes(r.remaining()));
    }
    Ok(out)
}

pub fn save_archive(patches: &[PatchTriplet], path: impl AsRef<Path>) -> Result<(), ArchiveError> {
    fs::write(path, write_archive(patches)?)?;
    Ok(())
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<Vec<PatchTriplet>, ArchiveError> {
    read_archive(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(id: u32) -> PatchTriplet {
        PatchTriplet {
            size: 4,
            input: (0..16).map(|i| i as f32 / 16.0 + id as f32).collect(),
            target_even_t: (0..8).map(|i| i as f32 * 0.5).collect(),
            target_odd_t1: (0..8).map(|i| 1.0 - i as f32 * 0.125).collect(),
            source_id: id,
            origin_row: 4 * id,
            origin_col: 2,
        }
    }

    #[test]
    fn round_trip() {
        let ps = vec![patch(0), patch(1), patch(2)];
        let bytes = write_archive(&ps).unwrap();
        assert_eq!(bytes.len(), 14 + 3 * (12 + 8 * 16));
        assert_eq!(read_archive(&bytes).unwrap(), ps);
    }

    #[test]
    fn empty_archive() {
        let bytes = write_archive(&[]).unwrap();
        assert!(read_archive(&bytes).unwrap().is_empty());
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = write_archive(&[patch(0)]).unwrap();
        assert!(matches!(read_archive(b"DINW\x01\x00"), Err(ArchiveError::NotArchive)));
        assert!(matches!(
            read_archive(&bytes[..bytes.len() - 3]),
            Err(ArchiveError::Truncated { .. })
        ));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(read_archive(&v), Err(ArchiveError::Version { found: 2, .. })));
        let mut v = bytes;
        v.extend_from_slice(&[0, 0]);
        assert!(matches!(read_archive(&v), Err(ArchiveError::TrailingBytes(2))));
    }

    #[test]
    fn mixed_sizes_rejected() {
        let mut big = patch(1);
        big.size = 6;
        assert!(matches!(
            write_archive(&[patch(0), big]),
            Err(ArchiveError::MixedSizes(4, 6))
        ));
    }
}
