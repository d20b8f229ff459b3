//! Binary codecs for `.occ4` voxel grids and `.bev` road maps.
//!
//! Both formats share one layout:
//!
//! ```text
//! magic[4]  version:u8  dims:u32 x N  cell_size:f64  origin:f64 x N  runs...
//! run := count:u32 code:u8
//! ```
//!
//! All integers and floats are little-endian. `N` is 3 for `OCC4` and 2 for `BEV2`.
//! Runs cover the row-major cell array exactly; zero-length runs are not allowed.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grid::{BevCell, BevMap, GridError, SemanticGrid, VoxelLabel};

pub const GRID_MAGIC: &[u8; 4] = b"OCC4";
pub const BEV_MAGIC: &[u8; 4] = b"BEV2";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("stream truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("run at byte {offset} overruns the cell array ({total} cells)")]
    RleOverrun { offset: usize, total: usize },
    #[error("zero-length run at byte {offset}")]
    ZeroRun { offset: usize },
    #[error("invalid label code {code} at byte {offset}")]
    InvalidLabel { code: u8, offset: usize },
    #[error("invalid header: {0}")]
    Header(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn encode_runs<T: Copy + PartialEq>(out: &mut Vec<u8>, cells: &[T], code: impl Fn(T) -> u8) {
    let mut iter = cells.iter().copied();
    let Some(mut current) = iter.next() else {
        return;
    };
    let mut count: u32 = 1;
    for c in iter {
        if c == current && count < u32::MAX {
            count += 1;
        } else {
            out.extend_from_slice(&count.to_le_bytes());
            out.push(code(current));
            current = c;
            count = 1;
        }
    }
    out.extend_from_slice(&count.to_le_bytes());
    out.push(code(current));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::Truncated {
                offset: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(), CodecError> {
        let found = &self.bytes[..self.bytes.len().min(4)];
        if found != magic {
            return Err(CodecError::BadMagic {
                found: found.to_vec(),
                expected: *magic,
            });
        }
        self.pos = 4;
        let version = self.u8()?;
        if version != FORMAT_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn runs<T: Copy>(
        &mut self,
        total: usize,
        decode: impl Fn(u8) -> Option<T>,
    ) -> Result<Vec<T>, CodecError> {
        let mut cells = Vec::with_capacity(total);
        while cells.len() < total {
            let offset = self.pos;
            let count = self.u32()? as usize;
            let code = self.u8()?;
            if count == 0 {
                return Err(CodecError::ZeroRun { offset });
            }
            if count > total - cells.len() {
                return Err(CodecError::RleOverrun { offset, total });
            }
            let value = decode(code).ok_or(CodecError::InvalidLabel { code, offset })?;
            cells.extend(std::iter::repeat_n(value, count));
        }
        if self.pos != self.bytes.len() {
            return Err(CodecError::RleOverrun {
                offset: self.pos,
                total,
            });
        }
        Ok(cells)
    }
}

pub fn encode_grid(grid: &SemanticGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(GRID_MAGIC);
    out.push(FORMAT_VERSION);
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.voxel_size().to_le_bytes());
    for o in grid.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    encode_runs(&mut out, grid.labels(), VoxelLabel::code);
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<SemanticGrid, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(GRID_MAGIC)?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let voxel_size = r.f64()?;
    let origin = [r.f64()?, r.f64()?, r.f64()?];
    // Validate the frame before trusting dims for allocation.
    SemanticGrid::new([1, 1, 1], voxel_size, origin)?;
    if dims.contains(&0) {
        return Err(GridError::InvalidDims(dims.to_vec()).into());
    }
    let total = dims[0] * dims[1] * dims[2];
    let labels = r.runs(total, |c| VoxelLabel::new(c).ok())?;
    Ok(SemanticGrid::from_labels(dims, voxel_size, origin, labels)?)
}

pub fn encode_bev(bev: &BevMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(48);
    out.extend_from_slice(BEV_MAGIC);
    out.push(FORMAT_VERSION);
    for d in bev.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&bev.cell_size().to_le_bytes());
    for o in bev.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    encode_runs(&mut out, bev.cells(), BevCell::code);
    out
}

pub fn decode_bev(bytes: &[u8]) -> Result<BevMap, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(BEV_MAGIC)?;
    let dims = [r.u32()? as usize, r.u32()? as usize];
    let cell_size = r.f64()?;
    let origin = [r.f64()?, r.f64()?];
    BevMap::new([1, 1], cell_size, origin)?;
    if dims.contains(&0) {
        return Err(GridError::InvalidDims(dims.to_vec()).into());
    }
    let cells = r.runs(dims[0] * dims[1], |c| BevCell::from_code(c).ok())?;
    Ok(BevMap::from_cells(dims, cell_size, origin, cells)?)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<SemanticGrid, CodecError> {
    decode_grid(&fs::read(path)?)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &SemanticGrid) -> Result<(), CodecError> {
    Ok(fs::write(path, encode_grid(grid))?)
}

pub fn read_bev(path: impl AsRef<Path>) -> Result<BevMap, CodecError> {
    decode_bev(&fs::read(path)?)
}

pub fn write_bev(path: impl AsRef<Path>, bev: &BevMap) -> Result<(), CodecError> {
    Ok(fs::write(path, encode_bev(bev))?)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash of a grid's canonical `.occ4` byte stream.
pub fn grid_hash(grid: &SemanticGrid) -> u64 {
    fnv1a64(&encode_grid(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs_of(bytes: &[u8], header_len: usize) -> Vec<(u32, u8)> {
        bytes[header_len..]
            .chunks(5)
            .map(|c| (u32::from_le_bytes(c[..4].try_into().unwrap()), c[4]))
            .collect()
    }

    const GRID_HEADER: usize = 4 + 1 + 12 + 8 + 24;

    #[test]
    fn empty_grid_is_one_run() {
        let g = SemanticGrid::new([8, 8, 8], 0.5, [0.0; 3]).unwrap();
        let bytes = encode_grid(&g);
        assert_eq!(runs_of(&bytes, GRID_HEADER), vec![(512, 0)]);
        assert_eq!(decode_grid(&bytes).unwrap(), g);
    }

    #[test]
    fn single_car_voxel_runs() {
        let mut g = SemanticGrid::new([8, 8, 8], 0.5, [0.0; 3]).unwrap();
        g.set([0, 0, 0], VoxelLabel::CAR);
        let bytes = encode_grid(&g);
        assert_eq!(
            runs_of(&bytes, GRID_HEADER),
            vec![(1, VoxelLabel::CAR.code()), (511, 0)]
        );
        assert_eq!(decode_grid(&bytes).unwrap(), g);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let g = SemanticGrid::new([2, 3, 4], 0.25, [1.0, -2.0, 3.5]).unwrap();
        let b = encode_grid(&g);
        assert_eq!(&b[..4], b"OCC4");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..9], &2u32.to_le_bytes());
        assert_eq!(&b[13..17], &4u32.to_le_bytes());
        assert_eq!(&b[17..25], &0.25f64.to_le_bytes());
        assert_eq!(&b[33..41], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn distinct_decode_errors() {
        let mut g = SemanticGrid::new([2, 2, 2], 0.5, [0.0; 3]).unwrap();
        g.set([1, 1, 1], VoxelLabel::BUS);
        let good = encode_grid(&g);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_grid(&bad_magic),
            Err(CodecError::BadMagic { .. })
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            decode_grid(&bad_version),
            Err(CodecError::UnsupportedVersion(9))
        ));

        assert!(matches!(
            decode_grid(&good[..good.len() - 2]),
            Err(CodecError::Truncated { .. })
        ));
        assert!(matches!(
            decode_grid(&good[..GRID_HEADER]),
            Err(CodecError::Truncated { .. })
        ));

        let mut overrun = good[..GRID_HEADER].to_vec();
        overrun.extend_from_slice(&9u32.to_le_bytes());
        overrun.push(0);
        assert!(matches!(
            decode_grid(&overrun),
            Err(CodecError::RleOverrun { .. })
        ));

        let mut trailing = good.clone();
        trailing.extend_from_slice(&1u32.to_le_bytes());
        trailing.push(0);
        assert!(matches!(
            decode_grid(&trailing),
            Err(CodecError::RleOverrun { .. })
        ));

        let mut bad_label = good[..GRID_HEADER].to_vec();
        bad_label.extend_from_slice(&8u32.to_le_bytes());
        bad_label.push(42);
        assert!(matches!(
            decode_grid(&bad_label),
            Err(CodecError::InvalidLabel { code: 42, .. })
        ));

        let mut zero = good[..GRID_HEADER].to_vec();
        zero.extend_from_slice(&0u32.to_le_bytes());
        zero.push(0);
        assert!(matches!(
            decode_grid(&zero),
            Err(CodecError::ZeroRun { .. })
        ));
    }

    #[test]
    fn bev_round_trip_and_magic() {
        let mut bev = BevMap::new([5, 3], 0.5, [-1.0, 2.0]).unwrap();
        bev.set(0, 0, BevCell::Drivable);
        bev.set(4, 2, BevCell::Junction);
        bev.set(2, 1, BevCell::LaneDivider);
        let b = encode_bev(&bev);
        assert_eq!(&b[..4], b"BEV2");
        assert_eq!(decode_bev(&b).unwrap(), bev);
        assert!(matches!(decode_grid(&b), Err(CodecError::BadMagic { .. })));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
