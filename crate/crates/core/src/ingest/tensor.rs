//! `FPK1` tensor files: a named `rows × dim` matrix of little-endian `f32`.
//!
//! Layout: magic `FPK1`, `u32` row count, `u32` dim, then one row id per row
//! (`u32` byte length + UTF-8), then the row-major payload.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FPK1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub row_ids: Vec<String>,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl NamedMatrix {
    pub fn new(row_ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != row_ids.len() * dim {
            return Err(Error::Length {
                expected: row_ids.len() * dim,
                found: data.len(),
            });
        }
        Ok(Self { row_ids, dim, data })
    }

    pub fn from_rows<I, S>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut row_ids = Vec::new();
        let mut data = Vec::new();
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::Length {
                    expected: dim,
                    found: row.len(),
                });
            }
            row_ids.push(id.into());
            data.extend(row);
        }
        Ok(Self { row_ids, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for id in &self.row_ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"FPK1\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let rows = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut row_ids = Vec::with_capacity(rows.min(1 << 20));
        for _ in 0..rows {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let id = std::str::from_utf8(raw)
                .map_err(|e| Error::Format(format!("row id is not UTF-8: {e}")))?;
            row_ids.push(id.to_owned());
        }
        let payload_len = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("declared shape overflows".into()))?;
        let payload = r.take(payload_len)?;
        if r.pos != bytes.len() {
            return Err(Error::Length {
                expected: r.pos,
                found: bytes.len(),
            });
        }
        let mut data = Vec::with_capacity(rows * dim);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if v.is_nan() {
                return Err(Error::Validation(format!(
                    "NaN at row {} column {}",
                    i / dim.max(1),
                    i % dim.max(1)
                )));
            }
            data.push(v);
        }
        Ok(Self { row_ids, dim, data })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Length {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tensor_file(path: &Path) -> Result<NamedMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    NamedMatrix::from_bytes(&bytes)
}

pub fn write_tensor_file(path: &Path, matrix: &NamedMatrix) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&matrix.to_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_3x4() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fpk");
        let m = NamedMatrix::new(
            vec!["a".into(), "b".into(), "ç".into()],
            4,
            (0..12).map(|i| i as f32 * 0.5 - 2.0).collect(),
        )
        .unwrap();
        write_tensor_file(&path, &m).unwrap();
        assert_eq!(read_tensor_file(&path).unwrap(), m);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = NamedMatrix::new(vec!["a".into()], 1, vec![1.0]).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(NamedMatrix::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn declared_rows_exceed_payload() {
        // a 2×512 matrix whose header claims 3 rows
        let m = NamedMatrix::new(vec!["r0".into(), "r1".into()], 512, vec![0.25; 1024]).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&512u32.to_le_bytes());
        for id in ["r0", "r1", "r2"] {
            bytes.extend_from_slice(&(id.len() as u32).to_le_bytes());
            bytes.extend_from_slice(id.as_bytes());
        }
        for v in &m.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(NamedMatrix::from_bytes(&bytes), Err(Error::Length { .. })));
    }

    #[test]
    fn nan_rejected() {
        let bytes = NamedMatrix {
            row_ids: vec!["a".into()],
            dim: 2,
            data: vec![1.0, f32::NAN],
        }
        .to_bytes();
        assert!(matches!(NamedMatrix::from_bytes(&bytes), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in prop::collection::vec(
                ("[a-z0-9:#]{0,12}", prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 5)),
                0..20,
            )
        ) {
            let m = NamedMatrix::from_rows(rows, 5).unwrap();
            let back = NamedMatrix::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back.row_ids, m.row_ids);
            let a: Vec<u32> = m.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
