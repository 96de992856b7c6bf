//! Binary field snapshots: one JSON header line followed by little-endian
//! `(re, im)` pairs of 8-byte floats.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};

pub const SNAPSHOT_DTYPE: &str = "complex64-pair-le";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotKind {
    /// `N²` values, row-major (x index outer).
    Full,
    /// The `N` diagonal values `u(x_i, x_i)`.
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub kind: SnapshotKind,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub header: SnapshotHeader,
    pub data: Vec<Complex64>,
}

impl SnapshotRecord {
    pub fn full(t: f64, grid: &Grid, u: &ComplexField) -> Self {
        Self {
            header: SnapshotHeader {
                t,
                n: grid.n(),
                length: grid.length(),
                kind: SnapshotKind::Full,
                dtype: SNAPSHOT_DTYPE.into(),
            },
            data: u.as_slice().to_vec(),
        }
    }

    pub fn diagonal(t: f64, grid: &Grid, u: &ComplexField) -> Self {
        Self {
            header: SnapshotHeader {
                t,
                n: grid.n(),
                length: grid.length(),
                kind: SnapshotKind::Diagonal,
                dtype: SNAPSHOT_DTYPE.into(),
            },
            data: u.diagonal(),
        }
    }

    fn expected_len(header: &SnapshotHeader) -> usize {
        match header.kind {
            SnapshotKind::Full => header.n * header.n,
            SnapshotKind::Diagonal => header.n,
        }
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        if self.data.len() != Self::expected_len(&self.header) {
            return Err(Error::Validation(format!(
                "snapshot payload has {} values, header implies {}",
                self.data.len(),
                Self::expected_len(&self.header)
            )));
        }
        serde_json::to_writer(&mut *out, &self.header)?;
        out.write_all(b"\n")?;
        let mut payload = Vec::with_capacity(16 * self.data.len());
        for z in &self.data {
            payload.extend_from_slice(&z.re.to_le_bytes());
            payload.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&payload)?;
        Ok(())
    }

    /// Reads the next record; `None` at a clean end of stream.
    pub fn read(input: &mut impl BufRead) -> Result<Option<Self>> {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
        if header.dtype != SNAPSHOT_DTYPE {
            return Err(Error::Validation(format!("unsupported snapshot dtype `{}`", header.dtype)));
        }
        let len = Self::expected_len(&header);
        let mut payload = vec![0u8; 16 * len];
        input.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Ok(Some(Self { header, data }))
    }

    /// Reads every record of a stream.
    pub fn read_all(input: &mut impl BufRead) -> Result<Vec<Self>> {
        let mut records = Vec::new();
        while let Some(r) = Self::read(input)? {
            records.push(r);
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            n in 1usize..6,
            t in -1e3f64..1e3,
            values in prop::collection::vec(any::<(f64, f64)>(), 36),
        ) {
            let grid = Grid::new(n, 7.5).unwrap();
            let u = ComplexField::from_fn(n, |i, j| {
                let (re, im) = values[i * n + j];
                Complex64::new(re, im)
            });
            let mut buf = Vec::new();
            let full = SnapshotRecord::full(t, &grid, &u);
            let diag = SnapshotRecord::diagonal(t, &grid, &u);
            full.write_to(&mut buf).unwrap();
            diag.write_to(&mut buf).unwrap();
            let back = SnapshotRecord::read_all(&mut Cursor::new(buf)).unwrap();
            prop_assert_eq!(back.len(), 2);
            for (a, b) in back.iter().zip([&full, &diag]) {
                prop_assert_eq!(&a.header, &b.header);
                let same = a.data.iter().zip(&b.data).all(|(x, y)| {
                    x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
                });
                prop_assert!(same);
            }
        }
    }

    #[test]
    fn payload_sizes() {
        let grid = Grid::new(3, 1.0).unwrap();
        let u = ComplexField::zeros(3);
        for (record, len) in [(SnapshotRecord::full(0.5, &grid, &u), 16 * 9), (SnapshotRecord::diagonal(0.5, &grid, &u), 16 * 3)] {
            let mut buf = Vec::new();
            record.write_to(&mut buf).unwrap();
            let header_end = buf.iter().position(|&b| b == b'\n').unwrap() + 1;
            assert_eq!(buf.len() - header_end, len);
            let header: serde_json::Value = serde_json::from_slice(&buf[..header_end - 1]).unwrap();
            assert_eq!(header["dtype"], SNAPSHOT_DTYPE);
            assert_eq!(header["N"], 3);
        }
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let grid = Grid::new(2, 1.0).unwrap();
        let mut buf = Vec::new();
        SnapshotRecord::full(0.0, &grid, &ComplexField::zeros(2)).write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(SnapshotRecord::read(&mut Cursor::new(buf)).is_err());
    }
}
