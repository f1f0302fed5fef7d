//! Binary dataset files and their text manifests.
//!
//! Layout: `"MPCD"`, a version byte, five little-endian `u32` (n, d_p, d_eq,
//! d_in, record count), then per record the `f64` values of x, z, ν, λ and a
//! `u32` length followed by that many `u32` working-set indices.

use std::fmt::Write as _;
use std::path::Path;

use super::SampleRecord;
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub const MAGIC: &[u8; 4] = b"MPCD";
pub const DATASET_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n: usize,
    pub d_p: usize,
    pub d_eq: usize,
    pub d_in: usize,
    pub count: usize,
}

pub fn encode_dataset(header: &DatasetHeader, records: &[SampleRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(DATASET_VERSION);
    for v in [header.n, header.d_p, header.d_eq, header.d_in, records.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for r in records {
        let ok = r.x.len() == header.n
            && r.z.len() == header.d_p
            && r.nu.len() == header.d_eq
            && r.lambda.len() == header.d_in;
        if !ok {
            return Err(Error::DimensionMismatch("record does not match the dataset header".into()));
        }
        for v in r.x.iter().chain(r.z.iter()).chain(r.nu.iter()).chain(r.lambda.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(r.aux.len() as u32).to_le_bytes());
        for i in &r.aux {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Parse { offset: self.bytes.len(), message: "unexpected end of dataset file".into() });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, len: usize) -> Result<Vector> {
        let raw = self.take(len * 8)?;
        Ok(Vector::from_iterator(len, raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()))))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(DatasetHeader, Vec<SampleRecord>)> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Parse { offset: 0, message: "not a dataset file (bad magic)".into() });
    }
    let version = rd.take(1)?[0];
    if version != DATASET_VERSION {
        return Err(Error::Version { found: version as u32, expected: DATASET_VERSION as u32 });
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = rd.u32()? as usize;
    }
    let header = DatasetHeader { n: dims[0], d_p: dims[1], d_eq: dims[2], d_in: dims[3], count: dims[4] };
    let mut records = Vec::with_capacity(header.count.min(1 << 20));
    for _ in 0..header.count {
        let x = rd.f64s(header.n)?;
        let z = rd.f64s(header.d_p)?;
        let nu = rd.f64s(header.d_eq)?;
        let lambda = rd.f64s(header.d_in)?;
        let k = rd.u32()? as usize;
        let mut aux = Vec::with_capacity(k.min(header.d_in));
        for _ in 0..k {
            let i = rd.u32()?;
            if i as usize >= header.d_in {
                return Err(Error::Parse { offset: rd.pos - 4, message: format!("working-set index {i} out of range") });
            }
            aux.push(i);
        }
        records.push(SampleRecord { x, z, nu, lambda, aux });
    }
    if rd.pos != bytes.len() {
        return Err(Error::Parse { offset: rd.pos, message: "trailing bytes after the last record".into() });
    }
    Ok((header, records))
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, records: &[SampleRecord]) -> Result<()> {
    std::fs::write(path, encode_dataset(header, records)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<SampleRecord>)> {
    decode_dataset(&std::fs::read(path)?)
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub spec_hash: String,
    pub seed: u64,
    pub step_d: f64,
    pub goals: [usize; 3],
    pub train_count: usize,
    pub buffer_count: usize,
    pub test_count: usize,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format mpc-warmstart-dataset 1");
        let _ = writeln!(s, "spec_hash {}", self.spec_hash);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "step_d {}", self.step_d);
        let _ = writeln!(s, "goals {},{},{}", self.goals[0], self.goals[1], self.goals[2]);
        let _ = writeln!(s, "records train={} buffer={} test={}", self.train_count, self.buffer_count, self.test_count);
        let _ = writeln!(s, "generated_at {}", self.generated_at);
        s
    }
}
