//! Descriptor matrices and their binary container.
//!
//! Layout (little-endian): magic `WDESC\0\0\0`, `u32` version, `u64` N,
//! `u64` d, `u64`-prefixed UTF-8 metadata block of `key = value` lines, then
//! N x d `f64` values row by row.

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use thiserror::Error;

use super::{uniform_subsample, DescriptorError};
use crate::hash::ContentHasher;

const MAGIC: &[u8; 8] = b"WDESC\0\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Weds,
    Hks,
    Wks,
    Learned,
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Weds => "weds",
            DescriptorKind::Hks => "hks",
            DescriptorKind::Wks => "wks",
            DescriptorKind::Learned => "learned",
        })
    }
}

impl FromStr for DescriptorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weds" => Ok(DescriptorKind::Weds),
            "hks" => Ok(DescriptorKind::Hks),
            "wks" => Ok(DescriptorKind::Wks),
            "learned" => Ok(DescriptorKind::Learned),
            other => Err(format!("unknown descriptor type '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorMeta {
    pub kind: DescriptorKind,
    /// Basis size.
    pub k: usize,
    pub num_scales: usize,
    pub samples: usize,
    /// Empty when no filter bank was involved.
    pub bank_hash: String,
    /// Hash of the mesh (or input) the field was computed from.
    pub source_hash: String,
}

impl DescriptorMeta {
    fn to_text(&self) -> String {
        format!(
            "type = {}\nk = {}\nscales = {}\nsamples = {}\nbank_hash = {}\nsource_hash = {}\n",
            self.kind, self.k, self.num_scales, self.samples, self.bank_hash, self.source_hash
        )
    }

    fn from_text(text: &str) -> Result<Self, String> {
        let mut kind = None;
        let (mut k, mut num_scales, mut samples) = (0, 0, 0);
        let (mut bank_hash, mut source_hash) = (String::new(), String::new());
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once('=').ok_or_else(|| format!("bad metadata line '{line}'"))?;
            let value = value.trim();
            let int = || value.parse::<usize>().map_err(|_| format!("bad integer for {}", key.trim()));
            match key.trim() {
                "type" => kind = Some(value.parse()?),
                "k" => k = int()?,
                "scales" => num_scales = int()?,
                "samples" => samples = int()?,
                "bank_hash" => bank_hash = value.to_string(),
                "source_hash" => source_hash = value.to_string(),
                other => return Err(format!("unknown metadata key '{other}'")),
            }
        }
        Ok(Self {
            kind: kind.ok_or("missing descriptor type")?,
            k,
            num_scales,
            samples,
            bank_hash,
            source_hash,
        })
    }
}

/// `N x d` per-vertex descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub values: DMatrix<f64>,
    pub meta: DescriptorMeta,
}

impl DescriptorField {
    /// Rejects non-finite entries.
    pub fn new(values: DMatrix<f64>, meta: DescriptorMeta) -> Result<Self, DescriptorError> {
        if let Some(idx) = values.iter().position(|x| !x.is_finite()) {
            return Err(DescriptorError::NonFinite {
                row: idx % values.nrows(),
                col: idx / values.nrows(),
            });
        }
        Ok(Self { values, meta })
    }

    pub fn num_vertices(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Uniformly strided subset of `num` columns.
    pub fn resampled(&self, num: usize) -> Result<Self, DescriptorError> {
        if num == 0 || num > self.dim() {
            return Err(DescriptorError::InvalidDimension { got: num, max: self.dim() });
        }
        let keep = uniform_subsample(self.dim(), num);
        let values = self.values.select_columns(&keep);
        Ok(Self {
            values,
            meta: DescriptorMeta {
                samples: num,
                ..self.meta.clone()
            },
        })
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new("descriptor");
        h.update_str(&self.meta.to_text());
        h.update_u64(self.num_vertices() as u64);
        h.update_u64(self.dim() as u64);
        h.update_f64s(self.values.as_slice());
        h.finish()
    }

    /// One row per vertex, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s += &(0..self.dim()).map(|c| format!("d{c}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for row in self.values.row_iter() {
            s += &row.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum DescriptorFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a descriptor file")]
    BadMagic,
    #[error("unsupported descriptor file version {0}")]
    Version(u32),
    #[error("corrupt descriptor file: {0}")]
    Corrupt(String),
}

pub fn write_descriptor<W: Write>(mut w: W, field: &DescriptorField) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(field.num_vertices() as u64)?;
    w.write_u64::<LittleEndian>(field.dim() as u64)?;
    let meta = field.meta.to_text();
    w.write_u64::<LittleEndian>(meta.len() as u64)?;
    w.write_all(meta.as_bytes())?;
    for row in field.values.row_iter() {
        for &x in row.iter() {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn read_descriptor<R: Read>(mut r: R) -> Result<DescriptorField, DescriptorFileError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DescriptorFileError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(DescriptorFileError::Version(version));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let d = r.read_u64::<LittleEndian>()? as usize;
    let meta_len = r.read_u64::<LittleEndian>()? as usize;
    if meta_len > 1 << 20 {
        return Err(DescriptorFileError::Corrupt("metadata length".into()));
    }
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| DescriptorFileError::Corrupt("metadata is not utf-8".into()))?;
    let meta = DescriptorMeta::from_text(&meta).map_err(DescriptorFileError::Corrupt)?;
    let mut data = vec![0.0; n.checked_mul(d).ok_or_else(|| DescriptorFileError::Corrupt("size".into()))?];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    DescriptorField::new(DMatrix::from_row_slice(n, d, &data), meta).map_err(|e| DescriptorFileError::Corrupt(e.to_string()))
}
