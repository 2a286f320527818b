//! Model checkpoint container.
//!
//! Layout (little-endian): magic `WMGCN\0\0\0`, `u32` version, architecture
//! string, `u64` input width, then every layer (tag, operator kind and
//! indices for convolutions, matrices), the optional head, the optional
//! optimizer state and the optional RNG state. Strings carry a `u64` byte
//! length; matrices carry `u64` rows and columns and column-major `f64`s.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::layers::{Dense, GraphConv};
use crate::model::{Layer, Model};
use crate::operators::OperatorKind;
use crate::optim::{Adam, AdamParams};
use crate::MgcnError;

const MAGIC: &[u8; 8] = b"WMGCN\0\0\0";
const VERSION: u32 = 1;
/// Guards allocations while reading untrusted sizes.
const MAX_ELEMENTS: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<Adam>,
    pub rng: Option<ChaCha8Rng>,
}

fn bad(msg: impl Into<String>) -> MgcnError {
    MgcnError::Checkpoint(msg.into())
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for &x in m.iter() {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>, MgcnError> {
    let rows = r.read_u64::<LittleEndian>()?;
    let cols = r.read_u64::<LittleEndian>()?;
    if rows.saturating_mul(cols) > MAX_ELEMENTS {
        return Err(bad(format!("matrix of {rows} x {cols} is too large")));
    }
    let mut data = vec![0.0; (rows * cols) as usize];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    if data.iter().any(|x| !x.is_finite()) {
        return Err(bad("non-finite weight"));
    }
    Ok(DMatrix::from_vec(rows as usize, cols as usize, data))
}

fn write_dense<W: Write>(w: &mut W, d: &Dense) -> std::io::Result<()> {
    write_matrix(w, &d.weight)?;
    write_matrix(w, &d.bias)
}

fn read_dense<R: Read>(r: &mut R) -> Result<Dense, MgcnError> {
    Ok(Dense {
        weight: read_matrix(r)?,
        bias: read_matrix(r)?,
    })
}

fn read_flag<R: Read>(r: &mut R) -> Result<bool, MgcnError> {
    match r.read_u8()? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(bad(format!("bad flag byte {other}"))),
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<(), MgcnError> {
    let m = &ck.model;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let arch = m.architecture().to_string();
    w.write_u64::<LittleEndian>(arch.len() as u64)?;
    w.write_all(arch.as_bytes())?;
    w.write_u64::<LittleEndian>(m.input_dim() as u64)?;
    w.write_u64::<LittleEndian>(m.layers().len() as u64)?;
    for l in m.layers() {
        match l {
            Layer::Conv(c) => {
                w.write_u8(0)?;
                w.write_u8(match c.kind {
                    OperatorKind::Wavelet => 0,
                    OperatorKind::Chebyshev => 1,
                })?;
                w.write_u64::<LittleEndian>(c.indices.len() as u64)?;
                for (&i, wt) in c.indices.iter().zip(&c.weights) {
                    w.write_u64::<LittleEndian>(i as u64)?;
                    write_matrix(&mut w, wt)?;
                }
            }
            Layer::Dense(d) => {
                w.write_u8(1)?;
                write_dense(&mut w, d)?;
            }
        }
    }
    w.write_u8(m.head().is_some() as u8)?;
    if let Some(h) = m.head() {
        write_dense(&mut w, h)?;
    }
    w.write_u8(ck.optimizer.is_some() as u8)?;
    if let Some(opt) = &ck.optimizer {
        let p = opt.params;
        for x in [p.lr, p.beta1, p.beta2, p.eps, p.weight_decay] {
            w.write_f64::<LittleEndian>(x)?;
        }
        w.write_u64::<LittleEndian>(opt.step)?;
        w.write_u64::<LittleEndian>(opt.m.len() as u64)?;
        for x in opt.m.iter().chain(&opt.v) {
            write_matrix(&mut w, x)?;
        }
    }
    w.write_u8(ck.rng.is_some() as u8)?;
    if let Some(rng) = &ck.rng {
        w.write_all(&rng.get_seed())?;
        w.write_u64::<LittleEndian>(rng.get_stream())?;
        w.write_u128::<LittleEndian>(rng.get_word_pos())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, MgcnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = r.read_u64::<LittleEndian>()?;
    if len > 1 << 16 {
        return Err(bad("architecture string too long"));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|_| bad("architecture is not UTF-8"))?;
    let arch: Architecture = text.parse()?;
    let input_dim = r.read_u64::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()?;
    if count != arch.layers.len() as u64 {
        return Err(bad("layer count does not match architecture"));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let layer = match r.read_u8()? {
            0 => {
                let kind = match r.read_u8()? {
                    0 => OperatorKind::Wavelet,
                    1 => OperatorKind::Chebyshev,
                    other => return Err(bad(format!("unknown operator kind {other}"))),
                };
                let n = r.read_u64::<LittleEndian>()?;
                if n > 1 << 10 {
                    return Err(bad("too many operators in a layer"));
                }
                let mut indices = Vec::with_capacity(n as usize);
                let mut weights = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    indices.push(r.read_u64::<LittleEndian>()? as usize);
                    weights.push(read_matrix(&mut r)?);
                }
                Layer::Conv(GraphConv { kind, indices, weights })
            }
            1 => Layer::Dense(read_dense(&mut r)?),
            other => return Err(bad(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    let head = if read_flag(&mut r)? { Some(read_dense(&mut r)?) } else { None };
    let model = Model::from_parts(arch, input_dim, layers, head)?;
    let optimizer = if read_flag(&mut r)? {
        let mut p = [0.0; 5];
        for x in &mut p {
            *x = r.read_f64::<LittleEndian>()?;
        }
        let step = r.read_u64::<LittleEndian>()?;
        let n = r.read_u64::<LittleEndian>()? as usize;
        if n > 2 * model.params(true).len() {
            return Err(bad("optimizer state does not match the model"));
        }
        let m = (0..n).map(|_| read_matrix(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let v = (0..n).map(|_| read_matrix(&mut r)).collect::<Result<Vec<_>, _>>()?;
        Some(Adam {
            params: AdamParams {
                lr: p[0],
                beta1: p[1],
                beta2: p[2],
                eps: p[3],
                weight_decay: p[4],
            },
            step,
            m,
            v,
        })
    } else {
        None
    };
    let rng = if read_flag(&mut r)? {
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.read_u64::<LittleEndian>()?);
        rng.set_word_pos(r.read_u128::<LittleEndian>()?);
        Some(rng)
    } else {
        None
    };
    Ok(Checkpoint { model, optimizer, rng })
}
