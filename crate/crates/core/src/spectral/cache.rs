//! Binary basis cache.
//!
//! Layout (little-endian): magic `WBASIS\0\0`, `u32` version, `u64`-prefixed
//! UTF-8 mesh hash, `u64` N, `u64` k, k eigenvalues, N vertex areas, then the
//! N x k eigenvector matrix column by column, all as `f64`.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use thiserror::Error;

use super::SpectralBasis;
use crate::mesh::MassDiagonal;

const MAGIC: &[u8; 8] = b"WBASIS\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BasisFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a basis file")]
    BadMagic,
    #[error("unsupported basis file version {0}")]
    Version(u32),
    #[error("corrupt basis file: {0}")]
    Corrupt(String),
}

pub fn write_basis<W: Write>(mut w: W, basis: &SpectralBasis, mesh_hash: &str) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(mesh_hash.len() as u64)?;
    w.write_all(mesh_hash.as_bytes())?;
    w.write_u64::<LittleEndian>(basis.num_vertices() as u64)?;
    w.write_u64::<LittleEndian>(basis.k() as u64)?;
    for &x in basis.eigenvalues() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in basis.mass().areas() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in basis.eigenvectors().as_slice() {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

/// Returns the basis and the mesh hash it was computed for.
pub fn read_basis<R: Read>(mut r: R) -> Result<(SpectralBasis, String), BasisFileError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(BasisFileError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(BasisFileError::Version(version));
    }
    let hash_len = r.read_u64::<LittleEndian>()? as usize;
    if hash_len > 1024 {
        return Err(BasisFileError::Corrupt("hash length".into()));
    }
    let mut hash = vec![0u8; hash_len];
    r.read_exact(&mut hash)?;
    let hash = String::from_utf8(hash).map_err(|_| BasisFileError::Corrupt("hash is not utf-8".into()))?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let k = r.read_u64::<LittleEndian>()? as usize;
    if k == 0 || k > n {
        return Err(BasisFileError::Corrupt(format!("k = {k}, N = {n}")));
    }
    let mut read_vec = |len: usize| -> io::Result<Vec<f64>> {
        let mut v = vec![0.0; len];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(v)
    };
    let values = read_vec(k)?;
    let areas = read_vec(n)?;
    if !areas.iter().all(|&a| a > 0.0 && a.is_finite()) {
        return Err(BasisFileError::Corrupt("non-positive vertex area".into()));
    }
    let vectors = DMatrix::from_vec(n, k, read_vec(n * k)?);
    let basis = SpectralBasis::from_parts(values, vectors, MassDiagonal::new(areas))
        .map_err(|e| BasisFileError::Corrupt(e.to_string()))?;
    Ok((basis, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cotangent_laplacian, lumped_areas};
    use crate::shapes;
    use crate::spectral::{eig_generalized, EigOptions};

    #[test]
    fn roundtrip_is_bit_exact() {
        let mesh = shapes::icosphere(1, 1.0);
        let b = eig_generalized(&cotangent_laplacian(&mesh), &lumped_areas(&mesh), 10, &EigOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_basis(&mut buf, &b, &mesh.content_hash()).unwrap();
        let (back, hash) = read_basis(buf.as_slice()).unwrap();
        assert_eq!(hash, mesh.content_hash());
        assert_eq!(back.eigenvalues(), b.eigenvalues());
        assert_eq!(back.eigenvectors(), b.eigenvectors());
        assert_eq!(back.mass(), b.mass());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_basis(&b"NOTABASISFILE..."[..]), Err(BasisFileError::BadMagic)));
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&7u32.to_le_bytes());
        assert!(matches!(read_basis(buf.as_slice()), Err(BasisFileError::Version(7))));
    }
}
