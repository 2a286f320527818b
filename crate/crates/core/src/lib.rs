//! Spectral shape analysis on triangle meshes.
//!
//! The pipeline runs mesh → cotangent Laplacian and lumped mass → generalized
//! eigenbasis → Mexican-hat graph wavelet frame → wavelet energy decomposition
//! signature (WEDS). Heat and wave kernel signatures are provided as baselines,
//! and [`evaluation`] implements the usual correspondence-quality metrics.

pub mod descriptors;
pub mod evaluation;
pub mod hash;
pub mod mesh;
pub mod shapes;
pub mod sparse;
pub mod spectral;
pub mod wavelet;

pub use mesh::{MeshError, TriMesh};
pub use sparse::SparseSymMatrix;
