//! Per-shape network inputs.

use nalgebra::DMatrix;
use weds_core::spectral::SpectralBasis;
use weds_core::wavelet::FilterBank;
use weds_core::TriMesh;

use crate::layers::minmax_columns;
use crate::model::Model;
use crate::operators::OperatorSet;
use crate::train::TrainSample;
use crate::MgcnError;

/// Everything the network needs from one mesh.
#[derive(Debug, Clone)]
pub struct PreparedShape {
    pub ops: OperatorSet,
    /// Descriptor columns rescaled to `[0, 1]`.
    pub input: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl PreparedShape {
    /// Builds the operators `model` requires and normalizes `descriptor`
    /// column by column. Labels are taken from the mesh.
    pub fn new(model: &Model, mesh: &TriMesh, basis: &SpectralBasis, bank: &FilterBank, descriptor: &DMatrix<f64>) -> Result<Self, MgcnError> {
        if descriptor.nrows() != mesh.num_vertices() {
            return Err(MgcnError::DimensionMismatch {
                context: "descriptor rows",
                expected: mesh.num_vertices(),
                got: descriptor.nrows(),
            });
        }
        if descriptor.ncols() != model.input_dim() {
            return Err(MgcnError::DimensionMismatch {
                context: "descriptor width",
                expected: model.input_dim(),
                got: descriptor.ncols(),
            });
        }
        let ops = OperatorSet::build(&model.required_operators(), mesh, basis, bank)?;
        Ok(Self {
            ops,
            input: network_input(descriptor),
            labels: mesh.labels().map(<[usize]>::to_vec),
        })
    }

    pub fn sample(&self) -> TrainSample<'_> {
        TrainSample {
            ops: &self.ops,
            input: &self.input,
            labels: self.labels.as_deref(),
        }
    }

    /// Learned per-vertex descriptors.
    pub fn describe(&self, model: &Model) -> Result<DMatrix<f64>, MgcnError> {
        model.forward(&self.ops, &self.input)
    }
}

/// Per-column minmax of a descriptor field; flat columns become 0.5.
pub fn network_input(descriptor: &DMatrix<f64>) -> DMatrix<f64> {
    minmax_columns(descriptor).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use weds_core::descriptors::weds;
    use weds_core::mesh::{cotangent_laplacian, lumped_areas};
    use weds_core::shapes::{self, BarParams};
    use weds_core::spectral::{eig_generalized, EigOptions};

    #[test]
    fn input_columns_span_unit_interval() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 4.0, 3.0, 0.0, 4.0, 2.0, 2.0, 4.0]);
        let x = network_input(&d);
        assert_eq!(x.column(0).as_slice(), &[0.0, 1.0, 0.5]);
        assert_eq!(x.column(1).as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(x.column(2).as_slice(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn prepares_a_bar() {
        let p = BarParams {
            rings: 8,
            sectors: 5,
            ..BarParams::default()
        };
        let mesh = shapes::bent_bar(&p, 0.3);
        let basis = eig_generalized(&cotangent_laplacian(&mesh), &lumped_areas(&mesh), 20, &EigOptions::default()).unwrap();
        let bank = FilterBank::for_basis(&basis, 31).unwrap();
        let field = weds(&mesh, &basis, &bank, 16).unwrap();
        let model = Model::new("MGCONV6(3) + FC4".parse().unwrap(), 16, 0);
        let s = PreparedShape::new(&model, &mesh, &basis, &bank, &field.values).unwrap();
        assert_eq!(s.ops.len(), 3);
        assert_eq!(s.labels.as_deref(), mesh.labels());
        assert_eq!(s.describe(&model).unwrap().shape(), (40, 4));
        let wide = Model::new("MGCONV6(3)".parse().unwrap(), 17, 0);
        assert!(PreparedShape::new(&wide, &mesh, &basis, &bank, &field.values).is_err());
    }
}
