use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{Architecture, LayerSpec};
use crate::layers::{column_ranges, elu, minmax_with, ConvCache, Dense, GraphConv};
use crate::operators::{layer_scales, OperatorKind, OperatorSet};
use crate::MgcnError;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(GraphConv),
    Dense(Dense),
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv(ConvCache),
    Dense(DMatrix<f64>),
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    layers: Vec<LayerCache>,
    /// Network output (the head input).
    output: DMatrix<f64>,
}

impl ModelCache {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

/// A stack of graph convolutions and an optional affine tail, plus an
/// optional per-vertex classification head used only while pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    input_dim: usize,
    layers: Vec<Layer>,
    head: Option<Dense>,
}

fn conv_indices(spec: &LayerSpec) -> (OperatorKind, Vec<usize>) {
    match *spec {
        LayerSpec::Mgconv { scales, .. } => (OperatorKind::Wavelet, layer_scales(scales).expect("validated by the parser")),
        LayerSpec::Chebconv { order, .. } => (OperatorKind::Chebyshev, (0..order).collect()),
        LayerSpec::Fc { .. } => unreachable!("not a convolution"),
    }
}

impl Model {
    /// Glorot normal weights scaled by the init gains, zero biases.
    pub fn new(arch: Architecture, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = input_dim;
        let layers = arch
            .layers
            .iter()
            .map(|spec| {
                let o = spec.out_dim();
                let layer = match spec {
                    LayerSpec::Fc { .. } => Layer::Dense(Dense::random(c, o, &mut rng)),
                    _ => {
                        let (kind, idx) = conv_indices(spec);
                        Layer::Conv(GraphConv::random(kind, idx, c, o, &mut rng))
                    }
                };
                c = o;
                layer
            })
            .collect();
        Self {
            arch,
            input_dim,
            layers,
            head: None,
        }
    }

    /// All weights zero.
    pub fn zeros(arch: Architecture, input_dim: usize) -> Self {
        let mut m = Self::new(arch, input_dim, 0);
        for p in m.params_mut(true) {
            p.fill(0.0);
        }
        m
    }

    /// Assembles a model from explicit layers, checking them against `arch`.
    pub fn from_parts(arch: Architecture, input_dim: usize, layers: Vec<Layer>, head: Option<Dense>) -> Result<Self, MgcnError> {
        let template = Self::new(arch.clone(), input_dim, 0);
        let mismatch = |msg: &str| MgcnError::Checkpoint(format!("layers do not match architecture: {msg}"));
        if template.layers.len() != layers.len() {
            return Err(mismatch("layer count"));
        }
        for (t, l) in template.layers.iter().zip(&layers) {
            let ok = match (t, l) {
                (Layer::Conv(a), Layer::Conv(b)) => {
                    a.kind == b.kind
                        && a.indices == b.indices
                        && a.weights.len() == b.weights.len()
                        && a.weights.iter().zip(&b.weights).all(|(x, y)| x.shape() == y.shape())
                }
                (Layer::Dense(a), Layer::Dense(b)) => a.weight.shape() == b.weight.shape() && a.bias.shape() == b.bias.shape(),
                _ => false,
            };
            if !ok {
                return Err(mismatch("layer shapes"));
            }
        }
        if let Some(h) = &head {
            if h.in_dim() != arch.output_dim() || h.bias.shape() != (1, h.out_dim()) {
                return Err(mismatch("head shape"));
            }
        }
        Ok(Self {
            arch,
            input_dim,
            layers,
            head,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> Option<&Dense> {
        self.head.as_ref()
    }

    pub fn set_head(&mut self, head: Option<Dense>) {
        self.head = head;
    }

    /// Operators every shape must provide, deduplicated.
    pub fn required_operators(&self) -> Vec<(OperatorKind, usize)> {
        let mut req: Vec<(OperatorKind, usize)> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c.indices.iter().map(move |&i| (c.kind, i))),
                Layer::Dense(_) => None,
            })
            .flatten()
            .collect();
        req.sort_unstable();
        req.dedup();
        req
    }

    /// Parameters in a fixed order: layer by layer (conv weights by index,
    /// dense weight then bias), then the head if requested and present.
    pub fn params(&self, with_head: bool) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv(c) => out.extend(c.weights.iter()),
                Layer::Dense(d) => out.extend([&d.weight, &d.bias]),
            }
        }
        if let (true, Some(h)) = (with_head, &self.head) {
            out.extend([&h.weight, &h.bias]);
        }
        out
    }

    pub fn params_mut(&mut self, with_head: bool) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => out.extend(c.weights.iter_mut()),
                Layer::Dense(d) => out.extend([&mut d.weight, &mut d.bias]),
            }
        }
        if let (true, Some(h)) = (with_head, &mut self.head) {
            out.extend([&mut h.weight, &mut h.bias]);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params(true).iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, ops: &OperatorSet, x: &DMatrix<f64>) -> Result<(), MgcnError> {
        if x.ncols() != self.input_dim {
            return Err(MgcnError::DimensionMismatch {
                context: "model input width",
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        if x.nrows() != ops.num_vertices() {
            return Err(MgcnError::DimensionMismatch {
                context: "model input rows",
                expected: ops.num_vertices(),
                got: x.nrows(),
            });
        }
        Ok(())
    }

    /// Per-vertex output descriptors.
    pub fn forward(&self, ops: &OperatorSet, x: &DMatrix<f64>) -> Result<DMatrix<f64>, MgcnError> {
        self.check_input(ops, x)?;
        let mut h = x.clone();
        for l in &self.layers {
            h = match l {
                Layer::Conv(c) => c.forward(ops, &h)?.0,
                Layer::Dense(d) => d.forward(&h)?,
            };
        }
        Ok(h)
    }

    pub fn forward_cached(&self, ops: &OperatorSet, x: &DMatrix<f64>) -> Result<ModelCache, MgcnError> {
        self.run(ops, x, None)
    }

    /// Forward pass with every normalization reference held at its value in
    /// `reference`. [`Model::backward`] returns the exact gradient of this
    /// function at the reference input.
    pub fn forward_frozen(&self, ops: &OperatorSet, x: &DMatrix<f64>, reference: &ModelCache) -> Result<ModelCache, MgcnError> {
        self.run(ops, x, Some(reference))
    }

    fn run(&self, ops: &OperatorSet, x: &DMatrix<f64>, reference: Option<&ModelCache>) -> Result<ModelCache, MgcnError> {
        self.check_input(ops, x)?;
        let mut h = x.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            h = match l {
                Layer::Conv(c) => {
                    let s = c.pre_activation(ops, &h)?;
                    let e = s.map(elu);
                    let ranges = match reference.map(|r| &r.layers[i]) {
                        Some(LayerCache::Conv(cc)) => cc.ranges.clone(),
                        _ => column_ranges(&e),
                    };
                    let z = minmax_with(&e, &ranges);
                    let x = std::mem::replace(&mut h, DMatrix::zeros(0, 0));
                    layers.push(LayerCache::Conv(ConvCache { x, s, ranges }));
                    z
                }
                Layer::Dense(d) => {
                    let y = d.forward(&h)?;
                    layers.push(LayerCache::Dense(std::mem::replace(&mut h, DMatrix::zeros(0, 0))));
                    y
                }
            };
        }
        Ok(ModelCache { layers, output: h })
    }

    /// Head logits for a cached pass.
    pub fn logits(&self, cache: &ModelCache) -> Result<DMatrix<f64>, MgcnError> {
        match &self.head {
            Some(h) => h.forward(&cache.output),
            None => Err(MgcnError::NoHead),
        }
    }

    /// Gradients in [`Model::params`] order. `d_logits` routes through the
    /// head and includes its gradients; `d_out` is added at the network output.
    pub fn backward(
        &self,
        ops: &OperatorSet,
        cache: &ModelCache,
        d_out: Option<&DMatrix<f64>>,
        d_logits: Option<&DMatrix<f64>>,
    ) -> Result<Vec<DMatrix<f64>>, MgcnError> {
        let mut dh = match d_out {
            Some(d) => d.clone(),
            None => DMatrix::zeros(cache.output.nrows(), cache.output.ncols()),
        };
        let mut head_grads = Vec::new();
        if let Some(dl) = d_logits {
            let head = self.head.as_ref().ok_or(MgcnError::NoHead)?;
            let (dx, dw, db) = head.backward(&cache.output, dl);
            dh += dx;
            head_grads = vec![dw, db];
        }
        let mut per_layer: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(self.layers.len());
        for (l, c) in self.layers.iter().zip(&cache.layers).rev() {
            match (l, c) {
                (Layer::Conv(conv), LayerCache::Conv(cc)) => {
                    let (dx, dw) = conv.backward(ops, cc, &dh)?;
                    per_layer.push(dw);
                    dh = dx;
                }
                (Layer::Dense(d), LayerCache::Dense(x)) => {
                    let (dx, dw, db) = d.backward(x, &dh);
                    per_layer.push(vec![dw, db]);
                    dh = dx;
                }
                _ => unreachable!("cache built by this model"),
            }
        }
        let mut grads: Vec<DMatrix<f64>> = per_layer.into_iter().rev().flatten().collect();
        grads.extend(head_grads);
        Ok(grads)
    }
}
