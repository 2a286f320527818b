//! Two-phase training: per-vertex classification, then a hardest-negative
//! triplet loss on corresponding vertex pairs.

use std::collections::HashMap;

use log::{debug, info};
use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::Dense;
use crate::loss::{cross_entropy, hardnet, HARDNET_MARGIN};
use crate::model::Model;
use crate::operators::OperatorSet;
use crate::optim::{Adam, AdamParams};
use crate::MgcnError;

/// One shape: its operators, input features and per-vertex template labels.
/// Vertices of different shapes with equal labels correspond.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub ops: &'a OperatorSet,
    pub input: &'a DMatrix<f64>,
    pub labels: Option<&'a [usize]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub adam: AdamParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub classification: PhaseConfig,
    pub similarity: PhaseConfig,
    pub margin: f64,
    /// Corresponding pairs sampled per shape pair and step.
    pub pairs_per_step: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            classification: PhaseConfig {
                epochs: 200,
                adam: AdamParams::new(1e-3, 1e-4),
            },
            similarity: PhaseConfig {
                epochs: 100,
                adam: AdamParams::new(5e-4, 5e-5),
            },
            margin: HARDNET_MARGIN,
            pairs_per_step: 512,
            seed: 0,
        }
    }
}

/// Mean loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub classification: Vec<f64>,
    pub similarity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: LossHistory,
    /// Per-shape head accuracy at the end of the classification phase; empty
    /// when that phase did not run.
    pub accuracy: Vec<f64>,
    /// Optimizer of the last phase that ran.
    pub optimizer: Option<Adam>,
    pub rng: ChaCha8Rng,
}

fn labels_of<'a>(data: &[TrainSample<'a>], i: usize) -> Result<&'a [usize], MgcnError> {
    data[i].labels.ok_or(MgcnError::MissingLabels(i))
}

fn shapes(model: &Model, with_head: bool) -> Vec<(usize, usize)> {
    model.params(with_head).iter().map(|p| p.shape()).collect()
}

/// Trains `model` in place. The model is untouched by phases with zero epochs.
pub fn train(model: &mut Model, data: &[TrainSample], config: &TrainConfig) -> Result<TrainReport, MgcnError> {
    if data.is_empty() {
        return Err(MgcnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = LossHistory::default();
    let mut optimizer = None;
    let mut accuracy = Vec::new();

    if config.classification.epochs > 0 {
        let mut classes = 0;
        for i in 0..data.len() {
            classes = classes.max(labels_of(data, i)?.iter().max().map_or(0, |&m| m + 1));
        }
        // A fresh head starts at zero: uniform first logits.
        if model.head().is_none_or(|h| h.out_dim() != classes) {
            model.set_head(Some(Dense::zeros(model.output_dim(), classes)));
        }
        let mut opt = Adam::new(config.classification.adam, &shapes(model, true));
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..config.classification.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let s = &data[i];
                let cache = model.forward_cached(s.ops, s.input)?;
                let (loss, dl) = cross_entropy(&model.logits(&cache)?, labels_of(data, i)?)?;
                if !loss.is_finite() {
                    return Err(MgcnError::NonFinite { phase: 1, epoch });
                }
                let grads = model.backward(s.ops, &cache, None, Some(&dl))?;
                opt.step(model.params_mut(true), &grads);
                total += loss;
            }
            let mean = total / data.len() as f64;
            debug!("classification epoch {epoch}: loss {mean:.6}");
            history.classification.push(mean);
        }
        accuracy = data.iter().map(|s| classification_accuracy(model, s)).collect::<Result<Vec<_>, _>>()?;
        info!(
            "classification phase done: {} epochs, final loss {:.6}, accuracy {:?}",
            config.classification.epochs,
            history.classification.last().copied().unwrap_or(f64::NAN),
            accuracy
        );
        optimizer = Some(opt);
    }

    if config.similarity.epochs > 0 {
        if data.len() < 2 {
            return Err(MgcnError::TooFewShapes(data.len()));
        }
        let mut pairs = Vec::new();
        for i in 0..data.len() {
            for j in i + 1..data.len() {
                let matches = corresponding_vertices(labels_of(data, i)?, labels_of(data, j)?);
                if matches.len() >= 2 {
                    pairs.push((i, j, matches));
                }
            }
        }
        if pairs.is_empty() {
            return Err(MgcnError::TooFewPairs { needed: 2, got: 0 });
        }
        let mut opt = Adam::new(config.similarity.adam, &shapes(model, false));
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        for epoch in 0..config.similarity.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &p in &order {
                let (i, j, ref matches) = pairs[p];
                let picked: Vec<(usize, usize)> = if matches.len() > config.pairs_per_step {
                    index::sample(&mut rng, matches.len(), config.pairs_per_step).into_iter().map(|k| matches[k]).collect()
                } else {
                    matches.clone()
                };
                let (loss, grads) = similarity_step(model, &data[i], &data[j], &picked, config.margin)?;
                if !loss.is_finite() {
                    return Err(MgcnError::NonFinite { phase: 2, epoch });
                }
                opt.step(model.params_mut(false), &grads);
                total += loss;
            }
            let mean = total / pairs.len() as f64;
            debug!("similarity epoch {epoch}: loss {mean:.6}");
            history.similarity.push(mean);
        }
        info!(
            "similarity phase done: {} epochs, final loss {:.6}",
            config.similarity.epochs,
            history.similarity.last().copied().unwrap_or(f64::NAN)
        );
        optimizer = Some(opt);
    }
    Ok(TrainReport {
        history,
        accuracy,
        optimizer,
        rng,
    })
}

/// `(u, v)` vertex pairs with equal labels, in order of `u`.
fn corresponding_vertices(a: &[usize], b: &[usize]) -> Vec<(usize, usize)> {
    let mut first: HashMap<usize, usize> = HashMap::new();
    for (v, &l) in b.iter().enumerate() {
        first.entry(l).or_insert(v);
    }
    a.iter().enumerate().filter_map(|(u, l)| first.get(l).map(|&v| (u, v))).collect()
}

fn similarity_step(model: &Model, a: &TrainSample, b: &TrainSample, picked: &[(usize, usize)], margin: f64) -> Result<(f64, Vec<DMatrix<f64>>), MgcnError> {
    let (ca, cb) = rayon::join(|| model.forward_cached(a.ops, a.input), || model.forward_cached(b.ops, b.input));
    let (ca, cb) = (ca?, cb?);
    let da_rows = ca.output().select_rows(picked.iter().map(|p| &p.0));
    let db_rows = cb.output().select_rows(picked.iter().map(|p| &p.1));
    let (loss, ga, gb) = hardnet(&da_rows, &db_rows, margin)?;
    let mut d_out_a = DMatrix::zeros(ca.output().nrows(), ca.output().ncols());
    let mut d_out_b = DMatrix::zeros(cb.output().nrows(), cb.output().ncols());
    for (r, &(u, v)) in picked.iter().enumerate() {
        let mut ra = d_out_a.row_mut(u);
        ra += ga.row(r);
        let mut rb = d_out_b.row_mut(v);
        rb += gb.row(r);
    }
    let (grads_a, grads_b) = rayon::join(
        || model.backward(a.ops, &ca, Some(&d_out_a), None),
        || model.backward(b.ops, &cb, Some(&d_out_b), None),
    );
    let mut grads = grads_a?;
    for (g, h) in grads.iter_mut().zip(grads_b?) {
        *g += h;
    }
    Ok((loss, grads))
}

/// Fraction of vertices whose head prediction equals their label.
pub fn classification_accuracy(model: &Model, sample: &TrainSample) -> Result<f64, MgcnError> {
    let labels = sample.labels.ok_or(MgcnError::MissingLabels(0))?;
    let cache = model.forward_cached(sample.ops, sample.input)?;
    let logits = model.logits(&cache)?;
    let hits = logits.row_iter().zip(labels).filter(|(r, &l)| r.transpose().argmax().0 == l).count();
    Ok(hits as f64 / labels.len() as f64)
}
