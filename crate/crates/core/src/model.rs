//! The trainee classifier.
//!
//! A ReLU trunk produces the per-sample feature embedding that the agent
//! observes as its state; a linear head maps those features to class logits.

use crate::error::{Error, Result};
use crate::matrix::{fingerprint_values, Matrix};
use crate::nn::{self, Activation, DenseLayer, Mlp, SgdConfig};
use crate::rng;

/// Outputs of one scoring pass over a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    /// Post-activation output of the last trunk layer, `N × D`.
    pub features: Matrix,
    /// Softmax probabilities, `N × C`.
    pub probs: Matrix,
    /// Per-sample cross-entropy against the pool labels.
    pub losses: Vec<f64>,
    pub sample_ids: Vec<usize>,
}

impl ForwardRecord {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.probs.cols()
    }
}

#[derive(Debug, Clone)]
pub struct TargetModel {
    trunk: Mlp,
    head: DenseLayer,
    class_count: usize,
}

impl TargetModel {
    /// `input → hidden[0] relu → … → hidden[last] relu → classes`.
    pub fn new(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::InvalidArgument(
                "target model needs at least one trunk layer".into(),
            ));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        let trunk = Mlp::seeded(&widths, Activation::Relu, seed);
        let head = DenseLayer::new(
            *hidden.last().expect("non-empty"),
            classes,
            Activation::Identity,
            rng::derive_seed(seed, u64::MAX),
        );
        Self::from_parts(trunk, head, classes)
    }

    pub fn from_parts(trunk: Mlp, head: DenseLayer, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two classes, got {classes}"
            )));
        }
        if head.output_dim() != classes {
            return Err(Error::shape("head output width", classes, head.output_dim()));
        }
        match trunk.output_dim() {
            Some(d) if d == head.input_dim() => {}
            Some(d) => return Err(Error::shape("trunk/head width", d, head.input_dim())),
            None => {
                return Err(Error::InvalidArgument(
                    "target model needs at least one trunk layer".into(),
                ))
            }
        }
        Ok(TargetModel {
            trunk,
            head,
            class_count: classes,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim().expect("validated non-empty")
    }

    /// Width `D` of the feature embedding.
    pub fn feature_dim(&self) -> usize {
        self.head.input_dim()
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn head(&self) -> &DenseLayer {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DenseLayer {
        &mut self.head
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    /// Read-only pass over `features`; no parameter or cache is touched.
    pub fn forward_pool(&self, features: &Matrix, labels: &[usize]) -> Result<ForwardRecord> {
        self.check_input(features)?;
        let embedding = self.trunk.infer(features)?;
        let probs = nn::softmax_rows(&self.head.infer(&embedding)?);
        let losses = nn::cross_entropy_per_row(&probs, labels)?;
        Ok(ForwardRecord {
            features: embedding,
            probs,
            losses,
            sample_ids: (0..features.rows()).collect(),
        })
    }

    /// Class logits without caching.
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        self.check_input(features)?;
        self.head.infer(&self.trunk.infer(features)?)
    }

    /// One forward/backward/SGD step on exactly this batch. Returns the
    /// mean loss measured before the update.
    pub fn train_step(&mut self, features: &Matrix, labels: &[usize], sgd: &SgdConfig) -> Result<f64> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("train_step on an empty batch".into()));
        }
        self.check_input(features)?;
        let embedding = self.trunk.forward(features)?;
        let probs = nn::softmax_rows(&self.head.forward(&embedding)?);
        let losses = nn::cross_entropy_per_row(&probs, labels)?;
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let grad = nn::softmax_cross_entropy_grad(&probs, labels)?;
        let grad = self.head.backward(&grad)?;
        self.trunk.backward(&grad)?;
        self.head.sgd_step(sgd);
        self.trunk.sgd_step(sgd);
        Ok(mean_loss)
    }

    /// Fraction of rows whose argmax (ties → lower index) equals the label.
    pub fn evaluate(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("evaluate on an empty set".into()));
        }
        let logits = self.logits(features)?;
        Ok(accuracy(&logits, labels))
    }

    pub fn parameter_count(&self) -> usize {
        self.trunk.parameter_count() + self.head.parameter_count()
    }

    /// Bit-exact fingerprint of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let values: Vec<f64> = self.trunk.param_values().chain(self.head.param_values()).collect();
        fingerprint_values(self.class_count as u64, &values)
    }

    fn check_input(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::shape("trainee input width", self.input_dim(), features.cols()));
        }
        Ok(())
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(scores: &Matrix, labels: &[usize]) -> f64 {
    let correct = scores
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}
