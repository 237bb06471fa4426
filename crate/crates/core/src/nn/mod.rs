//! Minimal dense-network numerics: layers, activations, losses, hand-derived
//! gradients and a momentum SGD optimizer.
//!
//! Gradients are derived per layer rather than through a general autodiff
//! graph. `backward` expects the gradient of the scalar (mean) loss with
//! respect to the network output, so any `1/N` factor belongs to the caller.

pub mod gradcheck;
mod layer;
mod loss;

pub use layer::{backward, seeded_init, sigmoid, Activation, DenseLayer, Mlp};
pub use loss::{cross_entropy_per_row, softmax_cross_entropy_grad, softmax_rows, PROB_FLOOR};

use crate::error::{Error, Result};

/// Plain or momentum SGD settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    learning_rate: f64,
    momentum: f64,
}

impl SgdConfig {
    /// `learning_rate` must be positive; zero is also accepted so that a
    /// frozen model can be driven through the same code path.
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be non-negative and finite, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(SgdConfig {
            learning_rate,
            momentum,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }
}
