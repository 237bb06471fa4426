//! Central finite-difference check of `Mlp::backward`.
//!
//! The scalar probed is `L = Σ output ⊙ probe`, so `probe` is exactly the
//! upstream gradient handed to `backward`. Every weight, bias and input
//! entry is perturbed by `±h` and compared with the analytic value.

use crate::error::Result;
use crate::matrix::Matrix;

use super::{Activation, Mlp};

/// Entries whose analytic and numeric magnitudes are both below this are
/// compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub entries: usize,
}

fn probe_loss(mlp: &Mlp, input: &Matrix, probe: &Matrix) -> Result<f64> {
    let out = mlp.infer(input)?;
    Ok(out.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum())
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Smallest |pre-activation| over every relu unit for this input. A value
/// below the step size means a finite difference may straddle the kink.
pub fn relu_margin(mlp: &Mlp, input: &Matrix) -> Result<f64> {
    let mut x = input.clone();
    let mut margin = f64::INFINITY;
    for layer in mlp.layers() {
        let mut pre = x.matmul_t(layer.weight())?;
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(layer.bias()) {
                *v += b;
            }
        }
        if layer.activation() == Activation::Relu {
            margin = pre.as_slice().iter().fold(margin, |m, z| m.min(z.abs()));
        }
        x = layer.infer(&x)?;
    }
    Ok(margin)
}

/// Compares analytic and central-difference gradients. Returns `None` when
/// a relu pre-activation lies within `kink_margin` of zero.
pub fn check_mlp(
    mlp: &mut Mlp,
    input: &Matrix,
    probe: &Matrix,
    h: f64,
    kink_margin: f64,
) -> Result<Option<GradReport>> {
    if relu_margin(mlp, input)? < kink_margin {
        return Ok(None);
    }
    mlp.forward(input)?;
    let input_grad = mlp.backward(probe)?;

    let mut worst = 0.0f64;
    let mut entries = 0;
    for l in 0..mlp.layers().len() {
        let analytic_w = mlp.layers()[l].weight_grad().as_slice().to_vec();
        let analytic_b = mlp.layers()[l].bias_grad().to_vec();
        for (k, a) in analytic_w.iter().enumerate() {
            let orig = mlp.layers()[l].weight().as_slice()[k];
            mlp.layers_mut()[l].weight_values_mut()[k] = orig + h;
            let up = probe_loss(mlp, input, probe)?;
            mlp.layers_mut()[l].weight_values_mut()[k] = orig - h;
            let down = probe_loss(mlp, input, probe)?;
            mlp.layers_mut()[l].weight_values_mut()[k] = orig;
            worst = worst.max(rel_error(*a, (up - down) / (2.0 * h)));
            entries += 1;
        }
        for (k, a) in analytic_b.iter().enumerate() {
            let orig = mlp.layers()[l].bias()[k];
            mlp.layers_mut()[l].bias_values_mut()[k] = orig + h;
            let up = probe_loss(mlp, input, probe)?;
            mlp.layers_mut()[l].bias_values_mut()[k] = orig - h;
            let down = probe_loss(mlp, input, probe)?;
            mlp.layers_mut()[l].bias_values_mut()[k] = orig;
            worst = worst.max(rel_error(*a, (up - down) / (2.0 * h)));
            entries += 1;
        }
    }
    let mut x = input.clone();
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + h;
        let up = probe_loss(mlp, &x, probe)?;
        x.as_mut_slice()[k] = orig - h;
        let down = probe_loss(mlp, &x, probe)?;
        x.as_mut_slice()[k] = orig;
        worst = worst.max(rel_error(input_grad.as_slice()[k], (up - down) / (2.0 * h)));
        entries += 1;
    }
    mlp.zero_grad();
    Ok(Some(GradReport {
        max_rel_error: worst,
        entries,
    }))
}
