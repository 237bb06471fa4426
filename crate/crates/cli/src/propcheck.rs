//! Oracle suites behind `data-agent propcheck`.
//!
//! - `loss_gradient`: the logit-gradient L1 norm of cross-entropy equals
//!   `2(1 − p_y)`, and the full parameter gradient norm of a softmax layer
//!   grows strictly with `1 − p_y`.
//! - `entropy_gain`: the expected KL shift of one SGD step, brute-forced over
//!   labels drawn from the model's own prediction, ranks like entropy.
//! - `finite_difference`: analytic backprop against central differences.

use data_agent_core::matrix::Matrix;
use data_agent_core::nn::gradcheck::check_mlp;
use data_agent_core::nn::{softmax_cross_entropy_grad, softmax_rows, Activation, DenseLayer, Mlp, SgdConfig};
use data_agent_core::reward::entropy;
use data_agent_core::rng::seeded;
use data_agent_core::stats::spearman;
use data_agent_core::Result;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub const IDENTITY_CASES: usize = 1000;
pub const IDENTITY_TOL: f64 = 1e-9;
pub const ENTROPY_CASES: usize = 200;
pub const ENTROPY_LR: f64 = 1e-3;
pub const ENTROPY_MIN_SPEARMAN: f64 = 0.9;
pub const FD_TOL: f64 = 1e-4;

fn normal(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// L1 norm of the single-row cross-entropy gradient w.r.t. the logits.
pub fn logit_grad_l1(probs: &[f64], label: usize) -> Result<f64> {
    let p = Matrix::from_vec(1, probs.len(), probs.to_vec())?;
    let g = softmax_cross_entropy_grad(&p, &[label])?;
    Ok(g.as_slice().iter().map(|v| v.abs()).sum())
}

/// Norm of the weight and bias gradient of a softmax layer on one sample.
pub fn param_grad_norm(layer: &mut DenseLayer, x: &[f64], label: usize) -> Result<(f64, f64)> {
    let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let logits = layer.forward(&input)?;
    let probs = softmax_rows(&logits);
    layer.backward(&softmax_cross_entropy_grad(&probs, &[label])?)?;
    let sq: f64 = layer
        .weight_grad()
        .as_slice()
        .iter()
        .chain(layer.bias_grad())
        .map(|g| g * g)
        .sum();
    layer.zero_grad();
    Ok((sq.sqrt(), probs.get(0, label)))
}

pub fn loss_gradient(seed: u64) -> Result<SuiteResult> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..IDENTITY_CASES {
        let classes = rng.random_range(2..=10);
        let scale = rng.random_range(0.1..8.0);
        let logits: Vec<f64> = (0..classes).map(|_| scale * normal(&mut rng)).collect();
        let probs = softmax_rows(&Matrix::from_vec(1, classes, logits)?).into_vec();
        let y = rng.random_range(0..classes);
        worst = worst.max((logit_grad_l1(&probs, y)? - 2.0 * (1.0 - probs[y])).abs());
    }

    // Sweep the true-class bias downward so 1 − p_y rises monotonically.
    let (d, c, y) = (4, 5, 2);
    let weight = Matrix::from_vec(c, d, (0..c * d).map(|_| normal(&mut rng)).collect())?;
    let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let mut miss = Vec::new();
    let mut norms = Vec::new();
    for step in 0..60 {
        let mut bias = vec![0.0; c];
        bias[y] = 12.0 - 0.4 * step as f64;
        let mut layer = DenseLayer::from_params(weight.clone(), bias, Activation::Identity)?;
        let (norm, p_y) = param_grad_norm(&mut layer, &x, y)?;
        miss.push(1.0 - p_y);
        norms.push(norm);
    }
    let rho = spearman(&miss, &norms);
    let strict = norms.windows(2).all(|w| w[1] > w[0]) && miss.windows(2).all(|w| w[1] > w[0]);
    Ok(SuiteResult {
        name: "loss_gradient",
        passed: worst <= IDENTITY_TOL && rho == 1.0 && strict,
        detail: format!("{IDENTITY_CASES} cases, max |L1 - 2(1-p_y)| = {worst:.3e}; sweep spearman = {rho}, strictly increasing = {strict}"),
    })
}

/// KL(q ‖ p) for strictly positive distributions.
pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

/// `E_{y∼p}[KL(p′_y ‖ p)]` where `p′_y` is the prediction at `x` after one
/// plain SGD step of size `lr` on `(x, y)`.
pub fn expected_kl_gain(layer: &DenseLayer, x: &[f64], lr: f64) -> Result<(f64, Vec<f64>)> {
    let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let p = softmax_rows(&layer.infer(&input)?).into_vec();
    let sgd = SgdConfig::new(lr, 0.0)?;
    let mut gain = 0.0;
    for (y, &py) in p.iter().enumerate() {
        if py == 0.0 {
            continue;
        }
        let mut l = layer.clone();
        let logits = l.forward(&input)?;
        l.backward(&softmax_cross_entropy_grad(&softmax_rows(&logits), &[y])?)?;
        l.sgd_step(&sgd);
        let q = softmax_rows(&l.infer(&input)?).into_vec();
        gain += py * kl(&q, &p);
    }
    Ok((gain, p))
}

/// Input width, classes and weight scale of the entropy suite's layer. The
/// ranking only holds once logits span a wide range of confidences; near
/// uniform predictions (small weights) the expected KL shift and entropy
/// disagree often enough to break it.
pub const ENTROPY_LAYER: (usize, usize, f64) = (8, 8, 4.0);

/// Spearman correlation between brute-force expected KL shift and entropy
/// over `ENTROPY_CASES` inputs of norm 2 through a random `c × d` softmax
/// layer with weights drawn at `scale`.
pub fn entropy_rank_correlation(seed: u64, d: usize, c: usize, scale: f64) -> Result<f64> {
    let mut rng = seeded(seed ^ 0x5eed);
    let weight = Matrix::from_vec(c, d, (0..c * d).map(|_| scale * normal(&mut rng)).collect())?;
    let bias = (0..c).map(|_| 0.5 * normal(&mut rng)).collect();
    let layer = DenseLayer::from_params(weight, bias, Activation::Identity)?;
    let mut gains = Vec::with_capacity(ENTROPY_CASES);
    let mut entropies = Vec::with_capacity(ENTROPY_CASES);
    for _ in 0..ENTROPY_CASES {
        // inputs on a sphere so the step size factor ‖x‖² + 1 is shared
        let mut x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v *= 2.0 / norm);
        let (gain, p) = expected_kl_gain(&layer, &x, ENTROPY_LR)?;
        gains.push(gain);
        entropies.push(entropy(&p));
    }
    Ok(spearman(&gains, &entropies))
}

pub fn entropy_gain(seed: u64) -> Result<SuiteResult> {
    let (d, c, scale) = ENTROPY_LAYER;
    let rho = entropy_rank_correlation(seed, d, c, scale)?;
    Ok(SuiteResult {
        name: "entropy_gain",
        passed: rho >= ENTROPY_MIN_SPEARMAN,
        detail: format!("{ENTROPY_CASES} inputs, spearman(E[KL], H) = {rho:.4} (need >= {ENTROPY_MIN_SPEARMAN})"),
    })
}

pub fn finite_difference(seed: u64) -> Result<SuiteResult> {
    let mut rng = seeded(seed ^ 0xfd);
    let activations = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Identity,
    ];
    let (mut worst, mut nets, mut entries, mut skipped) = (0.0f64, 0, 0, 0);
    while nets < 40 {
        let depth = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=12)).collect();
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::new(w[0], w[1], activations[rng.random_range(0..4)], rng.random()))
            .collect();
        let mut mlp = Mlp::new(layers)?;
        let rows = rng.random_range(1..=4);
        let input = Matrix::from_vec(
            rows,
            widths[0],
            (0..rows * widths[0]).map(|_| normal(&mut rng)).collect(),
        )?;
        let out = widths[depth];
        let probe = Matrix::from_vec(rows, out, (0..rows * out).map(|_| normal(&mut rng)).collect())?;
        match check_mlp(&mut mlp, &input, &probe, 1e-6, 1e-4)? {
            Some(r) => {
                worst = worst.max(r.max_rel_error);
                entries += r.entries;
                nets += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(SuiteResult {
        name: "finite_difference",
        passed: worst <= FD_TOL,
        detail: format!(
            "{nets} networks, {entries} entries, max relative error {worst:.3e} ({skipped} skipped near relu kinks)"
        ),
    })
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        loss_gradient(seed)?,
        entropy_gain(seed)?,
        finite_difference(seed)?,
    ])
}
