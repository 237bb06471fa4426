use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

use super::SgdConfig;

/// Element-wise activation applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, where
/// `fan_in` is the column count.
pub fn seeded_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    let bound = 1.0 / (cols.max(1) as f64).sqrt();
    let mut rng = rng::seeded(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

#[derive(Debug, Clone)]
struct Cache {
    input: Matrix,
    pre: Matrix,
    output: Matrix,
}

/// Fully connected layer `y = act(x Wᵀ + b)` with its gradient buffers.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    weight: Matrix,
    bias: Vec<f64>,
    weight_grad: Matrix,
    bias_grad: Vec<f64>,
    weight_velocity: Matrix,
    bias_velocity: Vec<f64>,
    activation: Activation,
    cache: Option<Cache>,
}

impl DenseLayer {
    /// Seeded uniform weights, zero bias.
    pub fn new(input: usize, output: usize, activation: Activation, seed: u64) -> Self {
        Self::from_params(seeded_init(output, input, seed), vec![0.0; output], activation)
            .expect("sized by construction")
    }

    pub fn from_params(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("DenseLayer bias", weight.rows(), bias.len()));
        }
        let (out, inp) = weight.shape();
        Ok(DenseLayer {
            weight_grad: Matrix::zeros(out, inp),
            bias_grad: vec![0.0; out],
            weight_velocity: Matrix::zeros(out, inp),
            bias_velocity: vec![0.0; out],
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn zeroed(input: usize, output: usize, activation: Activation) -> Self {
        Self::from_params(Matrix::zeros(output, input), vec![0.0; output], activation).expect("sized by construction")
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_grad(&self) -> &Matrix {
        &self.weight_grad
    }

    pub fn bias_grad(&self) -> &[f64] {
        &self.bias_grad
    }

    /// Mutable access to parameter values; shapes are fixed.
    pub fn weight_values_mut(&mut self) -> &mut [f64] {
        self.weight.as_mut_slice()
    }

    pub fn bias_values_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "dense_forward input width",
                self.input_dim(),
                input.cols(),
            ));
        }
        Ok(())
    }

    fn affine(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut pre = input.matmul_t(&self.weight)?;
        for row in pre.as_mut_slice().chunks_exact_mut(self.bias.len().max(1)) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }

    /// Forward pass without caching; never mutates the layer.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = self.affine(input)?;
        let act = self.activation;
        out.map_inplace(|z| act.apply(z));
        Ok(out)
    }

    /// Forward pass that caches what `backward` needs.
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let pre = self.affine(input)?;
        let mut output = pre.clone();
        let act = self.activation;
        output.map_inplace(|z| act.apply(z));
        self.cache = Some(Cache {
            input: input.clone(),
            pre,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Fills the gradient buffers from `grad_output` (gradient of the scalar
    /// loss w.r.t. this layer's output) and returns the gradient w.r.t. the
    /// layer input. Consumes the forward cache.
    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::Protocol("backward called without a cached forward pass"))?;
        if grad_output.shape() != cache.output.shape() {
            let shape = cache.output.shape();
            self.cache = Some(cache);
            return Err(Error::shape(
                "backward gradient",
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", grad_output.rows(), grad_output.cols()),
            ));
        }
        let mut delta = grad_output.clone();
        let act = self.activation;
        if act != Activation::Identity {
            for ((d, z), y) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(cache.pre.as_slice())
                .zip(cache.output.as_slice())
            {
                *d *= act.derivative(*z, *y);
            }
        }
        self.weight_grad = delta.t_matmul(&cache.input)?;
        self.bias_grad = delta.sum_rows();
        delta.matmul(&self.weight)
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(0.0);
        self.bias_grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// `v ← momentum·v + g; p ← p − lr·v`, then clears the gradients.
    pub fn sgd_step(&mut self, config: &SgdConfig) {
        sgd_update(
            self.weight.as_mut_slice(),
            self.weight_grad.as_mut_slice(),
            self.weight_velocity.as_mut_slice(),
            config,
        );
        sgd_update(&mut self.bias, &mut self.bias_grad, &mut self.bias_velocity, config);
    }

    pub(crate) fn param_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight.as_slice().iter().chain(&self.bias).copied()
    }

    pub(crate) fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

fn sgd_update(params: &mut [f64], grads: &mut [f64], velocity: &mut [f64], cfg: &SgdConfig) {
    let lr = cfg.learning_rate();
    let momentum = cfg.momentum();
    for ((p, g), v) in params.iter_mut().zip(grads.iter_mut()).zip(velocity.iter_mut()) {
        *v = momentum * *v + *g;
        *p -= lr * *v;
        *g = 0.0;
    }
}

/// Stack of dense layers applied in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    if i == 0 { "Mlp layer 1 input" } else { "Mlp layer input" },
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    /// Builds `widths[0] → widths[1] → …` with the same activation on every
    /// layer, seeding layer `i` from `derive_seed(seed, i)`.
    pub fn seeded(widths: &[usize], activation: Activation, seed: u64) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::new(w[0], w[1], activation, rng::derive_seed(seed, i as u64)))
            .collect();
        Mlp { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(DenseLayer::output_dim)
    }

    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        backward(&mut self.layers, grad_output)
    }

    pub fn sgd_step(&mut self, config: &SgdConfig) {
        for layer in &mut self.layers {
            layer.sgd_step(config);
        }
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(DenseLayer::zero_grad);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub(crate) fn param_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(DenseLayer::param_values)
    }
}

/// Back-propagates through `layers` (last to first). Every layer must hold a
/// cached forward pass; otherwise nothing is modified and a protocol error is
/// returned.
pub fn backward(layers: &mut [DenseLayer], grad_output: &Matrix) -> Result<Matrix> {
    if layers.iter().any(|l| !l.has_cache()) {
        return Err(Error::Protocol("backward called without a cached forward pass"));
    }
    let mut grad = grad_output.clone();
    for layer in layers.iter_mut().rev() {
        grad = layer.backward(&grad)?;
    }
    Ok(grad)
}
