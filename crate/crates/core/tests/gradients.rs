use data_agent_core::matrix::Matrix;
use data_agent_core::nn::gradcheck::{check_mlp, relu_margin};
use data_agent_core::nn::{seeded_init, softmax_cross_entropy_grad, Activation, Mlp};
use data_agent_core::rng::{derive_seed, seeded};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn activation(code: u8) -> Activation {
    match code % 4 {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::Sigmoid,
        _ => Activation::Identity,
    }
}

fn network(widths: &[usize], acts: &[u8], seed: u64) -> Mlp {
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = activation(acts[i % acts.len()]);
            data_agent_core::DenseLayer::new(w[0], w[1], act, derive_seed(seed, i as u64))
        })
        .collect();
    Mlp::new(layers).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn backward_matches_central_differences(
        depth in 1usize..=3,
        widths in prop::collection::vec(1usize..=32, 4),
        acts in prop::collection::vec(0u8..4, 3),
        batch in 1usize..4,
        seed in any::<u64>(),
    ) {
        let widths = &widths[..=depth];
        let mut mlp = network(widths, &acts, seed);
        let input = normal_matrix(batch, widths[0], seed ^ 1);
        let probe = normal_matrix(batch, widths[depth], seed ^ 2);
        prop_assume!(relu_margin(&mlp, &input).unwrap() > 1e-4);
        let report = check_mlp(&mut mlp, &input, &probe, 1e-6, 1e-4).unwrap().unwrap();
        prop_assert!(report.max_rel_error <= 1e-4, "rel error {}", report.max_rel_error);
    }

    #[test]
    fn cross_entropy_gradient_matches_differences(
        rows in 1usize..5,
        classes in 2usize..6,
        seed in any::<u64>(),
    ) {
        let logits = normal_matrix(rows, classes, seed);
        let mut rng = seeded(seed ^ 9);
        let labels: Vec<usize> = (0..rows).map(|_| rand::Rng::random_range(&mut rng, 0..classes)).collect();
        let grad = softmax_cross_entropy_grad(&data_agent_core::nn::softmax_rows(&logits), &labels).unwrap();
        let mean_loss = |m: &Matrix| {
            let probs = data_agent_core::nn::softmax_rows(m);
            let l = data_agent_core::nn::cross_entropy_per_row(&probs, &labels).unwrap();
            l.iter().sum::<f64>() / rows as f64
        };
        let h = 1e-6;
        for k in 0..rows * classes {
            let mut up = logits.clone();
            up.as_mut_slice()[k] += h;
            let mut down = logits.clone();
            down.as_mut_slice()[k] -= h;
            let fd = (mean_loss(&up) - mean_loss(&down)) / (2.0 * h);
            let a = grad.as_slice()[k];
            prop_assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4) <= 1e-4);
        }
    }
}

#[test]
fn kink_guard_rejects_inputs_on_the_hinge() {
    // a single relu unit whose pre-activation is exactly zero
    let layer = data_agent_core::DenseLayer::from_params(
        Matrix::from_rows(&[[1.0, -1.0]]).unwrap(),
        vec![0.0],
        Activation::Relu,
    )
    .unwrap();
    let mut mlp = Mlp::new(vec![layer]).unwrap();
    let input = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
    let probe = Matrix::from_rows(&[[1.0]]).unwrap();
    assert!(check_mlp(&mut mlp, &input, &probe, 1e-6, 1e-4).unwrap().is_none());
}

#[test]
fn trainee_sized_network_passes() {
    let mut mlp = Mlp::seeded(&[2, 32, 32, 8], Activation::Tanh, 11);
    let input = seeded_init(6, 2, 3);
    let probe = seeded_init(6, 8, 4);
    let report = check_mlp(&mut mlp, &input, &probe, 1e-6, 1e-4).unwrap().unwrap();
    assert!(report.max_rel_error <= 1e-4);
    assert_eq!(report.entries, 2 * 32 + 32 + 32 * 32 + 32 + 32 * 8 + 8 + 12);
}
