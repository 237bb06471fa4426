//! Training-aware per-sample rewards.
//!
//! Two base channels come straight out of a scoring pass: the per-sample
//! loss (difficulty) and the predictive entropy (uncertainty). They are
//! blended by a variance-proportional weight computed on the raw values.
//! Extra channels either join that weighting or act as multiplicative gates.

use crate::error::{Error, Result};
use crate::model::ForwardRecord;
use crate::stats;

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// How an extra channel enters the composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// Joins the variance-proportional weighting with the base channels.
    Weighted,
    /// Multiplies the weighted sum sample-wise (values expected in `[0, 1]`).
    Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraChannel {
    pub name: String,
    pub values: Vec<f64>,
    pub mode: ChannelMode,
}

impl ExtraChannel {
    pub fn weighted(name: impl Into<String>, values: Vec<f64>) -> Self {
        ExtraChannel {
            name: name.into(),
            values,
            mode: ChannelMode::Weighted,
        }
    }

    pub fn gate(name: impl Into<String>, values: Vec<f64>) -> Self {
        ExtraChannel {
            name: name.into(),
            values,
            mode: ChannelMode::Gate,
        }
    }
}

/// All reward channels of one scoring round plus their combination.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBundle {
    pub diff: Vec<f64>,
    pub conf: Vec<f64>,
    pub extras: Vec<ExtraChannel>,
    /// Adaptive weight of the difficulty channel against the uncertainty one.
    pub weight_r: f64,
    /// Weights of the weighted channels: diff, conf, then weighted extras in
    /// order.
    pub channel_weights: Vec<f64>,
    pub composite: Vec<f64>,
    pub epsilon: f64,
}

impl RewardBundle {
    pub fn len(&self) -> usize {
        self.composite.len()
    }

    pub fn is_empty(&self) -> bool {
        self.composite.is_empty()
    }

    /// Builds every channel from a scoring pass.
    pub fn from_record(record: &ForwardRecord, extras: Vec<ExtraChannel>, epsilon: f64) -> Result<Self> {
        composite_reward(difficulty_reward(record), uncertainty_reward(record), extras, epsilon)
    }
}

/// The per-sample loss, verbatim.
pub fn difficulty_reward(record: &ForwardRecord) -> Vec<f64> {
    record.losses.clone()
}

/// Predictive entropy per row, with `0·log 0 = 0`.
pub fn uncertainty_reward(record: &ForwardRecord) -> Vec<f64> {
    record.probs.iter_rows().map(entropy).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `Var(diff) / (Var(diff) + Var(conf) + ε)` on population variances, or
/// `0.5` when both variances fall below `ε`.
pub fn adaptive_weight(diff: &[f64], conf: &[f64], epsilon: f64) -> Result<f64> {
    if diff.len() != conf.len() {
        return Err(Error::LengthMismatch {
            context: "adaptive_weight",
            left: diff.len(),
            right: conf.len(),
        });
    }
    if diff.is_empty() {
        return Err(Error::InvalidArgument("adaptive_weight on empty rewards".into()));
    }
    let (vd, vc) = (stats::variance(diff), stats::variance(conf));
    if vd < epsilon && vc < epsilon {
        return Ok(0.5);
    }
    Ok(vd / (vd + vc + epsilon))
}

/// Variance-proportional weights `w_k = Var_k / (Σ_j Var_j + ε)`; equal
/// weights when every variance is below `ε`.
pub fn variance_weights(channels: &[&[f64]], epsilon: f64) -> Vec<f64> {
    let vars: Vec<f64> = channels.iter().map(|c| stats::variance(c)).collect();
    if vars.iter().all(|v| *v < epsilon) {
        return vec![1.0 / channels.len() as f64; channels.len()];
    }
    let total: f64 = vars.iter().sum::<f64>() + epsilon;
    vars.iter().map(|v| v / total).collect()
}

/// Combines the channels. With no extras this is `r·diff + (1−r)·conf`.
pub fn composite_reward(
    diff: Vec<f64>,
    conf: Vec<f64>,
    extras: Vec<ExtraChannel>,
    epsilon: f64,
) -> Result<RewardBundle> {
    let n = diff.len();
    if conf.len() != n {
        return Err(Error::LengthMismatch {
            context: "composite_reward conf",
            left: n,
            right: conf.len(),
        });
    }
    if let Some(bad) = extras.iter().find(|e| e.values.len() != n) {
        return Err(Error::LengthMismatch {
            context: "composite_reward extra channel",
            left: n,
            right: bad.values.len(),
        });
    }
    let weight_r = adaptive_weight(&diff, &conf, epsilon)?;

    let weighted_extras: Vec<&ExtraChannel> = extras.iter().filter(|e| e.mode == ChannelMode::Weighted).collect();
    let (channel_weights, mut composite) = if weighted_extras.is_empty() {
        let composite: Vec<f64> = diff
            .iter()
            .zip(&conf)
            .map(|(d, c)| weight_r * d + (1.0 - weight_r) * c)
            .collect();
        (vec![weight_r, 1.0 - weight_r], composite)
    } else {
        let mut channels: Vec<&[f64]> = vec![&diff, &conf];
        channels.extend(weighted_extras.iter().map(|e| e.values.as_slice()));
        let weights = variance_weights(&channels, epsilon);
        let composite: Vec<f64> = (0..n)
            .map(|i| channels.iter().zip(&weights).map(|(c, w)| w * c[i]).sum())
            .collect();
        (weights, composite)
    };

    for gate in extras.iter().filter(|e| e.mode == ChannelMode::Gate) {
        for (v, g) in composite.iter_mut().zip(&gate.values) {
            *v *= g;
        }
    }

    Ok(RewardBundle {
        diff,
        conf,
        extras,
        weight_r,
        channel_weights,
        composite,
        epsilon,
    })
}

/// Z-scores the composite (population std); all zeros when the std is
/// below `1e-12`.
pub fn normalize_composite(composite: &[f64]) -> Vec<f64> {
    let m = stats::mean(composite);
    let s = stats::std_dev(composite);
    if s < 1e-12 {
        return vec![0.0; composite.len()];
    }
    composite.iter().map(|v| (v - m) / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn record(probs: Vec<Vec<f64>>, labels: &[usize]) -> ForwardRecord {
        let probs = Matrix::from_rows(&probs).unwrap();
        let losses = crate::nn::cross_entropy_per_row(&probs, labels).unwrap();
        ForwardRecord {
            features: Matrix::zeros(labels.len(), 1),
            probs,
            losses,
            sample_ids: (0..labels.len()).collect(),
        }
    }

    #[test]
    fn difficulty_is_identity_on_losses() {
        let mut rec = record(vec![vec![0.5, 0.5]; 3], &[0, 0, 0]);
        rec.losses = vec![0.0, LN_2, 10f64.ln()];
        assert_eq!(difficulty_reward(&rec), rec.losses);
        let perfect = record(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 1]);
        assert_eq!(difficulty_reward(&perfect), vec![0.0, 0.0]);
        let uniform = record(vec![vec![0.25; 4]; 2], &[1, 3]);
        for d in difficulty_reward(&uniform) {
            assert!((d - 1.386294).abs() < 1e-6);
        }
    }

    #[test]
    fn entropy_examples() {
        let rec = record(vec![vec![0.0, 1.0, 0.0], vec![0.7, 0.2, 0.1]], &[1, 0]);
        let conf = uncertainty_reward(&rec);
        assert_eq!(conf[0], 0.0);
        assert!((conf[1] - 0.801819).abs() < 1e-6);
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adaptive_weight_examples() {
        // population variance of (-1, 1) is 1, of (-√3, √3) is 3
        let unit = [-1.0, 1.0];
        let three = [-(3f64.sqrt()), 3f64.sqrt()];
        let r = adaptive_weight(&unit, &unit, 1e-8).unwrap();
        assert!((r - 0.5).abs() < 1e-8);
        let r = adaptive_weight(&three, &unit, 1e-8).unwrap();
        assert!((r - 0.75).abs() < 1e-8);
        let r = adaptive_weight(&[2.0, 2.0], &[0.3, 0.3], 1e-8).unwrap();
        assert_eq!(r, 0.5);
        assert!(adaptive_weight(&[1.0], &[1.0, 2.0], 1e-8).is_err());
    }

    #[test]
    fn composite_examples() {
        // diff variance 3, conf variance 1 → r ≈ 0.75; sample 0 has
        // diff 2.0 and conf 0.4
        let (a, b) = (6f64.sqrt(), 2f64.sqrt());
        let diff = vec![2.0, 2.0, 2.0 + a, 2.0 - a];
        let conf = vec![0.4, 0.4, 0.4 + b, 0.4 - b];
        let bundle = composite_reward(diff, conf, vec![], 1e-8).unwrap();
        assert!((bundle.weight_r - 0.75).abs() < 1e-8);
        assert!((bundle.composite[0] - 1.6).abs() < 1e-8);

        // constant conf → r ≈ 1 and composite ≈ diff
        let b = composite_reward(vec![0.0, 5.0, 10.0], vec![0.3; 3], vec![], 1e-8).unwrap();
        assert!((b.weight_r - 1.0).abs() < 1e-9);
        for (c, d) in b.composite.iter().zip(&b.diff) {
            assert!((c - d).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_variance_extra_changes_nothing() {
        let diff = vec![0.1, 2.0, 0.7, 1.3];
        let conf = vec![0.5, 0.9, 0.2, 0.4];
        let base = composite_reward(diff.clone(), conf.clone(), vec![], 1e-8).unwrap();
        let extra = ExtraChannel::weighted("flat", vec![0.8; 4]);
        let with = composite_reward(diff, conf, vec![extra], 1e-8).unwrap();
        assert!(with.channel_weights[2].abs() < 1e-6);
        for (a, b) in base.composite.iter().zip(&with.composite) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gate_scales_samplewise() {
        let diff = vec![1.0, 2.0, 3.0];
        let conf = vec![0.5, 0.5, 1.0];
        let base = composite_reward(diff.clone(), conf.clone(), vec![], 1e-8).unwrap();
        let gate = ExtraChannel::gate("consistency", vec![1.0, 0.0, 0.5]);
        let gated = composite_reward(diff, conf, vec![gate], 1e-8).unwrap();
        assert_eq!(gated.weight_r, base.weight_r);
        assert_eq!(gated.composite[0], base.composite[0]);
        assert_eq!(gated.composite[1], 0.0);
        assert_eq!(gated.composite[2], base.composite[2] * 0.5);
    }

    #[test]
    fn composite_rejects_misaligned_channels() {
        assert!(composite_reward(vec![1.0, 2.0], vec![1.0], vec![], 1e-8).is_err());
        let e = ExtraChannel::weighted("x", vec![1.0]);
        assert!(composite_reward(vec![1.0, 2.0], vec![1.0, 0.0], vec![e], 1e-8).is_err());
    }

    #[test]
    fn normalize_examples() {
        let z = normalize_composite(&[1.0, 2.0, 3.0]);
        let expect = [-1.224745, 0.0, 1.224745];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(normalize_composite(&[4.0, 4.0, 4.0]), vec![0.0; 3]);
    }

    fn prob_row(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, c).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn weight_grows_with_difficulty_variance(
            base in prop::collection::vec(-2.0f64..2.0, 3..40),
            conf in prop::collection::vec(-2.0f64..2.0, 3..40),
            scale in 1.01f64..5.0,
        ) {
            let n = base.len().min(conf.len());
            let (base, conf) = (&base[..n], &conf[..n]);
            prop_assume!(stats::variance(base) > 1e-6);
            let wider: Vec<f64> = base.iter().map(|v| v * scale).collect();
            let r1 = adaptive_weight(base, conf, DEFAULT_EPSILON).unwrap();
            let r2 = adaptive_weight(&wider, conf, DEFAULT_EPSILON).unwrap();
            prop_assert!(r2 > r1);
            prop_assert!((0.0..=1.0).contains(&r1));
        }

        #[test]
        fn composite_is_exact_linear_blend(
            diff in prop::collection::vec(0.0f64..8.0, 2..50),
            conf in prop::collection::vec(0.0f64..2.0, 2..50),
        ) {
            let n = diff.len().min(conf.len());
            let b = composite_reward(diff[..n].to_vec(), conf[..n].to_vec(), vec![], DEFAULT_EPSILON).unwrap();
            for i in 0..n {
                let expect = b.weight_r * b.diff[i] + (1.0 - b.weight_r) * b.conf[i];
                prop_assert!((b.composite[i] - expect).abs() <= 1e-12);
            }
        }

        #[test]
        fn entropy_bounded_by_uniform(p in (2usize..10).prop_flat_map(prob_row)) {
            let c = p.len() as f64;
            let h = entropy(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= c.ln() + 1e-12);
            // strictly positive because no entry is exactly one-hot
            prop_assert!(h > 0.0);
        }

        #[test]
        fn weighting_uses_raw_not_normalized(
            diff in prop::collection::vec(0.0f64..5.0, 4..40),
            conf in prop::collection::vec(0.0f64..0.5, 4..40),
        ) {
            let n = diff.len().min(conf.len());
            let (diff, conf) = (&diff[..n], &conf[..n]);
            prop_assume!(stats::variance(diff) > 1e-3 && stats::variance(conf) > 1e-3);
            prop_assume!((stats::variance(diff) - stats::variance(conf)).abs() > 1e-3);
            let zd = normalize_composite(diff);
            let zc = normalize_composite(conf);
            let on_normalized = adaptive_weight(&zd, &zc, DEFAULT_EPSILON).unwrap();
            prop_assert!((on_normalized - 0.5).abs() < 1e-6);
            let b = composite_reward(diff.to_vec(), conf.to_vec(), vec![], DEFAULT_EPSILON).unwrap();
            prop_assert!((b.weight_r - 0.5).abs() > 1e-6);
        }

        #[test]
        fn normalized_has_zero_mean(v in prop::collection::vec(-100.0f64..100.0, 2..60)) {
            prop_assume!(stats::std_dev(&v) > 1e-9);
            let z = normalize_composite(&v);
            prop_assert!(stats::mean(&z).abs() < 1e-9);
            prop_assert!((stats::std_dev(&z) - 1.0).abs() < 1e-9);
        }
    }
}
