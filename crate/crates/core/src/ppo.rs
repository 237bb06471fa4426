//! Actor-critic selection policy trained with clipped PPO and GAE.
//!
//! The policy emits one continuous action in `[0, 1]` per sample: a Gaussian
//! draw around a sigmoid-squashed mean, clamped to the unit interval. The
//! log-density is taken at the pre-clamp draw, which is stored alongside the
//! action so the PPO ratio can be recomputed exactly later.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{fingerprint_values, Matrix};
use crate::nn::{Activation, DenseLayer, Mlp, SgdConfig};
use crate::rng::{self, Rng};
use crate::stats;

pub const LOG_STD_FLOOR: f64 = -5.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub agent_lr: f64,
    pub value_coeff: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            update_epochs: 4,
            minibatch: 256,
            agent_lr: 1e-2,
            value_coeff: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("ppo config: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if self.update_epochs == 0 || self.minibatch == 0 {
            return bad("update_epochs and minibatch must be at least 1");
        }
        if !(self.agent_lr > 0.0) || !(self.value_coeff > 0.0) {
            return bad("agent_lr and value_coeff must be positive");
        }
        Ok(())
    }
}

/// One step of a per-sample trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Clamped action in `[0, 1]`.
    pub action: f64,
    /// Pre-clamp Gaussian draw at which `logprob_old` was evaluated.
    pub raw_action: f64,
    pub logprob_old: f64,
    pub reward: f64,
    pub value_old: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_id: usize,
    pub transitions: Vec<Transition>,
}

/// Per-state outputs of the policy and value heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub action: f64,
    pub raw: f64,
    pub logprob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_ratio: f64,
    pub transitions: usize,
    /// Rows pushed through the agent during the update.
    pub forward_rows: u64,
}

/// Shared tanh trunk with a sigmoid actor head, a linear critic head and a
/// single learnable log standard deviation.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    trunk: Mlp,
    actor_head: DenseLayer,
    critic_head: DenseLayer,
    log_std: f64,
}

impl ActorCritic {
    pub fn new(state_dim: usize, hidden: usize, log_std_init: f64, seed: u64) -> Self {
        let trunk = Mlp::seeded(&[state_dim, hidden, hidden], Activation::Tanh, seed);
        let mut actor_head = DenseLayer::new(hidden, 1, Activation::Sigmoid, rng::derive_seed(seed, 100));
        // start close to a state-independent policy (mean ≈ 0.5)
        actor_head.weight_values_mut().iter_mut().for_each(|w| *w *= 0.01);
        let critic_head = DenseLayer::new(hidden, 1, Activation::Identity, rng::derive_seed(seed, 101));
        ActorCritic {
            trunk,
            actor_head,
            critic_head,
            log_std: log_std_init,
        }
    }

    pub fn from_parts(trunk: Mlp, actor_head: DenseLayer, critic_head: DenseLayer, log_std: f64) -> Result<Self> {
        let h = trunk
            .output_dim()
            .ok_or_else(|| Error::InvalidArgument("agent trunk is empty".into()))?;
        for (name, head) in [("actor head", &actor_head), ("critic head", &critic_head)] {
            if head.input_dim() != h || head.output_dim() != 1 {
                return Err(Error::shape(
                    name,
                    format!("{h}x1"),
                    format!("{}x{}", head.input_dim(), head.output_dim()),
                ));
            }
        }
        Ok(ActorCritic {
            trunk,
            actor_head,
            critic_head,
            log_std,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim().expect("validated non-empty")
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    /// `exp(max(log_std, floor))`.
    pub fn std(&self) -> f64 {
        self.log_std.max(LOG_STD_FLOOR).exp()
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn actor_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.actor_head
    }

    pub fn critic_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.critic_head
    }

    pub fn set_log_std(&mut self, v: f64) {
        self.log_std = v;
    }

    fn check_states(&self, states: &Matrix) -> Result<()> {
        if states.cols() != self.state_dim() {
            return Err(Error::shape("agent state width", self.state_dim(), states.cols()));
        }
        Ok(())
    }

    /// Read-only evaluation of both heads.
    pub fn policy_forward(&self, states: &Matrix) -> Result<PolicyOutput> {
        self.check_states(states)?;
        let h = self.trunk.infer(states)?;
        Ok(PolicyOutput {
            mean: self.actor_head.infer(&h)?.into_vec(),
            std: self.std(),
            values: self.critic_head.infer(&h)?.into_vec(),
        })
    }

    pub fn parameter_values(&self) -> Vec<f64> {
        self.trunk
            .param_values()
            .chain(self.actor_head.param_values())
            .chain(self.critic_head.param_values())
            .chain(std::iter::once(self.log_std))
            .collect()
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint_values(0xac, &self.parameter_values())
    }

    /// One SGD step on `−surrogate + value_coeff·critic` over the minibatch.
    fn minibatch_step(&mut self, batch: &[&Prepared], config: &PpoConfig, sgd: &SgdConfig) -> Result<(f64, f64, f64)> {
        let m = batch.len();
        let dim = self.state_dim();
        let mut states = Vec::with_capacity(m * dim);
        for p in batch {
            states.extend_from_slice(&p.transition.state);
        }
        let states = Matrix::from_vec(m, dim, states)?;
        let h = self.trunk.forward(&states)?;
        let mean = self.actor_head.forward(&h)?;
        let values = self.critic_head.forward(&h)?;

        let std = self.std();
        let var = std * std;
        let inv_m = 1.0 / m as f64;
        let mut grad_mean = Matrix::zeros(m, 1);
        let mut grad_value = Matrix::zeros(m, 1);
        let mut grad_log_std = 0.0;
        let (mut actor_sum, mut critic_sum, mut ratio_sum) = (0.0, 0.0, 0.0);

        for (i, p) in batch.iter().enumerate() {
            let mu = mean.get(i, 0);
            let t = &p.transition;
            let lp_new = gaussian_logprob(t.raw_action, mu, std);
            let ratio = (lp_new - t.logprob_old).exp();
            let adv = p.advantage;
            actor_sum += clipped_surrogate(lp_new, t.logprob_old, adv, config.clip_eps);
            ratio_sum += ratio;
            // d surrogate / d logprob_new
            let g = surrogate_logprob_grad(ratio, adv, config.clip_eps);
            let diff = t.raw_action - mu;
            grad_mean.set(i, 0, -inv_m * g * diff / var);
            grad_log_std += -inv_m * g * (diff * diff / var - 1.0);

            let v = values.get(i, 0);
            let residual = v - p.target;
            critic_sum += residual * residual;
            grad_value.set(i, 0, config.value_coeff * 2.0 * residual * inv_m);
        }

        let gh_actor = self.actor_head.backward(&grad_mean)?;
        let gh_critic = self.critic_head.backward(&grad_value)?;
        let mut gh = gh_actor;
        for (a, b) in gh.as_mut_slice().iter_mut().zip(gh_critic.as_slice()) {
            *a += b;
        }
        self.trunk.backward(&gh)?;
        self.trunk.sgd_step(sgd);
        self.actor_head.sgd_step(sgd);
        self.critic_head.sgd_step(sgd);
        if self.log_std > LOG_STD_FLOOR {
            self.log_std -= sgd.learning_rate() * grad_log_std;
        }
        Ok((-actor_sum * inv_m, critic_sum * inv_m, ratio_sum * inv_m))
    }
}

/// Gaussian log-density of `x` under `N(mean, std²)`.
#[inline]
pub fn gaussian_logprob(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

/// Draws `u ~ N(mean, std²)` and clamps it to `[0, 1]`; the log-probability
/// is that of `u`. In deterministic mode `u = mean`.
pub fn sample_action(mean: f64, std: f64, rng: Option<&mut Rng>) -> ActionSample {
    let raw = match rng {
        Some(rng) => {
            let z: f64 = StandardNormal.sample(rng);
            mean + std * z
        }
        None => mean,
    };
    ActionSample {
        action: raw.clamp(0.0, 1.0),
        raw,
        logprob: gaussian_logprob(raw, mean, std),
    }
}

/// `δ = r + γ·V(s′) − V(s)`.
#[inline]
pub fn td_residual(reward: f64, value: f64, next_value: f64, gamma: f64) -> f64 {
    reward + gamma * next_value - value
}

/// Generalized advantage estimates by the backward recursion
/// `Â_t = δ_t + γλ·Â_{t+1}`. `values` carries one extra bootstrap entry.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::LengthMismatch {
            context: "gae values (expected rewards + 1)",
            left: values.len(),
            right: rewards.len() + 1,
        });
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = td_residual(rewards[t], values[t], values[t + 1], gamma);
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)` with `ρ = exp(lp_new − lp_old)`.
pub fn clipped_surrogate(logprob_new: f64, logprob_old: f64, advantage: f64, clip_eps: f64) -> f64 {
    let ratio = (logprob_new - logprob_old).exp();
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Actor loss over a minibatch: the negated mean clipped surrogate.
pub fn actor_loss(logprob_new: &[f64], logprob_old: &[f64], advantages: &[f64], clip_eps: f64) -> f64 {
    let n = logprob_new.len().max(1) as f64;
    -logprob_new
        .iter()
        .zip(logprob_old)
        .zip(advantages)
        .map(|((n, o), a)| clipped_surrogate(*n, *o, *a, clip_eps))
        .sum::<f64>()
        / n
}

fn surrogate_logprob_grad(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        // the clipped branch is active and flat in the ratio
        0.0
    }
}

/// Squared error against the GAE return target `Â + V_old`.
#[inline]
pub fn critic_loss(value_new: f64, advantage: f64, value_old: f64) -> f64 {
    let r = value_new - (advantage + value_old);
    r * r
}

/// Z-scores advantages over the batch. Batches of one, or with a standard
/// deviation below `1e-12`, are returned unchanged.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let s = stats::std_dev(adv);
    if adv.len() < 2 || s < 1e-12 {
        return adv.to_vec();
    }
    let m = stats::mean(adv);
    adv.iter().map(|a| (a - m) / s).collect()
}

struct Prepared<'a> {
    transition: &'a Transition,
    advantage: f64,
    target: f64,
}

/// Runs `update_epochs` passes of shuffled minibatch SGD over every
/// transition in `trajectories`.
pub fn ppo_update(
    agent: &mut ActorCritic,
    trajectories: &[Trajectory],
    config: &PpoConfig,
    seed: u64,
) -> Result<UpdateStats> {
    config.validate()?;
    if trajectories.iter().all(|t| t.transitions.is_empty()) {
        return Err(Error::InvalidArgument(
            "ppo_update needs at least one transition".into(),
        ));
    }
    let mut prepared = Vec::new();
    let mut raw_adv = Vec::new();
    for traj in trajectories {
        let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
        let mut values: Vec<f64> = traj.transitions.iter().map(|t| t.value_old).collect();
        values.push(0.0);
        let adv = gae(&rewards, &values, config.gamma, config.lambda)?;
        for (t, a) in traj.transitions.iter().zip(&adv) {
            if t.state.len() != agent.state_dim() {
                return Err(Error::shape("transition state width", agent.state_dim(), t.state.len()));
            }
            raw_adv.push(*a);
            prepared.push(Prepared {
                transition: t,
                advantage: *a,
                target: a + t.value_old,
            });
        }
    }
    for (p, a) in prepared.iter_mut().zip(normalize_advantages(&raw_adv)) {
        p.advantage = a;
    }

    let sgd = SgdConfig::new(config.agent_lr, 0.0)?;
    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut stats = UpdateStats {
        transitions: prepared.len(),
        ..UpdateStats::default()
    };
    let mut batches = 0usize;
    for _ in 0..config.update_epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(config.minibatch) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (a, c, r) = agent.minibatch_step(&batch, config, &sgd)?;
            stats.actor_loss += a;
            stats.critic_loss += c;
            stats.mean_ratio += r;
            stats.forward_rows += chunk.len() as u64;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    stats.actor_loss /= b;
    stats.critic_loss /= b;
    stats.mean_ratio /= b;
    Ok(stats)
}
