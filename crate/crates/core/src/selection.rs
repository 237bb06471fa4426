//! The closed selection loop: score the pool, reward, act, select, train,
//! and periodically update the agent.
//!
//! Every `score_period` epochs after warmup a scoring pass refreshes the
//! trainee's view of the whole pool. The agent observes one state per
//! sample, emits an action, and the epoch trains on the top
//! `ceil(ratio·N)` samples by action. Each sample accumulates one
//! transition per scoring round; once a window of `horizon_w` rounds is
//! complete it becomes a trajectory for the next PPO update.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ForwardRecord, TargetModel};
use crate::nn::SgdConfig;
use crate::ppo::{self, ActionSample, ActorCritic, PpoConfig, Trajectory, Transition, UpdateStats};
use crate::reward::{self, ChannelMode, ExtraChannel, RewardBundle};
use crate::rng::{self, stream, Rng};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Full,
    RandomEpoch,
    StaticLoss,
    Agent,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Full,
        Strategy::RandomEpoch,
        Strategy::StaticLoss,
        Strategy::Agent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::RandomEpoch => "random_epoch",
            Strategy::StaticLoss => "static_loss",
            Strategy::Agent => "agent",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }
}

/// How actions are turned into the epoch's subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Largest `k` actions, ties to the lower index.
    TopK,
    /// Weighted sampling without replacement, probability ∝ action.
    Proportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub ratio: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub score_period: usize,
    pub agent_update_period: usize,
    pub horizon_w: usize,
    pub seed: u64,
    pub selection: SelectionMode,
    /// Record real elapsed time; off keeps metrics byte-reproducible.
    pub record_wallclock: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            ratio: 0.5,
            epochs: 30,
            warmup_epochs: 1,
            score_period: 1,
            agent_update_period: 4,
            horizon_w: 4,
            seed: 0,
            selection: SelectionMode::TopK,
            record_wallclock: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio must lie in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::InvalidArgument(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.score_period == 0 || self.horizon_w == 0 || self.agent_update_period == 0 {
            return Err(Error::InvalidArgument(
                "score_period, horizon_w and agent_update_period must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Scoring rounds the schedule performs: `ceil((epochs − warmup) / K)`.
    pub fn scoring_rounds(&self) -> usize {
        (self.epochs - self.warmup_epochs).div_ceil(self.score_period)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraineeConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Anneal the learning rate per epoch as `lr·(1 + cos(π·e/E))/2`.
    pub cosine_decay: bool,
}

impl Default for TraineeConfig {
    fn default() -> Self {
        TraineeConfig {
            hidden: vec![64, 64],
            lr: 0.0425,
            momentum: 0.0,
            batch_size: 64,
            cosine_decay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// When false the policy acts but never learns.
    pub enabled: bool,
    pub hidden: usize,
    pub log_std_init: f64,
    /// Append the per-sample reward channels to the feature state.
    pub state_signals: bool,
    pub ppo: PpoConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            enabled: true,
            hidden: 64,
            log_std_init: -2.0,
            state_signals: true,
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub epsilon: f64,
    pub use_consistency: bool,
    pub consistency_mode: ChannelMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            epsilon: reward::DEFAULT_EPSILON,
            use_consistency: false,
            consistency_mode: ChannelMode::Weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    pub loop_cfg: LoopConfig,
    pub trainee: TraineeConfig,
    pub agent: AgentConfig,
    pub reward: RewardConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            strategy: Strategy::Agent,
            loop_cfg: LoopConfig::default(),
            trainee: TraineeConfig::default(),
            agent: AgentConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

/// Per-epoch metrics. Forward counters are cumulative over the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub selected_count: usize,
    pub weight_r: f64,
    pub mean_reward: f64,
    pub train_loss: f64,
    pub test_acc: f64,
    pub train_forwards: u64,
    pub score_forwards: u64,
    pub agent_forwards: u64,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDecision {
    pub epoch: usize,
    /// Sorted ascending pool indices.
    pub selected_ids: Vec<usize>,
    /// The actions the selection was made from (empty for baselines that
    /// do not emit actions).
    pub actions: Vec<f64>,
    pub weight_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopEvent {
    Scored {
        epoch: usize,
        weight_r: f64,
        mean_reward: f64,
    },
    AgentUpdated {
        epoch: usize,
        trajectories: usize,
        stats: UpdateStats,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub decisions: Vec<SelectionDecision>,
    /// Sorted pool indices actually fed to the trainee, per epoch.
    pub trained_ids: Vec<Vec<usize>>,
    pub events: Vec<LoopEvent>,
}

/// `ceil(ratio·n)`, at least one. A tiny slack absorbs products such as
/// `0.3·8000 = 2400.0000000000005`.
pub fn selection_size(ratio: f64, n: usize) -> usize {
    (((ratio * n as f64) - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Indices of the `ceil(ratio·N)` largest actions (ties → lower index),
/// sorted ascending.
pub fn select_top(actions: &[f64], ratio: f64) -> Result<Vec<usize>> {
    check_selection(actions.len(), ratio)?;
    let k = selection_size(ratio, actions.len());
    let mut order: Vec<usize> = (0..actions.len()).collect();
    order.sort_by(|&a, &b| actions[b].total_cmp(&actions[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Weighted sampling without replacement (exponential keys), sorted.
pub fn select_proportional(actions: &[f64], ratio: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    check_selection(actions.len(), ratio)?;
    let k = selection_size(ratio, actions.len());
    let keys: Vec<f64> = actions
        .iter()
        .map(|&w| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            if w > 0.0 {
                u.ln() / w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    select_top(&keys, k as f64 / actions.len() as f64)
}

fn check_selection(n: usize, ratio: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("selection over an empty pool".into()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    Ok(())
}

/// Subset chosen by an agent-free baseline. `losses` is required by
/// `StaticLoss`; `rng` by `RandomEpoch`.
pub fn baseline_select(
    strategy: Strategy,
    n: usize,
    ratio: f64,
    losses: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    check_selection(n, ratio)?;
    match strategy {
        Strategy::Full => Ok((0..n).collect()),
        Strategy::RandomEpoch => {
            let mut ids = rand::seq::index::sample(rng, n, selection_size(ratio, n)).into_vec();
            ids.sort_unstable();
            Ok(ids)
        }
        Strategy::StaticLoss => {
            let losses = losses.ok_or_else(|| Error::InvalidArgument("static_loss needs per-sample losses".into()))?;
            if losses.len() != n {
                return Err(Error::LengthMismatch {
                    context: "static_loss losses",
                    left: losses.len(),
                    right: n,
                });
            }
            select_top(losses, ratio)
        }
        Strategy::Agent => Err(Error::InvalidArgument("agent selection is not a baseline".into())),
    }
}

/// Everything one scoring round produces, aligned by pool index.
#[derive(Debug, Clone)]
pub struct ScoreOutput {
    pub record: ForwardRecord,
    pub bundle: RewardBundle,
    /// Standardized agent states.
    pub states: Matrix,
    pub samples: Vec<ActionSample>,
    pub values: Vec<f64>,
}

impl ScoreOutput {
    pub fn actions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.action).collect()
    }
}

/// Agent state per sample: trunk features, optionally followed by the
/// reward channels, each column z-scored over the pool.
pub fn build_states(record: &ForwardRecord, bundle: &RewardBundle, signals: bool) -> Result<Matrix> {
    let mut states = record.features.clone();
    if signals {
        let mut cols: Vec<&[f64]> = vec![&bundle.diff, &bundle.conf];
        cols.extend(bundle.extras.iter().map(|e| e.values.as_slice()));
        let n = record.len();
        let mut extra = Matrix::zeros(n, cols.len());
        for (k, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                extra.set(i, k, *v);
            }
        }
        states = states.hstack(&extra)?;
    }
    standardize_columns(&mut states);
    Ok(states)
}

fn standardize_columns(m: &mut Matrix) {
    let (n, d) = m.shape();
    if n == 0 {
        return;
    }
    let mut mean = vec![0.0; d];
    for row in m.iter_rows() {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut var = vec![0.0; d];
    for row in m.iter_rows() {
        for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    for r in 0..n {
        for ((v, mu), s) in m.row_mut(r).iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - mu) * s;
        }
    }
}

/// Width of the agent state for a trainee of feature width `feature_dim`.
pub fn state_dim(feature_dim: usize, signals: bool, extra_channels: usize) -> usize {
    if signals {
        feature_dim + 2 + extra_channels
    } else {
        feature_dim
    }
}

/// One trainee pass over the pool, rewards for every sample, and one agent
/// pass over the resulting states. Neither network is modified.
pub fn score_pool(
    model: &TargetModel,
    agent: &ActorCritic,
    pool: &Split,
    extras: Vec<ExtraChannel>,
    reward_cfg: &RewardConfig,
    state_signals: bool,
    rng: &mut Rng,
) -> Result<ScoreOutput> {
    let record = model.forward_pool(&pool.features, &pool.labels)?;
    let bundle = RewardBundle::from_record(&record, extras, reward_cfg.epsilon)?;
    let states = build_states(&record, &bundle, state_signals)?;
    let policy = agent.policy_forward(&states)?;
    let samples = policy
        .mean
        .iter()
        .map(|&m| ppo::sample_action(m, policy.std, Some(rng)))
        .collect();
    Ok(ScoreOutput {
        record,
        bundle,
        states,
        samples,
        values: policy.values,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counters {
    train: u64,
    score: u64,
    agent: u64,
}

#[derive(Debug, Clone)]
struct Latest {
    actions: Vec<f64>,
    losses: Vec<f64>,
    weight_r: f64,
    mean_reward: f64,
}

/// Mutable state of one training run.
pub struct SelectionLoop<'a> {
    cfg: TrainingConfig,
    pool: Split,
    test: Split,
    dataset: &'a Dataset,
    model: TargetModel,
    agent: Option<ActorCritic>,
    sgd: SgdConfig,
    buffers: Vec<Vec<Transition>>,
    rounds_since_update: usize,
    updates: u64,
    counters: Counters,
    batch_rng: Rng,
    action_rng: Rng,
    baseline_rng: Rng,
    latest: Option<Latest>,
    last_scoring: Option<ScoreOutput>,
    last_trained: Vec<usize>,
    epoch: usize,
    started: Instant,
}

impl<'a> SelectionLoop<'a> {
    pub fn new(dataset: &'a Dataset, cfg: TrainingConfig) -> Result<Self> {
        cfg.loop_cfg.validate()?;
        cfg.agent.ppo.validate()?;
        dataset.validate()?;
        if dataset.train_ids.is_empty() || dataset.test_ids.is_empty() {
            return Err(Error::InvalidArgument(
                "both train and test splits must be non-empty".into(),
            ));
        }
        if cfg.trainee.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let pool = dataset.train();
        if cfg.reward.use_consistency && pool.consistency.is_none() {
            return Err(Error::InvalidArgument(
                "reward.use_consistency is set but the dataset has no consistency channel".into(),
            ));
        }
        let seed = cfg.loop_cfg.seed;
        let model = TargetModel::new(
            dataset.dim(),
            &cfg.trainee.hidden,
            dataset.class_count,
            rng::derive_seed(seed, stream::TRAINEE_INIT),
        )?;
        let sgd = SgdConfig::new(cfg.trainee.lr, cfg.trainee.momentum)?;
        let agent = (cfg.strategy == Strategy::Agent).then(|| {
            let extras = usize::from(cfg.reward.use_consistency);
            ActorCritic::new(
                state_dim(model.feature_dim(), cfg.agent.state_signals, extras),
                cfg.agent.hidden,
                cfg.agent.log_std_init,
                rng::derive_seed(seed, stream::AGENT_INIT),
            )
        });
        Ok(SelectionLoop {
            buffers: vec![Vec::new(); pool.len()],
            test: dataset.test(),
            pool,
            dataset,
            model,
            agent,
            sgd,
            rounds_since_update: 0,
            updates: 0,
            counters: Counters::default(),
            batch_rng: rng::seeded(rng::derive_seed(seed, stream::BATCH_SHUFFLE)),
            action_rng: rng::seeded(rng::derive_seed(seed, stream::ACTIONS)),
            baseline_rng: rng::seeded(rng::derive_seed(seed, stream::RANDOM_BASELINE)),
            latest: None,
            last_scoring: None,
            last_trained: Vec::new(),
            epoch: 0,
            started: Instant::now(),
            cfg,
        })
    }

    pub fn model(&self) -> &TargetModel {
        &self.model
    }

    pub fn agent(&self) -> Option<&ActorCritic> {
        self.agent.as_ref()
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    /// Pending (not yet consumed) transitions per pool sample.
    pub fn buffers(&self) -> &[Vec<Transition>] {
        &self.buffers
    }

    pub fn last_scoring(&self) -> Option<&ScoreOutput> {
        self.last_scoring.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Sorted pool indices that reached `train_step` in the last epoch.
    pub fn last_trained_ids(&self) -> &[usize] {
        &self.last_trained
    }

    fn in_warmup(&self) -> bool {
        self.epoch < self.cfg.loop_cfg.warmup_epochs
    }

    fn is_scoring_epoch(&self) -> bool {
        !self.in_warmup()
            && (self.epoch - self.cfg.loop_cfg.warmup_epochs).is_multiple_of(self.cfg.loop_cfg.score_period)
    }

    fn needs_scoring(&self) -> bool {
        let ratio_one = self.cfg.loop_cfg.ratio >= 1.0;
        match self.cfg.strategy {
            Strategy::Full | Strategy::RandomEpoch => false,
            Strategy::StaticLoss => !ratio_one,
            Strategy::Agent => !ratio_one || self.cfg.agent.enabled,
        }
    }

    fn extras(&self) -> Vec<ExtraChannel> {
        match (&self.pool.consistency, self.cfg.reward.use_consistency) {
            (Some(c), true) => vec![ExtraChannel {
                name: "consistency".into(),
                values: c.clone(),
                mode: self.cfg.reward.consistency_mode,
            }],
            _ => Vec::new(),
        }
    }

    fn score(&mut self, events: &mut Vec<LoopEvent>) -> Result<()> {
        let n = self.pool.len() as u64;
        let extras = self.extras();
        let (latest, scoring) = match &self.agent {
            Some(agent) => {
                let out = score_pool(
                    &self.model,
                    agent,
                    &self.pool,
                    extras,
                    &self.cfg.reward,
                    self.cfg.agent.state_signals,
                    &mut self.action_rng,
                )?;
                self.counters.agent += n;
                let latest = Latest {
                    actions: out.actions(),
                    losses: out.record.losses.clone(),
                    weight_r: out.bundle.weight_r,
                    mean_reward: stats::mean(&out.bundle.composite),
                };
                (latest, Some(out))
            }
            None => {
                let record = self.model.forward_pool(&self.pool.features, &self.pool.labels)?;
                let bundle = RewardBundle::from_record(&record, extras, self.cfg.reward.epsilon)?;
                let latest = Latest {
                    actions: Vec::new(),
                    losses: record.losses,
                    weight_r: bundle.weight_r,
                    mean_reward: stats::mean(&bundle.composite),
                };
                (latest, None)
            }
        };
        self.counters.score += n;
        events.push(LoopEvent::Scored {
            epoch: self.epoch,
            weight_r: latest.weight_r,
            mean_reward: latest.mean_reward,
        });
        self.latest = Some(latest);
        if let Some(out) = scoring {
            if self.cfg.agent.enabled {
                self.record_transitions(&out);
                self.rounds_since_update += 1;
                if self.rounds_since_update >= self.cfg.loop_cfg.agent_update_period {
                    self.update_agent(events)?;
                }
            }
            self.last_scoring = Some(out);
        }
        Ok(())
    }

    fn record_transitions(&mut self, out: &ScoreOutput) {
        let shaped = reward::normalize_composite(&out.bundle.composite);
        for (i, buf) in self.buffers.iter_mut().enumerate() {
            let s = out.samples[i];
            buf.push(Transition {
                state: out.states.row(i).to_vec(),
                action: s.action,
                raw_action: s.raw,
                logprob_old: s.logprob,
                // the action scales the sample's standardized utility, so
                // the return depends on what the policy chose
                reward: s.action * shaped[i],
                value_old: out.values[i],
            });
        }
    }

    fn update_agent(&mut self, events: &mut Vec<LoopEvent>) -> Result<()> {
        self.rounds_since_update = 0;
        let w = self.cfg.loop_cfg.horizon_w;
        let mut trajectories = Vec::new();
        for (id, buf) in self.buffers.iter_mut().enumerate() {
            let complete = buf.len() / w * w;
            if complete == 0 {
                continue;
            }
            let rest = buf.split_off(complete);
            let done = std::mem::replace(buf, rest);
            for chunk in done.chunks(w) {
                trajectories.push(Trajectory {
                    sample_id: id,
                    transitions: chunk.to_vec(),
                });
            }
        }
        if trajectories.is_empty() {
            return Ok(());
        }
        let agent = self.agent.as_mut().expect("agent strategy");
        let seed = rng::derive_seed(
            rng::derive_seed(self.cfg.loop_cfg.seed, stream::PPO_SHUFFLE),
            self.updates,
        );
        let stats = ppo::ppo_update(agent, &trajectories, &self.cfg.agent.ppo, seed)?;
        self.updates += 1;
        self.counters.agent += stats.forward_rows;
        events.push(LoopEvent::AgentUpdated {
            epoch: self.epoch,
            trajectories: trajectories.len(),
            stats,
        });
        Ok(())
    }

    fn select(&mut self) -> Result<Vec<usize>> {
        let n = self.pool.len();
        let ratio = self.cfg.loop_cfg.ratio;
        if self.in_warmup() || ratio >= 1.0 {
            return Ok((0..n).collect());
        }
        match self.cfg.strategy {
            Strategy::Full | Strategy::RandomEpoch => {
                baseline_select(self.cfg.strategy, n, ratio, None, &mut self.baseline_rng)
            }
            Strategy::StaticLoss => {
                let latest = self
                    .latest
                    .as_ref()
                    .ok_or(Error::Protocol("no scoring round before selection"))?;
                baseline_select(
                    Strategy::StaticLoss,
                    n,
                    ratio,
                    Some(&latest.losses),
                    &mut self.baseline_rng,
                )
            }
            Strategy::Agent => {
                let latest = self
                    .latest
                    .as_ref()
                    .ok_or(Error::Protocol("no scoring round before selection"))?;
                match self.cfg.loop_cfg.selection {
                    SelectionMode::TopK => select_top(&latest.actions, ratio),
                    SelectionMode::Proportional => select_proportional(&latest.actions, ratio, &mut self.baseline_rng),
                }
            }
        }
    }

    fn epoch_sgd(&self) -> Result<SgdConfig> {
        if !self.cfg.trainee.cosine_decay {
            return Ok(self.sgd);
        }
        let t = self.epoch as f64 / self.cfg.loop_cfg.epochs as f64;
        let lr = self.sgd.learning_rate() * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        SgdConfig::new(lr, self.sgd.momentum())
    }

    fn train_on(&mut self, ids: &[usize]) -> Result<f64> {
        let sgd = self.epoch_sgd()?;
        let mut order = ids.to_vec();
        order.shuffle(&mut self.batch_rng);
        let mut total = 0.0;
        self.last_trained.clear();
        for chunk in order.chunks(self.cfg.trainee.batch_size) {
            let x = self.pool.features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| self.pool.labels[i]).collect();
            total += self.model.train_step(&x, &y, &sgd)? * chunk.len() as f64;
            self.last_trained.extend_from_slice(chunk);
        }
        self.last_trained.sort_unstable();
        self.counters.train += ids.len() as u64;
        Ok(total / ids.len().max(1) as f64)
    }

    /// Runs the next epoch. Returns its metrics, the selection decision and
    /// any events raised along the way.
    pub fn run_epoch(&mut self) -> Result<(MetricsRecord, SelectionDecision, Vec<LoopEvent>)> {
        if self.epoch >= self.cfg.loop_cfg.epochs {
            return Err(Error::Protocol("run_epoch called after the last epoch"));
        }
        let mut events = Vec::new();
        if self.is_scoring_epoch() && self.needs_scoring() {
            self.score(&mut events)?;
        }
        let selected = self.select()?;
        let train_loss = self.train_on(&selected)?;
        let test_acc = self.model.evaluate(&self.test.features, &self.test.labels)?;
        let (weight_r, mean_reward, actions) = match &self.latest {
            Some(l) => (l.weight_r, l.mean_reward, l.actions.clone()),
            None => (0.0, 0.0, Vec::new()),
        };
        let metrics = MetricsRecord {
            epoch: self.epoch,
            selected_count: selected.len(),
            weight_r,
            mean_reward,
            train_loss,
            test_acc,
            train_forwards: self.counters.train,
            score_forwards: self.counters.score,
            agent_forwards: self.counters.agent,
            wallclock_ms: if self.cfg.loop_cfg.record_wallclock {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        let decision = SelectionDecision {
            epoch: self.epoch,
            selected_ids: selected,
            actions: if self.in_warmup() { Vec::new() } else { actions },
            weight_r,
        };
        self.epoch += 1;
        Ok((metrics, decision, events))
    }
}

/// Full run: warmup on all data, then the closed loop, evaluating on the
/// test split after every epoch.
pub fn run_training(dataset: &Dataset, cfg: &TrainingConfig) -> Result<RunOutput> {
    let mut lp = SelectionLoop::new(dataset, cfg.clone())?;
    let mut out = RunOutput {
        metrics: Vec::with_capacity(cfg.loop_cfg.epochs),
        decisions: Vec::with_capacity(cfg.loop_cfg.epochs),
        trained_ids: Vec::with_capacity(cfg.loop_cfg.epochs),
        events: Vec::new(),
    };
    for _ in 0..cfg.loop_cfg.epochs {
        let (m, d, ev) = lp.run_epoch()?;
        out.trained_ids.push(lp.last_trained_ids().to_vec());
        out.metrics.push(m);
        out.decisions.push(d);
        out.events.extend(ev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top(&[0.9, 0.1, 0.5, 0.5], 0.5).unwrap(), vec![0, 2]);
        assert_eq!(select_top(&[0.3, 0.2, 0.1], 1.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_top(&[0.4; 5], 0.6).unwrap(), vec![0, 1, 2]);
        assert!(select_top(&[], 0.5).is_err());
        assert!(select_top(&[1.0], 0.0).is_err());
    }

    #[test]
    fn selection_size_absorbs_rounding() {
        assert_eq!(selection_size(0.3, 8000), 2400);
        assert_eq!(selection_size(0.5, 8000), 4000);
        assert_eq!(selection_size(0.5, 3), 2);
        assert_eq!(selection_size(2.0 / 3.0, 3), 2);
        assert_eq!(selection_size(0.01, 10), 1);
    }

    #[test]
    fn baseline_examples() {
        let mut rng = rng::seeded(1);
        assert_eq!(
            baseline_select(Strategy::Full, 4, 0.5, None, &mut rng).unwrap(),
            vec![0, 1, 2, 3]
        );
        let top = baseline_select(Strategy::StaticLoss, 3, 2.0 / 3.0, Some(&[0.1, 3.0, 2.0]), &mut rng).unwrap();
        assert_eq!(top, vec![1, 2]);

        let mut a = rng::seeded(5);
        let mut b = rng::seeded(5);
        let first = baseline_select(Strategy::RandomEpoch, 100, 0.3, None, &mut a).unwrap();
        assert_eq!(
            first,
            baseline_select(Strategy::RandomEpoch, 100, 0.3, None, &mut b).unwrap()
        );
        let second = baseline_select(Strategy::RandomEpoch, 100, 0.3, None, &mut a).unwrap();
        assert_eq!(first.len(), 30);
        assert_ne!(first, second);
        assert!(baseline_select(Strategy::StaticLoss, 3, 0.5, None, &mut a).is_err());
    }

    #[test]
    fn proportional_selection_is_a_valid_subset() {
        let mut rng = rng::seeded(3);
        let actions: Vec<f64> = (0..50).map(|i| (i as f64) / 50.0).collect();
        let ids = select_proportional(&actions, 0.4, &mut rng).unwrap();
        assert_eq!(ids.len(), 20);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        // zero-weight samples are never picked while others remain
        assert!(!ids.contains(&0));
    }

    #[test]
    fn loop_config_validation() {
        let ok = LoopConfig::default();
        ok.validate().unwrap();
        assert!(LoopConfig {
            ratio: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(LoopConfig {
            ratio: 1.5,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(LoopConfig {
            warmup_epochs: 31,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(LoopConfig {
            score_period: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert_eq!(
            LoopConfig {
                epochs: 10,
                warmup_epochs: 1,
                score_period: 3,
                ..ok
            }
            .scoring_rounds(),
            3
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("agents".parse::<Strategy>().is_err());
    }
}
