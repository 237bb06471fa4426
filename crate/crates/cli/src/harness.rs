//! Runs, benches and the files they write.
//!
//! Output layout under the output directory:
//!
//! - `train`: `metrics.csv`, `events.jsonl`
//! - `bench`: `runs/{run_id}.csv`, `runs/{run_id}.events.jsonl`, `aggregate.csv`
//! - `gen-data`: `dataset.data`, its split file, and `flipped.txt` when noise is on

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use data_agent_core::data::{self, gen_mixture, gen_rings, inject_label_noise};
use data_agent_core::selection::LoopEvent;
use data_agent_core::stats::{mean, std_dev};
use data_agent_core::{run_training, Dataset, MixtureSpec, NoiseSpec, RunOutput, Strategy, TrainingConfig};
use serde_json::json;

use crate::config::{DatasetSource, Generator, RunConfig};
use crate::error::{CliError, CliResult};

pub const METRICS_HEADER: &str = "run_id,strategy,seed,epoch,selected_count,weight_r,mean_reward,train_loss,test_acc,train_forwards,score_forwards,agent_forwards,wallclock_ms";

pub const AGGREGATE_HEADER: &str =
    "strategy,ratio,seeds,final_acc_mean,final_acc_std,total_forwards_mean,total_forwards_std,train_forwards_mean";

/// Classes, per-class train and per-class test counts of the rings family.
const RINGS_SHAPE: (usize, usize, usize) = (8, 1000, 250);

/// Builds the configured dataset from `dataset_seed`, then applies label
/// noise when requested. Returns the dataset and the flipped train ids.
pub fn build_dataset(cfg: &RunConfig, dataset_seed: u64) -> CliResult<(Dataset, Vec<usize>)> {
    let clean = match &cfg.source {
        DatasetSource::File(path) => data::load(path)?,
        DatasetSource::Generated {
            generator: Generator::Mixture,
            std,
        } => gen_mixture(&MixtureSpec {
            std: *std,
            ..MixtureSpec::benchmark(dataset_seed)
        })?,
        DatasetSource::Generated {
            generator: Generator::Rings,
            std,
        } => {
            let (c, tr, te) = RINGS_SHAPE;
            gen_rings(c, tr, te, *std, dataset_seed)?
        }
    };
    if cfg.noise_rate > 0.0 {
        let noise = NoiseSpec::new(cfg.noise_rate, dataset_seed.wrapping_add(100));
        Ok(inject_label_noise(&clean, &noise)?)
    } else {
        Ok((clean, Vec::new()))
    }
}

/// Dataset seed of a training run: each run seed draws its own generated
/// dataset (and noise pattern), offset from `dataset.seed`.
pub fn run_dataset_seed(cfg: &RunConfig, run_seed: u64) -> u64 {
    cfg.dataset_seed.wrapping_add(run_seed)
}

pub fn run_id(strategy: Strategy, ratio: f64, seed: u64) -> String {
    format!("{}-r{ratio}-s{seed}", strategy.name())
}

pub fn metrics_csv(run_id: &str, strategy: Strategy, seed: u64, out: &RunOutput) -> String {
    let mut s = String::with_capacity(128 * (out.metrics.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for m in &out.metrics {
        writeln!(
            s,
            "{run_id},{},{seed},{},{},{},{},{},{},{},{},{},{}",
            strategy.name(),
            m.epoch,
            m.selected_count,
            m.weight_r,
            m.mean_reward,
            m.train_loss,
            m.test_acc,
            m.train_forwards,
            m.score_forwards,
            m.agent_forwards,
            m.wallclock_ms
        )
        .expect("writing to a String");
    }
    s
}

pub fn events_jsonl(run_id: &str, out: &RunOutput) -> String {
    let mut s = String::new();
    for d in &out.decisions {
        let line = json!({
            "run_id": run_id,
            "event": "selection",
            "epoch": d.epoch,
            "selected": d.selected_ids.len(),
            "weight_r": d.weight_r,
        });
        s.push_str(&line.to_string());
        s.push('\n');
    }
    for e in &out.events {
        let line = match e {
            LoopEvent::Scored {
                epoch,
                weight_r,
                mean_reward,
            } => json!({
                "run_id": run_id,
                "event": "scored",
                "epoch": epoch,
                "weight_r": weight_r,
                "mean_reward": mean_reward,
            }),
            LoopEvent::AgentUpdated {
                epoch,
                trajectories,
                stats,
            } => json!({
                "run_id": run_id,
                "event": "agent_update",
                "epoch": epoch,
                "trajectories": trajectories,
                "transitions": stats.transitions,
                "actor_loss": stats.actor_loss,
                "critic_loss": stats.critic_loss,
                "mean_ratio": stats.mean_ratio,
                "forward_rows": stats.forward_rows,
            }),
        };
        s.push_str(&line.to_string());
        s.push('\n');
    }
    s
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Writes the dataset files. Returns the path of the main data file.
pub fn gen_data(cfg: &RunConfig, out_dir: &Path) -> CliResult<PathBuf> {
    let (ds, flipped) = build_dataset(cfg, cfg.dataset_seed)?;
    create_dir(out_dir)?;
    let path = out_dir.join("dataset.data");
    data::save(&ds, &path)?;
    if cfg.noise_rate > 0.0 {
        let body: String = flipped.iter().map(|i| format!("{i}\n")).collect();
        write(&out_dir.join("flipped.txt"), &body)?;
    }
    Ok(path)
}

/// A single run of `train.strategy`.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> CliResult<RunOutput> {
    let t = &cfg.training;
    let (ds, _) = build_dataset(cfg, run_dataset_seed(cfg, t.loop_cfg.seed))?;
    let out = run_training(&ds, t)?;
    let id = run_id(t.strategy, t.loop_cfg.ratio, t.loop_cfg.seed);
    create_dir(out_dir)?;
    write(
        &out_dir.join("metrics.csv"),
        &metrics_csv(&id, t.strategy, t.loop_cfg.seed, &out),
    )?;
    write(&out_dir.join("events.jsonl"), &events_jsonl(&id, &out))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub strategy: Strategy,
    pub ratio: f64,
    pub seed: u64,
}

impl Cell {
    /// Dataset seed of a training run: each run seed draws its own generated
    /// dataset (and noise pattern), offset from `dataset.seed`.
    pub fn run_dataset_seed(cfg: &RunConfig, run_seed: u64) -> u64 {
        cfg.dataset_seed.wrapping_add(run_seed)
    }

    pub fn run_id(&self) -> String {
        run_id(self.strategy, self.ratio, self.seed)
    }

    pub fn config(&self, base: &TrainingConfig) -> TrainingConfig {
        let mut cfg = base.clone();
        cfg.strategy = self.strategy;
        cfg.loop_cfg.ratio = self.ratio;
        cfg.loop_cfg.seed = self.seed;
        cfg
    }
}

/// The bench cross product in its canonical order: ratio, then strategy,
/// then seed.
pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &ratio in &cfg.ratios {
        for &strategy in &cfg.strategies {
            for &seed in &cfg.seeds {
                out.push(Cell { strategy, ratio, seed });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub strategy: String,
    pub ratio: f64,
    pub seeds: usize,
    pub final_acc_mean: f64,
    pub final_acc_std: f64,
    pub total_forwards_mean: f64,
    pub total_forwards_std: f64,
    pub train_forwards_mean: f64,
}

impl AggregateRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.strategy,
            self.ratio,
            self.seeds,
            self.final_acc_mean,
            self.final_acc_std,
            self.total_forwards_mean,
            self.total_forwards_std,
            self.train_forwards_mean
        )
    }
}

/// Per-(strategy, ratio) rollup of final-epoch metrics over seeds, with
/// population standard deviations.
pub fn aggregate(cells: &[Cell], outputs: &[RunOutput]) -> Vec<AggregateRow> {
    let mut rows: Vec<(Strategy, f64, Vec<usize>)> = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        match rows.iter_mut().find(|(s, r, _)| *s == c.strategy && *r == c.ratio) {
            Some(row) => row.2.push(i),
            None => rows.push((c.strategy, c.ratio, vec![i])),
        }
    }
    rows.into_iter()
        .map(|(strategy, ratio, idx)| {
            let last = |i: &usize| outputs[*i].metrics.last().cloned().unwrap_or_default();
            let acc: Vec<f64> = idx.iter().map(|i| last(i).test_acc).collect();
            let total: Vec<f64> = idx
                .iter()
                .map(|i| {
                    let m = last(i);
                    (m.train_forwards + m.score_forwards + m.agent_forwards) as f64
                })
                .collect();
            let train: Vec<f64> = idx.iter().map(|i| last(i).train_forwards as f64).collect();
            AggregateRow {
                strategy: strategy.name().to_string(),
                ratio,
                seeds: idx.len(),
                final_acc_mean: mean(&acc),
                final_acc_std: std_dev(&acc),
                total_forwards_mean: mean(&total),
                total_forwards_std: std_dev(&total),
                train_forwards_mean: mean(&train),
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub cells: Vec<Cell>,
    pub runs: Vec<RunOutput>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every cell on the dataset of its seed. With `workers > 1` cells run
/// on scoped threads; the results, and so the files, are the same either way.
pub fn run_cells(cfg: &RunConfig, cells: &[Cell], workers: usize) -> CliResult<Vec<RunOutput>> {
    let mut datasets: Vec<(u64, Dataset)> = Vec::new();
    for c in cells {
        if !datasets.iter().any(|(s, _)| *s == c.seed) {
            datasets.push((c.seed, build_dataset(cfg, run_dataset_seed(cfg, c.seed))?.0));
        }
    }
    let dataset = |seed: u64| &datasets.iter().find(|(s, _)| *s == seed).expect("built above").1;
    let base = &cfg.training;
    if workers <= 1 || cells.len() <= 1 {
        return cells
            .iter()
            .map(|c| Ok(run_training(dataset(c.seed), &c.config(base))?))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<data_agent_core::Result<RunOutput>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let result = run_training(dataset(cell.seed), &cell.config(base));
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| Ok(r.expect("every cell ran")?))
        .collect()
}

pub fn bench(cfg: &RunConfig, out_dir: &Path, workers: usize) -> CliResult<BenchOutput> {
    let cells = cells(cfg);
    let runs = run_cells(cfg, &cells, workers)?;
    let runs_dir = out_dir.join("runs");
    create_dir(&runs_dir)?;
    for (c, out) in cells.iter().zip(&runs) {
        let id = c.run_id();
        write(
            &runs_dir.join(format!("{id}.csv")),
            &metrics_csv(&id, c.strategy, c.seed, out),
        )?;
        write(&runs_dir.join(format!("{id}.events.jsonl")), &events_jsonl(&id, out))?;
    }
    let aggregate = aggregate(&cells, &runs);
    write(&out_dir.join("aggregate.csv"), &aggregate_csv(&aggregate))?;
    Ok(BenchOutput { cells, runs, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use data_agent_core::MetricsRecord;

    fn fake_run(acc: f64, train: u64) -> RunOutput {
        RunOutput {
            metrics: vec![MetricsRecord {
                test_acc: acc,
                train_forwards: train,
                score_forwards: 10,
                ..MetricsRecord::default()
            }],
            decisions: Vec::new(),
            trained_ids: Vec::new(),
            events: Vec::new(),
        }
    }

    #[test]
    fn aggregate_groups_in_first_seen_order() {
        let cells = [
            Cell {
                strategy: Strategy::Full,
                ratio: 0.5,
                seed: 0,
            },
            Cell {
                strategy: Strategy::Full,
                ratio: 0.5,
                seed: 1,
            },
            Cell {
                strategy: Strategy::Agent,
                ratio: 0.5,
                seed: 0,
            },
        ];
        let runs = [fake_run(0.8, 100), fake_run(0.6, 300), fake_run(0.9, 50)];
        let rows = aggregate(&cells, &runs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].strategy, "full");
        assert!((rows[0].final_acc_mean - 0.7).abs() < 1e-12);
        assert!((rows[0].final_acc_std - 0.1).abs() < 1e-12);
        assert_eq!(rows[0].total_forwards_mean, 210.0);
        assert_eq!(rows[0].train_forwards_mean, 200.0);
        assert_eq!(rows[1].seeds, 1);
        assert_eq!(rows[1].final_acc_std, 0.0);
    }

    #[test]
    fn cells_follow_ratio_strategy_seed_order() {
        let cfg = RunConfig::parse(
            "bench.strategies = agent,full\nbench.seeds = 3,1\nbench.ratios = 0.3,0.5\n",
            "t",
        )
        .unwrap();
        let ids: Vec<String> = cells(&cfg).iter().map(Cell::run_id).collect();
        assert_eq!(
            ids,
            [
                "agent-r0.3-s3",
                "agent-r0.3-s1",
                "full-r0.3-s3",
                "full-r0.3-s1",
                "agent-r0.5-s3",
                "agent-r0.5-s1",
                "full-r0.5-s3",
                "full-r0.5-s1"
            ]
        );
    }
}
