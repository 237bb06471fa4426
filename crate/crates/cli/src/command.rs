use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{harness, propcheck, report};

#[derive(Debug, Parser)]
#[command(name = "data-agent", version, about = "Agent-driven data selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat `section.key = value` config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides output.dir and DATA_AGENT_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// gen-data: dataset seed. train: loop seed. bench: single seed.
    /// propcheck: suite seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Label-noise rate, overriding dataset.noise_rate.
    #[arg(long, global = true)]
    pub noise: Option<f64>,

    /// Bench worker threads; 1 runs cells sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured dataset.
    GenData,
    /// Train one run of train.strategy.
    Train,
    /// Run the strategy × ratio × seed matrix.
    Bench,
    /// Run the oracle suites.
    Propcheck,
    /// Print the table for a bench directory.
    Report {
        /// Bench output directory; defaults to the resolved output dir.
        dir: Option<PathBuf>,
    },
}

impl Cli {
    fn load_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(rate) = self.noise {
            if !(0.0..1.0).contains(&rate) {
                return Err(CliError::Config(format!("--noise must lie in [0, 1), got {rate}")));
            }
            cfg.noise_rate = rate;
        }
        if let Some(seed) = self.seed {
            match self.command {
                Command::GenData => cfg.dataset_seed = seed,
                Command::Train => cfg.training.loop_cfg.seed = seed,
                Command::Bench => cfg.seeds = vec![seed],
                Command::Propcheck | Command::Report { .. } => {}
            }
        }
        if self.parallel == 0 {
            return Err(CliError::Config("--parallel must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn run(&self) -> CliResult<()> {
        let cfg = self.load_config()?;
        match &self.command {
            Command::GenData => {
                let path = harness::gen_data(&cfg, &cfg.resolve_output(self.out.as_deref())?)?;
                println!("wrote {}", path.display());
            }
            Command::Train => {
                let out_dir = cfg.resolve_output(self.out.as_deref())?;
                let out = harness::train(&cfg, &out_dir)?;
                if let Some(m) = out.metrics.last() {
                    println!(
                        "{} epochs, final test_acc {:.4}, train_forwards {}",
                        out.metrics.len(),
                        m.test_acc,
                        m.train_forwards
                    );
                }
            }
            Command::Bench => {
                let out_dir = cfg.resolve_output(self.out.as_deref())?;
                let result = harness::bench(&cfg, &out_dir, self.parallel)?;
                print!("{}", report::render(&result.aggregate));
            }
            Command::Propcheck => {
                let results = propcheck::run_all(self.seed.unwrap_or(0))?;
                for r in &results {
                    println!("{}", r.line());
                }
                let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
                if !failed.is_empty() {
                    return Err(CliError::Propcheck(failed.join(", ")));
                }
            }
            Command::Report { dir } => {
                let dir = match dir {
                    Some(d) => d.clone(),
                    None => cfg.resolve_output(self.out.as_deref())?,
                };
                print!("{}", report::report(&dir)?);
            }
        }
        Ok(())
    }
}
