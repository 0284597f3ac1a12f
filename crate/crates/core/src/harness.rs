//! Batch experiments: baseline TAMER against Stochastic TAMER under a chosen
//! critic, across seeds, with CSV output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{build_default_world, GridWorld};
use crate::guard::{Guard, GuardConfig};
use crate::oracles::{solve, OracleConfig, QTable};
use crate::seeding::{stream_rng, Stream};
use crate::tamer::{run_episode, EpisodeOutcome, RewardModel, TamerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Stochastic,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "stochastic" => Ok(Variant::Stochastic),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Stochastic => "stochastic",
        })
    }
}

/// Where the world comes from: omitted means the built-in default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldSource {
    Path(PathBuf),
    Inline(GridWorld),
}

impl WorldSource {
    pub fn resolve(source: Option<&WorldSource>, base_dir: Option<&Path>) -> Result<GridWorld> {
        match source {
            None => Ok(build_default_world()),
            Some(WorldSource::Inline(w)) => Ok(w.clone()),
            Some(WorldSource::Path(p)) => {
                let path = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                GridWorld::load(path)
            }
        }
    }
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Baseline, Variant::Stochastic]
}

fn default_episodes() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

fn default_guard() -> Option<GuardConfig> {
    Some(GuardConfig::default())
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub world: Option<WorldSource>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    pub oracle: OracleConfig,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tamer: TamerConfig,
    #[serde(default = "default_guard")]
    pub guard: Option<GuardConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Run (variant, seed) trials on the rayon pool. Output bytes do not
    /// depend on this.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(oracle: OracleConfig) -> Self {
        Self {
            world: None,
            variants: default_variants(),
            oracle,
            episodes: default_episodes(),
            seeds: default_seeds(),
            tamer: TamerConfig::default(),
            guard: default_guard(),
            output: None,
            parallel: true,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("variants must not be empty".into()));
        }
        self.oracle.validate()?;
        self.tamer.validate()?;
        if self.variants.contains(&Variant::Stochastic) {
            match &self.guard {
                None => {
                    return Err(Error::InvalidConfig(
                        "the stochastic variant requires a guard config".into(),
                    ))
                }
                Some(g) => g.validate()?,
            }
        }
        Ok(())
    }
}

/// One CSV row: a single episode of one (variant, seed) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: Variant,
    pub seed: u64,
    pub episode: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub steps: usize,
    #[serde(rename = "pos")]
    pub positive_count: usize,
    #[serde(rename = "neg")]
    pub negative_count: usize,
    pub flips: usize,
    /// User score after the episode; empty for the baseline.
    pub score: Option<f64>,
}

impl EpisodeRecord {
    fn from_outcome(variant: Variant, seed: u64, out: &EpisodeOutcome) -> Self {
        Self {
            variant,
            seed,
            episode: out.episode,
            total_return: out.total_return,
            steps: out.steps,
            positive_count: out.positive_count(),
            negative_count: out.negative_count(),
            flips: out.flips,
            score: out.final_score,
        }
    }
}

/// Everything a single (variant, seed) trial produced.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub records: Vec<EpisodeRecord>,
    pub outcomes: Vec<EpisodeOutcome>,
    pub model: RewardModel,
}

/// Shared, read-only inputs for every trial of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub world: GridWorld,
    pub q: Arc<QTable>,
}

impl Setup {
    pub fn new(world: GridWorld) -> Result<Self> {
        let q = Arc::new(solve(&world)?);
        Ok(Self { world, q })
    }
}

/// Runs `cfg.episodes` consecutive episodes with one model that persists
/// across them.
pub fn run_trial(setup: &Setup, cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<TrialResult> {
    let mut provider = cfg.oracle.provider(&setup.world, setup.q.clone(), seed);
    let mut guard = match variant {
        Variant::Baseline => None,
        Variant::Stochastic => {
            let gcfg = cfg
                .guard
                .ok_or_else(|| Error::InvalidConfig("the stochastic variant requires a guard config".into()))?;
            Some(Guard::new(gcfg, setup.world.clone(), setup.q.clone(), seed))
        }
    };
    let mut rng = stream_rng(seed, 0, Stream::Agent);
    let mut model = RewardModel::new();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut outcomes = Vec::with_capacity(cfg.episodes);

    for episode in 1..=cfg.episodes {
        let (out, next) = run_episode(
            &setup.world,
            model,
            &cfg.tamer,
            provider.as_mut(),
            guard.as_mut(),
            &mut rng,
            episode,
        )?;
        model = next;
        records.push(EpisodeRecord::from_outcome(variant, seed, &out));
        outcomes.push(out);
    }
    Ok(TrialResult { records, outcomes, model })
}

/// Runs every (variant, seed) trial and returns records sorted by
/// (variant, seed, episode).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<EpisodeRecord>> {
    run_experiment_in(cfg, None)
}

/// Like [`run_experiment`], resolving a relative world path against `base_dir`.
pub fn run_experiment_in(cfg: &ExperimentConfig, base_dir: Option<&Path>) -> Result<Vec<EpisodeRecord>> {
    cfg.validate()?;
    let setup = Setup::new(WorldSource::resolve(cfg.world.as_ref(), base_dir)?)?;

    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort();
    seeds.dedup();
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();

    let run = |&(v, s): &(Variant, u64)| run_trial(&setup, cfg, v, s).map(|t| t.records);
    let chunks: Vec<Vec<EpisodeRecord>> = if cfg.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let mut records: Vec<EpisodeRecord> = chunks.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.variant, r.seed, r.episode));
    Ok(records)
}

pub fn write_records<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["variant", "seed", "episode", "return", "steps", "pos", "neg", "flips", "score"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[EpisodeRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn emit_csv(records: &[EpisodeRecord], path: impl AsRef<Path>) -> Result<()> {
    write_records(records, File::create(path)?)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    read_records(File::open(path)?)
}

/// Cross-seed statistics of one variant at one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub episode: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 when there is a single seed.
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn summarize(records: &[EpisodeRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Stats("cannot summarize an empty record list".into()));
    }
    let mut groups: std::collections::BTreeMap<(Variant, usize), Vec<f64>> = Default::default();
    for r in records {
        groups.entry((r.variant, r.episode)).or_default().push(r.total_return);
    }
    Ok(groups
        .into_iter()
        .map(|((variant, episode), xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            SummaryRow {
                variant,
                episode,
                n,
                mean,
                std,
                lower: mean - std,
                upper: mean + std,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-variant mean +/- std series, one row per episode.
pub fn emit_plot_data(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    write_summary(rows, File::create(path)?)
}

/// Mean return over every (seed, episode) pair of one variant.
pub fn mean_return(records: &[EpisodeRecord], variant: Variant) -> Option<f64> {
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| r.total_return)
        .collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
