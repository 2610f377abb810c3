//! Multi-seed training runs and their summaries.
//!
//! Layout of an output directory:
//!
//! - `run.toml`: the resolved run parameters;
//! - `seed_<s>_metrics.csv`: one [`RunMetrics`] row per training episode;
//! - `seed_<s>_timing.csv`: per-episode wall time, kept apart so the metrics
//!   files are reproducible byte for byte;
//! - `seed_<s>_eval.csv`: the post-training [`Evaluation`];
//! - `seed_<s>_agent.txt`: the trained agent;
//! - `summary.csv`, `timing_summary.csv` and `summary.txt`: computed from the
//!   per-seed files alone. Wall time only appears in the last two.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::a2c::{evaluate_a2c, train_a2c, A2cAgent};
use crate::agent::{Agent, SavedAgent};
use crate::config::{Algorithm, ExperimentConfig, Hyper};
use crate::env::{CostCase, Env};
use crate::error::HarnessError;
use crate::maa2c::{evaluate_maa2c, train_maa2c, MaA2cAgent};
use crate::metrics::{Evaluation, RunMetrics};
use crate::q_learning::{evaluate_q, train_q, QTable};
use crate::stats::{compute_ci, mean, measure_execution_time, moving_average, plateau_episode, CiMethod};

/// Added to a run's seed to seed its evaluation environment.
pub const EVAL_SEED_OFFSET: u64 = 1 << 32;
/// Smoothing window for convergence analysis.
pub const SMOOTHING_WINDOW: usize = 10;
/// Relative band for [`plateau_episode`].
pub const PLATEAU_TOLERANCE: f64 = 0.10;

/// Everything one seed produces.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: Vec<RunMetrics>,
    pub evaluation: Evaluation,
    pub agent: SavedAgent,
}

/// Trains and evaluates run `k` of `cfg` without touching the disk.
pub fn train_seed(cfg: &ExperimentConfig, k: usize) -> Result<SeedOutcome, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed(k);
    let mut env = Env::new(cfg.chain.clone(), seed)?;
    let mut eval_env = Env::new(cfg.chain.clone(), seed.wrapping_add(EVAL_SEED_OFFSET))?;
    let (metrics, evaluation, agent) = match cfg.hyper {
        Hyper::Q(h) => {
            let mut table = QTable::new();
            let m = train_q(&mut env, &mut table, &h, cfg.episodes, cfg.steps, seed);
            let e = evaluate_q(&mut eval_env, &table, cfg.eval_episodes, cfg.steps);
            (m, e, Agent::Q(table))
        }
        Hyper::A2c(h) => {
            let mut a = A2cAgent::new(&cfg.chain, h, seed)?;
            let m = train_a2c(&mut env, &mut a, cfg.episodes, cfg.steps, seed)?;
            let e = evaluate_a2c(&mut eval_env, &a, cfg.eval_episodes, cfg.steps);
            (m, e, Agent::A2c(a))
        }
        Hyper::Maa2c(h) => {
            let mut a = MaA2cAgent::new(&cfg.chain, h, seed)?;
            let m = train_maa2c(&mut env, &mut a, cfg.episodes, cfg.steps, seed)?;
            let e = evaluate_maa2c(&mut eval_env, &a, cfg.eval_episodes, cfg.steps);
            (m, e, Agent::Maa2c(a))
        }
    };
    Ok(SeedOutcome {
        seed,
        metrics,
        evaluation,
        agent: SavedAgent {
            chain: cfg.chain.clone(),
            agent,
        },
    })
}

/// Run parameters echoed into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub algorithm: Algorithm,
    pub case: u32,
    pub episodes: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub ci_method: CiMethod,
}

impl RunInfo {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        RunInfo {
            algorithm: cfg.algorithm,
            case: cfg.case.number(),
            episodes: cfg.episodes,
            steps: cfg.steps,
            seeds: (0..cfg.seeds).map(|k| cfg.seed(k)).collect(),
            eval_episodes: cfg.eval_episodes,
            ci_method: cfg.ci_method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    episode: usize,
    wall_time: f64,
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_metrics.csv"))
}

pub fn timing_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_timing.csv"))
}

pub fn eval_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_eval.csv"))
}

pub fn agent_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_agent.txt"))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

fn wrap_csv(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Format {
            path: path.display().to_string(),
            reason: format!("{other:?}"),
        },
    }
}

/// Writes the per-seed files of `outcome` under `dir`.
pub fn write_seed(dir: &Path, outcome: &SeedOutcome) -> Result<(), HarnessError> {
    let s = outcome.seed;
    write_rows(&metrics_path(dir, s), &outcome.metrics)?;
    let timing: Vec<TimingRow> = outcome
        .metrics
        .iter()
        .map(|m| TimingRow {
            episode: m.episode,
            wall_time: m.wall_time,
        })
        .collect();
    write_rows(&timing_path(dir, s), &timing)?;
    write_rows(&eval_path(dir, s), &[outcome.evaluation])?;
    outcome.agent.save(&agent_path(dir, s))
}

pub fn read_metrics(dir: &Path, seed: u64) -> Result<Vec<RunMetrics>, HarnessError> {
    let mut rows: Vec<RunMetrics> = read_rows(&metrics_path(dir, seed))?;
    let timing: Vec<TimingRow> = match read_rows(&timing_path(dir, seed)) {
        Ok(t) => t,
        Err(HarnessError::Io { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    for (m, t) in rows.iter_mut().zip(&timing) {
        m.wall_time = t.wall_time;
    }
    Ok(rows)
}

pub fn read_evaluation(dir: &Path, seed: u64) -> Result<Evaluation, HarnessError> {
    let path = eval_path(dir, seed);
    let rows: Vec<Evaluation> = read_rows(&path)?;
    match rows.as_slice() {
        [row] => Ok(*row),
        _ => Err(HarnessError::Format {
            path: path.display().to_string(),
            reason: format!("expected one row, found {}", rows.len()),
        }),
    }
}

/// Convergence episode of one training run.
pub fn run_plateau(metrics: &[RunMetrics]) -> Result<usize, HarnessError> {
    let rewards: Vec<f64> = metrics.iter().map(|m| m.total_reward).collect();
    Ok(plateau_episode(&moving_average(&rewards, SMOOTHING_WINDOW)?, PLATEAU_TOLERANCE)?)
}

/// Mean seconds per episode; short runs fall back to the plain mean.
pub fn run_wall_time(metrics: &[RunMetrics]) -> f64 {
    let t: Vec<f64> = metrics.iter().map(|m| m.wall_time).collect();
    measure_execution_time(&t).unwrap_or_else(|_| if t.is_empty() { 0.0 } else { mean(&t) })
}

/// One summary line: the across-seed mean and its confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl SummaryRow {
    /// A single sample degenerates to a zero-width interval.
    pub fn from_samples(metric: &str, samples: &[f64], method: CiMethod) -> Result<Self, HarnessError> {
        let m = mean(samples);
        let (ci_low, ci_high) = if samples.len() == 1 {
            (m, m)
        } else {
            compute_ci(samples, 0.95, method)?
        };
        Ok(SummaryRow {
            metric: metric.to_string(),
            mean: m,
            ci_low,
            ci_high,
            n: samples.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub info: RunInfo,
    pub rows: Vec<SummaryRow>,
    /// Seconds per training episode.
    pub wall_time: SummaryRow,
}

/// Summary metric names in file order.
pub const SUMMARY_METRICS: [&str; 6] = [
    "rp",
    "inv_warehouse",
    "inv_factory",
    "stockouts_per_episode",
    "reward_per_episode",
    "plateau_episode",
];

impl Summary {
    pub fn row(&self, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "algorithm {} | case {} | {} seeds | {} episodes x {} steps",
            self.info.algorithm,
            self.info.case,
            self.info.seeds.len(),
            self.info.episodes,
            self.info.steps
        );
        let _ = writeln!(out, "{:<24}{:>16}{:>16}{:>16}", "metric", "mean", "ci_low", "ci_high");
        for r in self.rows.iter().chain([&self.wall_time]) {
            let _ = writeln!(out, "{:<24}{:>16.4}{:>16.4}{:>16.4}", r.metric, r.mean, r.ci_low, r.ci_high);
        }
        out
    }
}

fn read_info(dir: &Path) -> Result<RunInfo, HarnessError> {
    let path = dir.join("run.toml");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| HarnessError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Recomputes the summary from the per-seed files in `dir`.
pub fn summarize(dir: &Path) -> Result<Summary, HarnessError> {
    let info = read_info(dir)?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); SUMMARY_METRICS.len()];
    let mut wall = Vec::new();
    for &seed in &info.seeds {
        let e = read_evaluation(dir, seed)?;
        let m = read_metrics(dir, seed)?;
        let values = [
            e.mean_rp,
            e.mean_inv_warehouse,
            e.mean_inv_factory,
            e.stockouts_per_episode,
            e.reward_per_episode,
            run_plateau(&m)? as f64,
        ];
        wall.push(run_wall_time(&m));
        for (c, v) in cols.iter_mut().zip(values) {
            c.push(v);
        }
    }
    if info.seeds.is_empty() {
        return Err(HarnessError::Format {
            path: dir.join("run.toml").display().to_string(),
            reason: "no seeds listed".into(),
        });
    }
    let rows = SUMMARY_METRICS
        .iter()
        .zip(&cols)
        .map(|(name, c)| SummaryRow::from_samples(name, c, info.ci_method))
        .collect::<Result<Vec<_>, _>>()?;
    let wall_time = SummaryRow::from_samples("wall_time_per_episode", &wall, info.ci_method)?;
    Ok(Summary { info, rows, wall_time })
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), HarnessError> {
    write_rows(&dir.join("summary.csv"), &summary.rows)?;
    write_rows(&dir.join("timing_summary.csv"), std::slice::from_ref(&summary.wall_time))?;
    let path = dir.join("summary.txt");
    fs::write(&path, summary.table()).map_err(|e| HarnessError::io(&path, e))
}

pub fn read_summary_rows(dir: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    read_rows(&dir.join("summary.csv"))
}

/// Trains every seed of `cfg`, writes all files and returns the summary.
/// `on_seed` sees each outcome once its files are written.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut on_seed: F) -> Result<Summary, HarnessError>
where
    F: FnMut(&SeedOutcome),
{
    cfg.validate()?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let info_path = dir.join("run.toml");
    let info = toml::to_string(&RunInfo::of(cfg)).expect("run info serializes");
    fs::write(&info_path, info).map_err(|e| HarnessError::io(&info_path, e))?;
    for k in 0..cfg.seeds {
        let outcome = train_seed(cfg, k)?;
        write_seed(dir, &outcome)?;
        on_seed(&outcome);
    }
    let summary = summarize(dir)?;
    write_summary(dir, &summary)?;
    Ok(summary)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary, HarnessError> {
    run_experiment_with(cfg, |_| {})
}

/// Seconds per episode of each algorithm on `case`, measured on one seed.
pub fn timing_comparison(case: CostCase, episodes: usize, steps: usize, seed: u64) -> Result<Vec<(Algorithm, f64)>, HarnessError> {
    Algorithm::ALL
        .iter()
        .map(|&algorithm| {
            let mut cfg = ExperimentConfig::new(algorithm, case);
            cfg.episodes = episodes;
            cfg.steps = steps;
            cfg.eval_episodes = 1;
            cfg.base_seed = seed;
            let out = train_seed(&cfg, 0)?;
            Ok((algorithm, run_wall_time(&out.metrics)))
        })
        .collect()
}
