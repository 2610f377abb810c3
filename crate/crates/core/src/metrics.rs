//! Per-episode telemetry and evaluation rollouts shared by every learner.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Env, StepOutcome};

/// One training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub episode: usize,
    pub total_reward: f64,
    pub mean_inv_factory: f64,
    pub mean_inv_warehouse: f64,
    pub mean_rp: f64,
    pub stockout_units: u64,
    /// Seconds. Kept out of the metrics CSV so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Running sums over the steps of one episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    steps: u64,
    reward: f64,
    inv_factory: u64,
    inv_warehouse: u64,
    rp: u64,
    stockouts: u64,
}

impl EpisodeAccumulator {
    pub fn push(&mut self, outcome: &StepOutcome) {
        let s = &outcome.next_state;
        self.steps += 1;
        self.reward += outcome.reward;
        self.inv_factory += u64::from(s.inv_factory);
        self.inv_warehouse += u64::from(s.inv_warehouse);
        self.rp += u64::from(s.rp);
        self.stockouts += u64::from(outcome.stockout_units);
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn finish(&self, episode: usize, wall_time: f64) -> RunMetrics {
        let n = self.steps.max(1) as f64;
        RunMetrics {
            episode,
            total_reward: self.reward,
            mean_inv_factory: self.inv_factory as f64 / n,
            mean_inv_warehouse: self.inv_warehouse as f64 / n,
            mean_rp: self.rp as f64 / n,
            stockout_units: self.stockouts,
            wall_time,
        }
    }
}

/// Behavior of a fixed policy, averaged over evaluation rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_inv_factory: f64,
    pub mean_inv_warehouse: f64,
    pub mean_rp: f64,
    pub stockouts_per_episode: f64,
    pub reward_per_episode: f64,
}

/// Trailing fraction of each evaluation episode that inventory means cover.
pub const EVAL_TAIL: f64 = 0.1;

/// Rolls out `policy` from fresh resets. Inventory and rp means cover the last
/// [`EVAL_TAIL`] of every episode's steps; stockouts and rewards are per full
/// episode.
pub fn evaluate_policy<F>(env: &mut Env, episodes: usize, steps: usize, mut policy: F) -> Evaluation
where
    F: FnMut(&Env) -> ActionVector,
{
    let keep = ((steps as f64 * EVAL_TAIL).ceil() as usize).max(1);
    let skip = steps.saturating_sub(keep);
    let mut tail = EpisodeAccumulator::default();
    let mut stockouts = 0u64;
    let mut reward = 0.0;
    for _ in 0..episodes {
        env.reset();
        for k in 0..steps {
            let action = policy(env);
            let out = env.step(action);
            stockouts += u64::from(out.stockout_units);
            reward += out.reward;
            if k >= skip {
                tail.push(&out);
            }
        }
    }
    let m = tail.finish(0, 0.0);
    let e = episodes.max(1) as f64;
    Evaluation {
        mean_inv_factory: m.mean_inv_factory,
        mean_inv_warehouse: m.mean_inv_warehouse,
        mean_rp: m.mean_rp,
        stockouts_per_episode: stockouts as f64 / e,
        reward_per_episode: reward / e,
    }
}

/// Stopwatch for one episode.
pub(crate) struct EpisodeClock(Instant);

impl EpisodeClock {
    pub(crate) fn start() -> Self {
        EpisodeClock(Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
