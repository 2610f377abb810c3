//! Tabular Q-learning over the joint state `(I_f, I_w, rp)` and joint action
//! `(q_f, q_w, rp_next)`.
//!
//! The table is sparse. Greedy choices and bootstrap targets only consider
//! entries that have been written and are feasible in the current box; with
//! none, the greedy action is the lowest-index feasible action and the
//! bootstrap value is 0. Action index order is lexicographic in
//! `(q_warehouse, q_factory, rp_next)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionBox, ActionVector, Env, EnvState, Items};
use crate::error::QError;
use crate::metrics::{evaluate_policy, EpisodeAccumulator, EpisodeClock, Evaluation, RunMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for QHyper {
    fn default() -> Self {
        QHyper {
            alpha: 0.8,
            gamma: 0.2,
            epsilon: 0.5,
        }
    }
}

impl QHyper {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Discretized joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub inv_factory: Items,
    pub inv_warehouse: Items,
    pub rp: Items,
}

impl From<&EnvState> for StateKey {
    fn from(s: &EnvState) -> Self {
        StateKey {
            inv_factory: s.inv_factory,
            inv_warehouse: s.inv_warehouse,
            rp: s.rp,
        }
    }
}

/// Packs an action so that integer order is action index order.
fn pack(a: &ActionVector) -> u32 {
    (a.q_warehouse << 16) | (a.q_factory << 8) | a.rp_next
}

fn unpack(k: u32) -> ActionVector {
    ActionVector {
        q_warehouse: k >> 16,
        q_factory: (k >> 8) & 0xff,
        rp_next: k & 0xff,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: HashMap<StateKey, BTreeMap<u32, f64>>,
}

impl QTable {
    pub fn new() -> Self {
        QTable::default()
    }

    /// Stored value, 0 if absent.
    pub fn get(&self, s: &StateKey, a: &ActionVector) -> f64 {
        self.entries
            .get(s)
            .and_then(|m| m.get(&pack(a)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, s: StateKey, a: &ActionVector, value: f64) {
        self.entries.entry(s).or_default().insert(pack(a), value);
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn states(&self) -> usize {
        self.entries.len()
    }

    /// Best stored feasible entry, lowest index on ties.
    pub fn best_stored(&self, s: &StateKey, feasible: &FeasibleSet) -> Option<(ActionVector, f64)> {
        let row = self.entries.get(s)?;
        let mut best: Option<(ActionVector, f64)> = None;
        for (&k, &v) in row {
            let a = unpack(k);
            if !feasible.contains(&a) {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best
    }

    /// Value of the greedy action, 0 when nothing feasible is stored.
    pub fn max_value(&self, s: &StateKey, feasible: &FeasibleSet) -> f64 {
        self.best_stored(s, feasible).map_or(0.0, |(_, v)| v)
    }

    /// Greedy action: best stored feasible entry, else the first feasible action.
    pub fn greedy(&self, s: &StateKey, feasible: &FeasibleSet) -> Result<ActionVector, QError> {
        match self.best_stored(s, feasible) {
            Some((a, _)) => Ok(a),
            None => feasible.first(),
        }
    }

    /// `state action value` lines sorted by state then action index.
    pub fn export(&self) -> String {
        let mut states: Vec<&StateKey> = self.entries.keys().collect();
        states.sort();
        let mut out = String::from("inv_factory inv_warehouse rp q_factory q_warehouse rp_next value\n");
        for s in states {
            for (&k, v) in &self.entries[s] {
                let a = unpack(k);
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {} {v:e}",
                    s.inv_factory, s.inv_warehouse, s.rp, a.q_factory, a.q_warehouse, a.rp_next
                );
            }
        }
        out
    }

    pub fn import(text: &str) -> Result<Self, String> {
        let mut table = QTable::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(format!("line {}: expected 7 fields", n + 1));
            }
            let int = |i: usize| f[i].parse::<Items>().map_err(|e| format!("line {}: {e}", n + 1));
            let value = f[6].parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1))?;
            let s = StateKey {
                inv_factory: int(0)?,
                inv_warehouse: int(1)?,
                rp: int(2)?,
            };
            table.set(s, &ActionVector::new(int(3)?, int(4)?, int(5)?), value);
        }
        Ok(table)
    }
}

/// Integral actions inside an [`ActionBox`], in action index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibleSet {
    pub bounds: ActionBox,
}

impl FeasibleSet {
    pub fn new(bounds: ActionBox) -> Self {
        FeasibleSet { bounds }
    }

    pub fn contains(&self, a: &ActionVector) -> bool {
        self.bounds.contains(a)
    }

    fn rp_span(&self) -> u64 {
        u64::from(self.bounds.rp_hi - self.bounds.rp_lo) + 1
    }

    fn per_warehouse(&self, q_w: Items) -> u64 {
        let (lo, hi) = self.bounds.factory_range(q_w);
        u64::from(hi - lo + 1) * self.rp_span()
    }

    pub fn len(&self) -> u64 {
        (self.bounds.warehouse_lo..=self.bounds.warehouse_hi)
            .map(|q| self.per_warehouse(q))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self) -> Result<ActionVector, QError> {
        self.nth(0).ok_or(QError::EmptyFeasibleSet)
    }

    /// Action with index `i`.
    pub fn nth(&self, mut i: u64) -> Option<ActionVector> {
        let rp = self.rp_span();
        for q_w in self.bounds.warehouse_lo..=self.bounds.warehouse_hi {
            let n = self.per_warehouse(q_w);
            if i < n {
                let (f_lo, _) = self.bounds.factory_range(q_w);
                return Some(ActionVector {
                    q_warehouse: q_w,
                    q_factory: f_lo + (i / rp) as Items,
                    rp_next: self.bounds.rp_lo + (i % rp) as Items,
                });
            }
            i -= n;
        }
        None
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ActionVector, QError> {
        let n = self.len();
        if n == 0 {
            return Err(QError::EmptyFeasibleSet);
        }
        self.nth(rng.gen_range(0..n)).ok_or(QError::EmptyFeasibleSet)
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionVector> + '_ {
        (0..self.len()).filter_map(move |i| self.nth(i))
    }
}

/// Epsilon-greedy choice. The uniform draw is taken before the greedy lookup
/// so the random stream does not depend on table contents.
pub fn select_action<R: Rng + ?Sized>(
    table: &QTable,
    state: &StateKey,
    feasible: &FeasibleSet,
    hyper: &QHyper,
    rng: &mut R,
) -> Result<ActionVector, QError> {
    if feasible.is_empty() {
        return Err(QError::EmptyFeasibleSet);
    }
    let u: f64 = rng.gen();
    if u < hyper.epsilon {
        feasible.sample(rng)
    } else {
        table.greedy(state, feasible)
    }
}

/// One Q-learning backup; returns the new `Q(s, a)`.
pub fn q_update(
    table: &mut QTable,
    s: StateKey,
    a: &ActionVector,
    r: f64,
    s_next: &StateKey,
    feasible_next: &FeasibleSet,
    hyper: &QHyper,
) -> f64 {
    let old = table.get(&s, a);
    let target = r + hyper.gamma * table.max_value(s_next, feasible_next);
    let new = old + hyper.alpha * (target - old);
    table.set(s, a, new);
    new
}

/// Trains `table` in place on `env`. Rewards enter the table unscaled.
pub fn train_q(
    env: &mut Env,
    table: &mut QTable,
    hyper: &QHyper,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Vec<RunMetrics> {
    let mut rng = agent_rng(seed);
    let mut metrics = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let clock = EpisodeClock::start();
        let mut acc = EpisodeAccumulator::default();
        env.reset();
        let mut feasible = FeasibleSet::new(env.action_box());
        for _ in 0..steps {
            let s = StateKey::from(env.state());
            let a = select_action(table, &s, &feasible, hyper, &mut rng)
                .expect("action boxes always hold their lower corner");
            let out = env.step(a);
            let s_next = StateKey::from(&out.next_state);
            feasible = FeasibleSet::new(env.action_box());
            q_update(table, s, &a, out.reward, &s_next, &feasible, hyper);
            acc.push(&out);
        }
        metrics.push(acc.finish(episode, clock.seconds()));
    }
    metrics
}

/// Greedy rollouts with exploration switched off.
pub fn evaluate_q(env: &mut Env, table: &QTable, episodes: usize, steps: usize) -> Evaluation {
    evaluate_policy(env, episodes, steps, |e| {
        let feasible = FeasibleSet::new(e.action_box());
        table
            .greedy(&StateKey::from(e.state()), &feasible)
            .expect("action boxes always hold their lower corner")
    })
}

pub(crate) fn agent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    rng
}
