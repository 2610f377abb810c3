//! Trained agents on disk and their value/policy grids.
//!
//! An agent file is plain text: a header line, then `--- name` sections
//! holding the chain configuration and hyperparameters as TOML and each table
//! or network in its own text layout. Optimizer state is not kept.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::a2c::{joint_input, mean_head, static_ranges, A2cAgent, A2cHyper, Actor, Critic};
use crate::config::Algorithm;
use crate::env::{observe_local, ActionBox, ChainConfig, EnvState, IncomingOrders, Items};
use crate::error::{HarnessError, NnError};
use crate::maa2c::{local_inputs, MaA2cAgent, MaA2cHyper, LOCAL_INPUTS};
use crate::nn::{Adam, GaussianPolicy, MeanHead, Mlp};
use crate::q_learning::QTable;

const HEADER: &str = "echelon-agent v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Q(QTable),
    A2c(A2cAgent),
    Maa2c(MaA2cAgent),
}

/// An agent together with the chain it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedAgent {
    pub chain: ChainConfig,
    pub agent: Agent,
}

impl Agent {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Q(_) => Algorithm::Q,
            Agent::A2c(_) => Algorithm::A2c,
            Agent::Maa2c(_) => Algorithm::Maa2c,
        }
    }
}

fn toml_text<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("plain structs serialize to TOML")
}

impl SavedAgent {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER} {}", self.agent.algorithm());
        let mut section = |name: &str, body: &str| {
            let _ = writeln!(out, "--- {name}");
            out.push_str(body);
        };
        section("chain", &toml_text(&self.chain));
        match &self.agent {
            Agent::Q(table) => section("table", &table.export()),
            Agent::A2c(a) => {
                section("hyper", &toml_text(&a.hyper));
                section("critic", &a.critic.net.to_text());
                section("actor", &a.actor.policy.mean_net.to_text());
            }
            Agent::Maa2c(a) => {
                section("hyper", &toml_text(&a.hyper));
                section("critic", &a.critic.net.to_text());
                for actor in &a.actors {
                    section("actor", &actor.policy.mean_net.to_text());
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        let algorithm: Algorithm = head
            .strip_prefix(HEADER)
            .ok_or_else(|| format!("bad header {head:?}"))?
            .trim()
            .parse()
            .map_err(|e: HarnessError| e.to_string())?;
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in lines {
            if let Some(name) = line.strip_prefix("--- ") {
                sections.push((name.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else {
                return Err(format!("text before the first section: {line:?}"));
            }
        }
        let take = |name: &str| -> Vec<&str> {
            sections
                .iter()
                .filter(|(n, _)| n == name)
                .map(|(_, b)| b.as_str())
                .collect()
        };
        let one = |name: &str| -> Result<&str, String> {
            match take(name).as_slice() {
                [body] => Ok(*body),
                other => Err(format!("expected one {name} section, found {}", other.len())),
            }
        };
        let chain: ChainConfig = toml::from_str(one("chain")?).map_err(|e| format!("chain: {e}"))?;
        chain.validate().map_err(|e| e.to_string())?;
        let net = |body: &str| Mlp::from_text(body).map_err(|e| e.to_string());
        let agent = match algorithm {
            Algorithm::Q => Agent::Q(QTable::import(one("table")?)?),
            Algorithm::A2c => {
                let hyper: A2cHyper = toml::from_str(one("hyper")?).map_err(|e| format!("hyper: {e}"))?;
                let head = mean_head(hyper.bounded_mean, static_ranges(&chain).to_vec());
                let critic = critic_from(net(one("critic")?)?, hyper.critic_lr);
                let actor = actor_from(net(one("actor")?)?, hyper.policy_std, head, hyper.actor_lr)
                    .map_err(|e| e.to_string())?;
                check_net(&critic.net, 3, 1)?;
                check_net(&actor.policy.mean_net, 3, 3)?;
                Agent::A2c(A2cAgent { critic, actor, hyper })
            }
            Algorithm::Maa2c => {
                let hyper: MaA2cHyper = toml::from_str(one("hyper")?).map_err(|e| format!("hyper: {e}"))?;
                let critic = critic_from(net(one("critic")?)?, hyper.critic_lr);
                check_net(&critic.net, 3, 1)?;
                let ranges = static_ranges(&chain);
                let actors = take("actor")
                    .into_iter()
                    .enumerate()
                    .map(|(i, body)| {
                        let head = mean_head(hyper.bounded_mean, vec![ranges[i.min(2)]]);
                        let m = net(body)?;
                        check_net(&m, LOCAL_INPUTS, 1)?;
                        actor_from(m, hyper.policy_std, head, hyper.actor_lr).map_err(|e| e.to_string())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if actors.len() != 3 {
                    return Err(format!("expected 3 actors, found {}", actors.len()));
                }
                Agent::Maa2c(MaA2cAgent { critic, actors, hyper })
            }
        };
        Ok(SavedAgent { chain, agent })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        SavedAgent::from_text(&text).map_err(|reason| HarnessError::Format {
            path: path.display().to_string(),
            reason,
        })
    }
}

fn critic_from(net: Mlp, lr: f64) -> Critic {
    let opt = Adam::with_rate(net.param_count(), lr);
    Critic { net, opt }
}

fn actor_from(net: Mlp, std: f64, head: MeanHead, lr: f64) -> Result<Actor, NnError> {
    let opt = Adam::with_rate(net.param_count(), lr);
    Ok(Actor {
        policy: GaussianPolicy::new(net, std, head)?,
        opt,
    })
}

fn check_net(net: &Mlp, inputs: usize, outputs: usize) -> Result<(), String> {
    if (net.input_size(), net.output_size()) != (inputs, outputs) {
        return Err(format!(
            "network maps {} to {}, expected {inputs} to {outputs}",
            net.input_size(),
            net.output_size()
        ));
    }
    Ok(())
}

/// One cell of a value/policy grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub inv_factory: Items,
    pub inv_warehouse: Items,
    pub value: f64,
    /// Mean production the factory actor proposes, in items.
    pub factory_mean: f64,
}

/// Critic value and factory mean over every `(I_f, I_w)` pair at reorder
/// point `rp`, with no order pending anywhere.
pub fn policy_grid(saved: &SavedAgent, rp: Items) -> Result<Vec<GridRow>, HarnessError> {
    let chain = &saved.chain;
    if rp > chain.rp_max {
        return Err(HarnessError::Argument(format!("rp {rp} exceeds rp_max {}", chain.rp_max)));
    }
    let mut rows = Vec::with_capacity(((chain.capacity + 1) * (chain.capacity + 1)) as usize);
    for f in 0..=chain.capacity {
        for w in 0..=chain.capacity {
            let state = EnvState::idle(f, w, 0, rp);
            let x = joint_input(&state, chain);
            let b = ActionBox::new(&state, 0, chain);
            let (value, factory_mean) = match &saved.agent {
                Agent::Q(_) => {
                    return Err(HarnessError::Argument(
                        "grid export needs an actor-critic agent, got a Q table".into(),
                    ))
                }
                Agent::A2c(a) => (a.critic.value(&x)?, a.mean_action(&x, &a.head_for(&b))?[0]),
                Agent::Maa2c(a) => {
                    let obs = local_inputs(&observe_local(&state, IncomingOrders::of(&state)), chain);
                    (a.critic.value(&x)?, a.mean_actions(&obs, &a.heads_for(&b))?[0])
                }
            };
            rows.push(GridRow {
                inv_factory: f,
                inv_warehouse: w,
                value,
                factory_mean,
            });
        }
    }
    Ok(rows)
}

/// Writes `grid_rp{rp}.csv` under `dir` and returns its path.
pub fn export_policy_grid(saved: &SavedAgent, rp: Items, dir: &Path) -> Result<std::path::PathBuf, HarnessError> {
    let rows = policy_grid(saved, rp)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(format!("grid_rp{rp}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

pub fn read_grid(path: &Path) -> Result<Vec<GridRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<GridRow>, _>>()?)
}

/// Cell with the largest value; the first one on ties.
pub fn grid_argmax(rows: &[GridRow]) -> Option<GridRow> {
    rows.iter().copied().fold(None, |best, r| match best {
        Some(b) if b.value >= r.value => Some(b),
        _ => Some(r),
    })
}
