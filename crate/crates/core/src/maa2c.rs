//! Actor-critic with one critic on the joint state and one actor per stage.
//!
//! Each actor sees only its own two-component local observation, scaled by
//! 1/capacity, and emits one scalar: production for the factory, the order for
//! the warehouse and the next reorder point for the retailer. All actors are
//! trained with the TD advantage of the shared critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::a2c::{action_ranges, init_rng, joint_input, mean_head, sample_rng, static_ranges, Actor, Critic, REWARD_SCALE};
use crate::env::{ActionBox, ActionVector, ChainConfig, Env, LocalObs, RawAction};
use crate::error::NnError;
use crate::metrics::{evaluate_policy, EpisodeAccumulator, EpisodeClock, Evaluation, RunMetrics};
use crate::nn::MeanHead;

pub const LOCAL_INPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaA2cHyper {
    pub gamma: f64,
    pub policy_std: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Squash each actor's mean into its feasible range. Every range is a
    /// function of that actor's own observation.
    pub bounded_mean: bool,
}

impl Default for MaA2cHyper {
    fn default() -> Self {
        MaA2cHyper {
            gamma: 0.2,
            policy_std: 2.0,
            actor_lr: 0.001,
            critic_lr: 0.001,
            bounded_mean: true,
        }
    }
}

impl MaA2cHyper {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        for (name, v) in [
            ("policy_std", self.policy_std),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} = {v} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaA2cAgent {
    pub critic: Critic,
    /// Factory, warehouse, retailer.
    pub actors: Vec<Actor>,
    pub hyper: MaA2cHyper,
}

/// Scaled local observations in actor order.
pub fn local_inputs(obs: &LocalObs, config: &ChainConfig) -> Vec<[f64; LOCAL_INPUTS]> {
    let c = config.capacity as f64;
    [obs.factory, obs.warehouse, obs.retailer]
        .iter()
        .map(|o| [o[0] as f64 / c, o[1] as f64 / c])
        .collect()
}

impl MaA2cAgent {
    pub fn new(config: &ChainConfig, hyper: MaA2cHyper, seed: u64) -> Result<Self, NnError> {
        MaA2cAgent::with_agents(3, config, hyper, seed)
    }

    /// `agents` decentralized actors; the chain itself uses three.
    pub fn with_agents(agents: usize, config: &ChainConfig, hyper: MaA2cHyper, seed: u64) -> Result<Self, NnError> {
        let mut rng = init_rng(seed);
        let critic = Critic::new(3, hyper.critic_lr, &mut rng)?;
        let ranges = static_ranges(config);
        let actors = (0..agents)
            .map(|i| {
                let head = mean_head(hyper.bounded_mean, vec![ranges[i.min(2)]]);
                Actor::new(LOCAL_INPUTS, 1, hyper.policy_std, head, hyper.actor_lr, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MaA2cAgent { critic, actors, hyper })
    }

    pub fn actor_param_count(&self) -> usize {
        self.actors.iter().map(|a| a.policy.mean_net.param_count()).sum()
    }

    /// Per-actor mean heads for a state with feasible box `b`.
    pub fn heads_for(&self, b: &ActionBox) -> Vec<MeanHead> {
        let ranges = action_ranges(b);
        self.actors
            .iter()
            .enumerate()
            .map(|(i, a)| match a.policy.head {
                MeanHead::Bounded(_) => MeanHead::Bounded(vec![ranges[i.min(2)]]),
                ref linear => linear.clone(),
            })
            .collect()
    }

    /// Each actor samples its scalar from its own Gaussian, in actor order.
    pub fn act_all<R: Rng + ?Sized>(
        &self,
        obs: &[[f64; LOCAL_INPUTS]],
        heads: &[MeanHead],
        rng: &mut R,
    ) -> Result<Vec<f64>, NnError> {
        self.check_agents(obs.len())?;
        self.check_agents(heads.len())?;
        let mut out = Vec::with_capacity(obs.len());
        for ((actor, o), h) in self.actors.iter().zip(obs).zip(heads) {
            out.push(actor.policy.sample_in(o, h, rng)?[0]);
        }
        Ok(out)
    }

    pub fn mean_actions(&self, obs: &[[f64; LOCAL_INPUTS]], heads: &[MeanHead]) -> Result<Vec<f64>, NnError> {
        self.check_agents(obs.len())?;
        self.check_agents(heads.len())?;
        self.actors
            .iter()
            .zip(obs)
            .zip(heads)
            .map(|((actor, o), h)| Ok(actor.policy.mean_in(o, h)?[0]))
            .collect()
    }

    fn check_agents(&self, got: usize) -> Result<(), NnError> {
        if got != self.actors.len() {
            return Err(NnError::Shape {
                expected: self.actors.len(),
                got,
            });
        }
        Ok(())
    }
}

/// One joint transition with per-actor observations and raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransition {
    pub state: Vec<f64>,
    pub local_obs: Vec<[f64; LOCAL_INPUTS]>,
    pub heads: Vec<MeanHead>,
    pub actions: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Updates the critic once and every actor with the same TD advantage.
/// Returns the advantage handed to each actor, in actor order.
pub fn maa2c_step(agent: &mut MaA2cAgent, tr: &JointTransition) -> Result<Vec<f64>, NnError> {
    let delta = agent.critic.td_update(tr.reward, &tr.state, &tr.next_state, agent.hyper.gamma)?;
    let mut fed = Vec::with_capacity(agent.actors.len());
    for (((actor, o), h), a) in agent.actors.iter_mut().zip(&tr.local_obs).zip(&tr.heads).zip(&tr.actions) {
        actor.update(o, &[*a], h, delta)?;
        fed.push(delta);
    }
    Ok(fed)
}

fn raw(v: &[f64]) -> RawAction {
    RawAction {
        q_factory: v[0],
        q_warehouse: v[1],
        rp_next: v[2],
    }
}

pub fn train_maa2c(
    env: &mut Env,
    agent: &mut MaA2cAgent,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<RunMetrics>, NnError> {
    let mut rng = sample_rng(seed);
    let config = env.config().clone();
    let mut metrics = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let clock = EpisodeClock::start();
        let mut acc = EpisodeAccumulator::default();
        env.reset();
        for _ in 0..steps {
            let state = joint_input(env.state(), &config).to_vec();
            let local_obs = local_inputs(&env.observe_local(), &config);
            let heads = agent.heads_for(&env.action_box());
            let actions = agent.act_all(&local_obs, &heads, &mut rng)?;
            let out = env.step(env.clip(raw(&actions)).action);
            let tr = JointTransition {
                state,
                local_obs,
                heads,
                actions,
                reward: out.reward / REWARD_SCALE,
                next_state: joint_input(&out.next_state, &config).to_vec(),
            };
            maa2c_step(agent, &tr)?;
            acc.push(&out);
        }
        metrics.push(acc.finish(episode, clock.seconds()));
    }
    Ok(metrics)
}

/// Decentralized deterministic action: every actor's clipped mean.
pub fn mean_policy_action(agent: &MaA2cAgent, env: &Env) -> ActionVector {
    let obs = local_inputs(&env.observe_local(), env.config());
    let mu = agent
        .mean_actions(&obs, &agent.heads_for(&env.action_box()))
        .expect("three local observations");
    env.clip(raw(&mu)).action
}

pub fn evaluate_maa2c(env: &mut Env, agent: &MaA2cAgent, episodes: usize, steps: usize) -> Evaluation {
    evaluate_policy(env, episodes, steps, |e| mean_policy_action(agent, e))
}
