//! Centralized one-step actor-critic over the joint state.
//!
//! Inputs are `(I_f, I_w, rp) / capacity`; rewards are divided by
//! [`REWARD_SCALE`] before they reach either network. The actor proposes raw
//! `(q_f, q_w, rp_next)` in item units; the environment sees the clipped
//! action while the policy gradient uses the raw sample. With a bounded mean
//! each component is squashed into the feasible range of the current state, so
//! the mean never drifts where every sample clips to the same action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionBox, ActionVector, ChainConfig, Env, EnvState, RawAction};
use crate::error::NnError;
use crate::metrics::{evaluate_policy, EpisodeAccumulator, EpisodeClock, Evaluation, RunMetrics};
use crate::nn::{Adam, Cache, GaussianPolicy, MeanHead, Mlp};

pub const REWARD_SCALE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A2cHyper {
    pub gamma: f64,
    pub policy_std: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Squash each action mean into its feasible range; otherwise the mean
    /// is the raw network output.
    pub bounded_mean: bool,
}

impl Default for A2cHyper {
    fn default() -> Self {
        A2cHyper {
            gamma: 0.2,
            policy_std: 2.0,
            actor_lr: 0.001,
            critic_lr: 0.001,
            bounded_mean: true,
        }
    }
}

impl A2cHyper {
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

/// Network input for a joint state.
pub fn joint_input(state: &EnvState, config: &ChainConfig) -> [f64; 3] {
    let c = config.capacity as f64;
    [
        state.inv_factory as f64 / c,
        state.inv_warehouse as f64 / c,
        state.rp as f64 / c,
    ]
}

/// Ranges of `(q_f, q_w, rp_next)` in item units for one action box.
pub fn action_ranges(b: &ActionBox) -> [(f64, f64); 3] {
    b.ranges().map(|(lo, hi)| (lo as f64, hi as f64))
}

/// Ranges with nothing in stock or on order.
pub fn static_ranges(config: &ChainConfig) -> [(f64, f64); 3] {
    let c = config.capacity as f64;
    [(0.0, c), (0.0, c), (config.rp_min as f64, config.rp_max as f64)]
}

pub(crate) fn mean_head(bounded: bool, ranges: Vec<(f64, f64)>) -> MeanHead {
    if bounded {
        MeanHead::Bounded(ranges)
    } else {
        MeanHead::Linear(1.0)
    }
}

/// A value network with its optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    pub opt: Adam,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(inputs: usize, lr: f64, rng: &mut R) -> Result<Self, NnError> {
        let net = Mlp::standard(inputs, 1, rng)?;
        let opt = Adam::with_rate(net.param_count(), lr);
        Ok(Critic { net, opt })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, NnError> {
        Ok(self.net.forward(x)?[0])
    }

    /// Moves `V(x)` towards `V(x) + delta`.
    pub fn update(&mut self, x: &[f64], delta: f64) -> Result<(), NnError> {
        let cache = self.net.forward_cached(x)?;
        self.update_cached(&cache, delta)
    }

    fn update_cached(&mut self, cache: &Cache, delta: f64) -> Result<(), NnError> {
        let grads = self.net.backward(cache, &[-delta])?;
        self.opt.step(self.net.params_mut(), &grads)
    }

    /// TD advantage of one transition, then the critic update it implies.
    pub fn td_update(&mut self, reward: f64, s: &[f64], s_next: &[f64], gamma: f64) -> Result<f64, NnError> {
        let cache = self.net.forward_cached(s)?;
        let delta = reward + gamma * self.value(s_next)? - cache.output()[0];
        self.update_cached(&cache, delta)?;
        Ok(delta)
    }
}

/// A Gaussian policy with its optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub policy: GaussianPolicy,
    pub opt: Adam,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        std: f64,
        head: MeanHead,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let policy = GaussianPolicy::new(Mlp::standard(inputs, outputs, rng)?, std, head)?;
        let opt = Adam::with_rate(policy.mean_net.param_count(), lr);
        Ok(Actor { policy, opt })
    }

    /// Ascends `delta * ln pi(a|x)`.
    pub fn update(&mut self, x: &[f64], a: &[f64], head: &MeanHead, delta: f64) -> Result<(), NnError> {
        let (_, mut grads) = self.policy.logprob_param_grad_in(x, a, head)?;
        for g in &mut grads {
            *g *= -delta;
        }
        self.opt.step(self.policy.mean_net.params_mut(), &grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2cAgent {
    pub critic: Critic,
    pub actor: Actor,
    pub hyper: A2cHyper,
}

/// One observed transition. `action` is the raw policy sample and `head`
/// the mean head it was drawn under.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub head: MeanHead,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// `r + gamma V(s') - V(s)`.
pub fn td_advantage(critic: &Critic, reward: f64, s: &[f64], s_next: &[f64], gamma: f64) -> Result<f64, NnError> {
    Ok(reward + gamma * critic.value(s_next)? - critic.value(s)?)
}

impl A2cAgent {
    pub fn new(config: &ChainConfig, hyper: A2cHyper, seed: u64) -> Result<Self, NnError> {
        let mut rng = init_rng(seed);
        let critic = Critic::new(3, hyper.critic_lr, &mut rng)?;
        let head = mean_head(hyper.bounded_mean, static_ranges(config).to_vec());
        let actor = Actor::new(3, 3, hyper.policy_std, head, hyper.actor_lr, &mut rng)?;
        Ok(A2cAgent { critic, actor, hyper })
    }

    /// Mean head for a state with feasible box `b`.
    pub fn head_for(&self, b: &ActionBox) -> MeanHead {
        match self.actor.policy.head {
            MeanHead::Bounded(_) => MeanHead::Bounded(action_ranges(b).to_vec()),
            ref linear => linear.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], head: &MeanHead, rng: &mut R) -> Result<Vec<f64>, NnError> {
        self.actor.policy.sample_in(x, head, rng)
    }

    pub fn mean_action(&self, x: &[f64], head: &MeanHead) -> Result<Vec<f64>, NnError> {
        self.actor.policy.mean_in(x, head)
    }

    /// Online update from one transition; returns the TD advantage used.
    pub fn step(&mut self, tr: &Transition) -> Result<f64, NnError> {
        let delta = self.critic.td_update(tr.reward, &tr.state, &tr.next_state, self.hyper.gamma)?;
        self.actor.update(&tr.state, &tr.action, &tr.head, delta)?;
        Ok(delta)
    }
}

pub fn a2c_step(agent: &mut A2cAgent, tr: &Transition) -> Result<f64, NnError> {
    agent.step(tr)
}

fn raw(v: &[f64]) -> RawAction {
    RawAction {
        q_factory: v[0],
        q_warehouse: v[1],
        rp_next: v[2],
    }
}

pub fn train_a2c(
    env: &mut Env,
    agent: &mut A2cAgent,
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
            let x = joint_input(env.state(), &config).to_vec();
            let head = agent.head_for(&env.action_box());
            let a = agent.sample(&x, &head, &mut rng)?;
            let clipped = env.clip(raw(&a));
            let out = env.step(clipped.action);
            let tr = Transition {
                state: x,
                head,
                action: a,
                reward: out.reward / REWARD_SCALE,
                next_state: joint_input(&out.next_state, &config).to_vec(),
            };
            agent.step(&tr)?;
            acc.push(&out);
        }
        metrics.push(acc.finish(episode, clock.seconds()));
    }
    Ok(metrics)
}

/// Deterministic action: the clipped policy mean.
pub fn mean_policy_action(agent: &A2cAgent, env: &Env) -> ActionVector {
    let x = joint_input(env.state(), env.config());
    let mu = agent
        .mean_action(&x, &agent.head_for(&env.action_box()))
        .expect("joint input has three components");
    env.clip(raw(&mu)).action
}

/// Rollouts with the actor alone, acting on its mean.
pub fn evaluate_a2c(env: &mut Env, agent: &A2cAgent, episodes: usize, steps: usize) -> Evaluation {
    evaluate_policy(env, episodes, steps, |e| mean_policy_action(agent, e))
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    rng
}

pub(crate) fn sample_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(6);
    rng
}
