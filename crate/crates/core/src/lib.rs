//! Inventory control for a three-stage pull chain: a simulator, a
//! guaranteed-service baseline, and tabular and actor-critic learners.

pub mod a2c;
pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gsm;
pub mod maa2c;
pub mod metrics;
pub mod nn;
pub mod q_learning;
pub mod stats;

pub use env::{ActionVector, ChainConfig, CostCase, Env, EnvState, Items, LocalObs, StepOutcome};
pub use error::{EnvError, GsmError, HarnessError, NnError, QError, StatsError};
