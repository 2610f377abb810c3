//! Discrete-time simulation of the serial Factory → Warehouse → Retailer chain.
//!
//! One call to [`Env::step`] covers the second half of the current period and
//! the first half of the next one, so that every decision point sits right
//! after the retailer has placed its order:
//!
//! 1. the factory ships the warehouse order plus its backlog from stock;
//! 2. factory shipments that are due are credited to the warehouse;
//! 3. the warehouse ships the retailer order plus its backlog from stock;
//! 4. the production run completes and the factory ships what it still owes;
//! 5. holding cost is assessed on the factory and warehouse stock;
//! 6. the clock advances, retailer shipments that are due are credited;
//! 7. consumer demand is served from retailer stock, unmet units are lost;
//! 8. the retailer reorders if its inventory position is at or below `rp`.
//!
//! Production that covers a backlog leaves the factory in the period it
//! completes, so it reaches the warehouse one period after the order.
//! Steps 1-5 never touch the retailer and steps 6-8 never touch the factory or
//! warehouse, so the reward is a function of the returned state alone.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::EnvError;

/// Whole items. Every stock level, order and shipment is integral.
pub type Items = u32;

/// The two holding-cost assignments studied for the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostCase {
    /// Expensive factory stock: `h_factory = 1000`, `h_warehouse = 5`.
    One,
    /// Expensive warehouse stock: `h_factory = 5`, `h_warehouse = 1000`.
    Two,
}

impl CostCase {
    pub fn from_number(n: u32) -> Result<Self, EnvError> {
        match n {
            1 => Ok(CostCase::One),
            2 => Ok(CostCase::Two),
            other => Err(EnvError::UnknownCase(other)),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            CostCase::One => 1,
            CostCase::Two => 2,
        }
    }

    /// `(h_factory, h_warehouse)`.
    pub fn holding_costs(self) -> (f64, f64) {
        match self {
            CostCase::One => (1000.0, 5.0),
            CostCase::Two => (5.0, 1000.0),
        }
    }
}

impl fmt::Display for CostCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Full parameterization of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Holding cost per item per period at the factory.
    pub h_factory: f64,
    /// Holding cost per item per period at the warehouse.
    pub h_warehouse: f64,
    /// Production time of the factory, in periods.
    pub lead_factory: u32,
    /// Processing time of the warehouse (shipment time to the retailer).
    pub lead_warehouse: u32,
    /// Transit time of factory shipments to the warehouse.
    pub transit_factory_warehouse: u32,
    /// Service time the retailer quotes to consumers.
    pub retailer_service: u32,
    /// Storage capacity of every stage.
    pub capacity: Items,
    /// Penalty per unit of unmet consumer demand.
    pub stockout_cost: f64,
    pub demand_mean: f64,
    /// Variance (not standard deviation) of per-period consumer demand.
    pub demand_var: f64,
    pub order_mean: f64,
    pub order_std: f64,
    pub rp_min: Items,
    pub rp_max: Items,
    /// Service-level multiplier used by the analytical model.
    pub service_z: f64,
}

impl ChainConfig {
    pub fn for_case(case: CostCase) -> Self {
        let (h_factory, h_warehouse) = case.holding_costs();
        ChainConfig {
            h_factory,
            h_warehouse,
            lead_factory: 1,
            lead_warehouse: 3,
            transit_factory_warehouse: 0,
            retailer_service: 0,
            capacity: 30,
            stockout_cost: 10_000.0,
            demand_mean: 2.0,
            demand_var: 0.01,
            order_mean: 10.0,
            order_std: 1.0,
            rp_min: 0,
            rp_max: 6,
            service_z: 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let non_negative = [
            ("h_factory", self.h_factory),
            ("h_warehouse", self.h_warehouse),
            ("stockout_cost", self.stockout_cost),
            ("demand_mean", self.demand_mean),
            ("demand_var", self.demand_var),
            ("order_mean", self.order_mean),
            ("order_std", self.order_std),
        ];
        for (field, value) in non_negative {
            if !value.is_finite() || value < 0.0 {
                return Err(EnvError::InvalidConfig {
                    field,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        if !self.service_z.is_finite() || self.service_z <= 0.0 {
            return Err(EnvError::InvalidConfig {
                field: "service_z",
                reason: format!("must be finite and > 0, got {}", self.service_z),
            });
        }
        if self.capacity == 0 || self.capacity > u8::MAX as Items {
            return Err(EnvError::InvalidConfig {
                field: "capacity",
                reason: format!("must lie in 1..=255, got {}", self.capacity),
            });
        }
        if self.rp_min > self.rp_max {
            return Err(EnvError::InvalidConfig {
                field: "rp_min",
                reason: format!("rp_min {} exceeds rp_max {}", self.rp_min, self.rp_max),
            });
        }
        if self.rp_max > self.capacity {
            return Err(EnvError::InvalidConfig {
                field: "rp_max",
                reason: format!(
                    "rp_max {} exceeds capacity {}",
                    self.rp_max, self.capacity
                ),
            });
        }
        Ok(())
    }

    /// `-(h_f * I_f + h_w * I_w + eta * stockouts)`.
    pub fn joint_reward(&self, inv_factory: Items, inv_warehouse: Items, stockouts: Items) -> f64 {
        -(self.h_factory * inv_factory as f64
            + self.h_warehouse * inv_warehouse as f64
            + self.stockout_cost * stockouts as f64)
    }
}

/// A quantity travelling on a link, credited once `arrival` is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shipment {
    pub arrival: u64,
    pub qty: Items,
}

/// Joint state of the chain at a decision point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub t: u64,
    pub inv_factory: Items,
    pub inv_warehouse: Items,
    pub inv_retailer: Items,
    /// Reorder point in force for the retailer.
    pub rp: Items,
    pub pipeline_production: VecDeque<Shipment>,
    pub pipeline_fw: VecDeque<Shipment>,
    pub pipeline_wr: VecDeque<Shipment>,
    /// Items the warehouse still owes the retailer.
    pub backlog_w: Items,
    /// Items the factory still owes the warehouse.
    pub backlog_f: Items,
    /// Order the retailer placed this period, not yet processed by the warehouse.
    pub retailer_order: Items,
    /// Order the warehouse placed on the factory at the previous decision.
    pub warehouse_order: Items,
    /// Consumer demand observed this period.
    pub demand: Items,
}

impl EnvState {
    /// A state with the given stock levels and nothing in flight.
    pub fn idle(inv_factory: Items, inv_warehouse: Items, inv_retailer: Items, rp: Items) -> Self {
        EnvState {
            t: 0,
            inv_factory,
            inv_warehouse,
            inv_retailer,
            rp,
            pipeline_production: VecDeque::new(),
            pipeline_fw: VecDeque::new(),
            pipeline_wr: VecDeque::new(),
            backlog_w: 0,
            backlog_f: 0,
            retailer_order: 0,
            warehouse_order: 0,
            demand: 0,
        }
    }

    /// Retailer stock plus everything on order from the warehouse.
    pub fn retailer_position(&self) -> Items {
        self.inv_retailer + pipeline_total(&self.pipeline_wr) + self.backlog_w
    }

    /// `(inv_factory, inv_warehouse, rp)`, the joint observation.
    pub fn joint(&self) -> [Items; 3] {
        [self.inv_factory, self.inv_warehouse, self.rp]
    }

    fn check(&self, config: &ChainConfig) -> Result<(), EnvError> {
        let cap = config.capacity;
        for (name, value) in [
            ("inv_factory", self.inv_factory),
            ("inv_warehouse", self.inv_warehouse),
            ("inv_retailer", self.inv_retailer),
        ] {
            if value > cap {
                return Err(EnvError::InvalidState(format!(
                    "{name} = {value} exceeds capacity {cap}"
                )));
            }
        }
        if self.rp > config.rp_max {
            return Err(EnvError::InvalidState(format!(
                "rp = {} exceeds rp_max {}",
                self.rp, config.rp_max
            )));
        }
        Ok(())
    }
}

pub fn pipeline_total(pipeline: &VecDeque<Shipment>) -> Items {
    pipeline.iter().map(|s| s.qty).sum()
}

/// Decision of the three stages for one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActionVector {
    /// Production started at the factory.
    pub q_factory: Items,
    /// Order placed by the warehouse on the factory.
    pub q_warehouse: Items,
    /// Retailer reorder point for the next period.
    pub rp_next: Items,
}

impl ActionVector {
    pub fn new(q_factory: Items, q_warehouse: Items, rp_next: Items) -> Self {
        ActionVector {
            q_factory,
            q_warehouse,
            rp_next,
        }
    }
}

/// Unrounded action as produced by a continuous policy, in item units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawAction {
    pub q_factory: f64,
    pub q_warehouse: f64,
    pub rp_next: f64,
}

impl From<[f64; 3]> for RawAction {
    fn from(v: [f64; 3]) -> Self {
        RawAction {
            q_factory: v[0],
            q_warehouse: v[1],
            rp_next: v[2],
        }
    }
}

impl From<ActionVector> for RawAction {
    fn from(a: ActionVector) -> Self {
        RawAction {
            q_factory: a.q_factory as f64,
            q_warehouse: a.q_warehouse as f64,
            rp_next: a.rp_next as f64,
        }
    }
}

/// Result of projecting a raw action onto the feasible box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clipped {
    pub action: ActionVector,
    /// Set when a lower bound exceeded its upper bound and won.
    pub capacity_violation: bool,
}

/// Feasible actions at one decision point.
///
/// The warehouse order ranges over `[max(0, incoming - I_w), C - I_w]`, the
/// production run over `[max(0, q_w - I_f), C - I_f]` and the reorder point
/// over `[rp_min, rp_max]`. An empty range collapses onto its lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionBox {
    pub warehouse_lo: Items,
    pub warehouse_hi: Items,
    pub inv_factory: Items,
    pub factory_room: Items,
    pub rp_lo: Items,
    pub rp_hi: Items,
    pub warehouse_violation: bool,
}

impl ActionBox {
    pub fn new(state: &EnvState, incoming_order: Items, config: &ChainConfig) -> Self {
        let lo = incoming_order.saturating_sub(state.inv_warehouse);
        let hi = config.capacity.saturating_sub(state.inv_warehouse);
        ActionBox {
            warehouse_lo: lo,
            warehouse_hi: hi.max(lo),
            inv_factory: state.inv_factory,
            factory_room: config.capacity.saturating_sub(state.inv_factory),
            rp_lo: config.rp_min,
            rp_hi: config.rp_max,
            warehouse_violation: lo > hi,
        }
    }

    /// Production range given the warehouse order `q_warehouse`.
    pub fn factory_range(&self, q_warehouse: Items) -> (Items, Items) {
        let lo = q_warehouse.saturating_sub(self.inv_factory);
        (lo, self.factory_room.max(lo))
    }

    /// Per-component ranges of `(q_f, q_w, rp_next)`; production is taken
    /// over `[0, C - I_f]` since its lower bound moves with `q_w`.
    pub fn ranges(&self) -> [(Items, Items); 3] {
        [
            (0, self.factory_room),
            (self.warehouse_lo, self.warehouse_hi),
            (self.rp_lo, self.rp_hi),
        ]
    }

    pub fn contains(&self, a: &ActionVector) -> bool {
        if a.q_warehouse < self.warehouse_lo || a.q_warehouse > self.warehouse_hi {
            return false;
        }
        let (lo, hi) = self.factory_range(a.q_warehouse);
        (lo..=hi).contains(&a.q_factory) && (self.rp_lo..=self.rp_hi).contains(&a.rp_next)
    }

    pub fn clip(&self, raw: RawAction) -> Clipped {
        let q_warehouse = round_into(raw.q_warehouse, self.warehouse_lo, self.warehouse_hi);
        let (f_lo, f_hi) = self.factory_range(q_warehouse);
        let q_factory = round_into(raw.q_factory, f_lo, f_hi);
        let rp_next = round_into(raw.rp_next, self.rp_lo, self.rp_hi);
        Clipped {
            action: ActionVector {
                q_factory,
                q_warehouse,
                rp_next,
            },
            capacity_violation: self.warehouse_violation || f_lo > self.factory_room,
        }
    }
}

fn round_into(x: f64, lo: Items, hi: Items) -> Items {
    if x.is_nan() {
        return lo;
    }
    x.round().clamp(lo as f64, hi as f64) as Items
}

/// Rounds and projects `raw` onto the feasible box of `state`.
pub fn clip_action(
    state: &EnvState,
    raw: RawAction,
    incoming_order: Items,
    config: &ChainConfig,
) -> Clipped {
    ActionBox::new(state, incoming_order, config).clip(raw)
}

/// Local observations of the three stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalObs {
    /// `(inv_factory, order from the warehouse)`.
    pub factory: [Items; 2],
    /// `(inv_warehouse, order from the retailer)`.
    pub warehouse: [Items; 2],
    /// `(rp, consumer demand this period)`.
    pub retailer: [Items; 2],
}

/// Orders visible to each stage at a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncomingOrders {
    pub to_factory: Items,
    pub to_warehouse: Items,
}

impl IncomingOrders {
    pub fn of(state: &EnvState) -> Self {
        IncomingOrders {
            to_factory: state.warehouse_order,
            to_warehouse: state.retailer_order,
        }
    }
}

pub fn observe_local(state: &EnvState, incoming: IncomingOrders) -> LocalObs {
    LocalObs {
        factory: [state.inv_factory, incoming.to_factory],
        warehouse: [state.inv_warehouse, incoming.to_warehouse],
        retailer: [state.rp, state.demand],
    }
}

/// Item movements during one step, for conservation accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flows {
    pub production_started: Items,
    pub received_factory: Items,
    pub shipped_to_warehouse: Items,
    pub received_warehouse: Items,
    pub shipped_to_retailer: Items,
    pub received_retailer: Items,
    pub demand: Items,
    pub served: Items,
    /// Units dropped because a stage was full when they arrived.
    pub discarded_factory: Items,
    pub discarded_warehouse: Items,
    pub discarded_retailer: Items,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub stockout_units: Items,
    pub shipped_to_retailer: Items,
    pub shipped_to_warehouse: Items,
    pub local_obs_factory: [Items; 2],
    pub local_obs_warehouse: [Items; 2],
    pub flows: Flows,
}

/// The simulation. One instance is strictly sequential; independent
/// instances share nothing.
#[derive(Debug, Clone)]
pub struct Env {
    config: ChainConfig,
    state: EnvState,
    init_rng: ChaCha8Rng,
    demand_rng: ChaCha8Rng,
    order_rng: ChaCha8Rng,
    demand_dist: Normal<f64>,
    order_dist: Normal<f64>,
}

impl Env {
    pub fn new(config: ChainConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let stream = |n: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        let demand_dist = Normal::new(config.demand_mean, config.demand_var.sqrt())
            .map_err(|e| EnvError::InvalidConfig {
                field: "demand_var",
                reason: e.to_string(),
            })?;
        let order_dist =
            Normal::new(config.order_mean, config.order_std).map_err(|e| EnvError::InvalidConfig {
                field: "order_std",
                reason: e.to_string(),
            })?;
        let rp = config.rp_min;
        Ok(Env {
            state: EnvState::idle(0, 0, 0, rp),
            config,
            init_rng: stream(1),
            demand_rng: stream(2),
            order_rng: stream(3),
            demand_dist,
            order_dist,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Starts a new episode from uniformly drawn stock levels and reorder point.
    pub fn reset(&mut self) -> EnvState {
        let cap = self.config.capacity;
        let inv_factory = self.init_rng.gen_range(0..=cap);
        let inv_warehouse = self.init_rng.gen_range(0..=cap);
        let rp = self.init_rng.gen_range(self.config.rp_min..=self.config.rp_max);
        let inv_retailer = (rp + self.config.order_mean.round() as Items).min(cap);
        self.state = EnvState::idle(inv_factory, inv_warehouse, inv_retailer, rp);
        self.state.clone()
    }

    /// Replaces the current state, e.g. to start from a hand-built situation.
    pub fn set_state(&mut self, state: EnvState) -> Result<(), EnvError> {
        state.check(&self.config)?;
        self.state = state;
        Ok(())
    }

    pub fn action_box(&self) -> ActionBox {
        ActionBox::new(&self.state, self.state.retailer_order, &self.config)
    }

    pub fn clip(&self, raw: RawAction) -> Clipped {
        self.action_box().clip(raw)
    }

    pub fn observe_local(&self) -> LocalObs {
        observe_local(&self.state, IncomingOrders::of(&self.state))
    }

    /// Advances one period. `action` must come from [`Env::clip`] or lie in
    /// [`Env::action_box`].
    pub fn step(&mut self, action: ActionVector) -> StepOutcome {
        debug_assert!(
            self.action_box().contains(&action),
            "unclipped action {action:?}"
        );
        let cfg = &self.config;
        let cap = cfg.capacity;
        let st = &mut self.state;
        let t = st.t;
        let mut flows = Flows::default();

        let owed_factory = st.backlog_f + action.q_warehouse;
        let shipped_fw = owed_factory.min(st.inv_factory);
        st.inv_factory -= shipped_fw;
        st.backlog_f = owed_factory - shipped_fw;
        if shipped_fw > 0 {
            st.pipeline_fw.push_back(Shipment {
                arrival: t + u64::from(cfg.transit_factory_warehouse),
                qty: shipped_fw,
            });
        }
        st.warehouse_order = action.q_warehouse;

        let arrived_w = drain_due(&mut st.pipeline_fw, t);
        flows.received_warehouse = arrived_w;
        flows.discarded_warehouse = credit(&mut st.inv_warehouse, arrived_w, cap);

        let owed_warehouse = st.backlog_w + st.retailer_order;
        let shipped_wr = owed_warehouse.min(st.inv_warehouse);
        st.inv_warehouse -= shipped_wr;
        st.backlog_w = owed_warehouse - shipped_wr;
        st.retailer_order = 0;
        if shipped_wr > 0 {
            st.pipeline_wr.push_back(Shipment {
                arrival: t + u64::from(cfg.lead_warehouse),
                qty: shipped_wr,
            });
        }
        flows.shipped_to_retailer = shipped_wr;

        flows.production_started = action.q_factory;
        if action.q_factory > 0 {
            st.pipeline_production.push_back(Shipment {
                arrival: t + u64::from(cfg.lead_factory),
                qty: action.q_factory,
            });
        }
        let produced = drain_due(&mut st.pipeline_production, t + 1);
        flows.received_factory = produced;
        flows.discarded_factory = credit(&mut st.inv_factory, produced, cap);
        let late = st.backlog_f.min(st.inv_factory);
        st.inv_factory -= late;
        st.backlog_f -= late;
        if late > 0 {
            st.pipeline_fw.push_back(Shipment {
                arrival: t + 1 + u64::from(cfg.transit_factory_warehouse),
                qty: late,
            });
        }
        flows.shipped_to_warehouse = shipped_fw + late;
        st.rp = action.rp_next;

        st.t = t + 1;
        let arrived_r = drain_due(&mut st.pipeline_wr, st.t);
        flows.received_retailer = arrived_r;
        flows.discarded_retailer = credit(&mut st.inv_retailer, arrived_r, cap);

        let demand = draw_items(&self.demand_dist, &mut self.demand_rng);
        let served = demand.min(st.inv_retailer);
        st.inv_retailer -= served;
        st.demand = demand;
        let stockouts = demand - served;
        flows.demand = demand;
        flows.served = served;

        if st.retailer_position() <= st.rp {
            st.retailer_order = draw_items(&self.order_dist, &mut self.order_rng);
        }

        let reward = cfg.joint_reward(st.inv_factory, st.inv_warehouse, stockouts);
        let obs = observe_local(st, IncomingOrders::of(st));
        StepOutcome {
            next_state: st.clone(),
            reward,
            stockout_units: stockouts,
            shipped_to_retailer: shipped_wr,
            shipped_to_warehouse: flows.shipped_to_warehouse,
            local_obs_factory: obs.factory,
            local_obs_warehouse: obs.warehouse,
            flows,
        }
    }
}

/// Normal draw truncated at zero and rounded to the nearest item.
fn draw_items(dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> Items {
    let x: f64 = dist.sample(rng);
    x.max(0.0).round() as Items
}

fn drain_due(pipeline: &mut VecDeque<Shipment>, now: u64) -> Items {
    let mut total = 0;
    while let Some(front) = pipeline.front() {
        if front.arrival > now {
            break;
        }
        total += front.qty;
        pipeline.pop_front();
    }
    total
}

/// Adds `qty` to `stock` up to `cap`; returns the discarded excess.
fn credit(stock: &mut Items, qty: Items, cap: Items) -> Items {
    let room = cap.saturating_sub(*stock);
    let kept = qty.min(room);
    *stock += kept;
    qty - kept
}
