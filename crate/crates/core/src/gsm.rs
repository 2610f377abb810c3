//! Guaranteed-service safety stock placement for serial chains.
//!
//! Each stage `j` quotes an outbound service time `S_j` and is quoted an
//! inbound service time `SI_j` by its supplier. Stock must cover the net
//! replenishment time `SI_j + T_j - S_j`:
//!
//! ```text
//! SS_j = z_j * sigma_j * sqrt(SI_j + T_j - S_j)
//! I_j  = mu_j * (SI_j + T_j - S_j) + SS_j
//! ```
//!
//! and the objective is `sum_j h_j * SS_j` subject to `S_j - SI_j <= T_j`,
//! `SI_j >= S_i` on every arc `(i, j)`, `S_j <= s_j` at demand stages and
//! integral nonnegative service times.

use std::fmt::Write as _;

use crate::env::{ChainConfig, CostCase};
use crate::error::GsmError;

/// Upper bound on the number of assignments [`solve_exhaustive`] will visit.
pub const MAX_SEARCH: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GsmNode {
    pub name: String,
    pub holding_cost: f64,
    pub processing_time: u32,
    pub service_z: f64,
    /// Standard deviation of the demand this stage sees.
    pub sigma: f64,
    /// Mean of the demand this stage sees.
    pub mu: f64,
    /// Outbound service-time cap; applies to demand stages.
    pub max_service_time: Option<u32>,
}

impl GsmNode {
    fn validate(&self) -> Result<(), GsmError> {
        let bad = |reason: &str| GsmError::InvalidNode {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if !(self.holding_cost >= 0.0 && self.holding_cost.is_finite()) {
            return Err(bad("holding cost must be finite and >= 0"));
        }
        if !(self.service_z > 0.0 && self.service_z.is_finite()) {
            return Err(bad("z must be finite and > 0"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(bad("demand moments must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A supply network: stages plus supplier → customer arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<GsmNode>,
    pub arcs: Vec<(usize, usize)>,
    /// Service time quoted to the most upstream stage by its external supplier.
    pub external_inbound: u32,
}

impl Network {
    /// Stages in supply order, linked `0 → 1 → … → n-1`.
    pub fn serial(nodes: Vec<GsmNode>) -> Self {
        let arcs = (1..nodes.len()).map(|j| (j - 1, j)).collect();
        Network {
            nodes,
            arcs,
            external_inbound: 0,
        }
    }

    /// Factory → warehouse chain matching an environment configuration.
    ///
    /// Both stages see the retailer order stream. The warehouse service time is
    /// capped by how many periods of consumer demand the largest reorder point
    /// covers.
    pub fn two_stage(config: &ChainConfig) -> Self {
        let node = |name: &str, h: f64, t: u32, cap: Option<u32>| GsmNode {
            name: name.to_string(),
            holding_cost: h,
            processing_time: t,
            service_z: config.service_z,
            sigma: config.order_std,
            mu: config.order_mean,
            max_service_time: cap,
        };
        let cap = if config.demand_mean > 0.0 {
            (config.rp_max as f64 / config.demand_mean).floor() as u32
        } else {
            0
        };
        Network::serial(vec![
            node("factory", config.h_factory, config.lead_factory, None),
            node("warehouse", config.h_warehouse, config.lead_warehouse, Some(cap)),
        ])
    }

    pub fn for_case(case: CostCase) -> Self {
        Network::two_stage(&ChainConfig::for_case(case))
    }

    fn check_serial(&self) -> Result<(), GsmError> {
        if self.nodes.is_empty() {
            return Err(GsmError::UnsupportedTopology("no stages".into()));
        }
        let n = self.nodes.len();
        let mut expected: Vec<(usize, usize)> = (1..n).map(|j| (j - 1, j)).collect();
        let mut arcs = self.arcs.clone();
        arcs.sort_unstable();
        expected.sort_unstable();
        if arcs != expected {
            return Err(GsmError::UnsupportedTopology(format!(
                "arcs {:?} do not form the path 0 -> … -> {}",
                self.arcs,
                n - 1
            )));
        }
        for node in &self.nodes {
            node.validate()?;
        }
        Ok(())
    }

    fn is_demand_stage(&self, j: usize) -> bool {
        !self.arcs.iter().any(|&(from, _)| from == j)
    }

    fn service_cap(&self, j: usize) -> Option<u32> {
        if self.is_demand_stage(j) {
            self.nodes[j].max_service_time
        } else {
            None
        }
    }
}

/// Service times of every stage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assignment {
    pub service: Vec<u32>,
    pub inbound: Vec<u32>,
}

impl Assignment {
    /// Serial assignment with each inbound time equal to the supplier's
    /// outbound time.
    pub fn serial(network: &Network, service: Vec<u32>) -> Self {
        let mut inbound = Vec::with_capacity(service.len());
        for j in 0..service.len() {
            inbound.push(if j == 0 {
                network.external_inbound
            } else {
                service[j - 1]
            });
        }
        Assignment { service, inbound }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeResult {
    pub name: String,
    pub service_time: u32,
    pub inbound_service_time: u32,
    pub safety_stock: f64,
    pub inventory: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsmSolution {
    pub nodes: Vec<NodeResult>,
    pub total_cost: f64,
}

impl GsmSolution {
    pub fn service_times(&self) -> Vec<u32> {
        self.nodes.iter().map(|n| n.service_time).collect()
    }

    pub fn inventories(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.inventory).collect()
    }
}

fn net_replenishment(si: u32, t: u32, s: u32) -> Result<u32, GsmError> {
    (si + t)
        .checked_sub(s)
        .ok_or(GsmError::NegativeReplenishment { si, t, s })
}

pub fn safety_stock(z: f64, sigma: f64, si: u32, t: u32, s: u32) -> Result<f64, GsmError> {
    let nrt = net_replenishment(si, t, s)?;
    Ok(z * sigma * (nrt as f64).sqrt())
}

pub fn inventory_level(mu: f64, si: u32, t: u32, s: u32, ss: f64) -> Result<f64, GsmError> {
    let nrt = net_replenishment(si, t, s)?;
    Ok(mu * nrt as f64 + ss)
}

fn violations(network: &Network, a: &Assignment) -> Vec<String> {
    let n = network.nodes.len();
    let mut out = Vec::new();
    if a.service.len() != n || a.inbound.len() != n {
        out.push(format!(
            "assignment covers {} / {} stages, network has {n}",
            a.service.len(),
            a.inbound.len()
        ));
        return out;
    }
    for (j, node) in network.nodes.iter().enumerate() {
        if a.service[j] > a.inbound[j] + node.processing_time {
            out.push(format!(
                "{}: S {} - SI {} > T {}",
                node.name, a.service[j], a.inbound[j], node.processing_time
            ));
        }
        if let Some(cap) = network.service_cap(j) {
            if a.service[j] > cap {
                out.push(format!("{}: S {} > cap {cap}", node.name, a.service[j]));
            }
        }
    }
    for &(i, j) in &network.arcs {
        if a.inbound[j] < a.service[i] {
            out.push(format!(
                "{} -> {}: SI {} < S {}",
                network.nodes[i].name, network.nodes[j].name, a.inbound[j], a.service[i]
            ));
        }
    }
    if a.inbound[0] < network.external_inbound {
        out.push(format!(
            "{}: SI {} < external supplier service {}",
            network.nodes[0].name, a.inbound[0], network.external_inbound
        ));
    }
    out
}

/// Scores a feasible assignment: safety stock, inventory and cost per stage.
pub fn evaluate(network: &Network, a: &Assignment) -> Result<GsmSolution, GsmError> {
    let v = violations(network, a);
    if !v.is_empty() {
        return Err(GsmError::Infeasible(v));
    }
    let mut nodes = Vec::with_capacity(network.nodes.len());
    let mut total_cost = 0.0;
    for (j, node) in network.nodes.iter().enumerate() {
        let (si, s, t) = (a.inbound[j], a.service[j], node.processing_time);
        let ss = safety_stock(node.service_z, node.sigma, si, t, s)?;
        let inventory = inventory_level(node.mu, si, t, s, ss)?;
        total_cost += node.holding_cost * ss;
        nodes.push(NodeResult {
            name: node.name.clone(),
            service_time: s,
            inbound_service_time: si,
            safety_stock: ss,
            inventory,
        });
    }
    Ok(GsmSolution { nodes, total_cost })
}

/// Holding cost of safety stock, `sum_j h_j * SS_j`.
pub fn total_cost(network: &Network, a: &Assignment) -> Result<f64, GsmError> {
    evaluate(network, a).map(|s| s.total_cost)
}

/// All assignments where every stage's service time sits at an extreme:
/// zero, the largest value its inbound time and cap allow, or the largest
/// value that still lets every downstream stage hold no stock under the
/// demand stage's cap.
pub fn enumerate_vertices(network: &Network) -> Result<Vec<GsmSolution>, GsmError> {
    network.check_serial()?;
    let n = network.nodes.len();
    let demand_cap = network.service_cap(n - 1);
    let mut partial: Vec<Vec<u32>> = vec![Vec::new()];
    for j in 0..n {
        let downstream: u32 = network.nodes[j + 1..].iter().map(|node| node.processing_time).sum();
        let pass = if j + 1 < n {
            demand_cap.and_then(|c| c.checked_sub(downstream))
        } else {
            None
        };
        let mut next = Vec::with_capacity(partial.len() * 3);
        for prefix in &partial {
            let si = if j == 0 {
                network.external_inbound
            } else {
                prefix[j - 1]
            };
            let mut top = si + network.nodes[j].processing_time;
            if let Some(cap) = network.service_cap(j) {
                top = top.min(cap);
            }
            let mut options = vec![0];
            if let Some(p) = pass.filter(|&p| p > 0 && p < top) {
                options.push(p);
            }
            if top > 0 {
                options.push(top);
            }
            for s in options {
                let mut v = prefix.clone();
                v.push(s);
                next.push(v);
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(|service| evaluate(network, &Assignment::serial(network, service)))
        .collect()
}

/// Minimum-cost assignment over every integral feasible `(S, SI)`, ties
/// broken by the lexicographically smallest service vector, then inbound vector.
pub fn solve_exhaustive(network: &Network) -> Result<GsmSolution, GsmError> {
    network.check_serial()?;
    let n = network.nodes.len();
    // Largest reachable outbound time per stage.
    let mut s_max = Vec::with_capacity(n);
    let mut reach = network.external_inbound;
    for j in 0..n {
        reach += network.nodes[j].processing_time;
        s_max.push(network.service_cap(j).map_or(reach, |c| c.min(reach)));
    }
    let mut size: u128 = 1;
    for j in 0..n {
        let si_span = if j == 0 { 1 } else { s_max[j - 1] as u128 + 1 };
        size = size.saturating_mul(si_span * (s_max[j] as u128 + 1));
        if size > MAX_SEARCH {
            return Err(GsmError::SearchTooLarge(size));
        }
    }

    let mut best: Option<(f64, Assignment)> = None;
    let mut current = Assignment {
        service: vec![0; n],
        inbound: vec![0; n],
    };
    search(network, &s_max, 0, &mut current, &mut best);
    let (_, a) = best.ok_or_else(|| GsmError::Infeasible(vec!["no feasible assignment".into()]))?;
    evaluate(network, &a)
}

fn search(
    network: &Network,
    s_max: &[u32],
    j: usize,
    current: &mut Assignment,
    best: &mut Option<(f64, Assignment)>,
) {
    if j == network.nodes.len() {
        let cost = match total_cost(network, current) {
            Ok(c) => c,
            Err(_) => return,
        };
        let better = match best {
            None => true,
            Some((c, a)) => {
                cost < *c
                    || (cost == *c
                        && (&current.service, &current.inbound) < (&a.service, &a.inbound))
            }
        };
        if better {
            *best = Some((cost, current.clone()));
        }
        return;
    }
    let (si_lo, si_hi) = if j == 0 {
        (network.external_inbound, network.external_inbound)
    } else {
        (current.service[j - 1], s_max[j - 1])
    };
    for si in si_lo..=si_hi {
        let top = (si + network.nodes[j].processing_time).min(s_max[j]);
        for s in 0..=top {
            current.inbound[j] = si;
            current.service[j] = s;
            search(network, s_max, j + 1, current, best);
        }
    }
}

/// Reorder point and stock levels implied by the optimal two-stage placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub rp: f64,
    pub inv_factory: f64,
    pub inv_warehouse: f64,
}

pub fn analytical_targets_for(config: &ChainConfig) -> Result<Targets, GsmError> {
    let best = solve_exhaustive(&Network::two_stage(config))?;
    Ok(Targets {
        rp: best.nodes[1].service_time as f64 * config.demand_mean,
        inv_factory: best.nodes[0].inventory,
        inv_warehouse: best.nodes[1].inventory,
    })
}

pub fn analytical_targets(case: CostCase) -> Result<Targets, GsmError> {
    analytical_targets_for(&ChainConfig::for_case(case))
}

/// Plain-text table: one row per solution with service times, inventories and
/// cost; the optimum is flagged with `*`.
pub fn render_table(network: &Network, rows: &[GsmSolution], optimum: &GsmSolution) -> String {
    let mut header = Vec::new();
    for node in &network.nodes {
        header.push(format!("S_{}", node.name));
    }
    for node in &network.nodes {
        header.push(format!("I_{}", node.name));
    }
    header.push("cost".into());
    header.push("optimal".into());
    let mut cells: Vec<Vec<String>> = vec![header];
    for row in rows {
        let mut line: Vec<String> = row.nodes.iter().map(|n| n.service_time.to_string()).collect();
        line.extend(row.nodes.iter().map(|n| format!("{:.6}", n.inventory)));
        line.push(format!("{:.6}", row.total_cost));
        let flag = row.service_times() == optimum.service_times();
        line.push(if flag { "*".into() } else { String::new() });
        cells.push(line);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Same rows as [`render_table`], comma separated with full precision.
pub fn table_csv(network: &Network, rows: &[GsmSolution], optimum: &GsmSolution) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = network.nodes.iter().map(|n| format!("S_{}", n.name)).collect();
    header.extend(network.nodes.iter().map(|n| format!("I_{}", n.name)));
    header.push("cost".into());
    header.push("optimal".into());
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let mut line: Vec<String> = row.nodes.iter().map(|n| n.service_time.to_string()).collect();
        line.extend(row.nodes.iter().map(|n| n.inventory.to_string()));
        line.push(row.total_cost.to_string());
        line.push(u8::from(row.service_times() == optimum.service_times()).to_string());
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}
