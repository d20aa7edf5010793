//! The routing MDP: masked action space, deterministic transitions, and the
//! shaped per-step reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, NodeId};
use crate::milp::RoutePlan;

/// Reward coefficients and behavioral switches of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Distance cost coefficient.
    pub gamma_d: f64,
    /// Fixed dispatch cost, charged on every depot departure.
    pub gamma_f: f64,
    /// Emergency penalty for a missed window, a broken-edge traversal, or a
    /// terminal deadlock.
    pub gamma_e: f64,
    /// Enable the exploration-shaping bonuses.
    pub reward_shaping: bool,
    /// Remove actions whose edge is already broken at the earliest possible
    /// arrival. With this off, broken traversals are allowed but penalized.
    pub mask_broken_edges: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            gamma_d: 4.5,
            gamma_f: 65.0,
            gamma_e: 500.0,
            reward_shaping: true,
            mask_broken_edges: true,
        }
    }
}

/// Keeps each shaping bonus strictly below the documented cap even on tiny
/// instances with lumpy demand.
const SHAPING_GUARD: f64 = 1e-3;

/// Vehicle state: position, remaining load, service bits, clock, route index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: NodeId,
    pub remaining_capacity: u32,
    /// `pending[c - 1]` is true while customer `c` still awaits service.
    pub pending: Vec<bool>,
    pub clock: f64,
    pub routes_used: usize,
}

impl EnvState {
    pub fn is_pending(&self, customer: NodeId) -> bool {
        self.pending[customer - 1]
    }

    pub fn pending_count(&self) -> usize {
        self.pending.iter().filter(|&&p| p).count()
    }

    pub fn pending_customers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pending.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i + 1)
    }

    pub fn all_served(&self) -> bool {
        self.pending.iter().all(|&p| !p)
    }
}

/// Shaping bonus breakdown; all components are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shaping {
    pub visit_bonus: f64,
    pub progress: f64,
    pub utilization: f64,
}

impl Shaping {
    pub fn total(&self) -> f64 {
        self.visit_bonus + self.progress + self.utilization
    }
}

/// Everything observable about one executed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub action: NodeId,
    /// Distance traveled this step.
    pub distance: f64,
    /// True when the step departed from the depot.
    pub dispatched: bool,
    pub window_missed: bool,
    pub broken_edge: bool,
    pub deadlock: bool,
    /// The emergency flag: any of the three conditions above, at most one
    /// penalty per step.
    pub emergency: bool,
    /// Clamped shaping total actually paid.
    pub shaping: f64,
    pub shaping_parts: Shaping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} is not in the action space at node {position}")]
    IllegalAction { action: NodeId, position: NodeId },
    #[error("trace does not end in a terminal step")]
    IncompleteEpisode,
}

/// Stateless environment over one instance; callers own the `EnvState`.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub inst: &'a Instance,
    pub cfg: EnvConfig,
}

impl<'a> Env<'a> {
    pub fn new(inst: &'a Instance, cfg: EnvConfig) -> Self {
        Env { inst, cfg }
    }

    /// Fresh episode: at the depot, full load, every customer pending.
    pub fn reset(&self) -> EnvState {
        EnvState {
            position: 0,
            remaining_capacity: self.inst.capacity,
            pending: vec![true; self.inst.customer_count()],
            clock: 0.0,
            routes_used: 1,
        }
    }

    /// Feasible actions in `state`, ascending. At the depot every pending
    /// customer is reachable on a full load; elsewhere the load filter applies
    /// and the depot is always a candidate. Targets behind already-broken
    /// edges are removed when `mask_broken_edges` is on.
    pub fn action_space(&self, state: &EnvState) -> Vec<NodeId> {
        let mut out = Vec::new();
        if state.position != 0 {
            out.push(0);
        }
        for c in state.pending_customers() {
            if state.position == 0 || self.inst.nodes[c].demand <= state.remaining_capacity {
                out.push(c);
            }
        }
        if self.cfg.mask_broken_edges {
            out.retain(|&j| {
                let arrival = state.clock + self.inst.travel_time(state.position, j);
                self.inst.edge_usable_at(state.position, j, arrival)
            });
        }
        out.sort_unstable();
        out
    }

    /// Execute `action`, which must come from `action_space`.
    pub fn step(&self, state: &EnvState, action: NodeId) -> Result<StepOutcome, EnvError> {
        let legal = self.action_space(state);
        if !legal.contains(&action) {
            return Err(EnvError::IllegalAction { action, position: state.position });
        }

        let from = state.position;
        let distance = self.inst.cost(from, action);
        let arrival = state.clock + self.inst.travel_time(from, action);
        let dispatched = from == 0;
        let broken_edge = !self.inst.edge_usable_at(from, action, arrival);
        let load_before = self.inst.capacity - state.remaining_capacity;

        let mut next = state.clone();
        next.position = action;
        next.clock = arrival;
        let mut window_missed = false;
        let mut parts = Shaping::default();
        if action == 0 {
            next.routes_used += 1;
            next.remaining_capacity = self.inst.capacity;
            parts.utilization = 3.0 * load_before as f64 / self.inst.capacity as f64;
        } else {
            window_missed = !self.inst.nodes[action].window.contains(arrival);
            next.remaining_capacity -= self.inst.nodes[action].demand;
            next.pending[action - 1] = false;
            parts.visit_bonus = 2.0;
            let total = self.inst.total_demand();
            if total > 0 {
                parts.progress = 5.0 * self.inst.nodes[action].demand as f64 / total as f64;
            }
        }

        let success = next.all_served() && next.position == 0;
        let out_of_routes = next.routes_used > self.inst.max_routes;
        let deadlock = !success && !out_of_routes && self.action_space(&next).is_empty();
        let done = success || out_of_routes || deadlock;

        let emergency = window_missed || broken_edge || deadlock;
        let shaping = if self.cfg.reward_shaping {
            parts.total().min(0.05 * self.cfg.gamma_f - SHAPING_GUARD)
        } else {
            parts = Shaping::default();
            0.0
        };

        let mut reward = -self.cfg.gamma_d * distance;
        if dispatched {
            reward -= self.cfg.gamma_f;
        }
        if emergency {
            reward -= self.cfg.gamma_e;
        }
        reward += shaping;

        Ok(StepOutcome {
            next,
            reward,
            done,
            info: StepInfo {
                action,
                distance,
                dispatched,
                window_missed,
                broken_edge,
                deadlock,
                emergency,
                shaping,
                shaping_parts: parts,
            },
        })
    }

    /// Generalized cost of a finished trace: distance and dispatch charges
    /// accumulated in step order, matching `milp::generalized_cost` on the
    /// extracted plan bit for bit.
    pub fn rollout_cost(&self, trace: &[StepOutcome]) -> Result<f64, EnvError> {
        if let Some(last) = trace.last() {
            if !last.done {
                return Err(EnvError::IncompleteEpisode);
            }
        }
        let mut total = 0.0;
        for step in trace {
            if step.info.dispatched {
                total += self.cfg.gamma_f;
            }
            total += self.cfg.gamma_d * step.info.distance;
        }
        Ok(total)
    }
}

/// Rebuild the route plan a trace traversed. A trailing unfinished route (the
/// trace ended away from the depot) is kept; the evaluator's implicit return
/// leg then prices the return the vehicle never made.
pub fn extract_plan(trace: &[StepOutcome]) -> RoutePlan {
    let mut routes = Vec::new();
    let mut route = Vec::new();
    for step in trace {
        if step.info.action == 0 {
            if !route.is_empty() {
                routes.push(std::mem::take(&mut route));
            }
        } else {
            route.push(step.info.action);
        }
    }
    if !route.is_empty() {
        routes.push(route);
    }
    RoutePlan::new(routes)
}
