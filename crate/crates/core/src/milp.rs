//! Route-plan evaluation against the full constraint set (capacity, windows,
//! path breaks) plus an exhaustive exact oracle for small instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, NodeId};

/// An ordered list of routes; each route is an ordered customer sequence and
/// implicitly starts and ends at the depot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoutePlan {
    pub routes: Vec<Vec<NodeId>>,
}

impl RoutePlan {
    pub fn new(routes: Vec<Vec<NodeId>>) -> Self {
        RoutePlan { routes }
    }

    pub fn empty() -> Self {
        RoutePlan { routes: Vec::new() }
    }

    /// Number of dispatched (non-empty) routes.
    pub fn route_count(&self) -> usize {
        self.routes.iter().filter(|r| !r.is_empty()).count()
    }

    pub fn customers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.routes.iter().flatten().copied()
    }
}

/// Whether the arrival clock carries across routes or resets at each dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// One vehicle runs all routes back to back; the clock never resets.
    #[default]
    Global,
    /// Each route is timed from zero, as if dispatched independently.
    PerRoute,
}

/// Coefficients of the generalized cost: distance plus a fixed charge per
/// dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub gamma_d: f64,
    pub gamma_f: f64,
}

impl Default for CostModel {
    /// Freight-calibrated coefficients: 4.5 per distance unit, 65 per dispatch.
    fn default() -> Self {
        CostModel { gamma_d: 4.5, gamma_f: 65.0 }
    }
}

impl CostModel {
    /// Pure distance, no dispatch charge.
    pub fn distance_only() -> Self {
        CostModel { gamma_d: 1.0, gamma_f: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    UnservedCustomer,
    DuplicateVisit,
    CapacityExceeded,
    WindowMissed,
    BrokenEdgeUsed,
    ImpassableEdgeUsed,
}

/// One constraint violation with the measured quantity and the bound it broke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub route: Option<usize>,
    pub node: Option<NodeId>,
    pub edge: Option<(NodeId, NodeId)>,
    pub measured: f64,
    pub bound: f64,
}

/// Evaluation result; `feasible` holds exactly when `violations` is empty,
/// and the distance cost is computed either way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub feasible: bool,
    /// Total travel distance over all routes, including depot legs.
    pub cost: f64,
    pub route_count: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("plan references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("plan has {got} routes, instance allows {max}")]
    TooManyRoutes { got: usize, max: usize },
    #[error("instance has {customers} customers, oracle limit is {limit}")]
    TooLarge { customers: usize, limit: usize },
    #[error("no feasible plan exists")]
    Infeasible,
    #[error("optimal cost must be positive, got {0}")]
    NonPositiveOptimal(f64),
}

/// Check a complete plan against every constraint and price its distance.
pub fn evaluate(
    inst: &Instance,
    plan: &RoutePlan,
    clock_mode: ClockMode,
) -> Result<Verdict, ModelError> {
    let n = inst.node_count();
    for c in plan.customers() {
        if c == 0 || c >= n {
            return Err(ModelError::UnknownNode(c));
        }
    }
    if plan.route_count() > inst.max_routes {
        return Err(ModelError::TooManyRoutes { got: plan.route_count(), max: inst.max_routes });
    }

    let mut violations = Vec::new();
    let mut seen = vec![0usize; n];
    let mut total_cost = 0.0;
    let mut clock = 0.0;

    for (k, route) in plan.routes.iter().filter(|r| !r.is_empty()).enumerate() {
        if clock_mode == ClockMode::PerRoute {
            clock = 0.0;
        }
        let load: u64 = route.iter().map(|&c| inst.nodes[c].demand as u64).sum();
        if load > inst.capacity as u64 {
            violations.push(Violation {
                kind: ViolationKind::CapacityExceeded,
                route: Some(k),
                node: None,
                edge: None,
                measured: load as f64,
                bound: inst.capacity as f64,
            });
        }

        let mut route_cost = 0.0;
        let mut prev: NodeId = 0;
        for &c in route {
            seen[c] += 1;
            route_cost += inst.cost(prev, c);
            clock += inst.travel_time(prev, c);
            check_edge(inst, prev, c, clock, k, &mut violations);
            let w = inst.nodes[c].window;
            if !w.contains(clock) {
                violations.push(Violation {
                    kind: ViolationKind::WindowMissed,
                    route: Some(k),
                    node: Some(c),
                    edge: None,
                    measured: clock,
                    bound: if clock < w.open { w.open } else { w.close },
                });
            }
            prev = c;
        }
        route_cost += inst.cost(prev, 0);
        clock += inst.travel_time(prev, 0);
        check_edge(inst, prev, 0, clock, k, &mut violations);
        total_cost += route_cost;
    }

    for c in inst.customers() {
        match seen[c] {
            0 => violations.push(Violation {
                kind: ViolationKind::UnservedCustomer,
                route: None,
                node: Some(c),
                edge: None,
                measured: 0.0,
                bound: 1.0,
            }),
            1 => {}
            m => violations.push(Violation {
                kind: ViolationKind::DuplicateVisit,
                route: None,
                node: Some(c),
                edge: None,
                measured: m as f64,
                bound: 1.0,
            }),
        }
    }

    Ok(Verdict {
        feasible: violations.is_empty(),
        cost: total_cost,
        route_count: plan.route_count(),
        violations,
    })
}

fn check_edge(
    inst: &Instance,
    from: NodeId,
    to: NodeId,
    arrival: f64,
    route: usize,
    violations: &mut Vec<Violation>,
) {
    if from == to {
        return;
    }
    if let Some(bt) = inst.break_time(from, to) {
        if bt == 0.0 {
            violations.push(Violation {
                kind: ViolationKind::ImpassableEdgeUsed,
                route: Some(route),
                node: None,
                edge: Some((from, to)),
                measured: arrival,
                bound: 0.0,
            });
        } else if arrival >= bt {
            // The big-M linearization makes usable edges satisfy the strict
            // inequality arrival < break time; equality is already a break.
            violations.push(Violation {
                kind: ViolationKind::BrokenEdgeUsed,
                route: Some(route),
                node: None,
                edge: Some((from, to)),
                measured: arrival,
                bound: bt,
            });
        }
    }
}

/// Generalized cost of a plan: per dispatched route, the fixed charge followed
/// by the distance charge of each leg, accumulated in traversal order so that
/// an environment rollout of the same plan sums to the identical value.
pub fn generalized_cost(inst: &Instance, plan: &RoutePlan, model: &CostModel) -> f64 {
    let mut total = 0.0;
    for route in plan.routes.iter().filter(|r| !r.is_empty()) {
        total += model.gamma_f;
        let mut prev: NodeId = 0;
        for &c in route {
            total += model.gamma_d * inst.cost(prev, c);
            prev = c;
        }
        total += model.gamma_d * inst.cost(prev, 0);
    }
    total
}

/// Relative gap to the optimum, in percent.
pub fn gap(plan_cost: f64, optimal_cost: f64) -> Result<f64, ModelError> {
    if optimal_cost <= 0.0 {
        return Err(ModelError::NonPositiveOptimal(optimal_cost));
    }
    Ok(100.0 * (plan_cost - optimal_cost) / optimal_cost)
}

/// Customer-count cap beyond which the exhaustive oracle refuses to run.
pub const DEFAULT_ORACLE_LIMIT: usize = 8;

/// Optimal plan found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: RoutePlan,
    pub generalized_cost: f64,
    pub distance: f64,
    pub route_count: usize,
}

/// Exhaustively enumerate every ordered partition of the customers into at
/// most `max_routes` routes and return the feasible plan with minimum
/// generalized cost. Ties break toward the lexicographically smaller plan.
pub fn exact_solve(
    inst: &Instance,
    limit: usize,
    model: &CostModel,
) -> Result<Solution, ModelError> {
    let n = inst.customer_count();
    if n > limit {
        return Err(ModelError::TooLarge { customers: n, limit });
    }
    if n == 0 {
        return Ok(Solution {
            plan: RoutePlan::empty(),
            generalized_cost: 0.0,
            distance: 0.0,
            route_count: 0,
        });
    }

    let mut perm: Vec<NodeId> = inst.customers().collect();
    let mut best: Option<(f64, RoutePlan)> = None;

    loop {
        // Each bit in `mask` cuts the permutation after position i.
        for mask in 0u64..(1u64 << (n - 1)) {
            if (mask.count_ones() as usize) + 1 > inst.max_routes {
                continue;
            }
            if let Some(cost) = feasible_cost(inst, &perm, mask, model) {
                let better = match &best {
                    None => true,
                    Some((bc, bp)) => {
                        cost < *bc || (cost == *bc && plan_less(&perm, mask, bp))
                    }
                };
                if better {
                    best = Some((cost, split_plan(&perm, mask)));
                }
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }

    match best {
        Some((cost, plan)) => {
            let verdict = evaluate(inst, &plan, ClockMode::Global)?;
            debug_assert!(verdict.feasible);
            Ok(Solution {
                generalized_cost: cost,
                distance: verdict.cost,
                route_count: plan.route_count(),
                plan,
            })
        }
        None => Err(ModelError::Infeasible),
    }
}

/// Allocation-free feasibility check plus generalized cost of one candidate,
/// accumulating in the same order as `generalized_cost`.
fn feasible_cost(inst: &Instance, perm: &[NodeId], mask: u64, model: &CostModel) -> Option<f64> {
    let mut clock = 0.0;
    let mut cost = 0.0;
    let mut load: u64 = 0;
    let mut prev: NodeId = 0;
    for (i, &c) in perm.iter().enumerate() {
        if prev == 0 {
            cost += model.gamma_f;
            load = 0;
        }
        load += inst.nodes[c].demand as u64;
        if load > inst.capacity as u64 {
            return None;
        }
        clock += inst.travel_time(prev, c);
        if !inst.edge_usable_at(prev, c, clock) {
            return None;
        }
        if !inst.nodes[c].window.contains(clock) {
            return None;
        }
        cost += model.gamma_d * inst.cost(prev, c);
        let route_ends = i + 1 == perm.len() || mask & (1 << i) != 0;
        if route_ends {
            clock += inst.travel_time(c, 0);
            if !inst.edge_usable_at(c, 0, clock) {
                return None;
            }
            cost += model.gamma_d * inst.cost(c, 0);
            prev = 0;
        } else {
            prev = c;
        }
    }
    Some(cost)
}

fn split_plan(perm: &[NodeId], mask: u64) -> RoutePlan {
    let mut routes = Vec::new();
    let mut route = Vec::new();
    for (i, &c) in perm.iter().enumerate() {
        route.push(c);
        if i + 1 == perm.len() || mask & (1 << i) != 0 {
            routes.push(std::mem::take(&mut route));
        }
    }
    RoutePlan::new(routes)
}

fn plan_less(perm: &[NodeId], mask: u64, other: &RoutePlan) -> bool {
    split_plan(perm, mask).routes < other.routes
}

/// Lexicographic next permutation; false once the sequence is descending.
fn next_permutation(items: &mut [NodeId]) -> bool {
    if items.len() < 2 {
        return false;
    }
    let mut i = items.len() - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = items.len() - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_plan_reports_every_customer_unserved() {
        let inst = fixtures::four_node();
        let v = evaluate(&inst, &RoutePlan::empty(), ClockMode::Global).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.cost, 0.0);
        let unserved: Vec<_> = v
            .violations
            .iter()
            .filter(|x| x.kind == ViolationKind::UnservedCustomer)
            .collect();
        assert_eq!(unserved.len(), 3);
    }

    #[test]
    fn pythagorean_route_prices_to_twelve() {
        let inst = fixtures::four_node();
        let plan = RoutePlan::new(vec![vec![1, 2], vec![3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        assert!(v.feasible, "violations: {:?}", v.violations);
        // Route [1,2] alone: 3 + 5 + 4.
        let single = RoutePlan::new(vec![vec![1, 2]]);
        let v1 = evaluate(&inst, &single, ClockMode::Global).unwrap();
        assert_eq!(v1.cost, 12.0);
    }

    #[test]
    fn broken_edge_below_arrival_is_flagged() {
        // Arrival at node 2 via 0->1->2 is 3 + 5 = 8.
        let inst = fixtures::four_node_with_breaks(&[(1, 2, 5.0)]);
        let plan = RoutePlan::new(vec![vec![1, 2], vec![3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        assert!(!v.feasible);
        assert!(v.violations.iter().any(|x| x.kind == ViolationKind::BrokenEdgeUsed
            && x.edge == Some((1, 2))
            && x.measured == 8.0));
    }

    #[test]
    fn arrival_exactly_at_break_time_already_violates() {
        let inst = fixtures::four_node_with_breaks(&[(1, 2, 8.0)]);
        let plan = RoutePlan::new(vec![vec![1, 2], vec![3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        assert!(v.violations.iter().any(|x| x.kind == ViolationKind::BrokenEdgeUsed));
    }

    #[test]
    fn impassable_edge_is_its_own_kind() {
        let inst = fixtures::four_node_with_breaks(&[(1, 2, 0.0)]);
        let plan = RoutePlan::new(vec![vec![1, 2], vec![3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        assert!(v.violations.iter().any(|x| x.kind == ViolationKind::ImpassableEdgeUsed));
    }

    #[test]
    fn duplicate_visits_are_violations_not_errors() {
        let inst = fixtures::four_node();
        let plan = RoutePlan::new(vec![vec![1, 1], vec![2, 3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        assert!(v.violations.iter().any(|x| x.kind == ViolationKind::DuplicateVisit));
    }

    #[test]
    fn unknown_node_is_an_error() {
        let inst = fixtures::four_node();
        let plan = RoutePlan::new(vec![vec![9]]);
        assert!(matches!(
            evaluate(&inst, &plan, ClockMode::Global),
            Err(ModelError::UnknownNode(9))
        ));
    }

    #[test]
    fn capacity_overflow_is_measured() {
        let inst = fixtures::four_node();
        let plan = RoutePlan::new(vec![vec![1, 2, 3]]);
        let v = evaluate(&inst, &plan, ClockMode::Global).unwrap();
        let cap = v
            .violations
            .iter()
            .find(|x| x.kind == ViolationKind::CapacityExceeded)
            .expect("capacity violation");
        assert_eq!(cap.measured, 12.0);
        assert_eq!(cap.bound, 10.0);
    }

    #[test]
    fn per_route_cost_is_additive() {
        let inst = fixtures::four_node();
        let both = RoutePlan::new(vec![vec![1, 2], vec![3]]);
        let left = RoutePlan::new(vec![vec![1, 2]]);
        let right = RoutePlan::new(vec![vec![3]]);
        let v = evaluate(&inst, &both, ClockMode::PerRoute).unwrap();
        let vl = evaluate(&inst, &left, ClockMode::PerRoute).unwrap();
        let vr = evaluate(&inst, &right, ClockMode::PerRoute).unwrap();
        assert_eq!(v.cost, vl.cost + vr.cost);
    }

    #[test]
    fn oracle_single_customer() {
        let inst = fixtures::single_customer();
        let sol = exact_solve(&inst, DEFAULT_ORACLE_LIMIT, &CostModel::distance_only()).unwrap();
        assert_eq!(sol.plan.routes, vec![vec![1]]);
        assert_eq!(sol.distance, 6.0);
    }

    #[test]
    fn oracle_splits_when_capacity_forces_it() {
        let inst = fixtures::forced_split();
        let sol = exact_solve(&inst, DEFAULT_ORACLE_LIMIT, &CostModel::distance_only()).unwrap();
        assert_eq!(sol.plan.routes, vec![vec![1], vec![2]]);
        assert_eq!(sol.distance, 14.0);
        assert_eq!(sol.route_count, 2);
    }

    #[test]
    fn oracle_winner_passes_the_evaluator() {
        let inst = fixtures::six_customers();
        let sol = exact_solve(&inst, DEFAULT_ORACLE_LIMIT, &CostModel::default()).unwrap();
        let v = evaluate(&inst, &sol.plan, ClockMode::Global).unwrap();
        assert!(v.feasible);
        assert_eq!(v.cost, sol.distance);
    }

    #[test]
    fn oracle_too_large_is_refused() {
        let inst = fixtures::six_customers();
        assert!(matches!(
            exact_solve(&inst, 3, &CostModel::default()),
            Err(ModelError::TooLarge { customers: 6, limit: 3 })
        ));
    }

    #[test]
    fn oracle_detects_infeasible_instances() {
        // Close every customer window before the depot can reach it.
        let mut inst = fixtures::forced_split();
        for i in 1..inst.nodes.len() {
            inst.nodes[i].window = crate::instance::TimeWindow { open: 0.0, close: 0.5 };
        }
        assert!(matches!(
            exact_solve(&inst, DEFAULT_ORACLE_LIMIT, &CostModel::default()),
            Err(ModelError::Infeasible)
        ));
    }

    #[test]
    fn gap_percentages() {
        assert_eq!(gap(12.0, 12.0).unwrap(), 0.0);
        assert_eq!(gap(15.0, 12.0).unwrap(), 25.0);
        assert!(matches!(gap(1.0, 0.0), Err(ModelError::NonPositiveOptimal(_))));
    }

    #[test]
    fn next_permutation_walks_lexicographically() {
        let mut v = vec![1, 2, 3];
        assert!(next_permutation(&mut v));
        assert_eq!(v, vec![1, 3, 2]);
        assert!(next_permutation(&mut v));
        assert_eq!(v, vec![2, 1, 3]);
        let mut last = vec![3, 2, 1];
        assert!(!next_permutation(&mut last));
    }
}
