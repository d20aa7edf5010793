//! Problem instances: TSPLIB-style CVRP files, deterministic augmentation with
//! time windows and path breaks, and a canonical on-disk format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel for a window that never closes. Finite so files round-trip exactly.
pub const WINDOW_NEVER_CLOSES: f64 = 1.0e18;

/// Version tag written into every serialized instance file.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

pub type NodeId = usize;

/// Service window `[open, close]`; arrival outside it is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub open: f64,
    pub close: f64,
}

impl TimeWindow {
    pub fn unconstrained() -> Self {
        TimeWindow { open: 0.0, close: WINDOW_NEVER_CLOSES }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.open && t <= self.close
    }
}

/// A depot or customer node. The depot is always id 0 with demand 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub demand: u32,
    pub window: TimeWindow,
}

/// A complete routing instance over a dense Euclidean edge set.
///
/// Edge costs equal travel times equal the Euclidean distance between the
/// endpoints. An edge carries an optional break time: from that instant on the
/// edge cannot be used, and a break time of exactly 0 marks an edge that was
/// never passable.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub nodes: Vec<Node>,
    pub capacity: u32,
    pub max_routes: usize,
    pub rng_seed: u64,
    costs: Vec<f64>,
    breaks: BTreeMap<(NodeId, NodeId), f64>,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("missing required section {0}")]
    MissingSection(&'static str),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(usize),
    #[error("depot demand must be zero, found {0}")]
    DepotDemandNonzero(u32),
    #[error("node count {found} does not match DIMENSION {expected}")]
    NodeCountMismatch { expected: usize, found: usize },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("augmentation infeasible after {attempts} attempts: {reason}")]
    InfeasibleAugmentation { attempts: usize, reason: String },
    #[error("unsupported format version {found}, expected {expected}")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("parse error at line {line}, column {column}: {reason}")]
    ParseError { line: usize, column: usize, reason: String },
}

impl Instance {
    /// Build an instance from nodes and sparse break times, validating the
    /// domain invariants and precomputing the dense cost matrix.
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        capacity: u32,
        max_routes: usize,
        rng_seed: u64,
        breaks: BTreeMap<(NodeId, NodeId), f64>,
    ) -> Result<Self, InstanceError> {
        if nodes.is_empty() {
            return Err(InstanceError::Invalid("instance has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(InstanceError::Invalid(format!(
                    "node ids must be contiguous from 0, found {} at position {i}",
                    node.id
                )));
            }
            if node.window.open > node.window.close {
                return Err(InstanceError::Invalid(format!(
                    "node {} window opens after it closes",
                    node.id
                )));
            }
            if node.id != 0 && node.demand > capacity {
                return Err(InstanceError::Invalid(format!(
                    "node {} demand {} exceeds vehicle capacity {capacity}",
                    node.id, node.demand
                )));
            }
        }
        if nodes[0].demand != 0 {
            return Err(InstanceError::DepotDemandNonzero(nodes[0].demand));
        }
        if max_routes == 0 {
            return Err(InstanceError::Invalid("max_routes must be at least 1".into()));
        }
        let n = nodes.len();
        for (&(a, b), &t) in &breaks {
            if a >= b || b >= n {
                return Err(InstanceError::Invalid(format!(
                    "break edge ({a},{b}) is not a canonical pair inside the instance"
                )));
            }
            if !t.is_finite() || t < 0.0 {
                return Err(InstanceError::Invalid(format!(
                    "break time {t} on edge ({a},{b}) must be finite and non-negative"
                )));
            }
        }
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = nodes[i].x - nodes[j].x;
                let dy = nodes[i].y - nodes[j].y;
                costs[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        Ok(Instance { name: name.into(), nodes, capacity, max_routes, rng_seed, costs, breaks })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn customer_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn customers(&self) -> impl Iterator<Item = NodeId> {
        1..self.nodes.len()
    }

    /// Travel cost of edge (i, j); symmetric, Euclidean.
    pub fn cost(&self, i: NodeId, j: NodeId) -> f64 {
        self.costs[i * self.nodes.len() + j]
    }

    /// Travel time of edge (i, j); time varies uniformly with distance.
    pub fn travel_time(&self, i: NodeId, j: NodeId) -> f64 {
        self.cost(i, j)
    }

    /// Instant from which edge (i, j) can no longer be used, if any.
    pub fn break_time(&self, i: NodeId, j: NodeId) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.breaks.get(&key).copied()
    }

    /// An edge with break time 0 was never passable.
    pub fn passable(&self, i: NodeId, j: NodeId) -> bool {
        self.break_time(i, j).map_or(true, |t| t > 0.0)
    }

    /// Whether arriving at the head of edge (i, j) at time `arrival` is allowed.
    pub fn edge_usable_at(&self, i: NodeId, j: NodeId, arrival: f64) -> bool {
        self.break_time(i, j).map_or(true, |t| arrival < t)
    }

    pub fn break_edges(&self) -> &BTreeMap<(NodeId, NodeId), f64> {
        &self.breaks
    }

    pub fn total_demand(&self) -> u64 {
        self.nodes.iter().map(|n| n.demand as u64).sum()
    }

    /// Total demand must fit in `max_routes` full loads; otherwise no complete
    /// plan can exist.
    pub fn is_load_feasible(&self) -> bool {
        self.total_demand() <= self.max_routes as u64 * self.capacity as u64
    }

    /// Cost of the greedy nearest-neighbor giant tour (depot, all customers,
    /// depot), ignoring capacity. Ties break toward the lower node id.
    pub fn nearest_neighbor_tour_cost(&self) -> f64 {
        let mut visited = vec![false; self.nodes.len()];
        let mut at = 0;
        let mut total = 0.0;
        for _ in 0..self.customer_count() {
            let mut best: Option<(f64, NodeId)> = None;
            for j in self.customers() {
                if visited[j] {
                    continue;
                }
                let c = self.cost(at, j);
                if best.map_or(true, |(bc, _)| c < bc) {
                    best = Some((c, j));
                }
            }
            let (c, j) = best.expect("unvisited customer must exist");
            total += c;
            visited[j] = true;
            at = j;
        }
        total + self.cost(at, 0)
    }

    /// Planning horizon used to scale windows, break times and clock features:
    /// twice the greedy giant-tour cost.
    pub fn planning_horizon(&self) -> f64 {
        2.0 * self.nearest_neighbor_tour_cost()
    }
}

/// Parameters for deterministic window/break augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Window width as a fraction of the planning horizon.
    pub window_tightness: f64,
    /// Fraction of undirected edges that receive a finite break time.
    pub break_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { window_tightness: 0.4, break_fraction: 0.15, seed: 0 }
    }
}

const AUGMENT_ATTEMPTS: usize = 32;
const REFERENCE_PLAN_NOISE: f64 = 0.3;

/// Replace the windows and break times of `inst` with a deterministic,
/// solvable augmentation.
///
/// Windows are read off the schedule of a randomized capacity-feasible
/// reference plan, so the augmented instance always admits at least one
/// complete feasible plan. Breaks are drawn from undirected edges the
/// reference plan does not use, never touching depot-incident edges.
pub fn augment(inst: &Instance, cfg: &AugmentConfig) -> Result<Instance, InstanceError> {
    if !(cfg.break_fraction >= 0.0 && cfg.break_fraction < 1.0) {
        return Err(InstanceError::Invalid(format!(
            "break_fraction {} must lie in [0, 1)",
            cfg.break_fraction
        )));
    }
    if !(cfg.window_tightness > 0.0 && cfg.window_tightness.is_finite()) {
        return Err(InstanceError::Invalid(format!(
            "window_tightness {} must be positive",
            cfg.window_tightness
        )));
    }
    if !inst.is_load_feasible() {
        return Err(InstanceError::Invalid(format!(
            "total demand {} exceeds {} routes of capacity {}",
            inst.total_demand(),
            inst.max_routes,
            inst.capacity
        )));
    }

    let horizon = inst.planning_horizon();
    let mut last_reason = String::new();
    for attempt in 0..AUGMENT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(attempt as u64));
        match try_augment(inst, cfg, horizon, &mut rng) {
            Ok(augmented) => return Ok(augmented),
            Err(reason) => last_reason = reason,
        }
    }
    Err(InstanceError::InfeasibleAugmentation { attempts: AUGMENT_ATTEMPTS, reason: last_reason })
}

fn try_augment(
    inst: &Instance,
    cfg: &AugmentConfig,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Instance, String> {
    let (arrivals, used_edges) = reference_plan_schedule(inst, rng)?;

    let width = cfg.window_tightness * horizon;
    let mut nodes = inst.nodes.clone();
    for i in inst.customers() {
        let visit = arrivals[i];
        let jitter = rng.gen_range(-width / 4.0..=width / 4.0);
        let center = visit + jitter;
        let open = (center - width / 2.0).max(0.0);
        let close = center + width / 2.0;
        debug_assert!(open <= visit && visit <= close);
        nodes[i].window = TimeWindow { open, close };
    }

    let n = inst.node_count();
    let undirected = n * (n - 1) / 2;
    let target = (cfg.break_fraction * undirected as f64).ceil() as usize;
    let mut eligible: Vec<(NodeId, NodeId)> = Vec::new();
    for i in 1..n {
        for j in (i + 1)..n {
            if !used_edges.contains(&(i, j)) {
                eligible.push((i, j));
            }
        }
    }
    if eligible.len() < target {
        return Err(format!(
            "only {} edges eligible for breaking, need {target}",
            eligible.len()
        ));
    }
    let mut breaks = BTreeMap::new();
    for &edge in eligible.choose_multiple(rng, target) {
        breaks.insert(edge, rng.gen_range(0.3 * horizon..=0.9 * horizon));
    }

    let augmented = Instance::new(
        inst.name.clone(),
        nodes,
        inst.capacity,
        inst.max_routes,
        cfg.seed,
        breaks,
    )
    .map_err(|e| e.to_string())?;
    solvability_screen(&augmented, &arrivals)?;
    Ok(augmented)
}

/// Simulate a randomized nearest-feasible-neighbor plan under a global clock.
/// Returns per-node arrival times and the undirected edges the plan used.
fn reference_plan_schedule(
    inst: &Instance,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, BTreeSet<(NodeId, NodeId)>), String> {
    let mut pending: BTreeSet<NodeId> = inst.customers().collect();
    let mut arrivals = vec![0.0; inst.node_count()];
    let mut used = BTreeSet::new();
    let mut at: NodeId = 0;
    let mut clock = 0.0;
    let mut load = inst.capacity;
    let mut routes = 1usize;

    while !pending.is_empty() {
        let mut best: Option<(f64, NodeId)> = None;
        for &i in &pending {
            if inst.nodes[i].demand > load {
                continue;
            }
            let noisy = inst.cost(at, i) * (1.0 + REFERENCE_PLAN_NOISE * rng.gen::<f64>());
            if best.map_or(true, |(bc, _)| noisy < bc) {
                best = Some((noisy, i));
            }
        }
        let next = match best {
            Some((_, i)) => i,
            None => {
                // Nothing fits the remaining load; start the next route.
                if routes >= inst.max_routes {
                    return Err("reference plan ran out of routes".into());
                }
                used.insert(ordered(at, 0));
                clock += inst.travel_time(at, 0);
                at = 0;
                load = inst.capacity;
                routes += 1;
                continue;
            }
        };
        used.insert(ordered(at, next));
        clock += inst.travel_time(at, next);
        arrivals[next] = clock;
        load -= inst.nodes[next].demand;
        pending.remove(&next);
        at = next;
    }
    used.insert(ordered(at, 0));
    Ok((arrivals, used))
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b { (a, b) } else { (b, a) }
}

/// Reject augmentations where some window closes before the customer can be
/// reached at all, or where breaks cut the depot off from a customer.
fn solvability_screen(inst: &Instance, arrivals: &[f64]) -> Result<(), String> {
    for i in inst.customers() {
        let w = inst.nodes[i].window;
        if !w.contains(arrivals[i]) {
            return Err(format!("reference arrival at node {i} misses its window"));
        }
        if inst.travel_time(0, i) > w.close {
            return Err(format!("window of node {i} closes before the depot can reach it"));
        }
    }
    let dist = stable_edge_distances(inst);
    for i in inst.customers() {
        if dist[i] > inst.nodes[i].window.close {
            return Err(format!("breaks disconnect node {i} before its window closes"));
        }
    }
    Ok(())
}

/// Dijkstra from the depot over edges that never break.
fn stable_edge_distances(inst: &Instance) -> Vec<f64> {
    let n = inst.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    for _ in 0..n {
        let mut u = None;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && u.map_or(true, |b: usize| dist[v] < dist[b]) {
                u = Some(v);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        for v in 0..n {
            if v != u && inst.break_time(u, v).is_none() {
                let cand = dist[u] + inst.travel_time(u, v);
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
    }
    dist
}

// ---------------------------------------------------------------------------
// TSPLIB-style parsing
// ---------------------------------------------------------------------------

/// Parse the contents of an Augerat/CVRPLIB-convention `.vrp` file.
///
/// Node ids are renumbered to 0-based with the declared depot at index 0.
/// Windows default to never-closing and all edges are passable; `augment`
/// adds the constraints.
pub fn parse_vrp(text: &str) -> Result<Instance, InstanceError> {
    let mut name = String::from("unnamed");
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<u32> = None;
    let mut coords: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut demands: BTreeMap<usize, u32> = BTreeMap::new();
    let mut depot: Option<usize> = None;
    let mut saw_coords = false;
    let mut saw_demands = false;
    let mut saw_depot = false;

    #[derive(PartialEq)]
    enum Section {
        Header,
        Coords,
        Demands,
        Depot,
        Done,
    }
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| InstanceError::MalformedLine {
            line: lineno,
            reason: reason.to_string(),
        };

        let keyword = line.split([':', ' ', '\t']).next().unwrap_or("");
        match keyword {
            "NODE_COORD_SECTION" => {
                section = Section::Coords;
                saw_coords = true;
                continue;
            }
            "DEMAND_SECTION" => {
                section = Section::Demands;
                saw_demands = true;
                continue;
            }
            "DEPOT_SECTION" => {
                section = Section::Depot;
                saw_depot = true;
                continue;
            }
            "EOF" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }

        match section {
            Section::Header => {
                let (key, value) = match line.split_once(':') {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => return Err(malformed("expected `KEY : VALUE` header line")),
                };
                match key {
                    "NAME" => name = value.to_string(),
                    "DIMENSION" => {
                        dimension = Some(
                            value.parse().map_err(|_| malformed("DIMENSION is not an integer"))?,
                        )
                    }
                    "CAPACITY" => {
                        capacity = Some(
                            value.parse().map_err(|_| malformed("CAPACITY is not an integer"))?,
                        )
                    }
                    "EDGE_WEIGHT_TYPE" => {
                        if value != "EUC_2D" {
                            return Err(malformed("only EUC_2D edge weights are supported"));
                        }
                    }
                    // TYPE, COMMENT and friends carry no data we use.
                    _ => {}
                }
            }
            Section::Coords => {
                let mut it = line.split_whitespace();
                let id: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| malformed("expected `id x y`"))?;
                let x: f64 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| malformed("expected `id x y`"))?;
                let y: f64 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| malformed("expected `id x y`"))?;
                if it.next().is_some() {
                    return Err(malformed("trailing tokens after `id x y`"));
                }
                if coords.insert(id, (x, y)).is_some() {
                    return Err(InstanceError::DuplicateNodeId(id));
                }
            }
            Section::Demands => {
                let mut it = line.split_whitespace();
                let id: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| malformed("expected `id demand`"))?;
                let d: u32 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| malformed("expected `id demand`"))?;
                if it.next().is_some() {
                    return Err(malformed("trailing tokens after `id demand`"));
                }
                if demands.insert(id, d).is_some() {
                    return Err(InstanceError::DuplicateNodeId(id));
                }
            }
            Section::Depot => {
                for tok in line.split_whitespace() {
                    let v: i64 =
                        tok.parse().map_err(|_| malformed("depot entry is not an integer"))?;
                    if v == -1 {
                        section = Section::Done;
                        break;
                    }
                    if depot.replace(v as usize).is_some() {
                        return Err(malformed("multiple depots are not supported"));
                    }
                }
            }
            Section::Done => {}
        }
    }

    let dimension = dimension.ok_or(InstanceError::MissingSection("DIMENSION"))?;
    let capacity = capacity.ok_or(InstanceError::MissingSection("CAPACITY"))?;
    if !saw_coords {
        return Err(InstanceError::MissingSection("NODE_COORD_SECTION"));
    }
    if !saw_demands {
        return Err(InstanceError::MissingSection("DEMAND_SECTION"));
    }
    if !saw_depot {
        return Err(InstanceError::MissingSection("DEPOT_SECTION"));
    }
    let depot = depot.ok_or(InstanceError::MissingSection("DEPOT_SECTION"))?;
    if coords.len() != dimension {
        return Err(InstanceError::NodeCountMismatch { expected: dimension, found: coords.len() });
    }
    if demands.len() != dimension {
        return Err(InstanceError::NodeCountMismatch { expected: dimension, found: demands.len() });
    }
    if !coords.contains_key(&depot) {
        return Err(InstanceError::Invalid(format!("depot {depot} has no coordinates")));
    }

    // Depot first, remaining nodes in file order, ids rewritten to 0-based.
    let mut order: Vec<usize> = Vec::with_capacity(dimension);
    order.push(depot);
    order.extend(coords.keys().copied().filter(|&id| id != depot));

    let mut nodes = Vec::with_capacity(dimension);
    for (new_id, &orig) in order.iter().enumerate() {
        let (x, y) = coords[&orig];
        let demand = *demands
            .get(&orig)
            .ok_or_else(|| InstanceError::Invalid(format!("node {orig} has no demand entry")))?;
        nodes.push(Node {
            id: new_id,
            x,
            y,
            demand,
            window: TimeWindow::unconstrained(),
        });
    }
    if nodes[0].demand != 0 {
        return Err(InstanceError::DepotDemandNonzero(nodes[0].demand));
    }

    let max_routes = route_budget_from_name(&name).unwrap_or_else(|| {
        let total: u64 = nodes.iter().map(|n| n.demand as u64).sum();
        (total.div_ceil(capacity as u64) as usize).max(1) + 1
    });

    Instance::new(name, nodes, capacity, max_routes, 0, BTreeMap::new())
}

/// Augerat names encode the truck count as a `-k<digits>` suffix.
fn route_budget_from_name(name: &str) -> Option<usize> {
    let (_, tail) = name.rsplit_once("-k")?;
    let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok().filter(|&k| k > 0)
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format_version: u32,
    name: String,
    capacity: u32,
    max_routes: usize,
    rng_seed: u64,
    nodes: Vec<NodeRecord>,
    breaks: Vec<BreakRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    x: f64,
    y: f64,
    demand: u32,
    window: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BreakRecord {
    from: usize,
    to: usize,
    break_time: f64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Serialize to the canonical text format: stable key order, stable float
/// formatting, byte-identical for equal instances.
pub fn serialize(inst: &Instance) -> String {
    let file = InstanceFile {
        format_version: INSTANCE_FORMAT_VERSION,
        name: inst.name.clone(),
        capacity: inst.capacity,
        max_routes: inst.max_routes,
        rng_seed: inst.rng_seed,
        nodes: inst
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                x: n.x,
                y: n.y,
                demand: n.demand,
                window: [n.window.open, n.window.close],
            })
            .collect(),
        breaks: inst
            .breaks
            .iter()
            .map(|(&(from, to), &t)| BreakRecord { from, to, break_time: t })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("instance serialization");
    out.push('\n');
    out
}

pub fn deserialize(text: &str) -> Result<Instance, InstanceError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(json_err)?;
    if probe.format_version != INSTANCE_FORMAT_VERSION {
        return Err(InstanceError::SchemaVersionMismatch {
            expected: INSTANCE_FORMAT_VERSION,
            found: probe.format_version,
        });
    }
    let file: InstanceFile = serde_json::from_str(text).map_err(json_err)?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|r| Node {
            id: r.id,
            x: r.x,
            y: r.y,
            demand: r.demand,
            window: TimeWindow { open: r.window[0], close: r.window[1] },
        })
        .collect();
    let mut breaks = BTreeMap::new();
    for b in file.breaks {
        if breaks.insert((b.from, b.to), b.break_time).is_some() {
            return Err(InstanceError::Invalid(format!(
                "duplicate break entry for edge ({}, {})",
                b.from, b.to
            )));
        }
    }
    Instance::new(file.name, nodes, file.capacity, file.max_routes, file.rng_seed, breaks)
}

fn json_err(e: serde_json::Error) -> InstanceError {
    InstanceError::ParseError { line: e.line(), column: e.column(), reason: e.to_string() }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} customers, capacity {}, {} routes, {} broken edges)",
            self.name,
            self.customer_count(),
            self.capacity,
            self.max_routes,
            self.breaks.len()
        )
    }
}
