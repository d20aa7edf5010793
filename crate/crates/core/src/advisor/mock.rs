//! Deterministic heuristic backend. It sees nothing but the prompt text, the
//! way a remote model would: the instance and state are parsed back out of
//! the prompt, so a prompt that omits information produces a worse advisor.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::env::{Env, EnvConfig, EnvState};
use crate::instance::{Instance, Node, NodeId, TimeWindow};
use crate::util::fnv1a;

use super::{AdvisorBackend, BackendError, DecodeParams, CANDIDATES_PER_QUERY};

/// Deliberate fault injection, one mode per self-correction layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Window-aware nearest-feasible-neighbor candidates.
    Faithful,
    /// Free-text reply with no bracketed list.
    SyntaxGarbage,
    /// Well-formed lists naming a node that does not exist.
    HallucinateNode,
    /// Well-formed, semantically clean lists that violate capacity or windows.
    InfeasibleLeg,
}

/// Deterministic given (seed, call sequence): a fresh backend replays the
/// identical reply stream, so training runs reproduce byte for byte. A call
/// counter joins the seed derivation the way sampling temperature varies a
/// hosted model between calls; without it, repeated prompts would freeze the
/// candidate set for a whole run.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub seed: u64,
    pub mode: MockMode,
    /// Relative distance noise that differentiates the three candidates.
    pub tie_noise: f64,
    calls: std::cell::Cell<u64>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            seed,
            mode: MockMode::Faithful,
            tie_noise: 1.5,
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn with_mode(seed: u64, mode: MockMode) -> Self {
        MockBackend { mode, ..MockBackend::new(seed) }
    }
}

impl AdvisorBackend for MockBackend {
    fn complete(&self, prompt: &str, _decode: &DecodeParams) -> Result<String, BackendError> {
        let call = self.calls.get();
        self.calls.set(call + 1);
        let view = parse_prompt(prompt)
            .ok_or_else(|| BackendError::Unavailable("mock could not parse the prompt".into()))?;
        match self.mode {
            MockMode::SyntaxGarbage => {
                Ok("The optimal route should be 1 -> 2 -> 3 given the time windows.".into())
            }
            MockMode::HallucinateNode => {
                let ghost = view.inst.node_count() + 6;
                let real = view.state.pending_customers().next().unwrap_or(1);
                Ok(format!("[[{ghost},{real}],[{real},{ghost}],[{ghost}]]"))
            }
            MockMode::InfeasibleLeg => {
                let mut pending: Vec<NodeId> = view.state.pending_customers().collect();
                // Heaviest first and never a reload: overflows as soon as the
                // pending demand exceeds the remaining capacity.
                pending.sort_by_key(|&c| std::cmp::Reverse(view.inst.nodes[c].demand));
                let one = render_traj(&pending);
                let mut rev = pending.clone();
                rev.reverse();
                Ok(format!("[{one},{},{one}]", render_traj(&rev)))
            }
            MockMode::Faithful => {
                let mut lists = Vec::new();
                for g in 0..CANDIDATES_PER_QUERY {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        self.seed
                            ^ fnv1a(prompt.as_bytes())
                            ^ call.wrapping_mul(0x517c_c1b7_2722_0a95)
                            ^ (g as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    );
                    // Greediness ladder: one exploitative candidate, one
                    // moderate, one close to a random feasible walk.
                    let noise = self.tie_noise * [0.3, 1.0, 3.0][g.min(2)];
                    lists.push(render_traj(&greedy_walk(&view, noise, &mut rng)));
                }
                Ok(format!("[{}]", lists.join(",")))
            }
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

fn render_traj(traj: &[NodeId]) -> String {
    let items: Vec<String> = traj.iter().map(|v| v.to_string()).collect();
    format!("[{}]", items.join(","))
}

struct PromptView {
    inst: Instance,
    state: EnvState,
}

/// Reconstruct instance and state from the prompt sections.
fn parse_prompt(prompt: &str) -> Option<PromptView> {
    let depot_re = Regex::new(r"(?m)^- node 0: \(([-0-9.eE+]+), ([-0-9.eE+]+)\) depot$").ok()?;
    let node_re = Regex::new(
        r"(?m)^- node (\d+): \(([-0-9.eE+]+), ([-0-9.eE+]+)\) demand (\d+) window \[([-0-9.eE+]+), ([-0-9.eE+]+)\]$",
    )
    .ok()?;
    let cap_re = Regex::new(r"(?m)^Vehicle capacity: (\d+)$").ok()?;
    let budget_re = Regex::new(r"(?m)^Route budget: (\d+)$").ok()?;
    let pos_re = Regex::new(r"(?m)^- position: node (\d+)$").ok()?;
    let rem_re = Regex::new(r"(?m)^- remaining capacity: (\d+)$").ok()?;
    let clock_re = Regex::new(r"(?m)^- clock: ([-0-9.eE+]+)$").ok()?;
    let routes_re = Regex::new(r"(?m)^- routes used: (\d+)$").ok()?;
    let pending_re = Regex::new(r"(?m)^- pending customers: \[([0-9, ]*)\]$").ok()?;
    let break_re =
        Regex::new(r"(?m)^- edge \((\d+), (\d+)\) breaks at ([-0-9.eE+]+)$").ok()?;
    let broken_re = Regex::new(r"(?m)^- edge \((\d+), (\d+)\) is already broken$").ok()?;

    let depot = depot_re.captures(prompt)?;
    let mut nodes = vec![Node {
        id: 0,
        x: depot[1].parse().ok()?,
        y: depot[2].parse().ok()?,
        demand: 0,
        window: TimeWindow::unconstrained(),
    }];
    for cap in node_re.captures_iter(prompt) {
        nodes.push(Node {
            id: cap[1].parse().ok()?,
            x: cap[2].parse().ok()?,
            y: cap[3].parse().ok()?,
            demand: cap[4].parse().ok()?,
            window: TimeWindow { open: cap[5].parse().ok()?, close: cap[6].parse().ok()? },
        });
    }

    let mut breaks = BTreeMap::new();
    for cap in break_re.captures_iter(prompt) {
        breaks.insert((cap[1].parse().ok()?, cap[2].parse().ok()?), cap[3].parse().ok()?);
    }
    for cap in broken_re.captures_iter(prompt) {
        // Break time in the past; exactly when is irrelevant from here on.
        breaks.insert((cap[1].parse().ok()?, cap[2].parse().ok()?), 0.0);
    }

    let inst = Instance::new(
        "prompt",
        nodes,
        cap_re.captures(prompt)?[1].parse().ok()?,
        budget_re.captures(prompt)?[1].parse().ok()?,
        0,
        breaks,
    )
    .ok()?;

    let pending_ids: Vec<NodeId> = pending_re.captures(prompt)?[1]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    let mut pending = vec![false; inst.customer_count()];
    for id in pending_ids {
        *pending.get_mut(id.checked_sub(1)?)? = true;
    }

    let state = EnvState {
        position: pos_re.captures(prompt)?[1].parse().ok()?,
        remaining_capacity: rem_re.captures(prompt)?[1].parse().ok()?,
        pending,
        clock: clock_re.captures(prompt)?[1].parse().ok()?,
        routes_used: routes_re.captures(prompt)?[1].parse().ok()?,
    };
    Some(PromptView { inst, state })
}

/// Nearest feasible neighbor under windows, capacity and breaks, with seeded
/// tie noise; returns to the depot to reload when nothing fits.
fn greedy_walk(view: &PromptView, tie_noise: f64, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let inst = &view.inst;
    let env = Env::new(inst, EnvConfig::default());
    let mut s = view.state.clone();
    let mut traj = Vec::new();
    let step_cap = 2 * inst.customer_count() + inst.max_routes + 2;

    while traj.len() < step_cap {
        if s.all_served() && s.position == 0 {
            break;
        }
        let actions = env.action_space(&s);
        if actions.is_empty() {
            break;
        }
        let mut best: Option<(f64, NodeId)> = None;
        for &a in &actions {
            if a == 0 {
                continue;
            }
            let arrival = s.clock + inst.travel_time(s.position, a);
            if !inst.nodes[a].window.contains(arrival) {
                continue;
            }
            let score = inst.cost(s.position, a) * (1.0 + tie_noise * rng.gen::<f64>());
            if best.map_or(true, |(b, _)| score < b) {
                best = Some((score, a));
            }
        }
        let choice = match best {
            Some((_, a)) => a,
            None => {
                let may_return = actions.contains(&0)
                    && s.position != 0
                    && (s.all_served() || s.routes_used < inst.max_routes);
                if may_return {
                    0
                } else {
                    break;
                }
            }
        };
        let Ok(out) = env.step(&s, choice) else { break };
        traj.push(choice);
        s = out.next;
        if out.done {
            break;
        }
    }

    if traj.is_empty() {
        // Nothing servable from here; suggest the nearest pending customer so
        // the filter feedback explains what blocks it.
        if let Some(c) = s
            .pending_customers()
            .min_by(|&a, &b| inst.cost(s.position, a).partial_cmp(&inst.cost(s.position, b)).unwrap())
        {
            traj.push(c);
        }
    }
    traj
}
