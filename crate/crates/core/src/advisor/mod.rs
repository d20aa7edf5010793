//! Trajectory advisor: prompt construction, the three-stage self-correction
//! filter (syntax, semantic, physical), candidate generation backends, and
//! the bounded memory pool of best past trajectories.

mod mock;
mod remote;

pub use mock::{MockBackend, MockMode};
pub use remote::{build_request_body, RemoteBackend, RemoteConfig};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvConfig, EnvState};
use crate::instance::{Instance, NodeId};

/// Candidates requested per backend call.
pub const CANDIDATES_PER_QUERY: usize = 3;

/// Pool entries quoted in a prompt.
pub const POOL_TOP_K: usize = 3;

/// Sampling parameters sent to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.7, max_tokens: 512 }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

/// A candidate-trajectory generator: a remote chat-completion model or the
/// deterministic heuristic mock.
pub trait AdvisorBackend {
    fn complete(&self, prompt: &str, decode: &DecodeParams) -> Result<String, BackendError>;

    fn name(&self) -> &str {
        "backend"
    }
}

// ---------------------------------------------------------------------------
// Memory pool
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub trajectory: Vec<NodeId>,
    pub episode_return: f64,
    pub annotations: Vec<String>,
}

/// Bounded store of the best past trajectories, ordered by episode return.
/// Ties keep insertion order; duplicates keep the higher return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPool {
    capacity: usize,
    entries: Vec<PoolEntry>,
}

impl MemoryPool {
    pub fn new(capacity: usize) -> Self {
        MemoryPool { capacity, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn top(&self, k: usize) -> &[PoolEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    /// Insert one finished episode trajectory with its return.
    pub fn update(&mut self, trajectory: Vec<NodeId>, episode_return: f64, annotations: Vec<String>) {
        if trajectory.is_empty() {
            return;
        }
        if let Some(existing) = self.entries.iter_mut().find(|e| e.trajectory == trajectory) {
            if episode_return > existing.episode_return {
                existing.episode_return = episode_return;
                existing.annotations = annotations;
            }
        } else {
            self.entries.push(PoolEntry { trajectory, episode_return, annotations });
        }
        self.entries.sort_by(|a, b| {
            b.episode_return.partial_cmp(&a.episode_return).expect("finite returns")
        });
        self.entries.truncate(self.capacity);
    }
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

/// Render the solver prompt: role and objective, the network, the live state,
/// currently relevant break times, best pool trajectories, accumulated error
/// feedback, and a strict output-format clause.
pub fn build_prompt(
    state: &EnvState,
    inst: &Instance,
    pool: &MemoryPool,
    last_errors: &[String],
) -> String {
    let mut p = String::new();
    p.push_str(
        "You are an expert vehicle-routing solver. Propose delivery trajectories that \
         minimize generalized cost (distance traveled plus a fixed charge per route \
         dispatched) while respecting vehicle capacity, customer time windows, and \
         road breaks. Reason step by step about capacity, windows, and reachability \
         before you answer.\n\n",
    );

    p.push_str("Network nodes:\n");
    for node in &inst.nodes {
        if node.id == 0 {
            p.push_str(&format!("- node 0: ({}, {}) depot\n", node.x, node.y));
        } else {
            p.push_str(&format!(
                "- node {}: ({}, {}) demand {} window [{}, {}]\n",
                node.id, node.x, node.y, node.demand, node.window.open, node.window.close
            ));
        }
    }
    p.push_str(&format!("Vehicle capacity: {}\n", inst.capacity));
    p.push_str(&format!("Route budget: {}\n", inst.max_routes));

    p.push_str("\nCurrent state:\n");
    p.push_str(&format!("- position: node {}\n", state.position));
    p.push_str(&format!("- remaining capacity: {}\n", state.remaining_capacity));
    p.push_str(&format!("- clock: {}\n", state.clock));
    p.push_str(&format!("- routes used: {}\n", state.routes_used));
    let pending: Vec<String> = state.pending_customers().map(|c| c.to_string()).collect();
    p.push_str(&format!("- pending customers: [{}]\n", pending.join(", ")));

    let breaks: Vec<String> = inst
        .break_edges()
        .iter()
        .filter(|(_, &t)| state.clock < t || t == 0.0)
        .map(|(&(a, b), &t)| format!("- edge ({a}, {b}) breaks at {t}"))
        .collect();
    let gone: Vec<String> = inst
        .break_edges()
        .iter()
        .filter(|(_, &t)| t > 0.0 && state.clock >= t)
        .map(|(&(a, b), _)| format!("- edge ({a}, {b}) is already broken"))
        .collect();
    if !breaks.is_empty() || !gone.is_empty() {
        p.push_str("\nRoad breaks (an edge is unusable once the clock reaches its break time):\n");
        for line in breaks.iter().chain(gone.iter()) {
            p.push_str(line);
            p.push('\n');
        }
    }

    if !pool.is_empty() {
        p.push_str("\nBest past trajectories (higher return first):\n");
        for e in pool.top(POOL_TOP_K) {
            p.push_str(&format!("- return {}: {:?}\n", e.episode_return, e.trajectory));
        }
    }

    if !last_errors.is_empty() {
        p.push_str("\nYour previous candidates were rejected:\n");
        for err in last_errors {
            p.push_str(&format!("- {err}\n"));
        }
    }

    p.push_str(&format!(
        "\nReply with exactly {CANDIDATES_PER_QUERY} candidate trajectories. Output in list \
         format: one bracketed list of node-id lists, for example [[1,2,0,3],[2,1],[1,3]]. \
         Use 0 for a depot return. Write nothing after the list.\n",
    ));
    p
}

// ---------------------------------------------------------------------------
// Three-stage filter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax: {0}")]
pub struct SyntaxError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("semantic: {0}")]
pub struct SemanticError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhysicalErrorKind {
    CapacityExceeded,
    WindowMissed,
    BrokenEdgeUsed,
    ImpassableEdgeUsed,
    RouteBudgetExhausted,
    UnreachableLeg,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("physical: {message}")]
pub struct PhysicalError {
    pub kind: PhysicalErrorKind,
    /// Zero-based index of the first offending leg.
    pub leg: usize,
    pub message: String,
}

/// Extract the first well-formed bracketed list of integer lists from a raw
/// reply. Anything else is a syntax error whose message is fed back into the
/// next prompt.
pub fn parse_reply(raw: &str) -> Result<Vec<Vec<NodeId>>, SyntaxError> {
    let bytes = raw.as_bytes();
    let mut first_error: Option<SyntaxError> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            match parse_list_of_lists(&raw[i..]) {
                Ok(lists) => return Ok(lists),
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
        }
        i += 1;
    }
    Err(first_error
        .unwrap_or_else(|| SyntaxError("reply contains no bracketed trajectory list".into())))
}

fn parse_list_of_lists(text: &str) -> Result<Vec<Vec<NodeId>>, SyntaxError> {
    let mut chars = text.char_indices().peekable();
    let mut lists = Vec::new();

    fn skip_ws(chars: &mut std::iter::Peekable<std::str::CharIndices>) {
        while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            chars.next();
        }
    }

    match chars.next() {
        Some((_, '[')) => {}
        _ => return Err(SyntaxError("expected '['".into())),
    }
    skip_ws(&mut chars);
    if chars.peek().is_some_and(|&(_, c)| c == ']') {
        chars.next();
        return Ok(lists);
    }
    loop {
        skip_ws(&mut chars);
        match chars.next() {
            Some((_, '[')) => {}
            Some((_, c)) => {
                return Err(SyntaxError(format!(
                    "expected an inner '[' but found '{c}' in the trajectory list"
                )))
            }
            None => return Err(SyntaxError("unterminated trajectory list".into())),
        }
        let mut inner = Vec::new();
        skip_ws(&mut chars);
        if chars.peek().is_some_and(|&(_, c)| c == ']') {
            chars.next();
        } else {
            loop {
                skip_ws(&mut chars);
                let mut token = String::new();
                while chars.peek().is_some_and(|(_, c)| !matches!(c, ',' | ']' | '[') && !c.is_whitespace())
                {
                    token.push(chars.next().unwrap().1);
                }
                skip_ws(&mut chars);
                let id: NodeId = token
                    .parse()
                    .map_err(|_| SyntaxError(format!("non-integer token '{token}' in trajectory")))?;
                inner.push(id);
                match chars.next() {
                    Some((_, ',')) => continue,
                    Some((_, ']')) => break,
                    Some((_, c)) => {
                        return Err(SyntaxError(format!("unexpected '{c}' inside a trajectory")))
                    }
                    None => return Err(SyntaxError("unterminated trajectory".into())),
                }
            }
        }
        lists.push(inner);
        skip_ws(&mut chars);
        match chars.next() {
            Some((_, ',')) => continue,
            Some((_, ']')) => return Ok(lists),
            Some((_, c)) => {
                return Err(SyntaxError(format!("unexpected '{c}' between trajectories")))
            }
            None => return Err(SyntaxError("unterminated trajectory list".into())),
        }
    }
}

/// Reject hallucinations: unknown ids, revisits of served customers, repeated
/// visits of a pending customer within one candidate, and empty candidates.
pub fn semantic_check(
    traj: &[NodeId],
    state: &EnvState,
    inst: &Instance,
) -> Result<(), SemanticError> {
    if traj.is_empty() {
        return Err(SemanticError("empty trajectory".into()));
    }
    let mut seen = BTreeSet::new();
    for &v in traj {
        if v >= inst.node_count() {
            return Err(SemanticError(format!(
                "unknown node id {v}; valid ids are 0..{}",
                inst.node_count() - 1
            )));
        }
        if v == 0 {
            continue;
        }
        if !state.is_pending(v) {
            return Err(SemanticError(format!("customer {v} was already served")));
        }
        if !seen.insert(v) {
            return Err(SemanticError(format!("customer {v} is visited twice")));
        }
    }
    Ok(())
}

/// Enforce the spatiotemporal constraints by replaying the candidate through
/// the environment rules from the current state; the first offending leg is
/// named in the error.
pub fn physical_check(
    traj: &[NodeId],
    state: &EnvState,
    inst: &Instance,
    env_cfg: EnvConfig,
) -> Result<(), PhysicalError> {
    let env = Env::new(inst, env_cfg);
    let mut s = state.clone();
    let mut ended = false;
    for (leg, &v) in traj.iter().enumerate() {
        if ended {
            return Err(PhysicalError {
                kind: PhysicalErrorKind::UnreachableLeg,
                leg,
                message: format!("leg {leg} (node {v}) continues past the episode end"),
            });
        }
        let arrival = s.clock + inst.travel_time(s.position, v);
        if v == 0 && s.position == 0 {
            return Err(PhysicalError {
                kind: PhysicalErrorKind::UnreachableLeg,
                leg,
                message: format!("leg {leg} revisits the depot while already there"),
            });
        }
        if let Some(bt) = inst.break_time(s.position, v) {
            if bt == 0.0 {
                return Err(PhysicalError {
                    kind: PhysicalErrorKind::ImpassableEdgeUsed,
                    leg,
                    message: format!(
                        "leg {leg} uses impassable edge ({}, {v})",
                        s.position
                    ),
                });
            }
            if arrival >= bt {
                return Err(PhysicalError {
                    kind: PhysicalErrorKind::BrokenEdgeUsed,
                    leg,
                    message: format!(
                        "leg {leg} arrives at node {v} at {arrival} but edge ({}, {v}) breaks at {bt}",
                        s.position
                    ),
                });
            }
        }
        if v != 0 {
            if inst.nodes[v].demand > s.remaining_capacity {
                return Err(PhysicalError {
                    kind: PhysicalErrorKind::CapacityExceeded,
                    leg,
                    message: format!(
                        "leg {leg}: demand {} of customer {v} exceeds remaining capacity {}",
                        inst.nodes[v].demand, s.remaining_capacity
                    ),
                });
            }
            let w = inst.nodes[v].window;
            if !w.contains(arrival) {
                return Err(PhysicalError {
                    kind: PhysicalErrorKind::WindowMissed,
                    leg,
                    message: format!(
                        "leg {leg}: arrival {arrival} at customer {v} misses window [{}, {}]",
                        w.open, w.close
                    ),
                });
            }
        } else if s.routes_used >= inst.max_routes && !s.all_served() {
            return Err(PhysicalError {
                kind: PhysicalErrorKind::RouteBudgetExhausted,
                leg,
                message: format!("leg {leg} starts route {} of {}", s.routes_used + 1, inst.max_routes),
            });
        }
        let out = env.step(&s, v).map_err(|e| PhysicalError {
            kind: PhysicalErrorKind::UnreachableLeg,
            leg,
            message: format!("leg {leg}: {e}"),
        })?;
        // Window and edge violations were pre-checked; anything left is a
        // deadlock the candidate steered into.
        if out.info.emergency {
            return Err(PhysicalError {
                kind: PhysicalErrorKind::UnreachableLeg,
                leg,
                message: format!(
                    "leg {leg} strands the vehicle with customers still pending"
                ),
            });
        }
        s = out.next;
        ended = out.done;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Advise loop
// ---------------------------------------------------------------------------

/// Filter verdicts for one parsed candidate. `semantic`/`physical` are `None`
/// while an earlier layer already rejected the candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub trajectory: Vec<NodeId>,
    pub semantic: Option<String>,
    pub physical: Option<String>,
    pub accepted: bool,
}

/// One request/filter cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub prompt: String,
    pub reply: String,
    pub syntax_error: Option<String>,
    pub candidates: Vec<CandidateOutcome>,
}

/// Everything `advise` produced: per-round records, the accepted trajectory
/// set, and the first-action set used to constrain the agent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub rounds: Vec<Round>,
    pub accepted: Vec<Vec<NodeId>>,
    pub first_actions: BTreeSet<NodeId>,
}

impl CandidateSet {
    pub fn backend_calls(&self) -> usize {
        self.rounds.len()
    }

    pub fn candidates_requested(&self) -> usize {
        self.rounds.len() * CANDIDATES_PER_QUERY
    }
}

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// Run up to `max_rounds` request/filter cycles against the backend, feeding
/// every accumulated rejection message back into the next prompt. Returns the
/// accepted candidates, possibly none; callers then fall back to the
/// unrestricted action space.
pub fn advise(
    state: &EnvState,
    inst: &Instance,
    backend: &dyn AdvisorBackend,
    pool: &MemoryPool,
    max_rounds: usize,
    env_cfg: EnvConfig,
    decode: &DecodeParams,
) -> Result<CandidateSet, AdvisorError> {
    assert!(max_rounds >= 1);
    let mut set = CandidateSet::default();
    let mut errors: Vec<String> = Vec::new();

    for _ in 0..max_rounds {
        let prompt = build_prompt(state, inst, pool, &errors);
        let reply = backend
            .complete(&prompt, decode)
            .map_err(|BackendError::Unavailable(m)| AdvisorError::BackendUnavailable(m))?;

        let mut round = Round {
            prompt,
            reply: reply.clone(),
            syntax_error: None,
            candidates: Vec::new(),
        };
        match parse_reply(&reply) {
            Err(e) => {
                round.syntax_error = Some(e.0.clone());
                errors.push(e.to_string());
            }
            Ok(trajectories) => {
                for (g, traj) in trajectories.into_iter().enumerate() {
                    let mut outcome = CandidateOutcome {
                        trajectory: traj.clone(),
                        semantic: None,
                        physical: None,
                        accepted: false,
                    };
                    match semantic_check(&traj, state, inst) {
                        Err(e) => {
                            outcome.semantic = Some(e.0.clone());
                            errors.push(format!("candidate {}: {e}", g + 1));
                        }
                        Ok(()) => match physical_check(&traj, state, inst, env_cfg) {
                            Err(e) => {
                                outcome.physical = Some(e.message.clone());
                                errors.push(format!("candidate {}: {e}", g + 1));
                            }
                            Ok(()) => {
                                outcome.accepted = true;
                                set.accepted.push(traj.clone());
                                if let Some(&first) = traj.first() {
                                    set.first_actions.insert(first);
                                }
                            }
                        },
                    }
                    round.candidates.push(outcome);
                }
            }
        }
        set.rounds.push(round);
        if !set.accepted.is_empty() {
            break;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn depot_state(inst: &Instance) -> EnvState {
        Env::new(inst, EnvConfig::default()).reset()
    }

    #[test]
    fn parse_reply_accepts_plain_lists() {
        let t = parse_reply("[[1,3,2],[2,1,3],[3,2,1]]").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0], vec![1, 3, 2]);
    }

    #[test]
    fn parse_reply_skips_surrounding_prose() {
        let t = parse_reply("Sure! Based on the windows I suggest:\n[[2, 1], [1, 2], [2]]\nDone.")
            .unwrap();
        assert_eq!(t, vec![vec![2, 1], vec![1, 2], vec![2]]);
    }

    #[test]
    fn parse_reply_rejects_arrow_routes() {
        let err = parse_reply("route: 1 -> 3 -> 2").unwrap_err();
        assert!(err.0.contains("no bracketed"));
    }

    #[test]
    fn parse_reply_names_the_bad_token() {
        let err = parse_reply("[[1, x, 2]]").unwrap_err();
        assert!(err.0.contains("'x'"), "message was: {}", err.0);
    }

    #[test]
    fn semantic_check_catches_hallucinations() {
        let inst = fixtures::four_node();
        let mut state = depot_state(&inst);
        state.pending[0] = false; // customer 1 served

        assert!(semantic_check(&[2, 3], &state, &inst).is_ok());
        assert!(semantic_check(&[3, 2], &state, &inst).is_ok());
        let err = semantic_check(&[1, 2], &state, &inst).unwrap_err();
        assert!(err.0.contains("already served"));
        let err = semantic_check(&[9], &state, &inst).unwrap_err();
        assert!(err.0.contains("unknown node id 9"));
        let err = semantic_check(&[2, 2], &state, &inst).unwrap_err();
        assert!(err.0.contains("visited twice"));
        let err = semantic_check(&[], &state, &inst).unwrap_err();
        assert!(err.0.contains("empty"));
    }

    #[test]
    fn physical_check_capacity_prefix() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        // 4 + 5 + 3 = 12 > 10 without a depot visit.
        let err = physical_check(&[1, 2, 3], &state, &inst, EnvConfig::default()).unwrap_err();
        assert_eq!(err.kind, PhysicalErrorKind::CapacityExceeded);
        assert_eq!(err.leg, 2);
        // An interleaved depot return fixes it.
        assert!(physical_check(&[1, 2, 0, 3], &state, &inst, EnvConfig::default()).is_ok());
    }

    #[test]
    fn physical_check_broken_edge() {
        // Arrival at 2 over 0->1->2 is 8; the edge breaks at 5.
        let inst = fixtures::four_node_with_breaks(&[(1, 2, 5.0)]);
        let state = depot_state(&inst);
        let err = physical_check(&[1, 2], &state, &inst, EnvConfig::default()).unwrap_err();
        assert_eq!(err.kind, PhysicalErrorKind::BrokenEdgeUsed);
        assert_eq!(err.leg, 1);
    }

    #[test]
    fn physical_check_feasible_singleton() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        assert!(physical_check(&[1], &state, &inst, EnvConfig::default()).is_ok());
    }

    #[test]
    fn prompt_is_byte_stable_and_lists_pending_once() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        let pool = MemoryPool::new(10);
        let a = build_prompt(&state, &inst, &pool, &[]);
        let b = build_prompt(&state, &inst, &pool, &[]);
        assert_eq!(a, b);
        let pending_line = a.lines().find(|l| l.starts_with("- pending customers:")).unwrap();
        assert_eq!(pending_line, "- pending customers: [1, 2, 3]");
        // Empty pool and no errors leave those sections out.
        assert!(!a.contains("Best past trajectories"));
        assert!(!a.contains("previous candidates"));
    }

    #[test]
    fn prompt_includes_pool_and_errors_when_present() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        let mut pool = MemoryPool::new(10);
        pool.update(vec![1, 2, 0, 3], -350.0, vec![]);
        let errs = vec!["candidate 1: semantic: customer 2 was already served".to_string()];
        let p = build_prompt(&state, &inst, &pool, &errs);
        assert!(p.contains("Best past trajectories"));
        assert!(p.contains("[1, 2, 0, 3]"));
        assert!(p.contains("customer 2 was already served"));
    }

    #[test]
    fn pool_keeps_best_by_return() {
        let mut pool = MemoryPool::new(2);
        pool.update(vec![1], 5.0, vec![]);
        pool.update(vec![2], 9.0, vec![]);
        pool.update(vec![3], 7.0, vec![]);
        let returns: Vec<f64> = pool.entries().iter().map(|e| e.episode_return).collect();
        assert_eq!(returns, vec![9.0, 7.0]);
    }

    #[test]
    fn pool_dedupes_keeping_higher_return() {
        let mut pool = MemoryPool::new(4);
        pool.update(vec![1, 2], 5.0, vec![]);
        pool.update(vec![1, 2], 9.0, vec![]);
        pool.update(vec![1, 2], 3.0, vec![]);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.entries()[0].episode_return, 9.0);
    }

    #[test]
    fn pool_ignores_empty_trajectories() {
        let mut pool = MemoryPool::new(4);
        pool.update(vec![], 100.0, vec![]);
        assert!(pool.is_empty());
    }

    /// Backend that replies from a script and records the prompts it saw.
    struct Scripted {
        replies: std::cell::RefCell<Vec<String>>,
        prompts: std::cell::RefCell<Vec<String>>,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Scripted {
                replies: std::cell::RefCell::new(
                    replies.iter().rev().map(|s| s.to_string()).collect(),
                ),
                prompts: std::cell::RefCell::new(Vec::new()),
            }
        }
    }

    impl AdvisorBackend for Scripted {
        fn complete(&self, prompt: &str, _d: &DecodeParams) -> Result<String, BackendError> {
            self.prompts.borrow_mut().push(prompt.to_string());
            Ok(self.replies.borrow_mut().pop().unwrap_or_else(|| "garbage".into()))
        }
    }

    #[test]
    fn advise_survives_garbage_every_round() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        let backend = Scripted::new(&["nonsense", "more nonsense", "still nothing"]);
        let pool = MemoryPool::new(10);
        let set = advise(
            &state,
            &inst,
            &backend,
            &pool,
            3,
            EnvConfig::default(),
            &DecodeParams::default(),
        )
        .unwrap();
        assert!(set.accepted.is_empty());
        assert_eq!(set.rounds.len(), 3);
        assert!(set.rounds.iter().all(|r| r.syntax_error.is_some()));
    }

    #[test]
    fn advise_feeds_errors_back_verbatim() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        // Round 1: hallucinated node; round 2: feasible.
        let backend = Scripted::new(&["[[9],[9],[9]]", "[[1],[2],[3]]"]);
        let pool = MemoryPool::new(10);
        let set = advise(
            &state,
            &inst,
            &backend,
            &pool,
            3,
            EnvConfig::default(),
            &DecodeParams::default(),
        )
        .unwrap();
        assert_eq!(set.rounds.len(), 2);
        assert_eq!(set.accepted.len(), 3);
        let round1_error = "candidate 1: semantic: unknown node id 9; valid ids are 0..3";
        let prompts = backend.prompts.borrow();
        assert!(!prompts[0].contains(round1_error));
        assert!(prompts[1].contains(round1_error), "round-2 prompt: {}", prompts[1]);
    }

    #[test]
    fn advise_orders_filters_syntax_semantic_physical() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        // One hallucination, one physical violation, one acceptable candidate.
        let backend = Scripted::new(&["[[7,1],[1,2,3],[1,2,0,3]]"]);
        let pool = MemoryPool::new(10);
        let set = advise(
            &state,
            &inst,
            &backend,
            &pool,
            1,
            EnvConfig::default(),
            &DecodeParams::default(),
        )
        .unwrap();
        let round = &set.rounds[0];
        assert!(round.syntax_error.is_none());
        let c = &round.candidates;
        assert!(c[0].semantic.is_some() && c[0].physical.is_none());
        assert!(c[1].semantic.is_none() && c[1].physical.is_some());
        assert!(c[2].accepted);
        assert_eq!(set.first_actions.iter().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn advise_first_actions_are_first_nodes_of_accepted() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        let backend = Scripted::new(&["[[1,2,0,3],[2,1,0,3],[3,0,1,2]]"]);
        let pool = MemoryPool::new(10);
        let set = advise(
            &state,
            &inst,
            &backend,
            &pool,
            1,
            EnvConfig::default(),
            &DecodeParams::default(),
        )
        .unwrap();
        assert_eq!(set.accepted.len(), 3);
        let fa: Vec<_> = set.first_actions.iter().copied().collect();
        assert_eq!(fa, vec![1, 2, 3]);
    }

    struct Down;
    impl AdvisorBackend for Down {
        fn complete(&self, _p: &str, _d: &DecodeParams) -> Result<String, BackendError> {
            Err(BackendError::Unavailable("connection refused".into()))
        }
    }

    #[test]
    fn backend_outage_is_reported_not_panicked() {
        let inst = fixtures::four_node();
        let state = depot_state(&inst);
        let pool = MemoryPool::new(10);
        let err = advise(
            &state,
            &inst,
            &Down,
            &pool,
            2,
            EnvConfig::default(),
            &DecodeParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AdvisorError::BackendUnavailable(_)));
    }
}
