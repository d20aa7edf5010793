//! Experiment execution: one training run per (instance, seed), written to a
//! self-contained run directory.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

use routeq_core::advisor::{AdvisorBackend, MockBackend, RemoteBackend, RemoteConfig};
use routeq_core::agent::{self, AblationSwitches, TrainConfig};
use routeq_core::instance::{self, Instance};

use crate::io::{atomic_write, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Prioritized double dueling DQN without any advisor.
    Dqn,
    /// Advisor-guided training with the deterministic heuristic mock.
    LlmDqnMock,
    /// Advisor-guided training against a remote chat-completions endpoint.
    LlmDqnRemote,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dqn => "dqn",
            Method::LlmDqnMock => "llm-dqn-mock",
            Method::LlmDqnRemote => "llm-dqn-remote",
        })
    }
}

/// The six ablation rows of the study matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationRow {
    All,
    NoLlmMemory,
    NoLlmPer,
    NoDouble,
    NoDueling,
    NoRewardReshape,
}

pub const ABLATION_ROWS: [AblationRow; 6] = [
    AblationRow::All,
    AblationRow::NoLlmMemory,
    AblationRow::NoLlmPer,
    AblationRow::NoDouble,
    AblationRow::NoDueling,
    AblationRow::NoRewardReshape,
];

impl AblationRow {
    pub fn tag(&self) -> &'static str {
        match self {
            AblationRow::All => "all",
            AblationRow::NoLlmMemory => "no-llm-memory",
            AblationRow::NoLlmPer => "no-llm-per",
            AblationRow::NoDouble => "no-double",
            AblationRow::NoDueling => "no-dueling",
            AblationRow::NoRewardReshape => "no-reward-reshape",
        }
    }

    pub fn apply(&self, switches: &mut AblationSwitches) {
        match self {
            AblationRow::All => {}
            AblationRow::NoLlmMemory => switches.llm_memory = false,
            AblationRow::NoLlmPer => switches.llm_per_boost = false,
            AblationRow::NoDouble => switches.double = false,
            AblationRow::NoDueling => switches.dueling = false,
            AblationRow::NoRewardReshape => switches.reward_shaping = false,
        }
    }

    /// The LLM rows do not apply to the plain DQN baseline.
    pub fn applies_to(&self, method: Method) -> bool {
        !(method == Method::Dqn
            && matches!(self, AblationRow::NoLlmMemory | AblationRow::NoLlmPer))
    }
}

/// One batch of runs: instances x seeds under one method and configuration.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub instances: Vec<PathBuf>,
    pub method: Method,
    pub ablation: AblationRow,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub jobs: usize,
    pub eval_episodes: usize,
    /// Remote model name; only used by `llm-dqn-remote`.
    pub model: Option<String>,
}

impl RunSpec {
    pub fn new(instances: Vec<PathBuf>, method: Method, out_dir: PathBuf) -> Self {
        RunSpec {
            instances,
            method,
            ablation: AblationRow::All,
            seeds: vec![1, 2, 3],
            out_dir,
            train: TrainConfig::default(),
            jobs: 1,
            eval_episodes: 5,
            model: None,
        }
    }

    fn effective_config(&self) -> TrainConfig {
        let mut cfg = self.train.clone();
        self.ablation.apply(&mut cfg.switches);
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub instance: String,
    pub method: Method,
    pub ablation: AblationRow,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect()
}

pub fn run_id(instance: &str, method: Method, ablation: AblationRow, seed: u64) -> String {
    format!("{}__{}__{}__s{}", sanitize(instance), method, ablation.tag(), seed)
}

/// Execute every (instance, seed) pair, optionally seed-parallel. Failures
/// are reported per run; the batch continues.
pub fn run_spec(spec: &RunSpec) -> Result<Vec<RunOutcome>> {
    let mut jobs: VecDeque<(PathBuf, u64)> = VecDeque::new();
    for path in &spec.instances {
        for &seed in &spec.seeds {
            jobs.push_back((path.clone(), seed));
        }
    }
    let queue = Mutex::new(jobs);
    let outcomes = Mutex::new(Vec::new());
    let workers = spec.jobs.max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((path, seed)) = job else { break };
                let outcome = execute_run(spec, &path, seed);
                outcomes.lock().expect("outcome lock").push(outcome);
            });
        }
    });

    let mut out = outcomes.into_inner().expect("outcome lock");
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}

fn execute_run(spec: &RunSpec, path: &Path, seed: u64) -> RunOutcome {
    let attempt = || -> Result<String> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let inst = instance::deserialize(&text)?;
        let id = run_id(&inst.name, spec.method, spec.ablation, seed);
        let cfg = spec.effective_config();

        let mock;
        let remote;
        let backend: Option<&dyn AdvisorBackend> = match spec.method {
            Method::Dqn => None,
            Method::LlmDqnMock => {
                mock = MockBackend::new(seed);
                Some(&mock)
            }
            Method::LlmDqnRemote => {
                let model = spec
                    .model
                    .clone()
                    .ok_or_else(|| anyhow!("llm-dqn-remote requires a --model name"))?;
                remote = RemoteBackend::new(RemoteConfig::from_env(model).map_err(|e| anyhow!("{e}"))?)
                    .map_err(|e| anyhow!("{e}"))?;
                Some(&remote)
            }
        };

        let started = Instant::now();
        let result = agent::train(&inst, &cfg, backend, seed)?;
        let eval = agent::evaluate_policy(&inst, &result.final_checkpoint, spec.eval_episodes, &cfg)?;
        let wall_ms = started.elapsed().as_millis() as u64;

        write_run_artifacts(spec, &inst, &text, &id, seed, &result, &eval, wall_ms)?;
        Ok(id)
    };

    match attempt() {
        Ok(id) => RunOutcome {
            run_id: id,
            instance: path.display().to_string(),
            method: spec.method,
            ablation: spec.ablation,
            seed,
            ok: true,
            error: None,
        },
        Err(e) => RunOutcome {
            run_id: run_id(
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown"),
                spec.method,
                spec.ablation,
                seed,
            ),
            instance: path.display().to_string(),
            method: spec.method,
            ablation: spec.ablation,
            seed,
            ok: false,
            error: Some(format!("{e:#}")),
        },
    }
}

fn write_run_artifacts(
    spec: &RunSpec,
    inst: &Instance,
    inst_text: &str,
    id: &str,
    seed: u64,
    result: &agent::TrainResult,
    eval: &agent::EvalReport,
    wall_ms: u64,
) -> Result<()> {
    let out = &spec.out_dir;
    let cfg = spec.effective_config();

    let meta = crate::report::RunMeta {
        run_id: id.to_string(),
        instance_name: inst.name.clone(),
        instance_file: format!("instances/{}.json", sanitize(&inst.name)),
        method: spec.method.to_string(),
        config: spec.ablation.tag().to_string(),
        seed,
        gamma_d: cfg.gamma_d,
        gamma_f: cfg.gamma_f,
        episodes: cfg.episodes,
        eval_episodes: spec.eval_episodes,
    };
    let mut meta_text = serde_json::to_string_pretty(&meta)?;
    meta_text.push('\n');
    atomic_write(&out.join("reports").join(format!("{id}.meta.json")), &meta_text)?;

    let mut train_lines = String::new();
    for r in &result.reports {
        train_lines.push_str(&serde_json::to_string(r)?);
        train_lines.push('\n');
    }
    atomic_write(&out.join("reports").join(format!("{id}.train.jsonl")), &train_lines)?;

    let mut eval_lines = String::new();
    for e in &eval.episodes {
        eval_lines.push_str(&serde_json::to_string(e)?);
        eval_lines.push('\n');
    }
    atomic_write(&out.join("reports").join(format!("{id}.eval.jsonl")), &eval_lines)?;

    atomic_write(&out.join("checkpoints").join(format!("{id}.json")), &result.final_checkpoint)?;

    if !result.session_log.is_empty() {
        let mut log = String::new();
        for (i, (prompt, reply)) in result.session_log.iter().enumerate() {
            log.push_str(&format!("=== call {i} prompt ===\n{prompt}\n=== call {i} reply ===\n{reply}\n"));
        }
        atomic_write(&out.join("sessions").join(format!("{id}.log")), &log)?;
    }

    // Wall time lives apart from the deterministic artifacts.
    atomic_write(
        &out.join("timing").join(format!("{id}.json")),
        &format!("{{\"wall_ms\":{wall_ms}}}\n"),
    )?;

    // Self-contained run dir: the instance itself plus a manifest entry so
    // reports can recompute oracle costs later.
    let inst_file = out.join("instances").join(format!("{}.json", sanitize(&inst.name)));
    atomic_write(&inst_file, inst_text)?;
    update_manifest(out, inst, inst_text)?;
    Ok(())
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub sha256: String,
    pub customers: usize,
    pub augment_seed: u64,
    /// Reference cost for instances beyond the oracle limit; editable by hand.
    pub best_known: Option<f64>,
}

pub fn load_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut m = manifest.clone();
    m.entries.sort_by(|a, b| a.name.cmp(&b.name));
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    atomic_write(&dir.join("manifest.json"), &text)
}

fn update_manifest(dir: &Path, inst: &Instance, inst_text: &str) -> Result<()> {
    let mut manifest = load_manifest(dir)?
        .unwrap_or(Manifest { format_version: MANIFEST_VERSION, entries: Vec::new() });
    let entry = ManifestEntry {
        name: inst.name.clone(),
        file: format!("instances/{}.json", sanitize(&inst.name)),
        sha256: sha256_hex(inst_text),
        customers: inst.customer_count(),
        augment_seed: inst.rng_seed,
        best_known: None,
    };
    if let Some(existing) = manifest.entries.iter_mut().find(|e| e.name == entry.name) {
        let keep = existing.best_known;
        *existing = entry;
        existing.best_known = keep;
    } else {
        manifest.entries.push(entry);
    }
    save_manifest(dir, &manifest)
}
