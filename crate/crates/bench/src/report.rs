//! Metric aggregation: per-run best gaps, satisfaction rates, result tables,
//! and plot-ready CSV output. Every number is recomputed from the raw
//! per-episode record files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use routeq_core::agent::{EpisodeReport, EvalEpisode};
use routeq_core::instance;
use routeq_core::milp::{self, CostModel};

use crate::runner::load_manifest;

/// Per-run sidecar written at training time so reports know how to price runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub instance_name: String,
    pub instance_file: String,
    pub method: String,
    pub config: String,
    pub seed: u64,
    pub gamma_d: f64,
    pub gamma_f: f64,
    pub episodes: usize,
    pub eval_episodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub ret: f64,
    pub cost: f64,
}

/// Everything recomputed from one run's record files.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub best_cost: Option<f64>,
    pub best_episode: Option<usize>,
    pub gap: Option<f64>,
    pub satisfaction: f64,
    pub wall_ms: Option<u64>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub instance: String,
    pub method: String,
    pub config: String,
    pub seeds: usize,
    pub feasible_runs: usize,
    pub mean_gap: Option<f64>,
    pub std_gap: Option<f64>,
    pub satisfaction: f64,
    pub mean_episodes_to_best: Option<f64>,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub config: String,
    pub instances: usize,
    pub mean_gap: Option<f64>,
    pub satisfaction: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub records: Vec<RunRecord>,
    pub rows: Vec<TableRow>,
    pub aggregates: Vec<AggregateRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub oracle_limit: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { oracle_limit: milp::DEFAULT_ORACLE_LIMIT }
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing line of {}", path.display())))
        .collect()
}

/// Oracle (or best-known) generalized cost per instance name.
fn oracle_costs(
    runs_dir: &Path,
    records: &[RunMeta],
    opts: &ReportOptions,
) -> Result<BTreeMap<String, f64>> {
    let manifest = load_manifest(runs_dir)?;
    let mut out = BTreeMap::new();
    for meta in records {
        if out.contains_key(&meta.instance_name) {
            continue;
        }
        let text = std::fs::read_to_string(runs_dir.join(&meta.instance_file))
            .with_context(|| format!("reading instance {}", meta.instance_file))?;
        let inst = instance::deserialize(&text)?;
        let model = CostModel { gamma_d: meta.gamma_d, gamma_f: meta.gamma_f };
        if inst.customer_count() <= opts.oracle_limit {
            let sol = milp::exact_solve(&inst, opts.oracle_limit, &model)?;
            out.insert(meta.instance_name.clone(), sol.generalized_cost);
        } else if let Some(known) = manifest
            .as_ref()
            .and_then(|m| m.entries.iter().find(|e| e.name == meta.instance_name))
            .and_then(|e| e.best_known)
        {
            out.insert(meta.instance_name.clone(), known);
        } else {
            bail!(
                "missing oracle for instance {}: {} customers exceed the oracle limit {} \
                 and the manifest has no best_known cost",
                meta.instance_name,
                inst.customer_count(),
                opts.oracle_limit
            );
        }
    }
    Ok(out)
}

/// Load every run in the directory and recompute its metrics from the raw
/// per-episode records.
pub fn build_report(runs_dir: &Path, opts: &ReportOptions) -> Result<Report> {
    let reports_dir = runs_dir.join("reports");
    let mut metas: Vec<RunMeta> = Vec::new();
    for entry in std::fs::read_dir(&reports_dir)
        .with_context(|| format!("no reports under {}", reports_dir.display()))?
    {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(_id) = name.strip_suffix(".meta.json") {
            let text = std::fs::read_to_string(&path)?;
            metas.push(serde_json::from_str(&text)?);
        }
    }
    metas.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    if metas.is_empty() {
        bail!("no runs found under {}", runs_dir.display());
    }

    let oracles = oracle_costs(runs_dir, &metas, opts)?;

    let mut records = Vec::with_capacity(metas.len());
    for meta in metas {
        let train: Vec<EpisodeReport> =
            read_jsonl(&reports_dir.join(format!("{}.train.jsonl", meta.run_id)))?;
        let eval: Vec<EvalEpisode> =
            read_jsonl(&reports_dir.join(format!("{}.eval.jsonl", meta.run_id)))?;

        let best = train
            .iter()
            .filter(|r| r.feasible)
            .min_by(|a, b| a.generalized_cost.partial_cmp(&b.generalized_cost).expect("finite"));
        let oracle = oracles[&meta.instance_name];
        let gap = match best {
            Some(b) => Some(milp::gap(b.generalized_cost, oracle)?),
            None => None,
        };
        let satisfaction = if eval.is_empty() {
            0.0
        } else {
            eval.iter().filter(|e| e.feasible).count() as f64 / eval.len() as f64
        };
        let wall_ms = std::fs::read_to_string(
            runs_dir.join("timing").join(format!("{}.json", meta.run_id)),
        )
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["wall_ms"].as_u64());

        let curve = train
            .iter()
            .map(|r| CurvePoint { episode: r.episode, ret: r.ret, cost: r.generalized_cost })
            .collect();

        records.push(RunRecord {
            best_cost: best.map(|b| b.generalized_cost),
            best_episode: best.map(|b| b.episode),
            gap,
            satisfaction,
            wall_ms,
            curve,
            meta,
        });
    }

    let rows = table_rows(&records);
    let aggregates = aggregate_rows(&rows);
    Ok(Report { records, rows, aggregates })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt())
}

fn table_rows(records: &[RunRecord]) -> Vec<TableRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.meta.instance_name.clone(), r.meta.method.clone(), r.meta.config.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((instance, method, config), rs)| {
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.gap).collect();
            let episodes: Vec<f64> =
                rs.iter().filter_map(|r| r.best_episode).map(|e| e as f64).collect();
            TableRow {
                instance,
                method,
                config,
                seeds: rs.len(),
                feasible_runs: rs.iter().filter(|r| r.best_cost.is_some()).count(),
                mean_gap: mean(&gaps),
                std_gap: std_dev(&gaps),
                satisfaction: rs.iter().map(|r| r.satisfaction).sum::<f64>() / rs.len() as f64,
                mean_episodes_to_best: mean(&episodes),
                mean_wall_ms: rs.iter().filter_map(|r| r.wall_ms).sum::<u64>() as f64
                    / rs.len() as f64,
            }
        })
        .collect()
}

fn aggregate_rows(rows: &[TableRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<&TableRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.method.clone(), row.config.clone())).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((method, config), rs)| {
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.mean_gap).collect();
            AggregateRow {
                method,
                config,
                instances: rs.len(),
                mean_gap: mean(&gaps),
                satisfaction: rs.iter().map(|r| r.satisfaction).sum::<f64>() / rs.len() as f64,
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "—".into())
}

impl Report {
    /// Aligned, human-readable view of both metric families.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {:<16} {:<18} {:>5} {:>9} {:>9} {:>8} {:>8} {:>10} {:>10}\n",
            "instance",
            "method",
            "config",
            "seeds",
            "feasible",
            "gap%",
            "σgap",
            "sat%",
            "ep-best",
            "wall-ms"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:<16} {:<18} {:>5} {:>9} {:>9} {:>8} {:>8.1} {:>10} {:>10.0}\n",
                r.instance,
                r.method,
                r.config,
                r.seeds,
                r.feasible_runs,
                fmt_opt(r.mean_gap),
                fmt_opt(r.std_gap),
                100.0 * r.satisfaction,
                fmt_opt(r.mean_episodes_to_best),
                r.mean_wall_ms,
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<16} {:<18} {:>9} {:>9} {:>8}\n",
            "method", "config", "instances", "gap%", "sat%"
        ));
        for a in &self.aggregates {
            out.push_str(&format!(
                "{:<16} {:<18} {:>9} {:>9} {:>8.1}\n",
                a.method,
                a.config,
                a.instances,
                fmt_opt(a.mean_gap),
                100.0 * a.satisfaction
            ));
        }
        out
    }

    /// Result table as CSV; floats use the shortest round-trip encoding so a
    /// re-parse reproduces the values exactly.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "instance",
            "method",
            "config",
            "seeds",
            "feasible_runs",
            "mean_gap",
            "std_gap",
            "satisfaction",
            "mean_episodes_to_best",
            "mean_wall_ms",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.instance.clone(),
                r.method.clone(),
                r.config.clone(),
                r.seeds.to_string(),
                r.feasible_runs.to_string(),
                r.mean_gap.map(|v| v.to_string()).unwrap_or_default(),
                r.std_gap.map(|v| v.to_string()).unwrap_or_default(),
                r.satisfaction.to_string(),
                r.mean_episodes_to_best.map(|v| v.to_string()).unwrap_or_default(),
                r.mean_wall_ms.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    /// Per-episode reward/cost curves averaged over seeds, one row per
    /// (instance, method, config, episode).
    pub fn curves_csv(&self) -> Result<String> {
        let mut groups: BTreeMap<(String, String, String), Vec<&RunRecord>> = BTreeMap::new();
        for r in &self.records {
            groups
                .entry((
                    r.meta.instance_name.clone(),
                    r.meta.method.clone(),
                    r.meta.config.clone(),
                ))
                .or_default()
                .push(r);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance", "method", "config", "episode", "mean_return", "mean_cost"])?;
        for ((inst, method, config), rs) in groups {
            let max_len = rs.iter().map(|r| r.curve.len()).max().unwrap_or(0);
            for ep in 0..max_len {
                let points: Vec<&CurvePoint> =
                    rs.iter().filter_map(|r| r.curve.get(ep)).collect();
                if points.is_empty() {
                    continue;
                }
                let ret = points.iter().map(|p| p.ret).sum::<f64>() / points.len() as f64;
                let cost = points.iter().map(|p| p.cost).sum::<f64>() / points.len() as f64;
                w.write_record([
                    inst.clone(),
                    method.clone(),
                    config.clone(),
                    ep.to_string(),
                    ret.to_string(),
                    cost.to_string(),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}
