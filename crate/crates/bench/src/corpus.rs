//! Desk-scale synthetic corpus: small seeded instances the exact oracle can
//! certify, plus helpers to materialize them on disk.

use std::collections::BTreeMap;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use routeq_core::instance::{augment, AugmentConfig, Instance, Node, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub count: usize,
    pub customers_min: usize,
    pub customers_max: usize,
    pub seed: u64,
    pub window_tightness: f64,
    pub break_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            count: 10,
            customers_min: 5,
            customers_max: 8,
            seed: 42,
            window_tightness: 0.42,
            break_fraction: 0.12,
        }
    }
}

/// Un-augmented random instance: coordinates on a 100x100 field, lumpy
/// demands, capacity sized for two to three routes.
pub fn synthetic_instance(name: &str, n_customers: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![Node {
        id: 0,
        x: rng.gen_range(30.0..=70.0f64).round(),
        y: rng.gen_range(30.0..=70.0f64).round(),
        demand: 0,
        window: TimeWindow::unconstrained(),
    }];
    for id in 1..=n_customers {
        nodes.push(Node {
            id,
            x: rng.gen_range(0.0..=100.0f64).round(),
            y: rng.gen_range(0.0..=100.0f64).round(),
            demand: rng.gen_range(1..=9),
            window: TimeWindow::unconstrained(),
        });
    }
    let total: u64 = nodes.iter().map(|n| n.demand as u64).sum();
    let capacity = ((total as f64 / 2.5).ceil() as u32).max(9);
    let max_routes = (total.div_ceil(capacity as u64) as usize) + 1;
    Instance::new(name, nodes, capacity, max_routes, seed, BTreeMap::new())
        .expect("synthetic construction is valid")
}

/// The seeded augmented corpus; instance `i` uses seed `cfg.seed + i`.
pub fn desk_corpus(cfg: &CorpusConfig) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(cfg.count);
    let span = cfg.customers_max - cfg.customers_min + 1;
    for i in 0..cfg.count {
        let seed = cfg.seed + i as u64;
        let n = cfg.customers_min + (i % span);
        let name = format!("desk-{:02}-n{}", i, n);
        let raw = synthetic_instance(&name, n, seed);
        let aug = augment(
            &raw,
            &AugmentConfig {
                window_tightness: cfg.window_tightness,
                break_fraction: cfg.break_fraction,
                seed,
            },
        )?;
        out.push(aug);
    }
    Ok(out)
}
