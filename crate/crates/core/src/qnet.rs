//! Dense dueling Q-network with hand-written forward/backward passes, an
//! adaptive-moment optimizer, and a versioned checkpoint format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvState;
use crate::instance::Instance;

/// Version tag written into every checkpoint file.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    /// Huber loss; the default pairing with prioritized replay.
    Huber { delta: f64 },
    /// Plain half squared error.
    Squared,
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::Huber { delta: 1.0 }
    }
}

/// Network shape. `head_hidden == 0` collapses each head to a single linear
/// layer, which keeps tiny hand-checkable nets expressible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub trunk: Vec<usize>,
    pub head_hidden: usize,
    pub n_actions: usize,
    pub dueling: bool,
}

impl Arch {
    /// Default shape: 2x128 trunk with 64-unit heads.
    pub fn standard(input_dim: usize, n_actions: usize, dueling: bool) -> Self {
        Arch { input_dim, trunk: vec![128, 128], head_hidden: 64, n_actions, dueling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear { w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim], in_dim, out_dim }
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut layer = Linear::zeros(in_dim, out_dim);
        for w in layer.w.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        for b in layer.b.iter_mut() {
            *b = rng.gen_range(-bound..bound);
        }
        layer
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// All parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: Arch,
    pub trunk: Vec<Linear>,
    /// Value head; empty unless dueling.
    pub value: Vec<Linear>,
    /// Advantage head, or the plain Q head when not dueling.
    pub advantage: Vec<Linear>,
}

#[derive(Debug, Error)]
pub enum QNetError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("mask leaves no action available")]
    EmptyMask,
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),
    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),
}

fn head_layers(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Linear> {
    if hidden == 0 {
        vec![Linear::init(in_dim, out_dim, rng)]
    } else {
        vec![Linear::init(in_dim, hidden, rng), Linear::init(hidden, out_dim, rng)]
    }
}

impl NetParams {
    /// Seeded uniform fan-in initialization.
    pub fn new(arch: Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trunk = Vec::new();
        let mut dim = arch.input_dim;
        for &width in &arch.trunk {
            trunk.push(Linear::init(dim, width, &mut rng));
            dim = width;
        }
        let value = if arch.dueling {
            head_layers(dim, arch.head_hidden, 1, &mut rng)
        } else {
            Vec::new()
        };
        let advantage = head_layers(dim, arch.head_hidden, arch.n_actions, &mut rng);
        NetParams { arch, trunk, value, advantage }
    }

    /// Same shapes, all entries zero; holds gradients or optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.trunk.iter().chain(self.value.iter()).chain(self.advantage.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.trunk.iter_mut().chain(self.value.iter_mut()).chain(self.advantage.iter_mut())
    }

    /// Every parameter tensor in a fixed order (per layer: weights, bias).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.push(l.w.as_slice());
            out.push(l.b.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.layers_mut() {
            let (w, b) = (&mut l.w, &mut l.b);
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_compatible(&self, other: &Self) -> Result<(), QNetError> {
        if self.arch != other.arch {
            return Err(QNetError::ShapeMismatch {
                what: "network architecture",
                expected: self.param_count(),
                got: other.param_count(),
            });
        }
        Ok(())
    }
}

/// Dueling aggregation over the unmasked actions:
/// `Q(a) = V + A(a) - mean_unmasked(A)`, masked entries forced to -inf.
pub fn dueling_aggregate(v: f64, a: &[f64], mask: &[bool]) -> Vec<f64> {
    let count = mask.iter().filter(|&&m| m).count();
    debug_assert!(count > 0);
    let mean = a
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(x, _)| x)
        .sum::<f64>()
        / count as f64;
    a.iter()
        .zip(mask)
        .map(|(&ai, &m)| if m { v + ai - mean } else { f64::NEG_INFINITY })
        .collect()
}

/// Index of the largest unmasked Q value; ties go to the lowest index.
pub fn masked_argmax(q: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in q.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

struct ForwardCache {
    /// Activations entering each trunk layer (first entry is the input).
    trunk_in: Vec<Vec<f64>>,
    /// Pre-activation outputs of each trunk layer.
    trunk_pre: Vec<Vec<f64>>,
    value_in: Vec<Vec<f64>>,
    value_pre: Vec<Vec<f64>>,
    adv_in: Vec<Vec<f64>>,
    adv_pre: Vec<Vec<f64>>,
}

fn relu(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&x| x.max(0.0)).collect()
}

fn run_head(layers: &[Linear], input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let mut ins = Vec::new();
    let mut pres = Vec::new();
    let mut h = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let mut pre = Vec::new();
        layer.apply(&h, &mut pre);
        ins.push(h);
        let last = i + 1 == layers.len();
        h = if last { pre.clone() } else { relu(&pre) };
        pres.push(pre);
    }
    (ins, pres, h)
}

impl NetParams {
    fn forward_cached(&self, x: &[f64], mask: &[bool]) -> Result<(Vec<f64>, ForwardCache), QNetError> {
        if x.len() != self.arch.input_dim {
            return Err(QNetError::ShapeMismatch {
                what: "input features",
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        if mask.len() != self.arch.n_actions {
            return Err(QNetError::ShapeMismatch {
                what: "action mask",
                expected: self.arch.n_actions,
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(QNetError::EmptyMask);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QNetError::NonFiniteInput("features"));
        }

        let mut trunk_in = Vec::new();
        let mut trunk_pre = Vec::new();
        let mut h = x.to_vec();
        for layer in &self.trunk {
            let mut pre = Vec::new();
            layer.apply(&h, &mut pre);
            trunk_in.push(h);
            h = relu(&pre);
            trunk_pre.push(pre);
        }

        let (value_in, value_pre, value_out) = if self.arch.dueling {
            let (i, p, out) = run_head(&self.value, &h);
            (i, p, out[0])
        } else {
            (Vec::new(), Vec::new(), 0.0)
        };
        let (adv_in, adv_pre, adv_out) = run_head(&self.advantage, &h);

        let q = if self.arch.dueling {
            dueling_aggregate(value_out, &adv_out, mask)
        } else {
            adv_out
                .iter()
                .zip(mask)
                .map(|(&a, &m)| if m { a } else { f64::NEG_INFINITY })
                .collect()
        };
        Ok((q, ForwardCache { trunk_in, trunk_pre, value_in, value_pre, adv_in, adv_pre }))
    }

    /// Masked Q values; masked actions are `-inf` and excluded from the
    /// dueling mean.
    pub fn forward(&self, x: &[f64], mask: &[bool]) -> Result<Vec<f64>, QNetError> {
        self.forward_cached(x, mask).map(|(q, _)| q)
    }
}

/// One importance-weighted regression sample.
#[derive(Debug, Clone)]
pub struct BatchSample {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub target: f64,
    pub weight: f64,
}

/// Result of a backward pass.
pub struct Gradients {
    pub grads: NetParams,
    pub loss: f64,
    /// Per-sample signed TD errors `Q(s,a) - y`, for priority refresh.
    pub td_errors: Vec<f64>,
}

fn loss_value(loss: LossKind, e: f64) -> f64 {
    match loss {
        LossKind::Huber { delta } => {
            if e.abs() <= delta {
                0.5 * e * e
            } else {
                delta * (e.abs() - 0.5 * delta)
            }
        }
        LossKind::Squared => 0.5 * e * e,
    }
}

fn loss_slope(loss: LossKind, e: f64) -> f64 {
    match loss {
        LossKind::Huber { delta } => e.clamp(-delta, delta),
        LossKind::Squared => e,
    }
}

/// Backpropagate a head; returns the gradient with respect to its input.
fn head_backward(
    layers: &[Linear],
    grads: &mut [Linear],
    ins: &[Vec<f64>],
    pres: &[Vec<f64>],
    mut d_out: Vec<f64>,
) -> Vec<f64> {
    for idx in (0..layers.len()).rev() {
        let layer = &layers[idx];
        let grad = &mut grads[idx];
        let input = &ins[idx];
        for o in 0..layer.out_dim {
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &mut grad.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (wi, xi) in row.iter_mut().zip(input) {
                *wi += g * xi;
            }
        }
        let mut d_in = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (di, wi) in d_in.iter_mut().zip(row) {
                *di += g * wi;
            }
        }
        // ReLU applies on the input of every layer but the first.
        if idx > 0 {
            for (di, &pre) in d_in.iter_mut().zip(&pres[idx - 1]) {
                if pre <= 0.0 {
                    *di = 0.0;
                }
            }
        }
        d_out = d_in;
    }
    d_out
}

impl NetParams {
    /// Mean importance-weighted loss over the batch and exact gradients for
    /// every parameter.
    pub fn backward(&self, batch: &[BatchSample], loss: LossKind) -> Result<Gradients, QNetError> {
        if batch.is_empty() {
            return Err(QNetError::ShapeMismatch { what: "batch", expected: 1, got: 0 });
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.zeros_like();
        let mut total_loss = 0.0;
        let mut td_errors = Vec::with_capacity(batch.len());

        for sample in batch {
            if !sample.target.is_finite() || !sample.weight.is_finite() {
                return Err(QNetError::NonFiniteInput("targets"));
            }
            if sample.action >= self.arch.n_actions || !sample.mask[sample.action] {
                return Err(QNetError::ShapeMismatch {
                    what: "action index",
                    expected: self.arch.n_actions,
                    got: sample.action,
                });
            }
            let (q, cache) = self.forward_cached(&sample.features, &sample.mask)?;
            let e = q[sample.action] - sample.target;
            td_errors.push(e);
            total_loss += sample.weight * loss_value(loss, e) * scale;
            let g = sample.weight * loss_slope(loss, e) * scale;
            if g == 0.0 {
                continue;
            }

            let trunk_dim = self.trunk.last().map_or(self.arch.input_dim, |l| l.out_dim);
            let mut d_trunk_out = vec![0.0; trunk_dim];

            if self.arch.dueling {
                // dQ/dV = 1; dQ/dA_j = [j==a] - 1/m over the unmasked set.
                let m = sample.mask.iter().filter(|&&x| x).count() as f64;
                let d_adv: Vec<f64> = (0..self.arch.n_actions)
                    .map(|j| {
                        if !sample.mask[j] {
                            0.0
                        } else {
                            g * ((j == sample.action) as u8 as f64 - 1.0 / m)
                        }
                    })
                    .collect();
                let d_value = head_backward(
                    &self.value,
                    &mut grads.value,
                    &cache.value_in,
                    &cache.value_pre,
                    vec![g],
                );
                let d_advantage = head_backward(
                    &self.advantage,
                    &mut grads.advantage,
                    &cache.adv_in,
                    &cache.adv_pre,
                    d_adv,
                );
                for ((d, a), b) in d_trunk_out.iter_mut().zip(&d_value).zip(&d_advantage) {
                    *d = a + b;
                }
            } else {
                let mut d_q = vec![0.0; self.arch.n_actions];
                d_q[sample.action] = g;
                let d = head_backward(
                    &self.advantage,
                    &mut grads.advantage,
                    &cache.adv_in,
                    &cache.adv_pre,
                    d_q,
                );
                d_trunk_out.copy_from_slice(&d);
            }

            // The trunk output feeds the heads through a ReLU.
            if let Some(last_pre) = cache.trunk_pre.last() {
                for (d, &pre) in d_trunk_out.iter_mut().zip(last_pre) {
                    if pre <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let mut d_out = d_trunk_out;
            for idx in (0..self.trunk.len()).rev() {
                let layer = &self.trunk[idx];
                let grad = &mut grads.trunk[idx];
                let input = &cache.trunk_in[idx];
                for o in 0..layer.out_dim {
                    let gg = d_out[o];
                    if gg == 0.0 {
                        continue;
                    }
                    grad.b[o] += gg;
                    let row = &mut grad.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (wi, xi) in row.iter_mut().zip(input) {
                        *wi += gg * xi;
                    }
                }
                if idx == 0 {
                    break;
                }
                let mut d_in = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let gg = d_out[o];
                    if gg == 0.0 {
                        continue;
                    }
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (di, wi) in d_in.iter_mut().zip(row) {
                        *di += gg * wi;
                    }
                }
                for (di, &pre) in d_in.iter_mut().zip(&cache.trunk_pre[idx - 1]) {
                    if pre <= 0.0 {
                        *di = 0.0;
                    }
                }
                d_out = d_in;
            }
        }

        Ok(Gradients { grads, loss: total_loss, td_errors })
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &NetParams) -> Self {
        let shapes: Vec<Vec<f64>> =
            params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: shapes.clone(), v: shapes }
    }

    pub fn step(
        &mut self,
        params: &mut NetParams,
        grads: &NetParams,
        lr: f64,
    ) -> Result<(), QNetError> {
        params.check_compatible(grads)?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Soft target update: `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut NetParams, online: &NetParams, tau: f64) -> Result<(), QNetError> {
    target.check_compatible(online)?;
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for i in 0..t.len() {
            t[i] = tau * o[i] + (1.0 - tau) * t[i];
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// State features
// ---------------------------------------------------------------------------

/// Encodes `EnvState` into `[0, 1]` features: normalized position, load
/// fraction, pending bits, clipped clock and route fraction.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    coords: Vec<(f64, f64)>,
    capacity: f64,
    horizon: f64,
    max_routes: f64,
    n_customers: usize,
}

impl FeatureEncoder {
    pub fn new(inst: &Instance) -> Self {
        let min_x = inst.nodes.iter().map(|n| n.x).fold(f64::INFINITY, f64::min);
        let max_x = inst.nodes.iter().map(|n| n.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = inst.nodes.iter().map(|n| n.y).fold(f64::INFINITY, f64::min);
        let max_y = inst.nodes.iter().map(|n| n.y).fold(f64::NEG_INFINITY, f64::max);
        let span_x = (max_x - min_x).max(1e-12);
        let span_y = (max_y - min_y).max(1e-12);
        FeatureEncoder {
            coords: inst
                .nodes
                .iter()
                .map(|n| ((n.x - min_x) / span_x, (n.y - min_y) / span_y))
                .collect(),
            capacity: inst.capacity as f64,
            horizon: inst.planning_horizon(),
            max_routes: inst.max_routes as f64,
            n_customers: inst.customer_count(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_customers + 5
    }

    pub fn n_actions(&self) -> usize {
        self.n_customers + 1
    }

    pub fn encode(&self, state: &EnvState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let (x, y) = self.coords[state.position];
        out.push(x);
        out.push(y);
        out.push(state.remaining_capacity as f64 / self.capacity);
        out.extend(state.pending.iter().map(|&p| p as u8 as f64));
        out.push((state.clock / self.horizon).clamp(0.0, 1.0));
        out.push((state.routes_used as f64 / self.max_routes).clamp(0.0, 1.0));
        out
    }

    /// Action mask over `0..=N` for the given legal action list.
    pub fn mask_of(&self, actions: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.n_actions()];
        for &a in actions {
            mask[a] = true;
        }
        mask
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    arch: Arch,
    tensors: Vec<Vec<f64>>,
}

/// Dump parameters to the versioned checkpoint text format.
pub fn save_checkpoint(params: &NetParams) -> String {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        arch: params.arch.clone(),
        tensors: params.tensors().iter().map(|t| t.to_vec()).collect(),
    };
    let mut out = serde_json::to_string(&file).expect("checkpoint serialization");
    out.push('\n');
    out
}

pub fn load_checkpoint(text: &str) -> Result<NetParams, QNetError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| QNetError::CheckpointCorrupt(e.to_string()))?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(QNetError::CheckpointCorrupt(format!(
            "format version {} unsupported",
            file.format_version
        )));
    }
    let mut params = NetParams::new(file.arch, 0);
    let mut tensors = params.tensors_mut();
    if tensors.len() != file.tensors.len() {
        return Err(QNetError::CheckpointCorrupt("tensor count mismatch".into()));
    }
    for (dst, src) in tensors.iter_mut().zip(&file.tensors) {
        if dst.len() != src.len() {
            return Err(QNetError::CheckpointCorrupt("tensor shape mismatch".into()));
        }
        dst.copy_from_slice(src);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch(dueling: bool) -> Arch {
        Arch { input_dim: 5, trunk: vec![8], head_hidden: 4, n_actions: 4, dueling }
    }

    #[test]
    fn dueling_aggregation_identities() {
        let q = dueling_aggregate(1.0, &[1.0, 2.0, 3.0], &[true, true, true]);
        assert_eq!(q, vec![0.0, 1.0, 2.0]);
        let q = dueling_aggregate(1.0, &[1.0, 2.0, 3.0], &[true, true, false]);
        assert_eq!(q, vec![0.5, 1.5, f64::NEG_INFINITY]);
        // Constant shifts of the advantage leave Q unchanged.
        let shifted = dueling_aggregate(1.0, &[8.0, 9.0, 10.0], &[true, true, true]);
        assert_eq!(shifted, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn masked_actions_never_win_argmax() {
        let params = NetParams::new(tiny_arch(true), 3);
        let x = vec![0.3, 0.7, 0.1, 0.9, 0.5];
        for masked in 0..4 {
            let mask: Vec<bool> = (0..4).map(|i| i != masked).collect();
            let q = params.forward(&x, &mask).unwrap();
            assert_eq!(q[masked], f64::NEG_INFINITY);
            assert_ne!(masked_argmax(&q), Some(masked));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let params = NetParams::new(tiny_arch(true), 5);
        let x = vec![0.2; 5];
        let mask = vec![true; 4];
        assert_eq!(params.forward(&x, &mask).unwrap(), params.forward(&x, &mask).unwrap());
    }

    #[test]
    fn advantage_bias_shift_keeps_q() {
        let mut params = NetParams::new(tiny_arch(true), 7);
        let x = vec![0.4, 0.1, 0.8, 0.2, 0.6];
        let mask = vec![true, true, false, true];
        let q0 = params.forward(&x, &mask).unwrap();
        for b in params.advantage.last_mut().unwrap().b.iter_mut() {
            *b += 7.0;
        }
        let q1 = params.forward(&x, &mask).unwrap();
        for (a, b) in q0.iter().zip(&q1) {
            if a.is_finite() {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let params = NetParams::new(tiny_arch(true), 1);
        assert!(matches!(
            params.forward(&[0.0; 3], &[true; 4]),
            Err(QNetError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            params.forward(&[0.0; 5], &[true; 2]),
            Err(QNetError::ShapeMismatch { .. })
        ));
        assert!(matches!(params.forward(&[0.0; 5], &[false; 4]), Err(QNetError::EmptyMask)));
    }

    #[test]
    fn zero_td_error_batch_gives_zero_gradients() {
        let params = NetParams::new(tiny_arch(true), 11);
        let x = vec![0.5, 0.2, 0.9, 0.4, 0.7];
        let mask = vec![true; 4];
        let q = params.forward(&x, &mask).unwrap();
        let batch = vec![BatchSample {
            features: x,
            mask,
            action: 2,
            target: q[2],
            weight: 1.0,
        }];
        let out = params.backward(&batch, LossKind::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)));
        assert_eq!(out.td_errors, vec![0.0]);
    }

    #[test]
    fn single_linear_layer_matches_hand_chain_rule() {
        // Non-dueling net that is exactly Q = W x + b.
        let arch = Arch { input_dim: 3, trunk: vec![], head_hidden: 0, n_actions: 2, dueling: false };
        let mut params = NetParams::new(arch, 0);
        params.advantage[0].w = vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3];
        params.advantage[0].b = vec![0.1, -0.2];
        let x = vec![1.0, 2.0, 3.0];
        let q = params.forward(&x, &[true, true]).unwrap();
        assert!((q[0] - 4.6).abs() < 1e-12);
        // Squared loss, e = Q(s,0) - y with y = Q - 0.4, so dL/dQ0 = 0.4.
        let batch = vec![BatchSample {
            features: x.clone(),
            mask: vec![true, true],
            action: 0,
            target: q[0] - 0.4,
            weight: 1.0,
        }];
        let out = params.backward(&batch, LossKind::Squared).unwrap();
        let gw = &out.grads.advantage[0].w;
        assert!((gw[0] - 0.4 * 1.0).abs() < 1e-12);
        assert!((gw[1] - 0.4 * 2.0).abs() < 1e-12);
        assert!((gw[2] - 0.4 * 3.0).abs() < 1e-12);
        assert!(gw[3..].iter().all(|&g| g == 0.0));
        assert!((out.grads.advantage[0].b[0] - 0.4).abs() < 1e-12);
        assert_eq!(out.grads.advantage[0].b[1], 0.0);
    }

    #[test]
    fn masked_actions_get_no_gradient() {
        let params = NetParams::new(tiny_arch(true), 13);
        let x = vec![0.1, 0.9, 0.3, 0.6, 0.2];
        let mask = vec![true, true, false, true];
        let batch = vec![BatchSample {
            features: x,
            mask,
            action: 1,
            target: 2.0,
            weight: 1.0,
        }];
        let out = params.backward(&batch, LossKind::default()).unwrap();
        // Output rows of the advantage head for the masked action stay zero.
        let last = out.grads.advantage.last().unwrap();
        let row = &last.w[2 * last.in_dim..3 * last.in_dim];
        assert!(row.iter().all(|&g| g == 0.0));
        assert_eq!(last.b[2], 0.0);
    }

    #[test]
    fn adam_identities() {
        let mut params = NetParams::new(tiny_arch(true), 17);
        let before = params.clone();
        let zero = params.zeros_like();
        let mut opt = Adam::new(&params);
        opt.step(&mut params, &zero, 0.0002).unwrap();
        assert_eq!(params, before);

        let mut grads = params.zeros_like();
        grads.trunk[0].w[0] = 1.0;
        let mut opt = Adam::new(&params);
        opt.step(&mut params, &grads, 0.0).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_matches_scalar_reference_trace() {
        // One-parameter "network": drive a single weight with constant grad.
        let arch = Arch { input_dim: 1, trunk: vec![], head_hidden: 0, n_actions: 1, dueling: false };
        let mut params = NetParams::new(arch, 0);
        for t in params.tensors_mut() {
            t.fill(0.0);
        }
        let mut grads = params.zeros_like();
        grads.advantage[0].w[0] = 0.3;
        let mut opt = Adam::new(&params);

        // Scalar reference: canonical bias-corrected update.
        let (lr, b1, b2, eps, g) = (0.01, 0.9, 0.999, 1e-8, 0.3);
        let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=25u32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
            opt.step(&mut params, &grads, lr).unwrap();
            assert_eq!(params.advantage[0].w[0], p, "diverged at step {t}");
        }
    }

    #[test]
    fn polyak_identities() {
        let online = NetParams::new(tiny_arch(true), 23);
        let mut target = NetParams::new(tiny_arch(true), 29);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);

        let mut zero = online.zeros_like();
        polyak_update(&mut zero, &online, 0.5).unwrap();
        for (t, o) in zero.tensors().iter().zip(online.tensors()) {
            for (a, b) in t.iter().zip(o.iter()) {
                assert_eq!(*a, 0.5 * b);
            }
        }
    }

    #[test]
    fn polyak_converges_geometrically() {
        let online = NetParams::new(tiny_arch(true), 31);
        let mut target = online.zeros_like();
        let mut dist_prev = f64::INFINITY;
        for _ in 0..10 {
            polyak_update(&mut target, &online, 0.5).unwrap();
            let dist: f64 = target
                .tensors()
                .iter()
                .zip(online.tensors())
                .flat_map(|(t, o)| t.iter().zip(o.iter()).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            assert!(dist <= dist_prev / 2.0 + 1e-15);
            dist_prev = dist;
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let params = NetParams::new(tiny_arch(true), 37);
        let text = save_checkpoint(&params);
        let back = load_checkpoint(&text).unwrap();
        assert_eq!(params, back);
        assert!(matches!(load_checkpoint("{"), Err(QNetError::CheckpointCorrupt(_))));
        let wrong = text.replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(load_checkpoint(&wrong), Err(QNetError::CheckpointCorrupt(_))));
    }

    #[test]
    fn feature_encoder_stays_in_unit_range() {
        let inst = crate::fixtures::six_customers();
        let enc = FeatureEncoder::new(&inst);
        let env = crate::env::Env::new(&inst, crate::env::EnvConfig::default());
        let mut s = env.reset();
        s.clock = 1e9;
        s.routes_used = 99;
        let f = enc.encode(&s);
        assert_eq!(f.len(), enc.dim());
        assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
