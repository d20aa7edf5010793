//! Finite-difference oracle for the hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use routeq_core::qnet::{Arch, BatchSample, LossKind, NetParams};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-7;

fn random_net_and_batch(seed: u64) -> (NetParams, Vec<BatchSample>, LossKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_actions = rng.gen_range(2..=5);
    let arch = Arch {
        input_dim: rng.gen_range(3..=6),
        trunk: vec![rng.gen_range(4..=8)],
        head_hidden: rng.gen_range(3..=6),
        n_actions,
        dueling: rng.gen_bool(0.7),
    };
    let params = NetParams::new(arch.clone(), rng.gen());
    let mut batch = Vec::new();
    for _ in 0..3 {
        let features: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut mask = vec![true; n_actions];
        if n_actions > 2 {
            mask[rng.gen_range(0..n_actions)] = false;
        }
        let action = loop {
            let a = rng.gen_range(0..n_actions);
            if mask[a] {
                break a;
            }
        };
        let q = params.forward(&features, &mask).unwrap();
        // Keep the residual away from the Huber kink at |e| = 1.
        let e: f64 = rng.gen_range(0.2..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        batch.push(BatchSample {
            features,
            mask,
            action,
            target: q[action] - e,
            weight: rng.gen_range(0.5..1.5),
        });
    }
    let loss = if seed % 2 == 0 { LossKind::Huber { delta: 1.0 } } else { LossKind::Squared };
    (params, batch, loss)
}

/// Maximum finite-difference disagreement over every parameter of the net.
fn max_fd_error(params: &NetParams, batch: &[BatchSample], loss: LossKind) -> f64 {
    let analytic = params.backward(batch, loss).unwrap().grads;
    let mut worst: f64 = 0.0;
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        for i in 0..params.tensors()[ti].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= FD_STEP;
            let lp = plus.backward(batch, loss).unwrap().loss;
            let lm = minus.backward(batch, loss).unwrap().loss;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let exact = analytic.tensors()[ti][i];
            let rel = (numeric - exact).abs() / exact.abs().max(ABS_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20u64 {
        let (params, batch, loss) = random_net_and_batch(seed);
        let worst = max_fd_error(&params, &batch, loss);
        assert!(
            worst <= REL_TOL,
            "seed {seed}: worst relative finite-difference error {worst:e}"
        );
    }
}
