#![allow(dead_code)]

use mmce_core::{LabelMatrix, Mode, ModelParams, Posterior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sparse labels: every (worker, item) pair is present with probability `density`,
/// and every item gets at least one label.
pub fn random_labels(rng: &mut ChaCha8Rng, workers: usize, items: usize, k: usize, density: f64) -> LabelMatrix {
    let mut triples = Vec::new();
    for j in 0..items {
        let forced = rng.random_range(0..workers);
        for i in 0..workers {
            if i == forced || rng.random_bool(density) {
                triples.push((i, j, rng.random_range(0..k)));
            }
        }
    }
    LabelMatrix::from_indices(k, workers, items, &triples).unwrap()
}

/// Instance of at most `max_workers` workers, `max_items` items and K in {2, 3, 4}.
pub fn random_instance(rng: &mut ChaCha8Rng, max_workers: usize, max_items: usize) -> LabelMatrix {
    let workers = rng.random_range(1..=max_workers);
    let items = rng.random_range(1..=max_items);
    let k = rng.random_range(2..=4);
    random_labels(rng, workers, items, k, 0.6)
}

pub fn random_params(rng: &mut ChaCha8Rng, labels: &LabelMatrix, mode: Mode, scale: f64) -> ModelParams {
    let mut p = ModelParams::zeros(mode, labels.num_workers(), labels.num_items(), labels.num_classes());
    for v in p.workers.values_mut().iter_mut().chain(p.items.values_mut()) {
        *v = scale * (2.0 * rng.random::<f64>() - 1.0);
    }
    p
}

pub fn random_posterior(rng: &mut ChaCha8Rng, items: usize, k: usize) -> Posterior {
    let mut rows = Vec::with_capacity(items * k);
    for _ in 0..items {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        rows.extend(w.iter().map(|x| x / s));
    }
    Posterior::from_rows(rows, k).unwrap()
}

/// Dense `σ(c, k)` from ordinal scores laid out as `[entity][s - 1][region]`, with regions
/// ordered (≥,≥), (≥,<), (<,≥), (<,<). Written from the indicator definition.
pub fn ordinal_to_dense_oracle(values: &[f64], entities: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; entities * k * k];
    for e in 0..entities {
        for c in 0..k {
            for l in 0..k {
                let mut total = 0.0;
                for s in 1..k {
                    let region = match (c >= s, l >= s) {
                        (true, true) => 0,
                        (true, false) => 1,
                        (false, true) => 2,
                        (false, false) => 3,
                    };
                    total += values[(e * (k - 1) + (s - 1)) * 4 + region];
                }
                out[(e * k + c) * k + l] = total;
            }
        }
    }
    out
}

pub fn dense_scores(tensor: &mmce_core::ConfusionTensor, entities: usize, k: usize) -> Vec<f64> {
    match tensor.mode() {
        Mode::Multiclass => tensor.values().to_vec(),
        Mode::Ordinal => ordinal_to_dense_oracle(tensor.values(), entities, k),
    }
}

/// Regularized dual objective summed term by term with an unshifted softmax.
pub fn dual_objective_oracle(
    labels: &LabelMatrix,
    q: &Posterior,
    params: &ModelParams,
    alpha: f64,
    beta: f64,
    centered: bool,
) -> f64 {
    let k = labels.num_classes();
    let sigma = dense_scores(&params.workers, labels.num_workers(), k);
    let tau = dense_scores(&params.items, labels.num_items(), k);
    let mut total = 0.0;
    for obs in labels.observations() {
        for c in 0..k {
            let s = &sigma[(obs.worker * k + c) * k..(obs.worker * k + c + 1) * k];
            let t = &tau[(obs.item * k + c) * k..(obs.item * k + c + 1) * k];
            let z: f64 = (0..k).map(|l| (s[l] + t[l]).exp()).sum();
            let p = (s[obs.label] + t[obs.label]).exp() / z;
            total += q.row(obs.item)[c] * p.ln();
        }
    }
    for j in 0..q.num_items() {
        for &x in q.row(j) {
            if x > 0.0 {
                total -= x * x.ln();
            }
        }
    }
    let omega = if centered {
        centered_oracle(params.workers.values(), labels.num_workers(), k)
    } else {
        0.5 * params.workers.values().iter().map(|v| v * v).sum::<f64>()
    };
    let psi = 0.5 * params.items.values().iter().map(|v| v * v).sum::<f64>();
    total - alpha * omega - beta * psi
}

/// `½ Σ_i [Σ_c (σ(c,c) - d̄)² + Σ_{c≠k} (σ(c,k) - ō)²]`.
pub fn centered_oracle(values: &[f64], entities: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for e in 0..entities {
        let m = &values[e * k * k..(e + 1) * k * k];
        let diag: Vec<f64> = (0..k).map(|c| m[c * k + c]).collect();
        let off: Vec<f64> = (0..k * k).filter(|x| x / k != x % k).map(|x| m[x]).collect();
        let d_bar = diag.iter().sum::<f64>() / k as f64;
        let o_bar = off.iter().sum::<f64>() / (k * (k - 1)) as f64;
        total += diag.iter().map(|d| (d - d_bar).powi(2)).sum::<f64>();
        total += off.iter().map(|o| (o - o_bar).powi(2)).sum::<f64>();
    }
    0.5 * total
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}
