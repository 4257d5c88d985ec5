//! Direct-arithmetic oracles for the evaluation metrics.

use cizsl_core::diffmath::Tensor;
use cizsl_core::evaluation::{
    default_bias_grid, harmonic_mean, retrieval_from_centers, su_curve_auc, MixedScores,
    DEFAULT_FRACTIONS,
};
use cizsl_core::rng::SeededStream;

/// Labels over `k_seen + k_unseen` classes with both groups present.
fn mixed_labels(rng: &mut SeededStream, n: usize, k_seen: usize, k_unseen: usize) -> Vec<usize> {
    let k = k_seen + k_unseen;
    let mut labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    labels[0] = rng.below(k_seen);
    labels[1] = k_seen + rng.below(k_unseen);
    labels
}

/// Largest `|AUC - 1|` for scorers that rank the true class first by a
/// random margin, over `trials` random test sets.
pub fn oracle_auc_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (ks, ku) = (2 + rng.below(6), 2 + rng.below(6));
        let n = 10 + rng.below(90);
        let labels = mixed_labels(&mut rng, n, ks, ku);
        let scores = Tensor::from_fn(n, ks + ku, |i, c| {
            if c == labels[i] {
                rng.normal()
            } else {
                -20.0 - 10.0 * rng.uniform()
            }
        });
        let mixed = MixedScores {
            scores: &scores,
            labels: &labels,
            k_seen: ks,
        };
        let auc = su_curve_auc(&mixed, &default_bias_grid(&scores, 201))
            .expect("curve")
            .auc;
        worst = worst.max((auc - 1.0).abs());
    }
    worst
}

/// Largest AUC difference between a coarse and a fine default grid over
/// random noisy scorers.
pub fn grid_refinement_gap(trials: usize, coarse: usize, fine: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (ks, ku) = (2 + rng.below(6), 2 + rng.below(6));
        let n = 200 + rng.below(300);
        let labels = mixed_labels(&mut rng, n, ks, ku);
        let signal = rng.range(0.5, 3.0);
        let scores = Tensor::from_fn(n, ks + ku, |i, c| {
            let shift = if c >= ks { -1.0 } else { 0.0 };
            rng.normal() + shift + if c == labels[i] { signal } else { 0.0 }
        });
        let mixed = MixedScores {
            scores: &scores,
            labels: &labels,
            k_seen: ks,
        };
        let a = su_curve_auc(&mixed, &default_bias_grid(&scores, coarse))
            .expect("coarse")
            .auc;
        let b = su_curve_auc(&mixed, &default_bias_grid(&scores, fine))
            .expect("fine")
            .auc;
        worst = worst.max((a - b).abs());
    }
    worst
}

pub fn harmonic_mean_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (s, u) = (rng.range(0.01, 1.0), rng.range(0.01, 1.0));
        let direct = 1.0 / ((1.0 / s + 1.0 / u) / 2.0);
        worst = worst.max((harmonic_mean(s, u) - direct).abs());
    }
    worst
}

/// Largest gap between reported retrieval precision and AP and a brute-force
/// recount from full pairwise distances.
pub fn retrieval_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let k = 2 + rng.below(5);
        let dim = 1 + rng.below(6);
        let n = k + rng.below(60);
        let classes: Vec<usize> = (0..k).map(|c| 100 + 3 * c).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| classes[rng.below(k)]).collect();
        labels[..k].copy_from_slice(&classes);
        let centers = Tensor::from_fn(k, dim, |_, _| 2.0 * rng.normal());
        let feats = Tensor::from_fn(n, dim, |i, j| {
            let c = classes.iter().position(|&x| x == labels[i]).unwrap();
            centers.get(c, j) + 1.5 * rng.normal()
        });
        let rows = retrieval_from_centers(&centers, &classes, &feats, &labels, &DEFAULT_FRACTIONS)
            .expect("retrieval");
        for row in rows {
            let (mut prec, mut ap) = (0.0, 0.0);
            for (c, &class) in classes.iter().enumerate() {
                let count = labels.iter().filter(|&&l| l == class).count();
                let top = ((row.fraction * count as f64).ceil() as usize).max(1);
                let mut ranked: Vec<(f64, usize)> = (0..n)
                    .map(|i| {
                        let d: f64 = (0..dim)
                            .map(|j| (feats.get(i, j) - centers.get(c, j)).powi(2))
                            .sum();
                        (d, i)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut hits = 0usize;
                let mut sum_prec = 0.0;
                for (rank, &(_, i)) in ranked.iter().take(top).enumerate() {
                    if labels[i] == class {
                        hits += 1;
                        sum_prec += hits as f64 / (rank + 1) as f64;
                    }
                }
                prec += hits as f64 / top as f64;
                ap += sum_prec / top as f64;
            }
            worst = worst
                .max((row.precision - prec / k as f64).abs())
                .max((row.average_precision - ap / k as f64).abs());
        }
    }
    worst
}
