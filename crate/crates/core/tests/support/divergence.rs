//! Non-negativity, identity and limit agreement of the divergence family.

use cizsl_core::divergences::{
    bhattacharyya_divergence, kl_divergence, renyi_divergence, sm_divergence, special_case,
    tsallis_divergence, DivergenceSpec, Family,
};
use cizsl_core::rng::SeededStream;

pub const LIMIT_DELTA: f64 = 1e-6;
pub const LIMIT_GAMMAS: [f64; 4] = [0.3, 0.5, 2.0, 4.0];

/// A random probability vector with `k` entries, sometimes nearly one-hot.
pub fn random_simplex(rng: &mut SeededStream, k: usize) -> Vec<f64> {
    let scale = if rng.uniform() < 0.2 { 6.0 } else { 1.0 };
    simplex_with_spread(rng, k, scale)
}

/// Softmax of `k` normal draws scaled by `spread`.
pub fn simplex_with_spread(rng: &mut SeededStream, k: usize, spread: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| (spread * rng.normal()).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// One spec per family with random valid parameters.
fn random_specs(rng: &mut SeededStream) -> [DivergenceSpec; 5] {
    let gamma = rng.range(0.05, 5.0);
    let beta = rng.range(-3.0, 5.0);
    [
        DivergenceSpec::fixed(Family::SharmaMittal, gamma, beta),
        DivergenceSpec::fixed(Family::Renyi, gamma, 1.0),
        DivergenceSpec::fixed(Family::Tsallis, gamma, gamma),
        DivergenceSpec::kl(),
        DivergenceSpec::bhattacharyya(),
    ]
}

/// Smallest value over `pairs` random `(p, q)` pairs and every family.
pub fn min_over_random_pairs(pairs: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut least = f64::INFINITY;
    for _ in 0..pairs {
        let k = 2 + rng.below(9);
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        for spec in random_specs(&mut rng) {
            least = least.min(special_case(&p, &q, &spec).expect("valid pair"));
        }
    }
    least
}

/// Largest `D(p || p)` over `samples` random `p` and every family.
pub fn max_self_divergence(samples: usize, seed: u64) -> f64 {
    let mut rng = SeededStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let k = 2 + rng.below(9);
        let p = random_simplex(&mut rng, k);
        for spec in random_specs(&mut rng) {
            worst = worst.max(special_case(&p, &p, &spec).expect("valid pair").abs());
        }
    }
    worst
}

/// Largest gap between the general form near a singular point and the
/// closed form it tends to, per limit.
#[derive(Clone, Copy, Debug, Default)]
pub struct LimitGaps {
    pub renyi: f64,
    pub tsallis: f64,
    pub kl: f64,
    /// Against twice the Bhattacharyya distance.
    pub bhattacharyya: f64,
}

impl LimitGaps {
    pub fn max(&self) -> f64 {
        self.renyi
            .max(self.tsallis)
            .max(self.kl)
            .max(self.bhattacharyya)
    }
}

/// Limits are taken at a fixed `delta`, so the gap scales with the slope of
/// the general form in its parameters; pairs are drawn with a moderate
/// log-ratio (`spread` 0.3) where that slope stays of order one.
pub fn limit_gaps(pairs: usize, seed: u64) -> LimitGaps {
    let mut rng = SeededStream::new(seed);
    let mut gaps = LimitGaps::default();
    let d = LIMIT_DELTA;
    for _ in 0..pairs {
        let k = 2 + rng.below(9);
        let p = simplex_with_spread(&mut rng, k, 0.3);
        let q = simplex_with_spread(&mut rng, k, 0.3);
        let sm = |g: f64, b: f64| sm_divergence(&p, &q, g, b).expect("sm");
        for gamma in LIMIT_GAMMAS {
            let r = renyi_divergence(&p, &q, gamma).expect("renyi");
            let t = tsallis_divergence(&p, &q, gamma).expect("tsallis");
            for s in [-1.0, 1.0] {
                gaps.renyi = gaps.renyi.max((sm(gamma, 1.0 + s * d) - r).abs());
                gaps.tsallis = gaps.tsallis.max((sm(gamma, gamma + s * d) - t).abs());
            }
        }
        let kl = kl_divergence(&p, &q).expect("kl");
        let b2 = 2.0 * bhattacharyya_divergence(&p, &q).expect("bhattacharyya");
        for (sg, sb) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            gaps.kl = gaps.kl.max((sm(1.0 + sg * d, 1.0 + sb * d) - kl).abs());
            gaps.bhattacharyya = gaps
                .bhattacharyya
                .max((sm(0.5 + sg * d, 1.0 + sb * d) - b2).abs());
        }
    }
    gaps
}
