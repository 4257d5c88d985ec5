//! With both creativity terms off, `L_G` must equal the plain conditional
//! GAN generator loss: critic term, seen classification and visual pivot.

use cizsl_core::losses::{generator_step, LossConfig};

use super::grad::Instance;

/// Largest absolute difference between a reported term (or the total) and
/// its recomputation from forward passes, or `None` when a creativity term
/// is still reported.
pub fn reduction_gap(seed: u64) -> Option<f64> {
    let cfg = LossConfig {
        realism_term: false,
        entropy_term: false,
        ..LossConfig::default()
    };
    let inst = Instance::random(cfg, seed);
    let step = generator_step(&inst.model, &inst.div, &inst.gen_inputs(), &inst.cfg).expect("L_G");
    let t = &step.terms;
    if t.realism.is_some()
        || t.entropy.is_some()
        || t.new_class.is_some()
        || t.unseen_categorization.is_some()
    {
        return None;
    }

    let x = inst
        .model
        .generate(&inst.seen.text, &inst.seen.noise)
        .expect("generate");
    let d = inst
        .model
        .discriminate(&x, &inst.seen_semantics, inst.cfg.scoring())
        .expect("discriminate");
    let n = d.scores.len() as f64;
    let adversarial = -d.scores.iter().sum::<f64>() / n;
    let classification = -inst
        .seen
        .labels
        .iter()
        .enumerate()
        .map(|(i, &c)| d.class_probs.get(i, c).ln())
        .sum::<f64>()
        / n;
    let pv = &inst.pivot;
    let xp = inst
        .model
        .generate(&pv.repeated_text(), &pv.noise)
        .expect("generate");
    let k = pv.real_means.rows();
    let mut pivot = 0.0;
    for c in 0..k {
        for j in 0..xp.cols() {
            let mean = (0..pv.per_class)
                .map(|r| xp.get(c * pv.per_class + r, j))
                .sum::<f64>()
                / pv.per_class as f64;
            pivot += (mean - pv.real_means.get(c, j)).powi(2);
        }
    }
    pivot /= k as f64;

    let gaps = [
        (t.seen_adversarial - adversarial).abs(),
        (t.seen_classification - classification).abs(),
        (t.pivot - pivot).abs(),
        (step.loss - (adversarial + classification + pivot)).abs(),
    ];
    Some(gaps.into_iter().fold(0.0, f64::max))
}
