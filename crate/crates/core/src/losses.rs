//! Training objectives.
//!
//! Generator:
//!
//! ```text
//! L_G = L_G^C - mean D_r(G(t_s, z)) - mean log p(y_s | G(t_s, z)) + pivot [+ L_G^u]
//! L_G^C = -mean D_r(G(t_h, z))                      (realism term)
//!         + lambda * mean minmax(L_e(p(. | G(t_h, z))))  (entropy term)
//! ```
//!
//! Discriminator:
//!
//! ```text
//! L_D = mean D_r(x_fake) - mean D_r(x) + L_Lip
//!       - 1/2 mean log p(y | x) - 1/2 mean log p(y_s | x_fake)
//!       [+ mean D_r(G(t_h, z))]                    (hallucinated real/fake)
//!       [+ lambda * mean minmax(L_e(...))]          (creativity on D)
//! ```
//!
//! `p(. | x)` is the softmax of the active classification route. Fake
//! features enter `L_D` as constants.

use serde::{Deserialize, Serialize};

use crate::diffmath::{check_loss, penalty_node, Bound, Graph, ParamStore, Tensor, Var};
use crate::divergences::{entropy_rows, BoundDivergence, DivergenceParams, DivergenceSpec};
use crate::error::{Error, Result};
use crate::model::{class_logits, critic, generate, trunk, ClassHead, ModelParams, SegcScoring};
use crate::rng::SeededStream;

pub const K_UNSEEN_CHOICES: [usize; 4] = [10, 20, 50, 100];
/// Batches whose L_e range is below this normalize to all zeros.
pub const MINMAX_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_creativity: f64,
    pub realism_term: bool,
    pub entropy_term: bool,
    pub new_class_ablation: bool,
    pub creativity_on_discriminator: bool,
    pub segc_active: bool,
    pub segc_normalized: bool,
    pub eta: f64,
    pub rf_hallucinated: bool,
    pub u_categorization: bool,
    pub k_unseen_cap: usize,
    /// Generated samples per class behind each visual-pivot mean.
    pub pivot_per_class: usize,
    pub divergence: DivergenceSpec,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_creativity: 0.1,
            realism_term: true,
            entropy_term: true,
            new_class_ablation: false,
            creativity_on_discriminator: false,
            segc_active: false,
            segc_normalized: false,
            eta: 1.0,
            rf_hallucinated: false,
            u_categorization: false,
            k_unseen_cap: 10,
            pivot_per_class: 8,
            divergence: DivergenceSpec::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_creativity >= 0.0 && self.lambda_creativity.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda_creativity must be finite and >= 0, got {}",
                self.lambda_creativity
            )));
        }
        if self.new_class_ablation && self.entropy_term {
            return Err(Error::invalid(
                "new_class_ablation replaces the entropy term; set entropy_term = false",
            ));
        }
        if self.new_class_ablation && self.segc_active {
            return Err(Error::invalid(
                "new_class_ablation needs the seen-class head, not SeGC",
            ));
        }
        if self.u_categorization && !self.segc_active {
            return Err(Error::invalid(
                "u_categorization reuses the SeGC projection; enable segc_active",
            ));
        }
        if !K_UNSEEN_CHOICES.contains(&self.k_unseen_cap) {
            return Err(Error::invalid(format!(
                "k_unseen_cap must be one of {K_UNSEEN_CHOICES:?}, got {}",
                self.k_unseen_cap
            )));
        }
        if self.segc_normalized && !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.pivot_per_class == 0 {
            return Err(Error::invalid("pivot_per_class must be >= 1"));
        }
        self.divergence.validate()
    }

    pub fn head(&self) -> ClassHead {
        if self.segc_active {
            ClassHead::Segc
        } else if self.new_class_ablation {
            ClassHead::SeenPlusNew
        } else {
            ClassHead::Seen
        }
    }

    pub fn scoring(&self) -> SegcScoring {
        SegcScoring {
            normalized: self.segc_normalized,
            eta: self.eta,
        }
    }

    /// Whether any generator term reads hallucinated text.
    pub fn uses_hallucination(&self) -> bool {
        self.realism_term
            || self.entropy_term
            || self.new_class_ablation
            || self.rf_hallucinated
            || self.creativity_on_discriminator
    }
}

// ── value-level helpers ─────────────────────────────────────────────────

/// `(v - min) / (max - min)`; all zeros when the range is below [`MINMAX_EPS`].
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo >= MINMAX_EPS) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Row-wise `u_i x_i + (1 - u_i) x_fake_i`.
pub fn interpolate_with(x_real: &Tensor, x_fake: &Tensor, u: &[f64]) -> Result<Tensor> {
    if x_real.shape() != x_fake.shape() {
        return Err(Error::dim(
            "interpolation inputs",
            format!("{:?}", x_real.shape()),
            format!("{:?}", x_fake.shape()),
        ));
    }
    if u.len() != x_real.rows() {
        return Err(Error::dim("interpolation weights", x_real.rows(), u.len()));
    }
    Ok(Tensor::from_fn(x_real.rows(), x_real.cols(), |r, c| {
        u[r] * x_real.get(r, c) + (1.0 - u[r]) * x_fake.get(r, c)
    }))
}

pub fn lipschitz_interpolate(
    x_real: &Tensor,
    x_fake: &Tensor,
    rng: &mut SeededStream,
) -> Result<Tensor> {
    let u: Vec<f64> = (0..x_real.rows()).map(|_| rng.uniform()).collect();
    interpolate_with(x_real, x_fake, &u)
}

/// `-mean_i log softmax(S_i)[y_i]`, evaluated directly.
pub fn semantic_softmax_loss(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(labels, scores.rows(), scores.cols())?;
    let mut total = 0.0;
    for (row, &y) in scores.iter_rows().zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len() as f64)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if labels.len() != rows {
        return Err(Error::dim("labels", rows, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

// ── graph building blocks ───────────────────────────────────────────────

/// `-mean_i log softmax(logits_i)[y_i]`.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Var {
    let (n, k) = g.shape(logits);
    let ls = g.log_softmax_rows(logits);
    let mask = Tensor::from_fn(n, k, |r, c| if labels[r] == c { 1.0 } else { 0.0 });
    let picked = g.mul_const(ls, mask);
    let s = g.sum_all(picked);
    g.scale(s, -1.0 / n as f64)
}

/// Min-max normalization of an `n x 1` column, differentiable through the
/// selected extremes. Ties resolve to the first index.
pub fn minmax_graph(g: &mut Graph, v: Var) -> Var {
    let (n, _) = g.shape(v);
    let vals = g.value(v).data().to_vec();
    let (mut imin, mut imax) = (0, 0);
    for (i, &x) in vals.iter().enumerate() {
        if x < vals[imin] {
            imin = i;
        }
        if x > vals[imax] {
            imax = i;
        }
    }
    if !(vals[imax] - vals[imin] >= MINMAX_EPS) {
        return g.leaf(Tensor::zeros(n, 1));
    }
    let lo = g.select(v, imin, 0);
    let hi = g.select(v, imax, 0);
    let lo_b = g.broadcast_scalar(lo, n, 1);
    let num = g.sub(v, lo_b);
    let den = g.sub(hi, lo);
    let inv = g.recip(den);
    g.mul_scalar(num, inv)
}

/// Class-probability logits for generated or real features under the
/// model's classification route. `seen_reduced` is required by SeGC.
fn route_logits(
    g: &mut Graph,
    model: &ModelParams,
    dp: &Bound,
    feat: Var,
    seen_reduced: Option<&Tensor>,
    cfg: &LossConfig,
) -> Var {
    class_logits(g, dp, model.head, feat, seen_reduced, cfg.scoring()).scores
}

/// Per-sample entropy values and the normalized, lambda-weighted mean.
fn entropy_term(g: &mut Graph, logits: Var, div: &BoundDivergence, lambda: f64) -> (Var, Var) {
    let probs = g.softmax_rows(logits);
    let rows = entropy_rows(g, probs, div);
    let normed = minmax_graph(g, rows);
    let m = g.mean_all(normed);
    (rows, g.scale(m, lambda))
}

/// Visual-pivot loss over per-class generated batches. Row `k * m + j` of
/// `generated` belongs to class `k`.
pub fn pivot_graph(g: &mut Graph, generated: Var, real_means: &Tensor, per_class: usize) -> Var {
    let k = real_means.rows();
    let avg = Tensor::from_fn(k, k * per_class, |r, c| {
        if c / per_class == r {
            1.0 / per_class as f64
        } else {
            0.0
        }
    });
    let a = g.leaf(avg);
    let means = g.matmul(a, generated);
    let target = g.leaf(real_means.clone());
    let d = g.sub(means, target);
    let sq = g.mul(d, d);
    let s = g.sum_all(sq);
    g.scale(s, 1.0 / k as f64)
}

// ── batches ─────────────────────────────────────────────────────────────

/// Descriptors with noise and (where meaningful) class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TextBatch {
    pub text: Tensor,
    pub noise: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PivotBatch {
    /// One descriptor per seen class.
    pub semantics: Tensor,
    /// Mean real feature per seen class.
    pub real_means: Tensor,
    pub per_class: usize,
    /// `K * per_class` noise rows, grouped by class.
    pub noise: Tensor,
}

impl PivotBatch {
    /// Descriptor rows repeated to line up with `noise`.
    pub fn repeated_text(&self) -> Tensor {
        let idx: Vec<usize> = (0..self.semantics.rows())
            .flat_map(|k| std::iter::repeat_n(k, self.per_class))
            .collect();
        self.semantics.select_rows(&idx)
    }
}

pub struct GenInputs<'a> {
    pub seen: &'a TextBatch,
    pub hallucinated: Option<&'a TextBatch>,
    pub pivot: &'a PivotBatch,
    /// `K^u` hallucinated descriptors, one generated sample each.
    pub unseen_cat: Option<&'a TextBatch>,
    /// Seen-class descriptors, reduced on the fly for SeGC.
    pub seen_semantics: &'a Tensor,
    /// Generator parameters whose reduction layer produces the SeGC class
    /// descriptors; `None` uses the model's own. The reduced descriptors are
    /// constants of the loss either way.
    pub reducer: Option<&'a ParamStore>,
}

pub struct DiscInputs<'a> {
    pub real: &'a Tensor,
    pub real_labels: &'a [usize],
    /// `G(t_s, z)` values, aligned with `fake_labels`.
    pub fake: &'a Tensor,
    pub fake_labels: &'a [usize],
    pub interpolates: &'a Tensor,
    /// `G(t_h, z)` values.
    pub hallucinated_fake: Option<&'a Tensor>,
    pub seen_semantics: &'a Tensor,
}

/// Each active term of a loss, by value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenTerms {
    pub realism: Option<f64>,
    pub entropy: Option<f64>,
    pub new_class: Option<f64>,
    pub seen_adversarial: f64,
    pub seen_classification: f64,
    pub pivot: f64,
    pub unseen_categorization: Option<f64>,
}

impl GenTerms {
    pub fn total(&self) -> f64 {
        self.realism.unwrap_or(0.0)
            + self.entropy.unwrap_or(0.0)
            + self.new_class.unwrap_or(0.0)
            + self.seen_adversarial
            + self.seen_classification
            + self.pivot
            + self.unseen_categorization.unwrap_or(0.0)
    }

    /// `L_G^C` part.
    pub fn creativity(&self) -> f64 {
        self.realism.unwrap_or(0.0) + self.entropy.unwrap_or(0.0) + self.new_class.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscTerms {
    pub fake_score: f64,
    pub real_score: f64,
    pub lipschitz: f64,
    pub real_classification: f64,
    pub fake_classification: f64,
    pub hallucinated_rf: Option<f64>,
    pub creativity: Option<f64>,
    pub new_class: Option<f64>,
    pub degenerate_penalty_rows: usize,
}

impl DiscTerms {
    pub fn total(&self) -> f64 {
        self.fake_score
            + self.real_score
            + self.lipschitz
            + self.real_classification
            + self.fake_classification
            + self.hallucinated_rf.unwrap_or(0.0)
            + self.creativity.unwrap_or(0.0)
            + self.new_class.unwrap_or(0.0)
    }

    /// `mean D_r(x) - mean D_r(x_fake)`.
    pub fn wasserstein(&self) -> f64 {
        -(self.real_score + self.fake_score)
    }
}

pub struct LossNode<T> {
    pub total: Var,
    pub terms: T,
}

fn val(g: &Graph, v: Var) -> f64 {
    g.value(v).item()
}

fn require_segc_reduced(
    model: &ModelParams,
    reducer: Option<&ParamStore>,
    seen_semantics: &Tensor,
) -> Result<Option<Tensor>> {
    match model.head {
        ClassHead::Segc => Ok(Some(
            model.reduce_text_using(reducer.unwrap_or(&model.generator), seen_semantics)?,
        )),
        _ => Ok(None),
    }
}

fn check_text_batch(b: &TextBatch, model: &ModelParams, what: &str) -> Result<()> {
    if b.text.rows() == 0 {
        return Err(Error::invalid(format!("{what}: empty batch")));
    }
    if b.text.cols() != model.arch.semantic_dim {
        return Err(Error::dim(
            format!("{what} text width"),
            model.arch.semantic_dim,
            b.text.cols(),
        ));
    }
    if b.noise.shape() != (b.text.rows(), model.arch.noise_dim) {
        return Err(Error::dim(
            format!("{what} noise"),
            format!("{}x{}", b.text.rows(), model.arch.noise_dim),
            format!("{:?}", b.noise.shape()),
        ));
    }
    Ok(())
}

/// The creativity loss `L_G^C` on the graph. Returns the total node and the
/// (realism, entropy, new-class) values.
#[allow(clippy::too_many_arguments)]
fn creativity_graph(
    g: &mut Graph,
    model: &ModelParams,
    gp: &Bound,
    dp: &Bound,
    div: &BoundDivergence,
    hall: &TextBatch,
    seen_reduced: Option<&Tensor>,
    cfg: &LossConfig,
) -> (Option<Var>, [Option<f64>; 3]) {
    let t = g.leaf(hall.text.clone());
    let z = g.leaf(hall.noise.clone());
    let x = generate(g, gp, &model.arch, t, z);
    let feat = trunk(g, dp, &model.arch, x);
    let mut parts: Vec<Var> = Vec::new();
    let mut values = [None; 3];
    if cfg.realism_term {
        let s = critic(g, dp, feat);
        let m = g.mean_all(s);
        let r = g.neg(m);
        values[0] = Some(val(g, r));
        parts.push(r);
    }
    if cfg.entropy_term || cfg.new_class_ablation {
        let logits = route_logits(g, model, dp, feat, seen_reduced, cfg);
        if cfg.entropy_term {
            let (_, e) = entropy_term(g, logits, div, cfg.lambda_creativity);
            values[1] = Some(val(g, e));
            parts.push(e);
        } else {
            let n = hall.text.rows();
            let ce = cross_entropy(g, logits, &vec![model.k_seen; n]);
            let e = g.scale(ce, cfg.lambda_creativity);
            values[2] = Some(val(g, e));
            parts.push(e);
        }
    }
    let total = parts.into_iter().reduce(|a, b| g.add(a, b));
    (total, values)
}

/// `L_G` on `g` over bound generator, discriminator and divergence
/// parameters.
pub fn generator_loss_graph(
    g: &mut Graph,
    model: &ModelParams,
    gp: &Bound,
    dp: &Bound,
    div: &BoundDivergence,
    inp: &GenInputs,
    cfg: &LossConfig,
) -> Result<LossNode<GenTerms>> {
    check_text_batch(inp.seen, model, "seen batch")?;
    check_labels(&inp.seen.labels, inp.seen.text.rows(), model.k_seen)?;
    let seen_reduced = require_segc_reduced(model, inp.reducer, inp.seen_semantics)?;
    let mut terms = GenTerms::default();
    let mut parts: Vec<Var> = Vec::new();

    let needs_hall = cfg.realism_term || cfg.entropy_term || cfg.new_class_ablation;
    if needs_hall {
        let hall = inp
            .hallucinated
            .ok_or_else(|| Error::invalid("creativity terms need a hallucinated batch"))?;
        check_text_batch(hall, model, "hallucinated batch")?;
        let (node, [r, e, nc]) =
            creativity_graph(g, model, gp, dp, div, hall, seen_reduced.as_ref(), cfg);
        terms.realism = r;
        terms.entropy = e;
        terms.new_class = nc;
        parts.extend(node);
    }

    let t = g.leaf(inp.seen.text.clone());
    let z = g.leaf(inp.seen.noise.clone());
    let x = generate(g, gp, &model.arch, t, z);
    let feat = trunk(g, dp, &model.arch, x);
    let s = critic(g, dp, feat);
    let m = g.mean_all(s);
    let adv = g.neg(m);
    terms.seen_adversarial = val(g, adv);
    parts.push(adv);
    let logits = route_logits(g, model, dp, feat, seen_reduced.as_ref(), cfg);
    let cls = cross_entropy(g, logits, &inp.seen.labels);
    terms.seen_classification = val(g, cls);
    parts.push(cls);

    let pv = inp.pivot;
    if pv.real_means.rows() != pv.semantics.rows() {
        return Err(Error::invalid(format!(
            "visual pivot: {} descriptors but {} class means",
            pv.semantics.rows(),
            pv.real_means.rows()
        )));
    }
    let pt = g.leaf(pv.repeated_text());
    let pz = g.leaf(pv.noise.clone());
    let px = generate(g, gp, &model.arch, pt, pz);
    let pivot = pivot_graph(g, px, &pv.real_means, pv.per_class);
    terms.pivot = val(g, pivot);
    parts.push(pivot);

    if cfg.u_categorization {
        let ub = inp.unseen_cat.ok_or_else(|| {
            Error::invalid("u_categorization needs hallucinated class descriptors")
        })?;
        let lu = unseen_categorization_graph(g, model, gp, dp, ub, inp.reducer, cfg)?;
        terms.unseen_categorization = Some(val(g, lu));
        parts.push(lu);
    }

    let total = parts
        .into_iter()
        .reduce(|a, b| g.add(a, b))
        .expect("at least one term");
    Ok(LossNode { total, terms })
}

/// `L_G^u`: each of the `K^u` descriptors generates one feature, scored by
/// SeGC against all `K^u` reduced descriptors.
fn unseen_categorization_graph(
    g: &mut Graph,
    model: &ModelParams,
    gp: &Bound,
    dp: &Bound,
    ub: &TextBatch,
    reducer: Option<&ParamStore>,
    cfg: &LossConfig,
) -> Result<Var> {
    check_text_batch(ub, model, "hallucinated categorization batch")?;
    let k = ub.text.rows();
    if k < 2 {
        return Err(Error::invalid(format!(
            "hallucinated categorization needs K^u >= 2, got {k}"
        )));
    }
    if model.head != ClassHead::Segc {
        return Err(Error::invalid(
            "hallucinated categorization needs the SeGC head",
        ));
    }
    let reduced = model.reduce_text_using(reducer.unwrap_or(&model.generator), &ub.text)?;
    let t = g.leaf(ub.text.clone());
    let z = g.leaf(ub.noise.clone());
    let x = generate(g, gp, &model.arch, t, z);
    let feat = trunk(g, dp, &model.arch, x);
    let logits = class_logits(g, dp, ClassHead::Segc, feat, Some(&reduced), cfg.scoring()).scores;
    let labels: Vec<usize> = (0..k).collect();
    Ok(cross_entropy(g, logits, &labels))
}

/// `L_D` on `g` over bound discriminator parameters. `div` is read only by
/// the creativity-on-discriminator term.
pub fn discriminator_loss_graph(
    g: &mut Graph,
    model: &ModelParams,
    dp: &Bound,
    div: &BoundDivergence,
    inp: &DiscInputs,
    cfg: &LossConfig,
) -> Result<LossNode<DiscTerms>> {
    let vd = model.arch.visual_dim;
    for (what, t) in [
        ("real", inp.real),
        ("fake", inp.fake),
        ("interpolates", inp.interpolates),
    ] {
        if t.cols() != vd {
            return Err(Error::dim(format!("{what} feature width"), vd, t.cols()));
        }
    }
    check_labels(inp.real_labels, inp.real.rows(), model.k_seen)?;
    check_labels(inp.fake_labels, inp.fake.rows(), model.k_seen)?;
    let seen_reduced = require_segc_reduced(model, None, inp.seen_semantics)?;
    let mut terms = DiscTerms::default();
    let mut parts = Vec::new();

    let xf = g.leaf(inp.fake.clone());
    let ff = trunk(g, dp, &model.arch, xf);
    let sf = critic(g, dp, ff);
    let fake_score = g.mean_all(sf);
    terms.fake_score = val(g, fake_score);
    parts.push(fake_score);

    let xr = g.leaf(inp.real.clone());
    let fr = trunk(g, dp, &model.arch, xr);
    let sr = critic(g, dp, fr);
    let mr = g.mean_all(sr);
    let real_score = g.neg(mr);
    terms.real_score = val(g, real_score);
    parts.push(real_score);

    let xi = g.leaf(inp.interpolates.clone());
    let fi = trunk(g, dp, &model.arch, xi);
    let si = critic(g, dp, fi);
    let pen = penalty_node(g, si, xi);
    terms.lipschitz = val(g, pen.value);
    terms.degenerate_penalty_rows = pen.degenerate_rows;
    parts.push(pen.value);

    let lr = route_logits(g, model, dp, fr, seen_reduced.as_ref(), cfg);
    let cr = cross_entropy(g, lr, inp.real_labels);
    let cr = g.scale(cr, 0.5);
    terms.real_classification = val(g, cr);
    parts.push(cr);

    let lf = route_logits(g, model, dp, ff, seen_reduced.as_ref(), cfg);
    let cf = cross_entropy(g, lf, inp.fake_labels);
    let cf = g.scale(cf, 0.5);
    terms.fake_classification = val(g, cf);
    parts.push(cf);

    let needs_hall =
        cfg.rf_hallucinated || cfg.creativity_on_discriminator || cfg.new_class_ablation;
    if needs_hall {
        let xh = inp
            .hallucinated_fake
            .ok_or_else(|| Error::invalid("hallucinated discriminator terms need G(t_h, z)"))?;
        if xh.cols() != vd || xh.rows() == 0 {
            return Err(Error::dim("hallucinated feature width", vd, xh.cols()));
        }
        let xh_v = g.leaf(xh.clone());
        let fh = trunk(g, dp, &model.arch, xh_v);
        if cfg.rf_hallucinated {
            let sh = critic(g, dp, fh);
            let mh = g.mean_all(sh);
            terms.hallucinated_rf = Some(val(g, mh));
            parts.push(mh);
        }
        if cfg.creativity_on_discriminator || cfg.new_class_ablation {
            let lh = route_logits(g, model, dp, fh, seen_reduced.as_ref(), cfg);
            if cfg.creativity_on_discriminator && cfg.entropy_term {
                let (_, e) = entropy_term(g, lh, div, cfg.lambda_creativity);
                terms.creativity = Some(val(g, e));
                parts.push(e);
            }
            if cfg.new_class_ablation {
                let ce = cross_entropy(g, lh, &vec![model.k_seen; xh.rows()]);
                let ce = g.scale(ce, 0.5);
                terms.new_class = Some(val(g, ce));
                parts.push(ce);
            }
        }
    }

    let total = parts
        .into_iter()
        .reduce(|a, b| g.add(a, b))
        .expect("at least one term");
    Ok(LossNode { total, terms })
}

// ── value + gradient entry points ───────────────────────────────────────

#[derive(Clone, Debug)]
pub struct GenStep {
    pub loss: f64,
    pub terms: GenTerms,
    pub generator_grads: ParamStore,
    pub divergence_grads: ParamStore,
}

/// `L_G` and its gradients with respect to the generator and the
/// divergence parameters, from one evaluation.
pub fn generator_step(
    model: &ModelParams,
    div: &DivergenceParams,
    inp: &GenInputs,
    cfg: &LossConfig,
) -> Result<GenStep> {
    let mut g = Graph::new();
    let gp = Bound::new(&model.generator, &mut g);
    let dp = Bound::new(&model.discriminator, &mut g);
    let bd = div.bind(&mut g);
    let node = generator_loss_graph(&mut g, model, &gp, &dp, &bd, inp, cfg)?;
    let loss = check_loss(&g, node.total)?;
    let mut wrt = gp.vars();
    wrt.extend(&bd.vars);
    let grads = crate::diffmath::collect_grads(
        &mut g,
        node.total,
        &wrt,
        &concat(&model.generator, div.store())?,
    )?;
    let (generator_grads, divergence_grads) = split(grads, model.generator.len())?;
    Ok(GenStep {
        loss,
        terms: node.terms,
        generator_grads,
        divergence_grads,
    })
}

#[derive(Clone, Debug)]
pub struct DiscStep {
    pub loss: f64,
    pub terms: DiscTerms,
    pub grads: ParamStore,
}

pub fn discriminator_step(
    model: &ModelParams,
    div: &DivergenceParams,
    inp: &DiscInputs,
    cfg: &LossConfig,
) -> Result<DiscStep> {
    let mut g = Graph::new();
    let dp = Bound::new(&model.discriminator, &mut g);
    let bd = div.bind(&mut g);
    let node = discriminator_loss_graph(&mut g, model, &dp, &bd, inp, cfg)?;
    let loss = check_loss(&g, node.total)?;
    let grads =
        crate::diffmath::collect_grads(&mut g, node.total, &dp.vars(), &model.discriminator)?;
    Ok(DiscStep {
        loss,
        terms: node.terms,
        grads,
    })
}

fn concat(a: &ParamStore, b: &ParamStore) -> Result<ParamStore> {
    let mut out = a.clone();
    for (n, t) in b.iter() {
        out.insert(n, t.clone())?;
    }
    Ok(out)
}

fn split(all: ParamStore, first: usize) -> Result<(ParamStore, ParamStore)> {
    let mut a = ParamStore::new();
    let mut b = ParamStore::new();
    for (i, (n, t)) in all.iter().enumerate() {
        if i < first { &mut a } else { &mut b }.insert(n, t.clone())?;
    }
    Ok((a, b))
}

/// `L_G^C` alone, by value.
pub fn creativity_loss(
    model: &ModelParams,
    div: &DivergenceParams,
    hallucinated: &TextBatch,
    seen_semantics: &Tensor,
    cfg: &LossConfig,
) -> Result<f64> {
    check_text_batch(hallucinated, model, "hallucinated batch")?;
    let seen_reduced = require_segc_reduced(model, None, seen_semantics)?;
    let mut g = Graph::new();
    let gp = Bound::new(&model.generator, &mut g);
    let dp = Bound::new(&model.discriminator, &mut g);
    let bd = div.bind(&mut g);
    let (node, _) = creativity_graph(
        &mut g,
        model,
        &gp,
        &dp,
        &bd,
        hallucinated,
        seen_reduced.as_ref(),
        cfg,
    );
    match node {
        Some(v) => check_loss(&g, v),
        None => Ok(0.0),
    }
}

/// `(1/K) sum_k ||mean_j G(t_k, z_kj) - mu_k||^2`, by value.
pub fn visual_pivot(model: &ModelParams, pivot: &PivotBatch) -> Result<f64> {
    if pivot.real_means.rows() != pivot.semantics.rows() {
        return Err(Error::invalid(format!(
            "visual pivot: {} descriptors but {} class means",
            pivot.semantics.rows(),
            pivot.real_means.rows()
        )));
    }
    let x = model.generate(&pivot.repeated_text(), &pivot.noise)?;
    Ok(pivot_from_generated(&x, &pivot.real_means, pivot.per_class))
}

/// Pivot value from generated rows grouped by class.
pub fn pivot_from_generated(generated: &Tensor, real_means: &Tensor, per_class: usize) -> f64 {
    let k = real_means.rows();
    let mut total = 0.0;
    for c in 0..k {
        let rows: Vec<usize> = (c * per_class..(c + 1) * per_class).collect();
        let mean = generated.select_rows(&rows).mean_rows();
        total += crate::diffmath::sq_dist(mean.data(), real_means.row_slice(c));
    }
    total / k as f64
}
