//! Conditional generator, two-headed discriminator and the semantic-guided
//! categorizer (SeGC).
//!
//! Generator: `t -> leaky(t W_r + b_r)` (text reduction), then hidden layers
//! over `[t_r, z]`, then an affine map to `visual_dim`. The first hidden
//! layer keeps separate weights for the text and noise parts, which equals
//! an affine layer over the concatenation.
//!
//! Discriminator: a leaky trunk producing `x_l`, an unbounded real/fake
//! score `x_l w + b`, and one classification route: seen-class logits, or
//! SeGC scores `S = (x_l W) T_r^T` against reduced descriptors `T_r`.

use serde::{Deserialize, Serialize};

use crate::diffmath::{Bound, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::SeededStream;

pub const LEAKY_SLOPE: f64 = 0.2;
/// Projected rows with a squared norm below this score 0 under normalization.
pub const SEGC_DEGENERATE_SQ: f64 = 1e-24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchPreset {
    #[default]
    Base,
    DoubleNet,
    DoubleNetReduced,
}

impl ArchPreset {
    pub fn tag(self) -> &'static str {
        match self {
            ArchPreset::Base => "base",
            ArchPreset::DoubleNet => "double_net",
            ArchPreset::DoubleNetReduced => "double_net_reduced",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    pub preset: ArchPreset,
    pub semantic_dim: usize,
    /// `None` means `ceil(semantic_dim / 2)`.
    pub reduced_dim: Option<usize>,
    pub noise_dim: usize,
    pub visual_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            preset: ArchPreset::Base,
            semantic_dim: 16,
            reduced_dim: None,
            noise_dim: 16,
            visual_dim: 32,
            hidden_dim: 64,
        }
    }
}

impl ArchSpec {
    pub fn reduced(&self) -> usize {
        self.reduced_dim.unwrap_or(self.semantic_dim.div_ceil(2))
    }

    pub fn hidden_layers(&self) -> usize {
        match self.preset {
            ArchPreset::Base => 1,
            ArchPreset::DoubleNet | ArchPreset::DoubleNetReduced => 2,
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self.preset {
            ArchPreset::DoubleNetReduced => (self.hidden_dim / 2).max(1),
            _ => self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("semantic_dim", self.semantic_dim),
            ("noise_dim", self.noise_dim),
            ("visual_dim", self.visual_dim),
            ("hidden_dim", self.hidden_dim),
            ("reduced_dim", self.reduced()),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("arch.{name} must be positive")));
            }
        }
        if self.reduced() > self.semantic_dim {
            return Err(Error::invalid(format!(
                "arch.reduced_dim {} exceeds semantic_dim {}",
                self.reduced(),
                self.semantic_dim
            )));
        }
        Ok(())
    }
}

/// The discriminator's classification route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassHead {
    /// `K^s` seen-class logits.
    Seen,
    /// `K^s + 1` logits; the extra one is the "new class".
    SeenPlusNew,
    /// SeGC projection to the reduced semantic space.
    Segc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegcScoring {
    pub normalized: bool,
    pub eta: f64,
}

impl Default for SegcScoring {
    fn default() -> Self {
        Self {
            normalized: false,
            eta: 1.0,
        }
    }
}

/// Every learned tensor of a run plus the structure needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: ArchSpec,
    pub head: ClassHead,
    pub k_seen: usize,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
}

fn gaussian_weight(rows: usize, cols: usize, fan_in: usize, rng: &mut SeededStream) -> Tensor {
    let std = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| std * rng.normal())
}

fn hidden_name(prefix: &str, layer: usize, part: &str) -> String {
    format!("{prefix}.h{layer}.{part}")
}

/// Weights `N(0, 1/fan_in)`, biases zero. The generator is drawn before the
/// discriminator.
pub fn init_params(
    arch: &ArchSpec,
    k_seen: usize,
    head: ClassHead,
    rng: &mut SeededStream,
) -> Result<ModelParams> {
    arch.validate()?;
    if k_seen < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 seen classes, got {k_seen}"
        )));
    }
    let (sd, rd, nd, vd, hd) = (
        arch.semantic_dim,
        arch.reduced(),
        arch.noise_dim,
        arch.visual_dim,
        arch.hidden_width(),
    );

    let mut gen = ParamStore::new();
    gen.insert("g.reduce.w", gaussian_weight(sd, rd, sd, rng))?;
    gen.insert("g.reduce.b", Tensor::zeros(1, rd))?;
    gen.insert("g.h0.w_text", gaussian_weight(rd, hd, rd + nd, rng))?;
    gen.insert("g.h0.w_noise", gaussian_weight(nd, hd, rd + nd, rng))?;
    gen.insert("g.h0.b", Tensor::zeros(1, hd))?;
    for l in 1..arch.hidden_layers() {
        gen.insert(hidden_name("g", l, "w"), gaussian_weight(hd, hd, hd, rng))?;
        gen.insert(hidden_name("g", l, "b"), Tensor::zeros(1, hd))?;
    }
    gen.insert("g.out.w", gaussian_weight(hd, vd, hd, rng))?;
    gen.insert("g.out.b", Tensor::zeros(1, vd))?;

    let mut disc = ParamStore::new();
    let mut fan = vd;
    for l in 0..arch.hidden_layers() {
        disc.insert(hidden_name("d", l, "w"), gaussian_weight(fan, hd, fan, rng))?;
        disc.insert(hidden_name("d", l, "b"), Tensor::zeros(1, hd))?;
        fan = hd;
    }
    disc.insert("d.rf.w", gaussian_weight(hd, 1, hd, rng))?;
    disc.insert("d.rf.b", Tensor::zeros(1, 1))?;
    match head {
        ClassHead::Seen | ClassHead::SeenPlusNew => {
            let k = if head == ClassHead::Seen {
                k_seen
            } else {
                k_seen + 1
            };
            disc.insert("d.cls.w", gaussian_weight(hd, k, hd, rng))?;
            disc.insert("d.cls.b", Tensor::zeros(1, k))?;
        }
        ClassHead::Segc => {
            disc.insert("d.segc.w", gaussian_weight(hd, rd, hd, rng))?;
        }
    }

    Ok(ModelParams {
        arch: arch.clone(),
        head,
        k_seen,
        generator: gen,
        discriminator: disc,
    })
}

impl ModelParams {
    pub fn num_scalars(&self) -> usize {
        self.generator.num_scalars() + self.discriminator.num_scalars()
    }

    fn check_width(&self, what: &str, t: &Tensor, expected: usize) -> Result<()> {
        if t.cols() != expected {
            return Err(Error::dim(what, expected, t.cols()));
        }
        Ok(())
    }

    /// `G(t, z)` evaluated on a fresh graph.
    pub fn generate(&self, t: &Tensor, z: &Tensor) -> Result<Tensor> {
        self.check_width("generator text width", t, self.arch.semantic_dim)?;
        self.check_width("generator noise width", z, self.arch.noise_dim)?;
        if t.rows() != z.rows() {
            return Err(Error::dim("generator noise rows", t.rows(), z.rows()));
        }
        let mut g = Graph::new();
        let p = Bound::new(&self.generator, &mut g);
        let tv = g.leaf(t.clone());
        let zv = g.leaf(z.clone());
        let out = generate(&mut g, &p, &self.arch, tv, zv);
        Ok(g.value(out).clone())
    }

    /// Text-reduction layer output for each descriptor row.
    pub fn reduce_text(&self, t: &Tensor) -> Result<Tensor> {
        self.reduce_text_using(&self.generator, t)
    }

    /// Text reduction computed with the reduction layer of `generator`, which
    /// must share this model's layout.
    pub fn reduce_text_using(&self, generator: &ParamStore, t: &Tensor) -> Result<Tensor> {
        self.check_width("descriptor width", t, self.arch.semantic_dim)?;
        let mut g = Graph::new();
        let p = Bound::new(generator, &mut g);
        let tv = g.leaf(t.clone());
        let out = reduce_text(&mut g, &p, tv);
        Ok(g.value(out).clone())
    }

    /// Critic scores, trunk features and, for the classification route,
    /// class probabilities. `seen_semantics` is only read by SeGC.
    pub fn discriminate(
        &self,
        x: &Tensor,
        seen_semantics: &Tensor,
        scoring: SegcScoring,
    ) -> Result<Discrimination> {
        self.check_width("discriminator input width", x, self.arch.visual_dim)?;
        let mut g = Graph::new();
        let p = Bound::new(&self.discriminator, &mut g);
        let xv = g.leaf(x.clone());
        let feat = trunk(&mut g, &p, &self.arch, xv);
        let score = critic(&mut g, &p, feat);
        let reduced = match self.head {
            ClassHead::Segc => {
                self.check_width(
                    "seen descriptor width",
                    seen_semantics,
                    self.arch.semantic_dim,
                )?;
                Some(self.reduce_text(seen_semantics)?)
            }
            _ => None,
        };
        let logits = class_logits(&mut g, &p, self.head, feat, reduced.as_ref(), scoring);
        let probs = g.softmax_rows(logits.scores);
        Ok(Discrimination {
            scores: g.value(score).data().to_vec(),
            class_probs: g.value(probs).clone(),
            features: g.value(feat).clone(),
            degenerate_rows: logits.degenerate_rows,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Discrimination {
    pub scores: Vec<f64>,
    pub class_probs: Tensor,
    pub features: Tensor,
    pub degenerate_rows: usize,
}

// ── graph forward passes ────────────────────────────────────────────────

pub fn reduce_text(g: &mut Graph, p: &Bound, t: Var) -> Var {
    let h = g.affine(t, p.get("g.reduce.w"), p.get("g.reduce.b"));
    g.leaky_relu(h, LEAKY_SLOPE)
}

pub fn generate(g: &mut Graph, p: &Bound, arch: &ArchSpec, t: Var, z: Var) -> Var {
    let tr = reduce_text(g, p, t);
    let a = g.matmul(tr, p.get("g.h0.w_text"));
    let b = g.matmul(z, p.get("g.h0.w_noise"));
    let h = g.add(a, b);
    let h = g.add_row(h, p.get("g.h0.b"));
    let mut h = g.leaky_relu(h, LEAKY_SLOPE);
    for l in 1..arch.hidden_layers() {
        let w = p.get(&hidden_name("g", l, "w"));
        let bias = p.get(&hidden_name("g", l, "b"));
        let a = g.affine(h, w, bias);
        h = g.leaky_relu(a, LEAKY_SLOPE);
    }
    g.affine(h, p.get("g.out.w"), p.get("g.out.b"))
}

/// Trunk features `x_l`.
pub fn trunk(g: &mut Graph, p: &Bound, arch: &ArchSpec, x: Var) -> Var {
    let mut h = x;
    for l in 0..arch.hidden_layers() {
        let w = p.get(&hidden_name("d", l, "w"));
        let b = p.get(&hidden_name("d", l, "b"));
        let a = g.affine(h, w, b);
        h = g.leaky_relu(a, LEAKY_SLOPE);
    }
    h
}

/// Real/fake critic score, `n x 1`.
pub fn critic(g: &mut Graph, p: &Bound, feat: Var) -> Var {
    g.affine(feat, p.get("d.rf.w"), p.get("d.rf.b"))
}

pub struct Logits {
    pub scores: Var,
    pub degenerate_rows: usize,
}

/// Classification scores before the softmax. SeGC requires `reduced`, the
/// reduced descriptors of the candidate classes, held constant.
pub fn class_logits(
    g: &mut Graph,
    p: &Bound,
    head: ClassHead,
    feat: Var,
    reduced: Option<&Tensor>,
    scoring: SegcScoring,
) -> Logits {
    match head {
        ClassHead::Seen | ClassHead::SeenPlusNew => Logits {
            scores: g.affine(feat, p.get("d.cls.w"), p.get("d.cls.b")),
            degenerate_rows: 0,
        },
        ClassHead::Segc => {
            let reduced = reduced.expect("SeGC scoring needs reduced descriptors");
            let proj = g.matmul(feat, p.get("d.segc.w"));
            segc_graph(g, proj, reduced, scoring)
        }
    }
}

/// SeGC scores on the graph from projected features `x_l W` (`n x r`) and
/// constant class descriptors (`K x r`).
pub fn segc_graph(g: &mut Graph, proj: Var, classes: &Tensor, scoring: SegcScoring) -> Logits {
    if !scoring.normalized {
        let tt = g.leaf(classes.transpose());
        return Logits {
            scores: g.matmul(proj, tt),
            degenerate_rows: 0,
        };
    }
    let (n, _) = g.shape(proj);
    let sq = g.mul(proj, proj);
    let sq = g.sum_cols(sq);
    let mask: Vec<f64> = g
        .value(sq)
        .data()
        .iter()
        .map(|&v| if v < SEGC_DEGENERATE_SQ { 0.0 } else { 1.0 })
        .collect();
    let degenerate_rows = mask.iter().filter(|&&m| m == 0.0).count();
    let sq = g.clamp(sq, SEGC_DEGENERATE_SQ, f64::INFINITY);
    let inv = g.powf(sq, -0.5);
    let unit = g.mul_col(proj, inv);
    let r = g.shape(proj).1;
    let unit = g.mul_const(unit, Tensor::from_fn(n, r, |i, _| mask[i]));
    let tn = normalize_rows(classes);
    let tt = g.leaf(tn.transpose());
    let cos = g.matmul(unit, tt);
    Logits {
        scores: g.scale(cos, scoring.eta * scoring.eta),
        degenerate_rows,
    }
}

/// Unit-norm rows; rows with a vanishing norm become zero.
pub fn normalize_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..t.rows() {
        let row = out.row_slice_mut(r);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let scale = if sq < SEGC_DEGENERATE_SQ {
            0.0
        } else {
            sq.sqrt().recip()
        };
        row.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegcScores {
    pub scores: Tensor,
    /// Pairs scored 0 because one side had zero norm.
    pub degenerate_pairs: usize,
}

/// `S[i][c] = <x_l[i] W, t_c>`, or `eta^2 cos(x_l[i] W, t_c)` when normalized.
pub fn segc_score(
    w: &Tensor,
    x_l: &Tensor,
    classes: &Tensor,
    scoring: SegcScoring,
) -> Result<SegcScores> {
    if x_l.cols() != w.rows() {
        return Err(Error::dim("SeGC feature width", w.rows(), x_l.cols()));
    }
    if classes.cols() != w.cols() {
        return Err(Error::dim(
            "SeGC descriptor width",
            w.cols(),
            classes.cols(),
        ));
    }
    if scoring.normalized && !(scoring.eta > 0.0) {
        return Err(Error::invalid(format!(
            "eta must be > 0, got {}",
            scoring.eta
        )));
    }
    let proj = x_l.matmul(w)?;
    let mut scores = Tensor::zeros(x_l.rows(), classes.rows());
    let mut degenerate_pairs = 0;
    for i in 0..proj.rows() {
        let a = proj.row_slice(i);
        let na = a.iter().map(|v| v * v).sum::<f64>();
        for c in 0..classes.rows() {
            let t = classes.row_slice(c);
            let dot: f64 = a.iter().zip(t).map(|(x, y)| x * y).sum();
            let s = if scoring.normalized {
                let nt = t.iter().map(|v| v * v).sum::<f64>();
                if na < SEGC_DEGENERATE_SQ || nt < SEGC_DEGENERATE_SQ {
                    degenerate_pairs += 1;
                    0.0
                } else {
                    scoring.eta * scoring.eta * dot / (na.sqrt() * nt.sqrt())
                }
            } else {
                dot
            };
            scores.set(i, c, s);
        }
    }
    Ok(SegcScores {
        scores,
        degenerate_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch(preset: ArchPreset) -> ArchSpec {
        ArchSpec {
            preset,
            semantic_dim: 6,
            reduced_dim: None,
            noise_dim: 4,
            visual_dim: 8,
            hidden_dim: 10,
        }
    }

    fn random(rows: usize, cols: usize, scale: f64, rng: &mut SeededStream) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| rng.range(-scale, scale))
    }

    #[test]
    fn generate_shape_and_determinism() {
        let arch = small_arch(ArchPreset::Base);
        let mut rng = SeededStream::new(1);
        let m = init_params(&arch, 3, ClassHead::Seen, &mut rng).unwrap();
        let row_t: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let row_z = [0.3, -0.2, 0.1, 0.5];
        let t = Tensor::from_rows(&vec![row_t; 4]).unwrap();
        let z = Tensor::from_rows(&[row_z; 4]).unwrap();
        let out = m.generate(&t, &z).unwrap();
        assert_eq!(out.shape(), (4, 8));
        for r in 1..4 {
            assert_eq!(out.row_slice(r), out.row_slice(0));
        }
        assert!(m.generate(&Tensor::zeros(4, 5), &z).is_err());
        assert!(m.generate(&t, &Tensor::zeros(3, 4)).is_err());
    }

    #[test]
    fn same_seed_same_params_and_doublenet_is_larger() {
        let a = init_params(
            &small_arch(ArchPreset::Base),
            3,
            ClassHead::Seen,
            &mut SeededStream::new(5),
        )
        .unwrap();
        let b = init_params(
            &small_arch(ArchPreset::Base),
            3,
            ClassHead::Seen,
            &mut SeededStream::new(5),
        )
        .unwrap();
        assert_eq!(a, b);
        let d = init_params(
            &small_arch(ArchPreset::DoubleNet),
            3,
            ClassHead::Seen,
            &mut SeededStream::new(5),
        )
        .unwrap();
        assert!(d.num_scalars() > a.num_scalars());
        let r = init_params(
            &small_arch(ArchPreset::DoubleNetReduced),
            3,
            ClassHead::Seen,
            &mut SeededStream::new(5),
        )
        .unwrap();
        assert!(r.num_scalars() < d.num_scalars());
    }

    #[test]
    fn discriminator_outputs() {
        let arch = small_arch(ArchPreset::DoubleNet);
        let mut rng = SeededStream::new(2);
        let mut m = init_params(&arch, 4, ClassHead::Seen, &mut rng).unwrap();
        let x = random(5, 8, 10.0, &mut rng);
        let sem = random(4, 6, 1.0, &mut rng);
        let out = m.discriminate(&x, &sem, SegcScoring::default()).unwrap();
        assert!(out.scores.iter().all(|v| v.is_finite()));
        for row in out.class_probs.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        // zeroed classification layer gives a uniform softmax
        *m.discriminator.get_mut("d.cls.w").unwrap() = Tensor::zeros(10, 4);
        let out0 = m.discriminate(&x, &sem, SegcScoring::default()).unwrap();
        for v in out0.class_probs.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }

        // shifting the critic bias shifts every score by the same amount
        m.discriminator.get_mut("d.rf.b").unwrap().set(0, 0, 1.5);
        let shifted = m.discriminate(&x, &sem, SegcScoring::default()).unwrap();
        for (a, b) in out0.scores.iter().zip(&shifted.scores) {
            assert!((b - a - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn init_forward_is_finite_for_large_inputs() {
        let mut rng = SeededStream::new(8);
        for preset in [
            ArchPreset::Base,
            ArchPreset::DoubleNet,
            ArchPreset::DoubleNetReduced,
        ] {
            for head in [ClassHead::Seen, ClassHead::SeenPlusNew, ClassHead::Segc] {
                let m = init_params(&small_arch(preset), 3, head, &mut rng).unwrap();
                let t = random(6, 6, 10.0, &mut rng);
                let z = random(6, 4, 10.0, &mut rng);
                let x = m.generate(&t, &z).unwrap();
                assert!(x.is_finite());
                let d = m
                    .discriminate(
                        &random(6, 8, 10.0, &mut rng),
                        &random(3, 6, 10.0, &mut rng),
                        SegcScoring::default(),
                    )
                    .unwrap();
                assert!(d.class_probs.is_finite());
                let width = if head == ClassHead::SeenPlusNew { 4 } else { 3 };
                assert_eq!(d.class_probs.cols(), width);
            }
        }
    }

    #[test]
    fn segc_examples() {
        let eye = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let plain = SegcScoring::default();
        let s = segc_score(
            &eye,
            &Tensor::row(&[1.0, 0.0]),
            &Tensor::row(&[0.0, 1.0]),
            plain,
        )
        .unwrap();
        assert_eq!(s.scores.item(), 0.0);
        let s = segc_score(
            &eye,
            &Tensor::row(&[1.0, 0.0]),
            &Tensor::row(&[1.0, 0.0]),
            plain,
        )
        .unwrap();
        assert_eq!(s.scores.item(), 1.0);
        let norm = SegcScoring {
            normalized: true,
            eta: 3.0,
        };
        let s = segc_score(
            &eye,
            &Tensor::row(&[2.0, 0.0]),
            &Tensor::row(&[0.5, 0.0]),
            norm,
        )
        .unwrap();
        assert!((s.scores.item() - 9.0).abs() < 1e-12);
        let s = segc_score(
            &eye,
            &Tensor::row(&[0.0, 0.0]),
            &Tensor::row(&[0.5, 0.0]),
            norm,
        )
        .unwrap();
        assert_eq!((s.scores.item(), s.degenerate_pairs), (0.0, 1));
    }

    #[test]
    fn segc_graph_matches_direct_scores() {
        let mut rng = SeededStream::new(12);
        let w = random(5, 3, 1.0, &mut rng);
        let mut x = random(4, 5, 1.0, &mut rng);
        x.row_slice_mut(2).iter_mut().for_each(|v| *v = 0.0);
        let t = random(6, 3, 1.0, &mut rng);
        for scoring in [
            SegcScoring::default(),
            SegcScoring {
                normalized: true,
                eta: 2.0,
            },
        ] {
            let direct = segc_score(&w, &x, &t, scoring).unwrap();
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let proj = g.matmul(xv, wv);
            let l = segc_graph(&mut g, proj, &t, scoring);
            let got = g.value(l.scores);
            for (a, b) in got.data().iter().zip(direct.scores.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            if scoring.normalized {
                assert_eq!(l.degenerate_rows, 1);
            }
        }
    }

    #[test]
    fn invalid_arch_rejected() {
        let mut a = small_arch(ArchPreset::Base);
        a.reduced_dim = Some(7);
        assert!(a.validate().is_err());
        a.reduced_dim = None;
        a.hidden_dim = 0;
        assert!(init_params(&a, 3, ClassHead::Seen, &mut SeededStream::new(0)).is_err());
    }
}
