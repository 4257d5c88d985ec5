//! Zero-shot Top-1, the seen-unseen curve and its area, harmonic mean, and
//! retrieval precision.
//!
//! Classification uses a pool of generated features per class; the score of
//! `x` for class `c` is the negative distance to the nearest pool member of
//! `c`. Ties in every argmax go to the lowest class index.

use serde::{Deserialize, Serialize};

use crate::dataio::ZslDataset;
use crate::diffmath::{dot, sq_dist, Tensor};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::SeededStream;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMetric {
    #[default]
    Euclidean,
    /// Distance `1 - cos(x, p)`.
    Cosine,
}

impl PoolMetric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            PoolMetric::Euclidean => sq_dist(a, b).sqrt(),
            PoolMetric::Cosine => {
                let na = dot(a, a).sqrt();
                let nb = dot(b, b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot(a, b) / (na * nb)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolClassifier {
    /// `n_classes * per_class` rows; class `c` owns rows `c*per_class..`.
    pub pool: Tensor,
    pub per_class: usize,
    pub metric: PoolMetric,
}

impl PoolClassifier {
    pub fn from_pool(pool: Tensor, per_class: usize, metric: PoolMetric) -> Result<Self> {
        if per_class == 0 || pool.rows() == 0 || !pool.rows().is_multiple_of(per_class) {
            return Err(Error::invalid(format!(
                "pool of {} rows does not split into classes of {per_class}",
                pool.rows()
            )));
        }
        Ok(Self {
            pool,
            per_class,
            metric,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.pool.rows() / self.per_class
    }

    /// Mean pool member per class.
    pub fn centers(&self) -> Tensor {
        let mut out = Tensor::zeros(self.n_classes(), self.pool.cols());
        for c in 0..self.n_classes() {
            let rows: Vec<usize> = (c * self.per_class..(c + 1) * self.per_class).collect();
            out.row_slice_mut(c)
                .copy_from_slice(self.pool.select_rows(&rows).mean_rows().data());
        }
        out
    }

    /// Restrict to the classes `range`, in order.
    pub fn restrict(&self, classes: std::ops::Range<usize>) -> Self {
        let rows: Vec<usize> =
            (classes.start * self.per_class..classes.end * self.per_class).collect();
        Self {
            pool: self.pool.select_rows(&rows),
            per_class: self.per_class,
            metric: self.metric,
        }
    }

    /// `n x n_classes` scores.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.pool.cols() {
            return Err(Error::dim("classifier input", self.pool.cols(), x.cols()));
        }
        let k = self.n_classes();
        let mut out = Tensor::zeros(x.rows(), k);
        for (i, row) in x.iter_rows().enumerate() {
            for c in 0..k {
                let best = (c * self.per_class..(c + 1) * self.per_class)
                    .map(|p| self.metric.distance(row, self.pool.row_slice(p)))
                    .fold(f64::INFINITY, f64::min);
                out.set(i, c, -best);
            }
        }
        Ok(out)
    }
}

/// Generate `n_generate` features per descriptor row with `z ~ N(0, I)`.
pub fn build_classifier(
    model: &ModelParams,
    semantics: &Tensor,
    n_generate: usize,
    metric: PoolMetric,
    rng: &mut SeededStream,
) -> Result<PoolClassifier> {
    if n_generate == 0 {
        return Err(Error::invalid("n_generate must be at least 1"));
    }
    let idx: Vec<usize> = (0..semantics.rows())
        .flat_map(|c| std::iter::repeat_n(c, n_generate))
        .collect();
    let text = semantics.select_rows(&idx);
    let noise = Tensor::from_fn(idx.len(), model.arch.noise_dim, |_, _| rng.normal());
    let pool = model.generate(&text, &noise)?;
    PoolClassifier::from_pool(pool, n_generate, metric)
}

/// First index of the row maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn top1(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    if scores.rows() != labels.len() {
        return Err(Error::dim("top1 labels", scores.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::invalid("top1 needs a non-empty test set"));
    }
    let hits = scores
        .iter_rows()
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn harmonic_mean(seen_acc: f64, unseen_acc: f64) -> f64 {
    if seen_acc + unseen_acc == 0.0 {
        0.0
    } else {
        2.0 * seen_acc * unseen_acc / (seen_acc + unseen_acc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuPoint {
    pub bias: f64,
    pub seen_acc: f64,
    pub unseen_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuCurve {
    /// Sorted by ascending bias.
    pub points: Vec<SuPoint>,
    pub auc: f64,
}

/// Mixed seen/unseen test scores over `S ∪ U`; columns `0..k_seen` are seen
/// classes and labels index columns.
#[derive(Clone, Debug)]
pub struct MixedScores<'a> {
    pub scores: &'a Tensor,
    pub labels: &'a [usize],
    pub k_seen: usize,
}

impl MixedScores<'_> {
    /// `(A_S, A_U)` after adding `bias` to every unseen-class score.
    pub fn accuracies(&self, bias: f64) -> (f64, f64) {
        let (mut seen_hit, mut seen_n, mut unseen_hit, mut unseen_n) =
            (0usize, 0usize, 0usize, 0usize);
        let mut row_buf = vec![0.0; self.scores.cols()];
        for (row, &l) in self.scores.iter_rows().zip(self.labels) {
            for (j, (dst, &v)) in row_buf.iter_mut().zip(row).enumerate() {
                *dst = if j >= self.k_seen { v + bias } else { v };
            }
            let hit = argmax(&row_buf) == l;
            if l < self.k_seen {
                seen_n += 1;
                seen_hit += hit as usize;
            } else {
                unseen_n += 1;
                unseen_hit += hit as usize;
            }
        }
        (
            seen_hit as f64 / seen_n as f64,
            unseen_hit as f64 / unseen_n as f64,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.scores.rows() != self.labels.len() {
            return Err(Error::dim(
                "seen-unseen labels",
                self.scores.rows(),
                self.labels.len(),
            ));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.scores.cols()) {
            return Err(Error::invalid(format!(
                "label {bad} outside {} classes",
                self.scores.cols()
            )));
        }
        let has_seen = self.labels.iter().any(|&l| l < self.k_seen);
        let has_unseen = self.labels.iter().any(|&l| l >= self.k_seen);
        if !(has_seen && has_unseen) {
            return Err(Error::invalid(
                "seen-unseen curve needs both seen and unseen test examples",
            ));
        }
        Ok(())
    }
}

/// `points` uniform on `[-3 sigma, 3 sigma]` (sigma = std of all scores)
/// plus the extreme proxies `±(2 * score range + 1)`, ascending.
pub fn default_bias_grid(scores: &Tensor, points: usize) -> Vec<f64> {
    let mean = scores.mean();
    let var = scores
        .data()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / scores.len().max(1) as f64;
    let sigma = var.sqrt();
    let (lo, hi) = scores
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let extreme = 2.0 * (hi - lo).max(0.0) + 1.0;
    let mut grid = vec![-extreme];
    match points {
        0 => {}
        1 => grid.push(0.0),
        n => grid.extend((0..n).map(|i| -3.0 * sigma + 6.0 * sigma * i as f64 / (n - 1) as f64)),
    }
    grid.push(extreme);
    grid
}

/// Trace `(A_S, A_U)` over `bias_grid` and integrate. The curve is extended
/// with `(0, A_U at the largest bias)` and `(A_S at the smallest bias, 0)`,
/// sorted by `A_S` (ties by descending `A_U`) and integrated by trapezoids.
pub fn su_curve_auc(mixed: &MixedScores, bias_grid: &[f64]) -> Result<SuCurve> {
    if bias_grid.is_empty() {
        return Err(Error::invalid("bias grid is empty"));
    }
    if bias_grid.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("bias grid contains non-finite values"));
    }
    mixed.validate()?;
    let mut grid = bias_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let points: Vec<SuPoint> = grid
        .iter()
        .map(|&bias| {
            let (seen_acc, unseen_acc) = mixed.accuracies(bias);
            SuPoint {
                bias,
                seen_acc,
                unseen_acc,
            }
        })
        .collect();
    let auc = curve_area(&points);
    Ok(SuCurve { points, auc })
}

pub fn curve_area(points: &[SuPoint]) -> f64 {
    let (first, last) = match (points.first(), points.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return 0.0,
    };
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.seen_acc, p.unseen_acc)).collect();
    xy.push((0.0, last.unseen_acc));
    xy.push((first.seen_acc, 0.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub fraction: f64,
    /// Mean over classes of precision@k.
    pub precision: f64,
    /// Mean over classes of average precision truncated at k.
    pub average_precision: f64,
}

/// Rank `features` by distance to each center and score the top
/// `ceil(fraction * class count)`. `classes[c]` is the label of center `c`.
pub fn retrieval_from_centers(
    centers: &Tensor,
    classes: &[usize],
    features: &Tensor,
    labels: &[usize],
    fractions: &[f64],
) -> Result<Vec<RetrievalRow>> {
    if centers.rows() != classes.len() {
        return Err(Error::dim(
            "retrieval classes",
            centers.rows(),
            classes.len(),
        ));
    }
    if features.rows() != labels.len() {
        return Err(Error::dim(
            "retrieval labels",
            features.rows(),
            labels.len(),
        ));
    }
    if centers.cols() != features.cols() {
        return Err(Error::dim(
            "retrieval features",
            centers.cols(),
            features.cols(),
        ));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!(
            "retrieval fraction {f} outside (0, 1]"
        )));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for (c, &class) in classes.iter().enumerate() {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count == 0 {
            return Err(Error::invalid(format!(
                "class {class} has no test image to retrieve"
            )));
        }
        let dists: Vec<f64> = features
            .iter_rows()
            .map(|row| sq_dist(row, centers.row_slice(c)))
            .collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]));
        let relevant: Vec<bool> = order.iter().map(|&i| labels[i] == class).collect();
        per_class.push((count, relevant));
    }
    Ok(fractions
        .iter()
        .map(|&fraction| {
            let (mut prec, mut ap) = (0.0, 0.0);
            for (count, relevant) in &per_class {
                let k = ((fraction * *count as f64).ceil() as usize).clamp(1, relevant.len());
                let (p, a) = precision_and_ap(&relevant[..k]);
                prec += p;
                ap += a;
            }
            let n = per_class.len() as f64;
            RetrievalRow {
                fraction,
                precision: prec / n,
                average_precision: ap / n,
            }
        })
        .collect())
}

/// Precision of a ranked prefix, and AP over it normalised by its length.
pub fn precision_and_ap(relevant: &[bool]) -> (f64, f64) {
    let k = relevant.len() as f64;
    let mut hits = 0.0;
    let mut ap = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1.0;
            ap += hits / (i + 1) as f64;
        }
    }
    (hits / k, ap / k)
}

/// Centers from `n_generate` generated features per class, then retrieval
/// over `features`.
#[allow(clippy::too_many_arguments)]
pub fn retrieval_map(
    model: &ModelParams,
    semantics: &Tensor,
    classes: &[usize],
    features: &Tensor,
    labels: &[usize],
    fractions: &[f64],
    n_generate: usize,
    rng: &mut SeededStream,
) -> Result<Vec<RetrievalRow>> {
    let pool = build_classifier(model, semantics, n_generate, PoolMetric::Euclidean, rng)?;
    retrieval_from_centers(&pool.centers(), classes, features, labels, fractions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_generate: usize,
    pub metric: PoolMetric,
    pub bias_points: usize,
    pub fractions: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_generate: 60,
            metric: PoolMetric::Euclidean,
            bias_points: 201,
            fractions: DEFAULT_FRACTIONS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub top1_unseen: f64,
    pub su_curve: Vec<SuPoint>,
    pub su_auc: f64,
    /// At zero bias.
    pub harmonic_mean: f64,
    pub seen_acc: f64,
    pub unseen_acc: f64,
    /// Best over the traced curve.
    pub best_harmonic_mean: f64,
    pub retrieval: Vec<RetrievalRow>,
}

/// Pools for `[seen; unseen]` descriptors are generated once; Top-1 uses
/// the unseen pools, the curve uses all, and retrieval centers are the
/// unseen pool means.
pub fn evaluate(
    model: &ModelParams,
    ds: &ZslDataset,
    cfg: &EvalConfig,
    rng: &mut SeededStream,
) -> Result<EvalReport> {
    let ks = ds.k_seen();
    let ku = ds.k_unseen();
    let mut semantics = Tensor::zeros(ks + ku, ds.semantic_dim());
    for k in 0..ks {
        semantics
            .row_slice_mut(k)
            .copy_from_slice(ds.seen_semantics.row_slice(k));
    }
    for j in 0..ku {
        semantics
            .row_slice_mut(ks + j)
            .copy_from_slice(ds.unseen_semantics.row_slice(j));
    }
    let classifier = build_classifier(model, &semantics, cfg.n_generate, cfg.metric, rng)?;

    let unseen_local: Vec<usize> = ds
        .unseen_test_labels
        .iter()
        .map(|&l| ds.unseen_index(l).expect("validated label"))
        .collect();
    let unseen_clf = classifier.restrict(ks..ks + ku);
    let top1_unseen = top1(&unseen_clf.scores(&ds.unseen_test_features)?, &unseen_local)?;

    let seen_scores = classifier.scores(&ds.seen_test_features)?;
    let unseen_scores = classifier.scores(&ds.unseen_test_features)?;
    let mut all = seen_scores.into_data();
    all.extend(unseen_scores.into_data());
    let n = ds.seen_test_labels.len() + unseen_local.len();
    let scores = Tensor::from_vec(n, ks + ku, all)?;
    let mut labels: Vec<usize> = ds
        .seen_test_labels
        .iter()
        .map(|&l| ds.seen_index(l).expect("validated label"))
        .collect();
    labels.extend(unseen_local.iter().map(|&j| ks + j));
    let mixed = MixedScores {
        scores: &scores,
        labels: &labels,
        k_seen: ks,
    };
    let curve = su_curve_auc(&mixed, &default_bias_grid(&scores, cfg.bias_points))?;
    let (seen_acc, unseen_acc) = mixed.accuracies(0.0);
    let best_harmonic_mean = curve
        .points
        .iter()
        .map(|p| harmonic_mean(p.seen_acc, p.unseen_acc))
        .fold(0.0, f64::max);

    let retrieval = retrieval_from_centers(
        &unseen_clf.centers(),
        &ds.unseen_classes,
        &ds.unseen_test_features,
        &ds.unseen_test_labels,
        &cfg.fractions,
    )?;

    Ok(EvalReport {
        top1_unseen,
        su_curve: curve.points,
        su_auc: curve.auc,
        harmonic_mean: harmonic_mean(seen_acc, unseen_acc),
        seen_acc,
        unseen_acc,
        best_harmonic_mean,
        retrieval,
    })
}
