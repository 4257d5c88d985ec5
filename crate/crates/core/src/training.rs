//! The alternating optimisation loop, lambda cross-validation and ablation
//! suites.
//!
//! Each outer iteration draws one hallucinated batch, runs `n_d`
//! discriminator updates, then one generator update, then (when learnable)
//! one update of the divergence parameters from the same generator loss.

use serde::{Deserialize, Serialize};

use crate::dataio::ZslDataset;
use crate::diffmath::{adam_step, AdamConfig, AdamState, Tensor};
use crate::divergences::{DivergenceParams, DivergenceSpec, Family};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalConfig, EvalReport, PoolMetric};
use crate::hallucination::{sample_hallucinated_text, HallucinationPolicy};
use crate::losses::{
    discriminator_step, generator_step, lipschitz_interpolate, DiscInputs, GenInputs, LossConfig,
    PivotBatch, TextBatch,
};
use crate::model::{init_params, ArchSpec, ModelParams};
use crate::rng::SeededStream;

/// Stream for evaluation draws, kept apart from the training stream.
pub const EVAL_STREAM: u64 = 1;
/// Stream for the cross-validation class split.
pub const SPLIT_STREAM: u64 = 2;
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_d: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_grid: Vec<f64>,
    pub eval_every: usize,
    pub seed: u64,
    pub n_generate_eval: usize,
    pub eval_metric: PoolMetric,
    /// Draw real minibatches class-first instead of uniformly over examples.
    pub class_balanced: bool,
    pub loss: LossConfig,
    pub arch: ArchSpec,
    pub policy: HallucinationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_steps: 3000,
            batch_size: 64,
            n_d: 5,
            lr: 0.001,
            beta1: 0.5,
            beta2: 0.9,
            lambda_grid: vec![0.0001, 0.001, 0.01, 0.1, 1.0],
            eval_every: 100,
            seed: 0,
            n_generate_eval: 60,
            eval_metric: PoolMetric::Euclidean,
            class_balanced: false,
            loss: LossConfig::default(),
            arch: ArchSpec::default(),
            policy: HallucinationPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_generate: self.n_generate_eval,
            metric: self.eval_metric,
            ..EvalConfig::default()
        }
    }

    /// Copy the dataset's feature and descriptor widths into `arch`.
    pub fn fit_to(&mut self, ds: &ZslDataset) {
        self.arch.visual_dim = ds.visual_dim();
        self.arch.semantic_dim = ds.semantic_dim();
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_d == 0 {
            return Err(Error::invalid("n_d must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be >= 1"));
        }
        if !self.n_steps.is_multiple_of(self.eval_every) {
            return Err(Error::invalid(format!(
                "eval_every ({}) must divide n_steps ({})",
                self.eval_every, self.n_steps
            )));
        }
        if self.n_generate_eval == 0 {
            return Err(Error::invalid("n_generate_eval must be >= 1"));
        }
        if let Some(l) = self
            .lambda_grid
            .iter()
            .find(|l| !(l.is_finite() && **l >= 0.0))
        {
            return Err(Error::invalid(format!(
                "lambda_grid entry {l} must be finite and >= 0"
            )));
        }
        self.adam().validate()?;
        self.arch.validate()?;
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub loss_g: f64,
    pub loss_d: f64,
    /// Mean real score minus mean fake score on the last critic batch.
    pub wasserstein: f64,
    pub val_top1: f64,
    pub val_auc: f64,
    pub gamma: f64,
    pub beta: f64,
}

pub type TrainHistory = Vec<HistoryRecord>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub model: ModelParams,
    pub divergence: DivergenceParams,
    pub history: TrainHistory,
    pub updates: UpdateCounts,
}

/// Optimizer steps taken per parameter group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub discriminator: u64,
    pub generator: u64,
    pub divergence: u64,
}

fn narrow_model(m: &mut ModelParams) {
    m.generator = m.generator.narrowed();
    m.discriminator = m.discriminator.narrowed();
}

/// Everything derived from the dataset once per run.
struct SeenData {
    features: Tensor,
    labels: Vec<usize>,
    rows_by_class: Vec<Vec<usize>>,
    semantics: Tensor,
    means: Tensor,
}

impl SeenData {
    fn new(ds: &ZslDataset) -> Self {
        Self {
            features: ds.seen_features.clone(),
            labels: ds.seen_local_labels(),
            rows_by_class: ds.seen_rows_by_class(),
            semantics: ds.seen_semantics.clone(),
            means: ds.seen_class_means(),
        }
    }

    fn sample_rows(&self, n: usize, balanced: bool, rng: &mut SeededStream) -> Vec<usize> {
        (0..n)
            .map(|_| {
                if balanced {
                    let rows = &self.rows_by_class[rng.below(self.rows_by_class.len())];
                    rows[rng.below(rows.len())]
                } else {
                    rng.below(self.labels.len())
                }
            })
            .collect()
    }
}

fn noise(rows: usize, cols: usize, rng: &mut SeededStream) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.normal())
}

fn text_batch(
    semantics: &Tensor,
    labels: Vec<usize>,
    noise_dim: usize,
    rng: &mut SeededStream,
) -> TextBatch {
    TextBatch {
        text: semantics.select_rows(&labels),
        noise: noise(labels.len(), noise_dim, rng),
        labels,
    }
}

/// Run the training loop. The dataset's unseen classes serve as the
/// validation classes for the history metrics.
pub fn train(ds: &ZslDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    ds.validate()?;
    if cfg.arch.visual_dim != ds.visual_dim() || cfg.arch.semantic_dim != ds.semantic_dim() {
        return Err(Error::dim(
            "arch versus dataset (visual x semantic)",
            format!("{}x{}", ds.visual_dim(), ds.semantic_dim()),
            format!("{}x{}", cfg.arch.visual_dim, cfg.arch.semantic_dim),
        ));
    }
    let data = SeenData::new(ds);
    let mut rng = SeededStream::new(cfg.seed);
    let mut model = init_params(&cfg.arch, ds.k_seen(), cfg.loss.head(), &mut rng)?;
    narrow_model(&mut model);
    let mut div = DivergenceParams::new(cfg.loss.divergence)?;
    *div.store_mut() = div.store().narrowed();

    let adam = cfg.adam();
    let mut g_state = AdamState::new(&model.generator);
    let mut d_state = AdamState::new(&model.discriminator);
    let mut e_state = AdamState::new(div.store());
    let learn_e = cfg.loss.divergence.is_learnable();
    let lc = &cfg.loss;
    let (m, nd) = (cfg.batch_size, cfg.arch.noise_dim);
    let eval_cfg = cfg.eval_config();

    let mut history = Vec::new();
    for step in 1..=cfg.n_steps {
        let at = |e: Error| e.at_step(step);
        let hall_text = if lc.uses_hallucination() {
            Some(sample_hallucinated_text(
                &data.semantics,
                &cfg.policy,
                m,
                &mut rng,
            )?)
        } else {
            None
        };

        let mut last_d = None;
        for _ in 0..cfg.n_d {
            let rows = data.sample_rows(m, cfg.class_balanced, &mut rng);
            let labels: Vec<usize> = rows.iter().map(|&r| data.labels[r]).collect();
            let real = data.features.select_rows(&rows);
            let fake_batch = text_batch(&data.semantics, labels.clone(), nd, &mut rng);
            let fake = model
                .generate(&fake_batch.text, &fake_batch.noise)
                .map_err(at)?;
            let interpolates = lipschitz_interpolate(&real, &fake, &mut rng)?;
            let hall_fake = match &hall_text {
                Some(t)
                    if lc.rf_hallucinated
                        || lc.creativity_on_discriminator
                        || lc.new_class_ablation =>
                {
                    Some(model.generate(t, &noise(m, nd, &mut rng)).map_err(at)?)
                }
                _ => None,
            };
            let inp = DiscInputs {
                real: &real,
                real_labels: &labels,
                fake: &fake,
                fake_labels: &labels,
                interpolates: &interpolates,
                hallucinated_fake: hall_fake.as_ref(),
                seen_semantics: &data.semantics,
            };
            let out = discriminator_step(&model, &div, &inp, lc).map_err(at)?;
            adam_step(&mut model.discriminator, &out.grads, &mut d_state, &adam)?;
            last_d = Some(out);
        }

        let seen_rows = data.sample_rows(m, cfg.class_balanced, &mut rng);
        let seen = text_batch(
            &data.semantics,
            seen_rows.iter().map(|&r| data.labels[r]).collect(),
            nd,
            &mut rng,
        );
        let hallucinated = hall_text.map(|text| TextBatch {
            noise: noise(text.rows(), nd, &mut rng),
            labels: Vec::new(),
            text,
        });
        let pivot = PivotBatch {
            semantics: data.semantics.clone(),
            real_means: data.means.clone(),
            per_class: lc.pivot_per_class,
            noise: noise(ds.k_seen() * lc.pivot_per_class, nd, &mut rng),
        };
        let unseen_cat = if lc.u_categorization {
            let text =
                sample_hallucinated_text(&data.semantics, &cfg.policy, lc.k_unseen_cap, &mut rng)?;
            Some(TextBatch {
                noise: noise(text.rows(), nd, &mut rng),
                labels: (0..text.rows()).collect(),
                text,
            })
        } else {
            None
        };
        let inp = GenInputs {
            seen: &seen,
            hallucinated: hallucinated.as_ref(),
            pivot: &pivot,
            unseen_cat: unseen_cat.as_ref(),
            seen_semantics: &data.semantics,
            reducer: None,
        };
        let g_out = generator_step(&model, &div, &inp, lc).map_err(at)?;
        adam_step(
            &mut model.generator,
            &g_out.generator_grads,
            &mut g_state,
            &adam,
        )?;
        if learn_e {
            adam_step(
                div.store_mut(),
                &g_out.divergence_grads,
                &mut e_state,
                &adam,
            )?;
        }

        if step % cfg.eval_every == 0 {
            let d = last_d.expect("n_d >= 1");
            let report = evaluate(
                &model,
                ds,
                &eval_cfg,
                &mut SeededStream::with_stream(cfg.seed, EVAL_STREAM),
            )
            .map_err(at)?;
            let rec = HistoryRecord {
                step,
                loss_g: g_out.loss,
                loss_d: d.loss,
                wasserstein: d.terms.wasserstein(),
                val_top1: report.top1_unseen,
                val_auc: report.su_auc,
                gamma: div.gamma(),
                beta: div.beta(),
            };
            let finite = [rec.loss_g, rec.loss_d, rec.wasserstein, rec.gamma, rec.beta]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::NumericOverflow {
                    what: "training history".into(),
                    step: Some(step),
                });
            }
            history.push(rec);
        }
    }

    narrow_model(&mut model);
    *div.store_mut() = div.store().narrowed();
    Ok(TrainOutput {
        model,
        divergence: div,
        history,
        updates: UpdateCounts {
            discriminator: d_state.step(),
            generator: g_state.step(),
            divergence: e_state.step(),
        },
    })
}

/// Final evaluation of a trained run on the dataset's own test sets.
pub fn evaluate_run(out: &TrainOutput, ds: &ZslDataset, cfg: &TrainConfig) -> Result<EvalReport> {
    evaluate(
        &out.model,
        ds,
        &cfg.eval_config(),
        &mut SeededStream::with_stream(cfg.seed, EVAL_STREAM),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaCurve {
    pub lambda: f64,
    pub history: TrainHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub best_lambda: f64,
    pub best_step: usize,
    pub best_auc: f64,
    pub curves: Vec<LambdaCurve>,
}

/// The seen-class split whose held-out classes act as unseen during
/// selection.
pub fn validation_split(ds: &ZslDataset, cfg: &TrainConfig) -> Result<ZslDataset> {
    ds.class_split(
        VALIDATION_FRACTION,
        &mut SeededStream::with_stream(cfg.seed, SPLIT_STREAM),
    )
}

pub fn lambda_curve(split: &ZslDataset, cfg: &TrainConfig, lambda: f64) -> Result<LambdaCurve> {
    let mut c = cfg.clone();
    c.loss.lambda_creativity = lambda;
    Ok(LambdaCurve {
        lambda,
        history: train(split, &c)?.history,
    })
}

/// Train on a class split for each lambda and pick the (lambda, step) with
/// the highest validation seen-unseen AUC; the earliest entry wins ties.
pub fn select_lambda(ds: &ZslDataset, cfg: &TrainConfig) -> Result<Selection> {
    if cfg.lambda_grid.is_empty() {
        return Err(Error::invalid("lambda_grid is empty"));
    }
    let split = validation_split(ds, cfg)?;
    let curves = cfg
        .lambda_grid
        .iter()
        .map(|&lambda| lambda_curve(&split, cfg, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(pick_best(curves, cfg.n_steps))
}

/// `curves` must be non-empty and in grid order.
pub fn pick_best(curves: Vec<LambdaCurve>, n_steps: usize) -> Selection {
    let mut best: Option<(f64, usize, f64)> = None;
    for c in &curves {
        for r in &c.history {
            if best.is_none_or(|(_, _, auc)| r.val_auc > auc) {
                best = Some((c.lambda, r.step, r.val_auc));
            }
        }
    }
    // No eval points (zero steps): fall back to the first lambda.
    let (best_lambda, best_step, best_auc) = best.unwrap_or((curves[0].lambda, n_steps, f64::NAN));
    Selection {
        best_lambda,
        best_step,
        best_auc,
        curves,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub selection: Selection,
    /// Retrained on every seen class with the winning lambda and step count.
    pub final_run: TrainOutput,
    pub final_config: TrainConfig,
}

pub fn cross_validate(ds: &ZslDataset, cfg: &TrainConfig) -> Result<CrossValidation> {
    let selection = select_lambda(ds, cfg)?;
    let mut final_config = cfg.clone();
    final_config.loss.lambda_creativity = selection.best_lambda;
    final_config.n_steps = selection.best_step;
    let final_run = train(ds, &final_config)?;
    Ok(CrossValidation {
        selection,
        final_run,
        final_config,
    })
}

// ── ablation suites ─────────────────────────────────────────────────────

/// A labelled change to the loss configuration or hallucination policy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bundle {
    pub label: String,
    pub realism_term: Option<bool>,
    pub entropy_term: Option<bool>,
    pub new_class_ablation: Option<bool>,
    pub creativity_on_discriminator: Option<bool>,
    pub segc_active: Option<bool>,
    pub segc_normalized: Option<bool>,
    pub eta: Option<f64>,
    pub rf_hallucinated: Option<bool>,
    pub u_categorization: Option<bool>,
    pub k_unseen_cap: Option<usize>,
    pub divergence: Option<DivergenceSpec>,
    pub policy: Option<HallucinationPolicy>,
}

impl Bundle {
    pub fn labelled(label: &str) -> Self {
        Self {
            label: label.to_string(),
            ..Self::default()
        }
    }

    pub fn apply(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut c = base.clone();
        let l = &mut c.loss;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { l.$f = v; } )* };
        }
        set!(
            realism_term,
            entropy_term,
            new_class_ablation,
            creativity_on_discriminator,
            segc_active,
            segc_normalized,
            eta,
            rf_hallucinated,
            u_categorization,
            k_unseen_cap,
            divergence
        );
        if let Some(p) = &self.policy {
            c.policy = p.clone();
        }
        c.validate()
            .map_err(|e| Error::invalid(format!("bundle {:?}: {e}", self.label)))?;
        Ok(c)
    }
}

pub const SUITE_NAMES: [&str; 6] = [
    "cizsl-v1-ablation",
    "hallucination-policies",
    "segc",
    "segc-rf",
    "hallucinated-categorization",
    "segc-normalization",
];

fn learnable(family: Family, gamma: f64, beta: f64) -> DivergenceSpec {
    DivergenceSpec {
        family,
        gamma,
        beta,
        learn_gamma: true,
        learn_beta: true,
        ..DivergenceSpec::default()
    }
}

pub fn suite(name: &str) -> Result<Vec<Bundle>> {
    let b = Bundle::labelled;
    Ok(match name {
        "cizsl-v1-ablation" => vec![
            b("CIZSL SM-Entropy (ours final)"),
            Bundle {
                entropy_term: Some(false),
                new_class_ablation: Some(true),
                ..b("CIZSL SM-Entropy (replace 2nd term in L_G^C by classifying t^h as new class)")
            },
            Bundle {
                realism_term: Some(false),
                ..b("CIZSL SM-Entropy (minus 1st term in L_G^C)")
            },
            Bundle {
                entropy_term: Some(false),
                ..b("CIZSL SM-Entropy (minus 2nd term in L_G^C)")
            },
            Bundle {
                divergence: Some(DivergenceSpec::bhattacharyya()),
                ..b("CIZSL Bhattacharyya-Entropy (gamma=0.5, beta=0.5)")
            },
            Bundle {
                divergence: Some(learnable(Family::Renyi, 2.0, 1.0)),
                ..b("CIZSL Renyi-Entropy (beta -> 1)")
            },
            Bundle {
                divergence: Some(DivergenceSpec::kl()),
                ..b("CIZSL KL-Entropy (gamma -> 1, beta -> 1)")
            },
            Bundle {
                divergence: Some(learnable(Family::Tsallis, 2.0, 2.0)),
                ..b("CIZSL Tsallis-Entropy (beta = gamma)")
            },
            Bundle {
                realism_term: Some(false),
                entropy_term: Some(false),
                ..b("CIZSL SM-Entropy (minus 1st and 2nd terms in L_G^C) = GAZSL")
            },
        ],
        "hallucination-policies" => [
            ("Interpolate", "interpolate"),
            ("Negative Extrapolate", "neg_extrapolate"),
            ("Positive Extrapolate", "pos_extrapolate"),
            ("Neg&Pos Extrapolate", "neg_pos"),
            ("Interpolate & Extrapolate", "all"),
        ]
        .into_iter()
        .map(|(label, preset)| {
            Ok(Bundle {
                policy: Some(HallucinationPolicy::preset(preset)?),
                ..b(label)
            })
        })
        .collect::<Result<_>>()?,
        "segc" => vec![
            b("CIZSL-v2"),
            Bundle {
                segc_active: Some(true),
                ..b("CIZSL-v2+SeGC")
            },
        ],
        "segc-rf" => vec![
            b("CIZSL-v2"),
            Bundle {
                rf_hallucinated: Some(true),
                ..b("CIZSL-v2+R/F Loss for t^h")
            },
            Bundle {
                segc_active: Some(true),
                ..b("CIZSL-v2+SeGC")
            },
            Bundle {
                segc_active: Some(true),
                rf_hallucinated: Some(true),
                ..b("CIZSL-v2+SeGC+R/F loss")
            },
        ],
        "hallucinated-categorization" => [("K^u=100 (w/o)", false), ("K^u=100 (w/)", true)]
            .into_iter()
            .map(|(label, on)| Bundle {
                segc_active: Some(true),
                k_unseen_cap: Some(100),
                u_categorization: Some(on),
                ..b(label)
            })
            .collect(),
        "segc-normalization" => {
            let mut rows = vec![Bundle {
                segc_active: Some(true),
                ..b("Standard (SD)")
            }];
            rows.extend([1.0, 3.0, 5.0, 10.0, 20.0].map(|eta| Bundle {
                segc_active: Some(true),
                segc_normalized: Some(true),
                eta: Some(eta),
                ..b(&format!("SD+Norm(eta={eta})"))
            }));
            rows
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITE_NAMES.join(", ")
            )))
        }
    })
}

/// Headline numbers of one evaluated run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub top1_unseen: f64,
    pub su_auc: f64,
    pub harmonic_mean: f64,
    pub best_harmonic_mean: f64,
    pub map_25: f64,
    pub map_50: f64,
    pub map_100: f64,
}

pub const METRIC_NAMES: [&str; 7] = [
    "top1_unseen",
    "su_auc",
    "harmonic_mean",
    "best_harmonic_mean",
    "map_25",
    "map_50",
    "map_100",
];

impl RunMetrics {
    pub fn from_report(r: &EvalReport) -> Self {
        let map_at = |f: f64| {
            r.retrieval
                .iter()
                .find(|row| row.fraction == f)
                .map_or(f64::NAN, |row| row.precision)
        };
        Self {
            top1_unseen: r.top1_unseen,
            su_auc: r.su_auc,
            harmonic_mean: r.harmonic_mean,
            best_harmonic_mean: r.best_harmonic_mean,
            map_25: map_at(0.25),
            map_50: map_at(0.5),
            map_100: map_at(1.0),
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.top1_unseen,
            self.su_auc,
            self.harmonic_mean,
            self.best_harmonic_mean,
            self.map_25,
            self.map_50,
            self.map_100,
        ]
    }
}

/// Train and evaluate one bundle under one seed.
pub fn run_bundle(
    ds: &ZslDataset,
    base: &TrainConfig,
    bundle: &Bundle,
    seed: u64,
) -> Result<RunMetrics> {
    let mut cfg = bundle.apply(base)?;
    cfg.seed = seed;
    let out = train(ds, &cfg)?;
    Ok(RunMetrics::from_report(&evaluate_run(&out, ds, &cfg)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub runs: Vec<RunMetrics>,
    pub mean: [f64; 7],
    /// Sample standard deviation; zero for a single run.
    pub std: [f64; 7],
}

pub fn aggregate(label: &str, runs: Vec<RunMetrics>) -> AblationRow {
    let n = runs.len() as f64;
    let mut mean = [0.0; 7];
    let mut std = [0.0; 7];
    for r in &runs {
        for (m, v) in mean.iter_mut().zip(r.values()) {
            *m += v / n;
        }
    }
    if runs.len() > 1 {
        for r in &runs {
            for ((s, v), m) in std.iter_mut().zip(r.values()).zip(mean) {
                *s += (v - m).powi(2) / (n - 1.0);
            }
        }
        std = std.map(f64::sqrt);
    }
    AblationRow {
        label: label.to_string(),
        runs,
        mean,
        std,
    }
}

/// Every bundle under every seed, sequentially.
pub fn ablate(
    ds: &ZslDataset,
    base: &TrainConfig,
    bundles: &[Bundle],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    for b in bundles {
        b.apply(base)?;
    }
    bundles
        .iter()
        .map(|b| {
            let runs = seeds
                .iter()
                .map(|&s| run_bundle(ds, base, b, s))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate(&b.label, runs))
        })
        .collect()
}
