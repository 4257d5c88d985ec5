//! Random small loss instances and central finite-difference checks.

use cizsl_core::diffmath::{check_loss, Bound, Graph, ParamStore, Tensor};
use cizsl_core::divergences::{
    entropy_loss, entropy_loss_grad, DivergenceParams, DivergenceSpec, Family,
};
use cizsl_core::losses::{
    creativity_loss, discriminator_loss_graph, discriminator_step, generator_loss_graph,
    generator_step, lipschitz_interpolate, DiscInputs, GenInputs, LossConfig, PivotBatch,
    TextBatch,
};
use cizsl_core::model::{init_params, ArchSpec, ModelParams};
use cizsl_core::rng::SeededStream;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so coordinates whose true
/// gradient is zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-4;
/// Coordinates probed per parameter tensor.
pub const COORDS_PER_TENSOR: usize = 6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn gaussian(rows: usize, cols: usize, rng: &mut SeededStream) -> Tensor {
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
        noise: gaussian(labels.len(), noise_dim, rng),
        labels,
    }
}

/// A random divergence with both parameters learnable and away from the
/// singular value 1.
pub fn random_divergence(rng: &mut SeededStream) -> DivergenceParams {
    let pick = |rng: &mut SeededStream| {
        if rng.uniform() < 0.5 {
            rng.range(0.2, 0.8)
        } else {
            rng.range(1.3, 3.0)
        }
    };
    let gamma = pick(rng);
    let beta = if rng.uniform() < 0.2 {
        rng.range(-1.0, 0.7)
    } else {
        pick(rng)
    };
    let spec = DivergenceSpec {
        family: Family::SharmaMittal,
        gamma,
        beta,
        learn_gamma: true,
        learn_beta: true,
        ..DivergenceSpec::default()
    };
    DivergenceParams::new(spec).expect("valid random divergence")
}

/// Everything one loss evaluation reads, drawn at random with widths at
/// most 16 and batches at most 8.
pub struct Instance {
    pub model: ModelParams,
    /// The initial generator; its reduction layer stays fixed while the
    /// generator is perturbed, matching the constant SeGC descriptors.
    pub reducer: ParamStore,
    pub div: DivergenceParams,
    pub cfg: LossConfig,
    pub seen_semantics: Tensor,
    pub seen: TextBatch,
    pub hallucinated: TextBatch,
    pub pivot: PivotBatch,
    pub unseen_cat: TextBatch,
    pub real: Tensor,
    pub real_labels: Vec<usize>,
    pub fake: Tensor,
    pub interpolates: Tensor,
    pub hallucinated_fake: Tensor,
}

impl Instance {
    pub fn random(cfg: LossConfig, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        let semantic_dim = 2 + rng.below(7);
        let arch = ArchSpec {
            semantic_dim,
            reduced_dim: None,
            noise_dim: 2 + rng.below(6),
            visual_dim: 2 + rng.below(9),
            hidden_dim: 4 + rng.below(13),
            ..ArchSpec::default()
        };
        let k_seen = 2 + rng.below(4);
        let batch = 2 + rng.below(7);
        let model = init_params(&arch, k_seen, cfg.head(), &mut rng).expect("init");
        let div = random_divergence(&mut rng);
        let seen_semantics = gaussian(k_seen, semantic_dim, &mut rng);
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(k_seen)).collect();
        let seen = text_batch(&seen_semantics, labels.clone(), arch.noise_dim, &mut rng);
        let hall_text = Tensor::from_fn(batch, semantic_dim, |_, _| 0.0);
        let mut hallucinated = TextBatch {
            text: hall_text,
            noise: gaussian(batch, arch.noise_dim, &mut rng),
            labels: Vec::new(),
        };
        for i in 0..batch {
            let (a, b) = rng.distinct_pair(k_seen);
            let alpha = rng.range(-0.5, 1.5);
            for c in 0..semantic_dim {
                let v = alpha * seen_semantics.get(a, c) + (1.0 - alpha) * seen_semantics.get(b, c);
                hallucinated.text.set(i, c, v);
            }
        }
        let per_class = 1 + rng.below(3);
        let pivot = PivotBatch {
            semantics: seen_semantics.clone(),
            real_means: gaussian(k_seen, arch.visual_dim, &mut rng),
            per_class,
            noise: gaussian(k_seen * per_class, arch.noise_dim, &mut rng),
        };
        let k_unseen = 2 + rng.below(5);
        let unseen_cat = TextBatch {
            text: gaussian(k_unseen, semantic_dim, &mut rng),
            noise: gaussian(k_unseen, arch.noise_dim, &mut rng),
            labels: (0..k_unseen).collect(),
        };
        let real = gaussian(batch, arch.visual_dim, &mut rng);
        let fake = gaussian(batch, arch.visual_dim, &mut rng);
        let interpolates = lipschitz_interpolate(&real, &fake, &mut rng).expect("interpolate");
        let hallucinated_fake = gaussian(batch, arch.visual_dim, &mut rng);
        Self {
            reducer: model.generator.clone(),
            model,
            div,
            cfg,
            seen_semantics,
            seen,
            hallucinated,
            pivot,
            unseen_cat,
            real,
            real_labels: labels,
            fake,
            interpolates,
            hallucinated_fake,
        }
    }

    pub fn gen_inputs(&self) -> GenInputs<'_> {
        GenInputs {
            seen: &self.seen,
            hallucinated: Some(&self.hallucinated),
            pivot: &self.pivot,
            unseen_cat: Some(&self.unseen_cat),
            seen_semantics: &self.seen_semantics,
            reducer: Some(&self.reducer),
        }
    }

    pub fn disc_inputs(&self) -> DiscInputs<'_> {
        DiscInputs {
            real: &self.real,
            real_labels: &self.real_labels,
            fake: &self.fake,
            fake_labels: &self.real_labels,
            interpolates: &self.interpolates,
            hallucinated_fake: Some(&self.hallucinated_fake),
            seen_semantics: &self.seen_semantics,
        }
    }

    /// `L_G` by value only.
    pub fn generator_value(
        &self,
        model: &ModelParams,
        div: &DivergenceParams,
        cfg: &LossConfig,
    ) -> f64 {
        let mut g = Graph::new();
        let gp = Bound::new(&model.generator, &mut g);
        let dp = Bound::new(&model.discriminator, &mut g);
        let bd = div.bind(&mut g);
        let node = generator_loss_graph(&mut g, model, &gp, &dp, &bd, &self.gen_inputs(), cfg)
            .expect("L_G");
        check_loss(&g, node.total).expect("finite L_G")
    }

    /// The only term of `L_G` that reads the divergence parameters. Divergence
    /// gradients are differenced on it alone, since the full loss can be
    /// orders of magnitude larger than its slope in those parameters.
    pub fn entropy_value(&self, div: &DivergenceParams) -> f64 {
        let cfg = LossConfig {
            realism_term: false,
            new_class_ablation: false,
            ..self.cfg.clone()
        };
        creativity_loss(
            &self.model,
            div,
            &self.hallucinated,
            &self.seen_semantics,
            &cfg,
        )
        .expect("entropy term")
    }

    /// `L_D` by value only.
    pub fn discriminator_value(&self, model: &ModelParams) -> f64 {
        let mut g = Graph::new();
        let dp = Bound::new(&model.discriminator, &mut g);
        let bd = self.div.bind(&mut g);
        let node =
            discriminator_loss_graph(&mut g, model, &dp, &bd, &self.disc_inputs(), &self.cfg)
                .expect("L_D");
        check_loss(&g, node.total).expect("finite L_D")
    }
}

/// Outcome of one or more finite-difference comparisons.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FdReport {
    pub worst: f64,
    pub probes: usize,
    /// Probes dropped because a kink sat inside the difference stencil.
    pub skipped: usize,
}

impl FdReport {
    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            worst: self.worst.max(other.worst),
            probes: self.probes + other.probes,
            skipped: self.skipped + other.skipped,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.probes += 1;
        self.worst = self.worst.max(rel_err(analytic, numeric));
    }
}

/// Central difference of `f` at `x` with step `h`.
fn central(f: &mut impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central difference at [`FD_STEP`], or `None` when it differs from the one
/// at a tenth of the step by more than half of `tol`, which signals a kink of
/// the piecewise-smooth loss inside the stencil. The decision never reads the
/// gradient under test.
pub fn smooth_difference(mut f: impl FnMut(f64) -> f64, x: f64, tol: f64) -> Option<f64> {
    let coarse = central(&mut f, x, FD_STEP);
    let fine = central(&mut f, x, FD_STEP / 10.0);
    (rel_err(coarse, fine) <= 0.5 * tol).then_some(coarse)
}

/// Compare `grads` with central differences of `f` over up to
/// [`COORDS_PER_TENSOR`] coordinates of each tensor in `store`.
pub fn fd_compare<F>(
    store: &ParamStore,
    grads: &ParamStore,
    tol: f64,
    rng: &mut SeededStream,
    mut f: F,
) -> FdReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut report = FdReport::default();
    let mut probe = store.clone();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let len = store.get(name).expect("name").len();
        let coords: Vec<usize> = if len <= COORDS_PER_TENSOR {
            (0..len).collect()
        } else {
            (0..COORDS_PER_TENSOR).map(|_| rng.below(len)).collect()
        };
        for i in coords {
            let base = store.get(name).expect("name").data()[i];
            let numeric = smooth_difference(
                |v| {
                    probe.get_mut(name).expect("name").data_mut()[i] = v;
                    f(&probe)
                },
                base,
                tol,
            );
            probe.get_mut(name).expect("name").data_mut()[i] = base;
            let analytic = grads
                .get(name)
                .expect("gradient for every parameter")
                .data()[i];
            match numeric {
                Some(n) => report.record(analytic, n),
                None => report.skipped += 1,
            }
        }
    }
    report
}

fn with_generator(model: &ModelParams, store: &ParamStore) -> ModelParams {
    ModelParams {
        generator: store.clone(),
        ..model.clone()
    }
}

fn with_discriminator(model: &ModelParams, store: &ParamStore) -> ModelParams {
    ModelParams {
        discriminator: store.clone(),
        ..model.clone()
    }
}

fn with_store(div: &DivergenceParams, store: &ParamStore) -> DivergenceParams {
    DivergenceParams::with_store(*div.initial_spec(), store.clone()).expect("same layout")
}

/// `L_G` against its generator and divergence gradients.
pub fn check_generator(inst: &Instance, tol: f64, rng: &mut SeededStream) -> FdReport {
    let step =
        generator_step(&inst.model, &inst.div, &inst.gen_inputs(), &inst.cfg).expect("L_G step");
    let g_err = fd_compare(
        &inst.model.generator,
        &step.generator_grads,
        tol,
        rng,
        |s| inst.generator_value(&with_generator(&inst.model, s), &inst.div, &inst.cfg),
    );
    let e_err = fd_compare(inst.div.store(), &step.divergence_grads, tol, rng, |s| {
        inst.entropy_value(&with_store(&inst.div, s))
    });
    g_err.merge(e_err)
}

/// `L_D` (with the gradient penalty) against its discriminator gradients.
pub fn check_discriminator(inst: &Instance, tol: f64, rng: &mut SeededStream) -> FdReport {
    let step = discriminator_step(&inst.model, &inst.div, &inst.disc_inputs(), &inst.cfg)
        .expect("L_D step");
    fd_compare(&inst.model.discriminator, &step.grads, tol, rng, |s| {
        inst.discriminator_value(&with_discriminator(&inst.model, s))
    })
}

fn sub(a: &ParamStore, b: &ParamStore) -> ParamStore {
    let mut out = ParamStore::new();
    for ((n, x), (_, y)) in a.iter().zip(b.iter()) {
        out.insert(n, x.zip_map(y, |u, v| u - v).expect("same shape"))
            .expect("unique");
    }
    out
}

/// `L_G^C` alone: its gradient is `L_G` with the creativity terms minus
/// `L_G` without them, checked against differences of the standalone value.
pub fn check_creativity(inst: &Instance, tol: f64, rng: &mut SeededStream) -> FdReport {
    let inp = inst.gen_inputs();
    let bare = LossConfig {
        realism_term: false,
        entropy_term: false,
        new_class_ablation: false,
        ..inst.cfg.clone()
    };
    let with = generator_step(&inst.model, &inst.div, &inp, &inst.cfg).expect("L_G");
    let without = generator_step(&inst.model, &inst.div, &inp, &bare).expect("L_G bare");
    let g_grads = sub(&with.generator_grads, &without.generator_grads);
    let e_grads = sub(&with.divergence_grads, &without.divergence_grads);
    let value = |model: &ModelParams, div: &DivergenceParams| {
        creativity_loss(
            model,
            div,
            &inst.hallucinated,
            &inst.seen_semantics,
            &inst.cfg,
        )
        .expect("L_G^C")
    };
    let g_err = fd_compare(&inst.model.generator, &g_grads, tol, rng, |s| {
        value(&with_generator(&inst.model, s), &inst.div)
    });
    let e_err = fd_compare(inst.div.store(), &e_grads, tol, rng, |s| {
        inst.entropy_value(&with_store(&inst.div, s))
    });
    g_err.merge(e_err)
}

/// Entropy loss on one random softmax row against its gradients in the raw
/// divergence parameters and in sum-preserving softmax directions.
pub fn check_entropy(seed: u64, tol: f64) -> FdReport {
    let mut rng = SeededStream::new(seed);
    let k = 2 + rng.below(8);
    // unit-scale logits keep every entry well above the range where an
    // h = 1e-5 central difference loses accuracy for gamma < 1
    let logits: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    let p: Vec<f64> = logits.iter().map(|v| v.exp() / z).collect();
    let div = random_divergence(&mut rng);
    let out = entropy_loss_grad(&p, &div).expect("entropy gradient");
    let value_at = |spec: &DivergenceSpec| entropy_loss(&p, spec).expect("entropy");
    assert!((out.value - value_at(&div.current())).abs() <= 1e-12 * out.value.abs().max(1.0));
    let mut report = fd_compare(div.store(), &out.d_params, tol, &mut rng, |s| {
        value_at(&with_store(&div, s).current())
    });
    // move mass off the largest entry so no probability turns negative
    let j = (0..k).fold(0, |b, c| if p[c] > p[b] { c } else { b });
    let i = (j + 1 + rng.below(k - 1)) % k;
    let shifted = |h: f64| {
        let mut q = p.clone();
        q[i] += h;
        q[j] -= h;
        entropy_loss_grad(&q, &div).expect("entropy").value
    };
    match smooth_difference(shifted, 0.0, tol) {
        Some(n) => report.record(out.d_softmax[i] - out.d_softmax[j], n),
        None => report.skipped += 1,
    }
    report
}

/// One gradient check family and its tolerance.
#[derive(Clone, Copy, Debug)]
pub enum GradCase {
    Generator,
    Discriminator,
    Creativity,
    SegcCategorization,
    HallucinatedRealFake,
    UnseenCategorization,
    Entropy,
}

impl GradCase {
    pub const ALL: [GradCase; 7] = [
        GradCase::Generator,
        GradCase::Discriminator,
        GradCase::Creativity,
        GradCase::SegcCategorization,
        GradCase::HallucinatedRealFake,
        GradCase::UnseenCategorization,
        GradCase::Entropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradCase::Generator => "L_G",
            GradCase::Discriminator => "L_D with L_Lip",
            GradCase::Creativity => "L_G^C",
            GradCase::SegcCategorization => "SeGC L_Cat (generator and discriminator)",
            GradCase::HallucinatedRealFake => "L_h",
            GradCase::UnseenCategorization => "L_G^u",
            GradCase::Entropy => "entropy loss with learnable gamma, beta",
        }
    }

    /// Cases whose gradient passes through the penalty get the looser bound.
    pub fn tolerance(self) -> f64 {
        match self {
            GradCase::Discriminator
            | GradCase::SegcCategorization
            | GradCase::HallucinatedRealFake => 1e-3,
            _ => 1e-4,
        }
    }

    /// Finite-difference comparison on the instance drawn from `seed`.
    pub fn run(self, seed: u64) -> FdReport {
        let tol = self.tolerance();
        let mut rng = SeededStream::with_stream(seed, 7);
        let lambda = rng.range(0.05, 2.0);
        let base = LossConfig {
            lambda_creativity: lambda,
            ..LossConfig::default()
        };
        match self {
            GradCase::Generator => check_generator(&Instance::random(base, seed), tol, &mut rng),
            GradCase::Discriminator => {
                check_discriminator(&Instance::random(base, seed), tol, &mut rng)
            }
            GradCase::Creativity => {
                let cfg = match seed % 3 {
                    0 => base,
                    1 => LossConfig {
                        entropy_term: false,
                        new_class_ablation: true,
                        ..base
                    },
                    _ => LossConfig {
                        entropy_term: false,
                        ..base
                    },
                };
                check_creativity(&Instance::random(cfg, seed), tol, &mut rng)
            }
            GradCase::SegcCategorization => {
                let cfg = LossConfig {
                    segc_active: true,
                    segc_normalized: seed % 2 == 1,
                    eta: rng.range(0.5, 3.0),
                    ..base
                };
                let inst = Instance::random(cfg, seed);
                check_generator(&inst, tol, &mut rng)
                    .merge(check_discriminator(&inst, tol, &mut rng))
            }
            GradCase::HallucinatedRealFake => {
                let cfg = LossConfig {
                    rf_hallucinated: true,
                    ..base
                };
                check_discriminator(&Instance::random(cfg, seed), tol, &mut rng)
            }
            GradCase::UnseenCategorization => {
                let cfg = LossConfig {
                    segc_active: true,
                    u_categorization: true,
                    ..base
                };
                check_generator(&Instance::random(cfg, seed), tol, &mut rng)
            }
            GradCase::Entropy => check_entropy(seed, tol),
        }
    }
}
