//! Gaussian-cluster benchmark with easy and hard split analogs.
//!
//! Each class has a latent code `c ~ N(0, I)` of `semantic_dim` entries.
//! Its visual prototype is `A c` and its descriptor is `M A c` plus noise,
//! where `A` (visual x semantic) and `M` (semantic x visual) are fixed random
//! maps drawn once per dataset. Samples are the prototype plus isotropic
//! noise of scale `cluster_spread`.
//!
//! Easy: each unseen code is a small perturbation of a distinct seen parent
//! code. Hard: unseen codes lie in the orthant where the first two latent
//! coordinates are negative, and no seen code does.

use serde::{Deserialize, Serialize};

use super::{SplitMode, ZslDataset};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededStream;

/// Per-coordinate scale of the easy-split perturbation in latent space.
pub const EASY_PERTURBATION: f64 = 0.3;
/// Share of each seen class's samples kept for training.
pub const SEEN_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub k_seen: usize,
    pub k_unseen: usize,
    pub visual_dim: usize,
    pub semantic_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub semantic_noise: f64,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            k_seen: 8,
            k_unseen: 4,
            visual_dim: 32,
            semantic_dim: 16,
            samples_per_class: 200,
            cluster_spread: 0.5,
            semantic_noise: 0.05,
            split_mode: SplitMode::Easy,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_unseen", self.k_unseen),
            ("visual_dim", self.visual_dim),
            ("semantic_dim", self.semantic_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("synthetic {name} must be positive")));
            }
        }
        if self.k_seen < 2 {
            return Err(Error::invalid("synthetic k_seen must be at least 2"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::invalid(
                "synthetic samples_per_class must be at least 2 (train and test share)",
            ));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return Err(Error::invalid("synthetic cluster_spread must be positive"));
        }
        if !(self.semantic_noise.is_finite() && self.semantic_noise >= 0.0) {
            return Err(Error::invalid(
                "synthetic semantic_noise must be non-negative",
            ));
        }
        match self.split_mode {
            SplitMode::Custom => Err(Error::invalid("synthetic split_mode must be easy or hard")),
            SplitMode::Hard if self.semantic_dim < 2 => {
                Err(Error::invalid("hard split needs semantic_dim >= 2"))
            }
            _ => Ok(()),
        }
    }
}

/// The generating quantities behind a synthetic dataset.
#[derive(Clone, Debug)]
pub struct SyntheticTruth {
    /// `visual_dim x semantic_dim`.
    pub code_to_visual: Tensor,
    /// `semantic_dim x visual_dim`.
    pub visual_to_semantic: Tensor,
    pub seen_codes: Tensor,
    pub unseen_codes: Tensor,
    pub seen_prototypes: Tensor,
    pub unseen_prototypes: Tensor,
    /// Easy split only: index of each unseen class's seen parent.
    pub parents: Option<Vec<usize>>,
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<ZslDataset> {
    synthesize(spec).map(|(ds, _)| ds)
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<(ZslDataset, SyntheticTruth)> {
    spec.validate()?;
    let (ks, ku, vd, sd) = (
        spec.k_seen,
        spec.k_unseen,
        spec.visual_dim,
        spec.semantic_dim,
    );
    let mut rng = SeededStream::new(spec.seed);

    let code_to_visual = Tensor::from_fn(vd, sd, |_, _| rng.normal() / (sd as f64).sqrt());
    let visual_to_semantic = Tensor::from_fn(sd, vd, |_, _| rng.normal() / (vd as f64).sqrt());

    let mut seen_codes = Tensor::from_fn(ks, sd, |_, _| rng.normal());
    let mut parents = None;
    let unseen_codes = match spec.split_mode {
        SplitMode::Easy => {
            let mut order: Vec<usize> = (0..ks).collect();
            rng.shuffle(&mut order);
            let chosen: Vec<usize> = (0..ku).map(|j| order[j % ks]).collect();
            let codes = Tensor::from_fn(ku, sd, |j, c| {
                seen_codes.get(chosen[j], c) + EASY_PERTURBATION * rng.normal()
            });
            parents = Some(chosen);
            codes
        }
        _ => {
            for k in 0..ks {
                if seen_codes.get(k, 0) < 0.0 && seen_codes.get(k, 1) < 0.0 {
                    let v = seen_codes.get(k, 0);
                    seen_codes.set(k, 0, -v);
                }
            }
            let mut codes = Tensor::from_fn(ku, sd, |_, _| rng.normal());
            for j in 0..ku {
                for c in 0..2 {
                    let v = codes.get(j, c);
                    codes.set(j, c, -v.abs());
                }
            }
            codes
        }
    };

    let to_visual = code_to_visual.transpose();
    let to_semantic = visual_to_semantic.transpose();
    let seen_prototypes = seen_codes.matmul(&to_visual)?;
    let unseen_prototypes = unseen_codes.matmul(&to_visual)?;
    let noisy = |clean: Tensor, rng: &mut SeededStream| {
        let noise = Tensor::from_fn(clean.rows(), clean.cols(), |_, _| rng.normal());
        clean.zip_map(&noise, |a, n| a + spec.semantic_noise * n)
    };
    let seen_semantics = noisy(seen_prototypes.matmul(&to_semantic)?, &mut rng)?.narrowed();
    let unseen_semantics = noisy(unseen_prototypes.matmul(&to_semantic)?, &mut rng)?.narrowed();

    let n_train = ((spec.samples_per_class as f64 * SEEN_TRAIN_FRACTION).round() as usize)
        .clamp(1, spec.samples_per_class - 1);
    let sample = |proto: &[f64], n: usize, rng: &mut SeededStream| -> Vec<f64> {
        let mut out = Vec::with_capacity(n * vd);
        for _ in 0..n {
            out.extend(proto.iter().map(|p| p + spec.cluster_spread * rng.normal()));
        }
        out
    };

    let (mut train, mut train_labels) = (Vec::new(), Vec::new());
    let (mut seen_test, mut seen_test_labels) = (Vec::new(), Vec::new());
    for k in 0..ks {
        let block = sample(
            seen_prototypes.row_slice(k),
            spec.samples_per_class,
            &mut rng,
        );
        let (a, b) = block.split_at(n_train * vd);
        train.extend_from_slice(a);
        seen_test.extend_from_slice(b);
        train_labels.extend(std::iter::repeat_n(k, n_train));
        seen_test_labels.extend(std::iter::repeat_n(k, spec.samples_per_class - n_train));
    }
    let (mut unseen_test, mut unseen_test_labels) = (Vec::new(), Vec::new());
    for j in 0..ku {
        unseen_test.extend(sample(
            unseen_prototypes.row_slice(j),
            spec.samples_per_class,
            &mut rng,
        ));
        unseen_test_labels.extend(std::iter::repeat_n(ks + j, spec.samples_per_class));
    }

    let ds = ZslDataset {
        seen_classes: (0..ks).collect(),
        unseen_classes: (ks..ks + ku).collect(),
        seen_features: Tensor::from_vec(train_labels.len(), vd, train)?.narrowed(),
        seen_labels: train_labels,
        seen_semantics,
        unseen_semantics,
        unseen_test_features: Tensor::from_vec(unseen_test_labels.len(), vd, unseen_test)?
            .narrowed(),
        unseen_test_labels,
        seen_test_features: Tensor::from_vec(seen_test_labels.len(), vd, seen_test)?.narrowed(),
        seen_test_labels,
        split_mode: spec.split_mode,
    };
    ds.validate()?;
    let truth = SyntheticTruth {
        code_to_visual,
        visual_to_semantic,
        seen_codes,
        unseen_codes,
        seen_prototypes,
        unseen_prototypes,
        parents,
    };
    Ok((ds, truth))
}
