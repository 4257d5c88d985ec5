//! Datasets, the synthetic benchmark, and checkpoints.
//!
//! A dataset directory holds `manifest.toml` plus one matrix file per field
//! (see [`matrix`]). Labels are stored as single-column matrices of global
//! class ids.

pub mod checkpoint;
pub mod matrix;
pub mod synthetic;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededStream;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use matrix::{read_matrix, write_matrix};
pub use synthetic::{make_synthetic, SyntheticSpec};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Easy,
    Hard,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZslDataset {
    /// Global ids; row `k` of `seen_semantics` describes `seen_classes[k]`.
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub seen_features: Tensor,
    pub seen_labels: Vec<usize>,
    pub seen_semantics: Tensor,
    pub unseen_semantics: Tensor,
    pub unseen_test_features: Tensor,
    pub unseen_test_labels: Vec<usize>,
    pub seen_test_features: Tensor,
    pub seen_test_labels: Vec<usize>,
    pub split_mode: SplitMode,
}

impl ZslDataset {
    pub fn visual_dim(&self) -> usize {
        self.seen_features.cols()
    }

    pub fn semantic_dim(&self) -> usize {
        self.seen_semantics.cols()
    }

    pub fn k_seen(&self) -> usize {
        self.seen_classes.len()
    }

    pub fn k_unseen(&self) -> usize {
        self.unseen_classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let seen: BTreeSet<usize> = self.seen_classes.iter().copied().collect();
        let unseen: BTreeSet<usize> = self.unseen_classes.iter().copied().collect();
        if seen.len() != self.seen_classes.len() || unseen.len() != self.unseen_classes.len() {
            return Err(Error::invalid("class id lists contain duplicates"));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::invalid(format!(
                "seen and unseen classes must be disjoint; class {c} is in both"
            )));
        }
        if seen.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 seen classes, got {}",
                seen.len()
            )));
        }
        let (vd, sd) = (self.visual_dim(), self.semantic_dim());
        let shape_checks = [
            (
                "seen_semantics",
                &self.seen_semantics,
                self.seen_classes.len(),
                sd,
            ),
            (
                "unseen_semantics",
                &self.unseen_semantics,
                self.unseen_classes.len(),
                sd,
            ),
            (
                "seen_features",
                &self.seen_features,
                self.seen_labels.len(),
                vd,
            ),
            (
                "unseen_test_features",
                &self.unseen_test_features,
                self.unseen_test_labels.len(),
                vd,
            ),
            (
                "seen_test_features",
                &self.seen_test_features,
                self.seen_test_labels.len(),
                vd,
            ),
        ];
        for (name, t, rows, cols) in shape_checks {
            if t.shape() != (rows, cols) && !(rows == 0 && t.rows() == 0) {
                return Err(Error::dim(
                    name,
                    format!("{rows}x{cols}"),
                    format!("{}x{}", t.rows(), t.cols()),
                ));
            }
            if !t.is_finite() {
                return Err(Error::invalid(format!("{name} contains non-finite values")));
            }
        }
        for (name, labels, set) in [
            ("seen_labels", &self.seen_labels, &seen),
            ("seen_test_labels", &self.seen_test_labels, &seen),
            ("unseen_test_labels", &self.unseen_test_labels, &unseen),
        ] {
            if let Some(bad) = labels.iter().find(|l| !set.contains(l)) {
                return Err(Error::invalid(format!(
                    "{name}: label {bad} is not a listed class"
                )));
            }
        }
        for c in &self.seen_classes {
            if !self.seen_labels.contains(c) {
                return Err(Error::invalid(format!(
                    "seen class {c} has no training example"
                )));
            }
        }
        Ok(())
    }

    /// Position of a global seen id in `seen_classes`.
    pub fn seen_index(&self, class: usize) -> Option<usize> {
        self.seen_classes.iter().position(|&c| c == class)
    }

    pub fn unseen_index(&self, class: usize) -> Option<usize> {
        self.unseen_classes.iter().position(|&c| c == class)
    }

    /// Training labels as positions in `seen_classes`.
    pub fn seen_local_labels(&self) -> Vec<usize> {
        self.seen_labels
            .iter()
            .map(|&l| self.seen_index(l).expect("validated label"))
            .collect()
    }

    /// Row indices of the training examples of each seen class.
    pub fn seen_rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.k_seen()];
        for (i, l) in self.seen_local_labels().into_iter().enumerate() {
            rows[l].push(i);
        }
        rows
    }

    /// Mean training feature per seen class, in `seen_classes` order.
    pub fn seen_class_means(&self) -> Tensor {
        let by_class = self.seen_rows_by_class();
        let mut out = Tensor::zeros(self.k_seen(), self.visual_dim());
        for (k, rows) in by_class.iter().enumerate() {
            let m = self.seen_features.select_rows(rows).mean_rows();
            out.row_slice_mut(k).copy_from_slice(m.data());
        }
        out
    }

    /// Hold out ~20% of the seen classes as pseudo-unseen validation
    /// classes. Their training examples become the unseen test set; the
    /// remaining classes keep their seen test examples.
    pub fn class_split(
        &self,
        validation_fraction: f64,
        rng: &mut SeededStream,
    ) -> Result<ZslDataset> {
        let k = self.k_seen();
        if k < 5 {
            return Err(Error::invalid(format!(
                "cross-validation needs at least 5 seen classes, got {k}"
            )));
        }
        let n_val = ((k as f64 * validation_fraction).round() as usize).clamp(1, k - 2);
        let mut order: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut order);
        let mut val: Vec<usize> = order[..n_val].to_vec();
        let mut train: Vec<usize> = order[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();

        let pick_rows = |labels: &[usize], keep: &[usize]| -> Vec<usize> {
            labels
                .iter()
                .enumerate()
                .filter(|(_, l)| keep.iter().any(|&k| self.seen_classes[k] == **l))
                .map(|(i, _)| i)
                .collect()
        };
        let train_rows = pick_rows(&self.seen_labels, &train);
        let val_rows = pick_rows(&self.seen_labels, &val);
        let test_rows = pick_rows(&self.seen_test_labels, &train);
        let ids = |ks: &[usize]| ks.iter().map(|&k| self.seen_classes[k]).collect::<Vec<_>>();
        let sub = ZslDataset {
            seen_classes: ids(&train),
            unseen_classes: ids(&val),
            seen_features: self.seen_features.select_rows(&train_rows),
            seen_labels: train_rows.iter().map(|&i| self.seen_labels[i]).collect(),
            seen_semantics: self.seen_semantics.select_rows(&train),
            unseen_semantics: self.seen_semantics.select_rows(&val),
            unseen_test_features: self.seen_features.select_rows(&val_rows),
            unseen_test_labels: val_rows.iter().map(|&i| self.seen_labels[i]).collect(),
            seen_test_features: self.seen_test_features.select_rows(&test_rows),
            seen_test_labels: test_rows
                .iter()
                .map(|&i| self.seen_test_labels[i])
                .collect(),
            split_mode: SplitMode::Custom,
        };
        sub.validate()?;
        Ok(sub)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    split_mode: SplitMode,
    visual_dim: usize,
    semantic_dim: usize,
    seen_classes: Vec<usize>,
    unseen_classes: Vec<usize>,
    counts: Counts,
    files: Files,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Counts {
    seen_train: usize,
    seen_test: usize,
    unseen_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Files {
    seen_features: String,
    seen_labels: String,
    seen_semantics: String,
    unseen_semantics: String,
    unseen_test_features: String,
    unseen_test_labels: String,
    seen_test_features: String,
    seen_test_labels: String,
}

impl Files {
    fn with_suffix(suffix: &str) -> Self {
        let f = |n: &str| format!("{n}.{suffix}");
        Files {
            seen_features: f("seen_features"),
            seen_labels: f("seen_labels"),
            seen_semantics: f("seen_semantics"),
            unseen_semantics: f("unseen_semantics"),
            unseen_test_features: f("unseen_test_features"),
            unseen_test_labels: f("unseen_test_labels"),
            seen_test_features: f("seen_test_features"),
            seen_test_labels: f("seen_test_labels"),
        }
    }
}

fn labels_tensor(labels: &[usize]) -> Tensor {
    Tensor::column(&labels.iter().map(|&l| l as f64).collect::<Vec<_>>())
}

fn labels_from(t: &Tensor, path: &Path) -> Result<Vec<usize>> {
    if t.cols() != 1 && t.rows() > 0 {
        return Err(Error::format(
            path,
            format!("label file must have one column, found {}", t.cols()),
        ));
    }
    t.data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < (1u32 << 24) as f64 {
                Ok(v as usize)
            } else {
                Err(Error::format(
                    path,
                    format!("label {v} is not a non-negative integer"),
                ))
            }
        })
        .collect()
}

/// Write `ds` under `dir` as binary matrices (or CSV when `csv` is set).
pub fn save_dataset(ds: &ZslDataset, dir: &Path, csv: bool) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = Files::with_suffix(if csv { "csv" } else { "bin" });
    let manifest = Manifest {
        format_version: DATASET_VERSION,
        split_mode: ds.split_mode,
        visual_dim: ds.visual_dim(),
        semantic_dim: ds.semantic_dim(),
        seen_classes: ds.seen_classes.clone(),
        unseen_classes: ds.unseen_classes.clone(),
        counts: Counts {
            seen_train: ds.seen_labels.len(),
            seen_test: ds.seen_test_labels.len(),
            unseen_test: ds.unseen_test_labels.len(),
        },
        files: files.clone(),
    };
    let pairs: [(&str, Tensor); 8] = [
        (&files.seen_features, ds.seen_features.clone()),
        (&files.seen_labels, labels_tensor(&ds.seen_labels)),
        (&files.seen_semantics, ds.seen_semantics.clone()),
        (&files.unseen_semantics, ds.unseen_semantics.clone()),
        (&files.unseen_test_features, ds.unseen_test_features.clone()),
        (
            &files.unseen_test_labels,
            labels_tensor(&ds.unseen_test_labels),
        ),
        (&files.seen_test_features, ds.seen_test_features.clone()),
        (&files.seen_test_labels, labels_tensor(&ds.seen_test_labels)),
    ];
    for (name, t) in pairs {
        write_matrix(&dir.join(name), &t)?;
    }
    let text =
        toml::to_string(&manifest).map_err(|e| Error::format(dir.join(MANIFEST), e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<ZslDataset> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.format_version != DATASET_VERSION {
        return Err(Error::format(
            &mpath,
            format!(
                "dataset format version {}, expected {DATASET_VERSION}",
                m.format_version
            ),
        ));
    }
    let read = |name: &str, rows: usize, cols: Option<usize>| -> Result<Tensor> {
        let p = dir.join(name);
        let t = read_matrix(&p)?;
        let ok_cols = cols.is_none_or(|c| t.cols() == c || t.rows() == 0);
        if t.rows() != rows || !ok_cols {
            return Err(Error::format(
                &p,
                format!(
                    "shape inconsistency: expected {rows}x{}, found {}x{}",
                    cols.map_or("?".into(), |c| c.to_string()),
                    t.rows(),
                    t.cols()
                ),
            ));
        }
        Ok(t)
    };
    let read_labels = |name: &str, rows: usize| -> Result<Vec<usize>> {
        let t = read(name, rows, Some(1))?;
        labels_from(&t, &dir.join(name))
    };
    let (vd, sd, c) = (m.visual_dim, m.semantic_dim, &m.counts);
    let ds = ZslDataset {
        seen_classes: m.seen_classes.clone(),
        unseen_classes: m.unseen_classes.clone(),
        seen_features: read(&m.files.seen_features, c.seen_train, Some(vd))?,
        seen_labels: read_labels(&m.files.seen_labels, c.seen_train)?,
        seen_semantics: read(&m.files.seen_semantics, m.seen_classes.len(), Some(sd))?,
        unseen_semantics: read(&m.files.unseen_semantics, m.unseen_classes.len(), Some(sd))?,
        unseen_test_features: read(&m.files.unseen_test_features, c.unseen_test, Some(vd))?,
        unseen_test_labels: read_labels(&m.files.unseen_test_labels, c.unseen_test)?,
        seen_test_features: read(&m.files.seen_test_features, c.seen_test, Some(vd))?,
        seen_test_labels: read_labels(&m.files.seen_test_labels, c.seen_test)?,
        split_mode: m.split_mode,
    };
    ds.validate()?;
    Ok(ds)
}
