//! Checkpoint directories: `checkpoint.toml` plus `params/<name>.bin` per
//! tensor in the matrix format. Divergence tensors are stored under an
//! `e.` prefix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::{read_matrix, write_matrix};
use crate::diffmath::ParamStore;
use crate::divergences::{DivergenceParams, DivergenceSpec};
use crate::error::{Error, Result};
use crate::model::{ArchSpec, ClassHead, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.toml";
const DIVERGENCE_PREFIX: &str = "e.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub divergence: DivergenceParams,
    /// The run configuration as it was persisted.
    pub config: toml::Table,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch_tag: String,
    arch: ArchSpec,
    head: ClassHead,
    k_seen: usize,
    divergence: DivergenceSpec,
    generator: Vec<String>,
    discriminator: Vec<String>,
    divergence_params: Vec<String>,
    config: toml::Table,
}

fn tensor_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join("params").join(format!("{name}.bin"))
}

pub fn save_checkpoint<C: Serialize>(
    model: &ModelParams,
    divergence: &DivergenceParams,
    config: &C,
    dir: &Path,
) -> Result<()> {
    let cpath = dir.join(CHECKPOINT_FILE);
    let config = toml::Table::try_from(config).map_err(|e| Error::format(&cpath, e.to_string()))?;
    let names = |s: &ParamStore, prefix: &str| {
        s.names()
            .map(|n| format!("{prefix}{n}"))
            .collect::<Vec<_>>()
    };
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        arch_tag: model.arch.preset.tag().to_string(),
        arch: model.arch.clone(),
        head: model.head,
        k_seen: model.k_seen,
        divergence: *divergence.initial_spec(),
        generator: names(&model.generator, ""),
        discriminator: names(&model.discriminator, ""),
        divergence_params: names(divergence.store(), DIVERGENCE_PREFIX),
        config,
    };
    let pdir = dir.join("params");
    fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    for (name, t) in model.generator.iter().chain(model.discriminator.iter()) {
        write_matrix(&tensor_path(dir, name), t)?;
    }
    for (name, t) in divergence.store().iter() {
        write_matrix(&tensor_path(dir, &format!("{DIVERGENCE_PREFIX}{name}")), t)?;
    }
    let text = toml::to_string(&header).map_err(|e| Error::format(&cpath, e.to_string()))?;
    fs::write(&cpath, text).map_err(|e| Error::io(&cpath, e))
}

/// Load a checkpoint; with `expected` set, its architecture must match.
pub fn load_checkpoint(dir: &Path, expected: Option<&ArchSpec>) -> Result<Checkpoint> {
    let cpath = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&cpath).map_err(|e| Error::io(&cpath, e))?;
    let raw: toml::Table =
        toml::from_str(&text).map_err(|e| Error::format(&cpath, e.to_string()))?;
    let version = raw.get("format_version").and_then(|v| v.as_integer());
    if version != Some(CHECKPOINT_VERSION as i64) {
        return Err(Error::format(
            &cpath,
            format!(
                "checkpoint format version {}, expected {CHECKPOINT_VERSION}",
                version.map_or("missing".to_string(), |v| v.to_string())
            ),
        ));
    }
    let header: Header = raw
        .try_into()
        .map_err(|e: toml::de::Error| Error::format(&cpath, e.to_string()))?;
    if header.arch_tag != header.arch.preset.tag() {
        return Err(Error::format(&cpath, "arch_tag disagrees with arch.preset"));
    }
    if let Some(want) = expected {
        if want.preset != header.arch.preset {
            return Err(Error::invalid(format!(
                "checkpoint architecture {} does not match the requested {}",
                header.arch_tag,
                want.preset.tag()
            )));
        }
        if want != &header.arch {
            return Err(Error::invalid(format!(
                "checkpoint dimensions {:?} do not match the requested {:?}",
                header.arch, want
            )));
        }
    }
    let read_store = |names: &[String], strip: &str| -> Result<ParamStore> {
        let mut s = ParamStore::new();
        for n in names {
            let key = n.strip_prefix(strip).unwrap_or(n);
            s.insert(key, read_matrix(&tensor_path(dir, n))?)?;
        }
        Ok(s)
    };
    let model = ModelParams {
        arch: header.arch,
        head: header.head,
        k_seen: header.k_seen,
        generator: read_store(&header.generator, "")?,
        discriminator: read_store(&header.discriminator, "")?,
    };
    let fresh = crate::model::init_params(
        &model.arch,
        model.k_seen,
        model.head,
        &mut crate::rng::SeededStream::new(0),
    )?;
    fresh
        .generator
        .check_matches(&model.generator, "checkpoint generator")?;
    fresh
        .discriminator
        .check_matches(&model.discriminator, "checkpoint discriminator")?;
    let divergence = DivergenceParams::with_store(
        header.divergence,
        read_store(&header.divergence_params, DIVERGENCE_PREFIX)?,
    )?;
    Ok(Checkpoint {
        model,
        divergence,
        config: header.config,
    })
}
