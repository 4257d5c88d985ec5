use std::env;
use std::path::{Path, PathBuf};

use cizsl_core::dataio::{
    load_checkpoint, load_dataset, make_synthetic, save_checkpoint, save_dataset,
};
use cizsl_core::dataio::{SplitMode, SyntheticSpec, ZslDataset};
use cizsl_core::evaluation::{evaluate, retrieval_map, PoolMetric};
use cizsl_core::rng::SeededStream;
use cizsl_core::training::{
    aggregate, cross_validate, lambda_curve, pick_best, run_bundle, suite, train, validation_split,
    Selection, TrainConfig, EVAL_STREAM,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::args::*;
use crate::config::{load_config, to_toml};
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, ManifestWriter, OutDir, RunManifest, RunRecord};
use crate::report;

#[derive(Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub fn resolve_out(flag: Option<PathBuf>, command: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
            .join(command)
    })
}

/// Run one command and write its manifest. Every command but `synth`
/// creates its output directory first, so any failure leaves a manifest
/// marked failed; `synth` writes nothing for an invalid spec.
pub fn run(cli: Cli) -> Result<RunResult> {
    let name = cli.command.name();
    let mut out = OutDir::new(resolve_out(cli.out, name));
    let writer = ManifestWriter::start(name);
    let mut record = RunRecord::default();
    if !matches!(cli.command, Command::Synth(_)) {
        out.create()?;
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(a, &mut out, &mut record),
        Command::Train(a) => train_cmd(a, &mut out, &mut record),
        Command::Eval(a) => eval_cmd(a, &mut out, &mut record),
        Command::Sweep(a) => sweep(a, &mut out, &mut record),
        Command::Ablate(a) => ablate(a, &mut out, &mut record),
        Command::Retrieve(a) => retrieve(a, &mut out, &mut record),
    };
    match result {
        Ok(()) => {
            if !out.was_created() {
                out.create()?;
            }
            let manifest = writer.finish(&out, record, None);
            write_atomic(out.root(), &manifest)?;
            Ok(RunResult {
                dir: out.root().to_path_buf(),
                manifest,
            })
        }
        Err(e) => {
            if out.was_created() {
                let manifest = writer.finish(&out, record, Some(&e));
                // The original error matters more than a failed manifest write.
                let _ = write_atomic(out.root(), &manifest);
            }
            Err(e)
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes to json")
}

fn synth(a: &SynthArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        k_seen: a.k_seen.unwrap_or(d.k_seen),
        k_unseen: a.k_unseen.unwrap_or(d.k_unseen),
        visual_dim: a.visual_dim.unwrap_or(d.visual_dim),
        semantic_dim: a.semantic_dim.unwrap_or(d.semantic_dim),
        samples_per_class: a.samples_per_class.unwrap_or(d.samples_per_class),
        cluster_spread: a.cluster_spread.unwrap_or(d.cluster_spread),
        semantic_noise: a.semantic_noise.unwrap_or(d.semantic_noise),
        split_mode: match a.split {
            Some(Split::Hard) => SplitMode::Hard,
            Some(Split::Easy) => SplitMode::Easy,
            None => d.split_mode,
        },
        seed: a.seed.unwrap_or(d.seed),
    };
    record.config = json(&spec);
    record.seeds = vec![spec.seed];
    // Everything is built in memory first so a bad spec writes nothing.
    let ds = make_synthetic(&spec)?;
    out.create()?;
    save_dataset(&ds, out.root(), a.csv)?;
    let mut names: Vec<String> = std::fs::read_dir(out.root())
        .map_err(|e| CliError::io(out.root(), e))?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| !n.starts_with('.') && n != crate::manifest::MANIFEST_FILE)
        .collect();
    names.sort();
    for n in names {
        out.claim(&n)?;
    }
    Ok(())
}

fn dataset(path: &Path, record: &mut RunRecord) -> Result<ZslDataset> {
    record.inputs.push(path.to_path_buf());
    Ok(load_dataset(path)?)
}

fn fitted_config(c: &ConfigArgs, ds: &ZslDataset, record: &mut RunRecord) -> Result<TrainConfig> {
    if let Some(p) = &c.config {
        record.inputs.push(p.clone());
    }
    let mut cfg = load_config(c.config.as_deref(), &c.overrides())?;
    cfg.fit_to(ds);
    record.config = json(&cfg);
    record.seeds = vec![cfg.seed];
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: &TrainArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let ds = dataset(&a.data, record)?;
    let cfg = fitted_config(&a.config, &ds, record)?;
    let (run, cfg) = if a.cross_validate {
        let cv = cross_validate(&ds, &cfg)?;
        let sel = [(cfg.seed, cv.selection)];
        out.write("validation.csv", &report::sweep_csv(&sel)?)?;
        out.write("validation_curves.csv", &report::curves_csv(&sel)?)?;
        (cv.final_run, cv.final_config)
    } else {
        (train(&ds, &cfg)?, cfg)
    };
    record.config = json(&cfg);
    out.write("config.toml", to_toml(&cfg).as_bytes())?;
    out.write("history.csv", &report::history_csv(&run.history)?)?;
    let ck = out.claim("checkpoint")?;
    save_checkpoint(&run.model, &run.divergence, &cfg, &ck)?;
    Ok(())
}

/// The checkpoint and the config it was trained with.
fn checkpoint(
    path: &Path,
    record: &mut RunRecord,
) -> Result<(cizsl_core::dataio::Checkpoint, TrainConfig)> {
    record.inputs.push(path.to_path_buf());
    let ck = load_checkpoint(path, None)?;
    let cfg = TrainConfig::deserialize(toml::Value::Table(ck.config.clone()))
        .map_err(|e| CliError::usage(format!("{}: stored config: {e}", path.display())))?;
    Ok((ck, cfg))
}

fn eval_cmd(a: &EvalArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let (ck, cfg) = checkpoint(&a.checkpoint, record)?;
    let ds = dataset(&a.data, record)?;
    let mut ec = cfg.eval_config();
    if let Some(n) = a.n_generate {
        ec.n_generate = n;
    }
    if let Some(m) = a.metric {
        ec.metric = match m {
            Metric::Euclidean => PoolMetric::Euclidean,
            Metric::Cosine => PoolMetric::Cosine,
        };
    }
    if let Some(b) = a.bias_points {
        ec.bias_points = b;
    }
    let seed = a.seed.unwrap_or(cfg.seed);
    record.config = json(&ec);
    record.seeds = vec![seed];
    let r = evaluate(
        &ck.model,
        &ds,
        &ec,
        &mut SeededStream::with_stream(seed, EVAL_STREAM),
    )?;
    out.write("eval.csv", &report::eval_csv(&r)?)?;
    out.write("su_curve.csv", &report::su_curve_csv(&r.su_curve)?)?;
    Ok(())
}

fn retrieve(a: &RetrieveArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let (ck, cfg) = checkpoint(&a.checkpoint, record)?;
    let ds = dataset(&a.data, record)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    record.config = serde_json::json!({ "fractions": a.fractions, "n_generate": a.n_generate });
    record.seeds = vec![seed];
    let rows = retrieval_map(
        &ck.model,
        &ds.unseen_semantics,
        &ds.unseen_classes,
        &ds.unseen_test_features,
        &ds.unseen_test_labels,
        &a.fractions,
        a.n_generate,
        &mut SeededStream::with_stream(seed, EVAL_STREAM),
    )?;
    out.write("retrieval.csv", &report::retrieval_csv(&rows)?)?;
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn sweep(a: &SweepArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let ds = dataset(&a.data, record)?;
    let mut cfg = fitted_config(&a.config, &ds, record)?;
    if let Some(g) = &a.lambda_grid {
        cfg.lambda_grid = g.clone();
    }
    if cfg.lambda_grid.is_empty() {
        return Err(CliError::usage("lambda grid is empty"));
    }
    cfg.validate()?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    record.config = json(&cfg);
    record.seeds = seeds.clone();

    let configs: Vec<TrainConfig> = seeds
        .iter()
        .map(|&s| TrainConfig {
            seed: s,
            ..cfg.clone()
        })
        .collect();
    let splits = configs
        .iter()
        .map(|c| validation_split(&ds, c))
        .collect::<cizsl_core::Result<Vec<_>>>()?;
    let cells: Vec<(usize, f64)> = (0..seeds.len())
        .flat_map(|s| cfg.lambda_grid.iter().map(move |&l| (s, l)))
        .collect();
    let curves = pool(a.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(s, l)| lambda_curve(&splits[s], &configs[s], l))
            .collect::<cizsl_core::Result<Vec<_>>>()
    })?;
    let per_seed: Vec<(u64, Selection)> = curves
        .chunks(cfg.lambda_grid.len())
        .zip(&seeds)
        .map(|(c, &s)| (s, pick_best(c.to_vec(), cfg.n_steps)))
        .collect();
    out.write("sweep.csv", &report::sweep_csv(&per_seed)?)?;
    out.write("curves.csv", &report::curves_csv(&per_seed)?)?;
    out.write("winner.csv", &report::winner_csv(&per_seed)?)?;
    Ok(())
}

fn ablate(a: &AblateArgs, out: &mut OutDir, record: &mut RunRecord) -> Result<()> {
    let ds = dataset(&a.data, record)?;
    let cfg = fitted_config(&a.config, &ds, record)?;
    let bundles = suite(&a.suite)?;
    for b in &bundles {
        b.apply(&cfg)?;
    }
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    record.config =
        serde_json::json!({ "base": json(&cfg), "suite": a.suite, "bundles": json(&bundles) });
    record.seeds = seeds.clone();

    let cells: Vec<(usize, u64)> = (0..bundles.len())
        .flat_map(|b| seeds.iter().map(move |&s| (b, s)))
        .collect();
    let runs = pool(a.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(b, s)| run_bundle(&ds, &cfg, &bundles[b], s))
            .collect::<cizsl_core::Result<Vec<_>>>()
    })?;
    let rows: Vec<_> = bundles
        .iter()
        .zip(runs.chunks(seeds.len().max(1)))
        .map(|(b, r)| aggregate(&b.label, r.to_vec()))
        .collect();
    out.write("ablation.csv", &report::ablation_csv(&rows)?)?;
    out.write(
        "ablation_runs.csv",
        &report::ablation_runs_csv(&rows, &seeds)?,
    )?;
    Ok(())
}
