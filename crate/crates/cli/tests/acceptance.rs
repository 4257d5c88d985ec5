//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit
//! if any asserted criterion failed. The directional check is reported
//! only.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cizsl_cli::{run, Cli};
use cizsl_core::dataio::{make_synthetic, SplitMode, SyntheticSpec};
use cizsl_core::training::{evaluate_run, train, TrainConfig};
use clap::Parser;

use support::grad::{FdReport, GradCase};

struct Outcome {
    passed: bool,
    detail: String,
}

/// Name, whether a failure fails the run, and the check.
type Criterion<'a> = (&'static str, bool, Box<dyn Fn() -> Outcome + 'a>);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn divergence_suite() -> Outcome {
    let t = Instant::now();
    let least = support::divergence::min_over_random_pairs(1000, 11);
    let identity = support::divergence::max_self_divergence(1000, 12);
    let gaps = support::divergence::limit_gaps(200, 13);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        least >= 0.0 && identity <= 1e-10 && gaps.max() <= 1e-5 && secs < 10.0,
        format!(
            "min over 1000 pairs {least:e}, identity {identity:e}, limit gaps renyi {:e} tsallis {:e} kl {:e} bhattacharyya {:e}, {secs:.1}s",
            gaps.renyi, gaps.tsallis, gaps.kl, gaps.bhattacharyya
        ),
    )
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for case in GradCase::ALL {
        let mut total = FdReport::default();
        let mut failing = 0;
        for seed in 0..100 {
            let r = case.run(seed);
            if r.worst >= case.tolerance() {
                failing += 1;
            }
            total = total.merge(r);
        }
        let skips_ok = total.skipped * 100 <= total.probes;
        ok &= failing == 0 && skips_ok;
        parts.push(format!(
            "{} {:.1e}/{:.0e} ({} skipped of {}{})",
            case.name(),
            total.worst,
            case.tolerance(),
            total.skipped,
            total.probes,
            if failing > 0 {
                format!(", {failing} instances over")
            } else {
                String::new()
            }
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ok && secs < 120.0,
        format!("{}; {secs:.1}s", parts.join(", ")),
    )
}

fn ablation_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut missing = 0;
    for seed in 0..50 {
        match support::ablation::reduction_gap(seed) {
            Some(g) => worst = worst.max(g),
            None => missing += 1,
        }
    }
    outcome(
        missing == 0 && worst <= 1e-12,
        format!("largest term gap {worst:e} over 50 batches"),
    )
}

fn default_benchmark(seed: u64, split_mode: SplitMode) -> cizsl_core::dataio::ZslDataset {
    make_synthetic(&SyntheticSpec {
        seed,
        split_mode,
        ..SyntheticSpec::default()
    })
    .expect("default synthetic spec")
}

fn end_to_end() -> Outcome {
    let mut hits = 0;
    let mut slowest = Duration::ZERO;
    let mut top1s = Vec::new();
    for seed in 0..5 {
        let ds = default_benchmark(seed, SplitMode::Easy);
        let mut cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        cfg.fit_to(&ds);
        let t = Instant::now();
        let top1 = train(&ds, &cfg)
            .and_then(|out| evaluate_run(&out, &ds, &cfg))
            .map_or(f64::NAN, |r| r.top1_unseen);
        slowest = slowest.max(t.elapsed());
        hits += usize::from(top1 >= 0.75);
        top1s.push(format!("{top1:.3}"));
    }
    outcome(
        hits >= 4 && slowest <= Duration::from_secs(600),
        format!(
            "unseen Top-1 [{}], {hits}/5 at or above 0.75, slowest run {:.1}s",
            top1s.join(", "),
            slowest.as_secs_f64()
        ),
    )
}

fn metric_oracles() -> Outcome {
    let auc = support::metrics::oracle_auc_gap(50, 21);
    let grid = support::metrics::grid_refinement_gap(20, 51, 501, 22);
    let hm = support::metrics::harmonic_mean_gap(1000, 23);
    let retrieval = support::metrics::retrieval_gap(50, 24);
    outcome(
        auc <= 1e-9 && grid <= 0.02 && hm <= 1e-12 && retrieval <= 1e-12,
        format!("oracle AUC gap {auc:e}, grid 51 vs 501 gap {grid:.4}, harmonic gap {hm:e}, retrieval gap {retrieval:e}"),
    )
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("cizsl").chain(args.iter().copied()))
        .expect("arguments parse")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const SHORT_RUN: [&str; 4] = ["--steps", "100", "--set", "eval_every=100"];

/// Table name, suite, expected row labels.
const TABLES: [(&str, &str, &[&str]); 5] = [
    (
        "ablation study",
        "cizsl-v1-ablation",
        &[
            "CIZSL SM-Entropy (ours final)",
            "CIZSL SM-Entropy (replace 2nd term in L_G^C by classifying t^h as new class)",
            "CIZSL SM-Entropy (minus 1st term in L_G^C)",
            "CIZSL SM-Entropy (minus 2nd term in L_G^C)",
            "CIZSL Bhattacharyya-Entropy (gamma=0.5, beta=0.5)",
            "CIZSL Renyi-Entropy (beta -> 1)",
            "CIZSL KL-Entropy (gamma -> 1, beta -> 1)",
            "CIZSL Tsallis-Entropy (beta = gamma)",
            "CIZSL SM-Entropy (minus 1st and 2nd terms in L_G^C) = GAZSL",
        ],
    ),
    (
        "hallucination policies",
        "hallucination-policies",
        &[
            "Interpolate",
            "Negative Extrapolate",
            "Positive Extrapolate",
            "Neg&Pos Extrapolate",
            "Interpolate & Extrapolate",
        ],
    ),
    (
        "semantic guided categorizer",
        "segc",
        &["CIZSL-v2", "CIZSL-v2+SeGC"],
    ),
    (
        "categorizer plus real/fake loss",
        "segc-rf",
        &[
            "CIZSL-v2",
            "CIZSL-v2+R/F Loss for t^h",
            "CIZSL-v2+SeGC",
            "CIZSL-v2+SeGC+R/F loss",
        ],
    ),
    (
        "hallucinated categorization",
        "hallucinated-categorization",
        &["K^u=100 (w/o)", "K^u=100 (w/)"],
    ),
];

fn table_reproduction(root: &Path, data: &Path) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (title, suite, labels) in TABLES {
        let out = root.join(format!("table-{suite}"));
        let mut args = vec![
            "ablate",
            "--data",
            s(data),
            "--suite",
            suite,
            "--out",
            s(&out),
        ];
        args.extend(SHORT_RUN);
        let rows: Vec<csv::StringRecord> = match run(cli(&args)) {
            Ok(_) => csv::Reader::from_path(out.join("ablation.csv"))
                .and_then(|mut r| r.records().collect())
                .unwrap_or_default(),
            Err(e) => {
                notes.push(format!("{title}: {e}"));
                ok = false;
                continue;
            }
        };
        let got: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
        let numeric = rows.iter().all(|r| {
            r.iter()
                .skip(1)
                .all(|v| v.parse::<f64>().is_ok_and(f64::is_finite))
        });
        let matches = got == labels && numeric;
        ok &= matches;
        notes.push(format!(
            "{title} {}/{} rows{}",
            got.len(),
            labels.len(),
            if matches { "" } else { " MISMATCH" }
        ));
    }
    outcome(ok, notes.join(", "))
}

/// Every CSV under `dir`, keyed by relative path.
fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)
            .expect("readable output")
            .map(|e| e.expect("entry"))
        {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let bytes = fs::read(&p).expect("readable csv");
                found.push((p.strip_prefix(dir).expect("under dir").to_path_buf(), bytes));
            }
        }
    }
    found.sort();
    found
}

fn determinism(root: &Path) -> Outcome {
    let mut runs: Vec<Vec<(PathBuf, Vec<u8>)>> = Vec::new();
    let mut failure = None;
    for pass in ["first", "second"] {
        let base = root.join(format!("determinism-{pass}"));
        let p = |n: &str| base.join(n);
        let (data, t, ck) = (p("data"), p("train"), p("train").join("checkpoint"));
        let mut commands: Vec<Vec<&str>> = vec![
            vec![
                "synth",
                "--samples-per-class",
                "40",
                "--seed",
                "5",
                "--csv",
                "--out",
                s(&data),
            ],
            vec!["train", "--data", s(&data), "--out", s(&t)],
            vec!["eval", "--checkpoint", s(&ck), "--data", s(&data)],
            vec!["retrieve", "--checkpoint", s(&ck), "--data", s(&data)],
            vec![
                "sweep",
                "--data",
                s(&data),
                "--lambda-grid",
                "0,0.1",
                "--seeds",
                "0,1",
            ],
            vec![
                "ablate",
                "--data",
                s(&data),
                "--suite",
                "segc",
                "--seeds",
                "0,1",
            ],
        ];
        let outs = [p("eval"), p("retrieve"), p("sweep"), p("ablate")];
        for (c, o) in commands[2..].iter_mut().zip(&outs) {
            c.extend(["--out", s(o)]);
        }
        for c in &mut commands[1..] {
            if matches!(c[0], "train" | "sweep" | "ablate") {
                c.extend(SHORT_RUN);
            }
        }
        for c in &commands {
            if let Err(e) = run(cli(c)) {
                failure = Some(format!("{} failed: {e}", c[0]));
            }
        }
        runs.push(csv_files(&base));
    }
    if let Some(f) = failure {
        return outcome(false, f);
    }
    let same = runs[0] == runs[1];
    outcome(
        same && runs[0].len() >= 10,
        format!(
            "{} CSV files across synth, train, eval, retrieve, sweep, ablate; {}",
            runs[0].len(),
            if same { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn directional() -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let ds = default_benchmark(seed, SplitMode::Hard);
        let auc = |lambda: f64| {
            let mut cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            cfg.loss.lambda_creativity = lambda;
            cfg.fit_to(&ds);
            train(&ds, &cfg)
                .and_then(|out| evaluate_run(&out, &ds, &cfg))
                .map_or(f64::NAN, |r| r.su_auc)
        };
        let lambda = TrainConfig::default().loss.lambda_creativity;
        let (with, without) = (auc(lambda), auc(0.0));
        wins += usize::from(with > without);
        pairs.push(format!("{with:.3} vs {without:.3}"));
    }
    let holds = wins >= 3;
    outcome(
        holds,
        format!(
            "hard-split SU-AUC lambda>0 vs lambda=0 [{}]: higher in {wins}/5 seeds{}",
            pairs.join(", "),
            if holds {
                ""
            } else {
                "; direction does NOT hold"
            }
        ),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let root = scratch.path();
    let data = root.join("benchmark");
    run(cli(&["synth", "--out", s(&data)])).expect("default benchmark");

    let criteria: [Criterion; 8] = [
        ("1 divergence suite", true, Box::new(divergence_suite)),
        ("2 gradient suite", true, Box::new(gradient_suite)),
        ("3 ablation identity", true, Box::new(ablation_identity)),
        ("4 end-to-end learning", true, Box::new(end_to_end)),
        ("5 metric oracles", true, Box::new(metric_oracles)),
        (
            "6 table reproduction",
            true,
            Box::new(|| table_reproduction(root, &data)),
        ),
        ("7 determinism", true, Box::new(|| determinism(root))),
        ("8 directional (reported)", false, Box::new(directional)),
    ];
    let mut failed = 0;
    for (name, asserted, check) in &criteria {
        let o = check();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {name}: {}", o.detail);
        if *asserted && !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} asserted criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
