//! CSV tables. Reals use the shortest representation that round-trips, so
//! equal inputs give equal bytes.

use cizsl_core::evaluation::{EvalReport, RetrievalRow, SuPoint};
use cizsl_core::training::{AblationRow, HistoryRecord, LambdaCurve, Selection, METRIC_NAMES};

use crate::error::Result;

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn table<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?)
}

/// `0.25` becomes `25`, `1` becomes `100`.
fn percent(fraction: f64) -> String {
    num(fraction * 100.0)
}

const HISTORY_HEADER: [&str; 8] = [
    "step",
    "loss_g",
    "loss_d",
    "wasserstein",
    "val_top1",
    "val_auc",
    "gamma",
    "beta",
];

fn history_fields(r: &HistoryRecord) -> Vec<String> {
    vec![
        r.step.to_string(),
        num(r.loss_g),
        num(r.loss_d),
        num(r.wasserstein),
        num(r.val_top1),
        num(r.val_auc),
        num(r.gamma),
        num(r.beta),
    ]
}

pub fn history_csv(history: &[HistoryRecord]) -> Result<Vec<u8>> {
    table(&HISTORY_HEADER, history.iter().map(history_fields))
}

/// One row: headline metrics, then precision and average precision per
/// retrieval fraction.
pub fn eval_csv(r: &EvalReport) -> Result<Vec<u8>> {
    let mut header: Vec<String> = [
        "top1_unseen",
        "su_auc",
        "harmonic_mean",
        "seen_acc",
        "unseen_acc",
        "best_harmonic_mean",
    ]
    .map(String::from)
    .to_vec();
    let mut row = vec![
        num(r.top1_unseen),
        num(r.su_auc),
        num(r.harmonic_mean),
        num(r.seen_acc),
        num(r.unseen_acc),
        num(r.best_harmonic_mean),
    ];
    for rr in &r.retrieval {
        header.push(format!("map_{}", percent(rr.fraction)));
        header.push(format!("ap_{}", percent(rr.fraction)));
        row.push(num(rr.precision));
        row.push(num(rr.average_precision));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(&header, [row])
}

pub fn su_curve_csv(points: &[SuPoint]) -> Result<Vec<u8>> {
    table(
        &["bias", "seen_acc", "unseen_acc"],
        points
            .iter()
            .map(|p| [num(p.bias), num(p.seen_acc), num(p.unseen_acc)]),
    )
}

pub fn retrieval_csv(rows: &[RetrievalRow]) -> Result<Vec<u8>> {
    table(
        &["fraction", "map", "average_precision"],
        rows.iter()
            .map(|r| [num(r.fraction), num(r.precision), num(r.average_precision)]),
    )
}

/// Highest validation AUC of one curve; the earliest record wins ties.
pub fn best_record(history: &[HistoryRecord]) -> Option<&HistoryRecord> {
    history
        .iter()
        .fold(None, |best: Option<&HistoryRecord>, r| match best {
            Some(b) if b.val_auc >= r.val_auc => Some(b),
            _ => Some(r),
        })
}

/// One row per (seed, lambda) cell.
pub fn sweep_csv(per_seed: &[(u64, Selection)]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (seed, sel) in per_seed {
        for c in &sel.curves {
            let best = best_record(&c.history);
            let last = c.history.last();
            let pick =
                |r: Option<&HistoryRecord>, f: fn(&HistoryRecord) -> f64| r.map_or(f64::NAN, f);
            rows.push(vec![
                seed.to_string(),
                num(c.lambda),
                best.map_or(String::new(), |r| r.step.to_string()),
                num(pick(best, |r| r.val_auc)),
                num(pick(best, |r| r.val_top1)),
                num(pick(last, |r| r.val_auc)),
                num(pick(last, |r| r.val_top1)),
            ]);
        }
    }
    table(
        &[
            "seed",
            "lambda",
            "best_step",
            "best_val_auc",
            "best_val_top1",
            "final_val_auc",
            "final_val_top1",
        ],
        rows,
    )
}

pub fn curves_csv(per_seed: &[(u64, Selection)]) -> Result<Vec<u8>> {
    let mut header = vec!["seed", "lambda"];
    header.extend(HISTORY_HEADER);
    let rows = per_seed.iter().flat_map(|(seed, sel)| {
        sel.curves.iter().flat_map(move |c: &LambdaCurve| {
            c.history.iter().map(move |r| {
                let mut f = vec![seed.to_string(), num(c.lambda)];
                f.extend(history_fields(r));
                f
            })
        })
    });
    table(&header, rows)
}

pub fn winner_csv(per_seed: &[(u64, Selection)]) -> Result<Vec<u8>> {
    table(
        &["seed", "best_lambda", "best_step", "best_val_auc"],
        per_seed.iter().map(|(seed, s)| {
            [
                seed.to_string(),
                num(s.best_lambda),
                s.best_step.to_string(),
                num(s.best_auc),
            ]
        }),
    )
}

/// One row per suite entry with mean and sample deviation over seeds.
pub fn ablation_csv(rows: &[AblationRow]) -> Result<Vec<u8>> {
    let mut header = vec!["label".to_string(), "n_seeds".to_string()];
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(
        &header,
        rows.iter().map(|r| {
            let mut f = vec![r.label.clone(), r.runs.len().to_string()];
            for (m, s) in r.mean.iter().zip(&r.std) {
                f.push(num(*m));
                f.push(num(*s));
            }
            f
        }),
    )
}

pub fn ablation_runs_csv(rows: &[AblationRow], seeds: &[u64]) -> Result<Vec<u8>> {
    let mut header = vec!["label", "seed"];
    header.extend(METRIC_NAMES);
    table(
        &header,
        rows.iter().flat_map(|r| {
            r.runs.iter().zip(seeds).map(move |(m, seed)| {
                let mut f = vec![r.label.clone(), seed.to_string()];
                f.extend(m.values().map(num));
                f
            })
        }),
    )
}
