//! Hallucinated semantic descriptors: `t_h = alpha t_a + (1 - alpha) t_b`
//! for two distinct seen classes `a`, `b`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededStream;

/// Where the mixing coefficient `alpha` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub enum HallucinationPolicy {
    /// Uniform over a union of disjoint open intervals.
    Intervals(Vec<(f64, f64)>),
    /// Always `alpha = 0.5`.
    Fixed,
    /// `alpha ~ N(0.5, (0.5/3)^2)`.
    Gaussian,
}

pub const PRESET_NAMES: [&str; 7] = [
    "interpolate",
    "neg_extrapolate",
    "pos_extrapolate",
    "neg_pos",
    "all",
    "fixed",
    "gaussian",
];

const INTERP: (f64, f64) = (0.2, 0.8);
const NEG: (f64, f64) = (-0.5, -0.2);
const POS: (f64, f64) = (1.2, 1.5);

impl Default for HallucinationPolicy {
    fn default() -> Self {
        Self::interpolate()
    }
}

impl HallucinationPolicy {
    pub fn interpolate() -> Self {
        Self::Intervals(vec![INTERP])
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "interpolate" => Self::interpolate(),
            "neg_extrapolate" => Self::Intervals(vec![NEG]),
            "pos_extrapolate" => Self::Intervals(vec![POS]),
            "neg_pos" => Self::Intervals(vec![NEG, POS]),
            "all" => Self::Intervals(vec![NEG, INTERP, POS]),
            "fixed" => Self::Fixed,
            "gaussian" => Self::Gaussian,
            other => {
                return Err(Error::invalid(format!(
                    "unknown hallucination preset {other:?}; expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        })
    }

    /// Build an interval policy, sorting the intervals and checking them.
    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::invalid(
                "hallucination policy needs at least one interval",
            ));
        }
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad interval ({lo}, {hi})")));
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::invalid(format!(
                    "intervals ({}, {}) and ({}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self::Intervals(intervals))
    }

    /// Name of the matching preset, if any.
    pub fn preset_name(&self) -> Option<&'static str> {
        PRESET_NAMES
            .iter()
            .copied()
            .find(|n| Self::preset(n).is_ok_and(|p| &p == self))
    }

    pub fn sample_alpha(&self, rng: &mut SeededStream) -> f64 {
        match self {
            Self::Fixed => 0.5,
            Self::Gaussian => 0.5 + (0.5 / 3.0) * rng.normal(),
            Self::Intervals(iv) => {
                let total: f64 = iv.iter().map(|(lo, hi)| hi - lo).sum();
                loop {
                    // one uniform mapped onto the concatenated support
                    let mut u = rng.uniform() * total;
                    let mut alpha = iv[iv.len() - 1].1;
                    for &(lo, hi) in iv {
                        let w = hi - lo;
                        if u < w {
                            alpha = lo + u;
                            break;
                        }
                        u -= w;
                    }
                    // open intervals: endpoints are redrawn
                    if iv.iter().any(|&(lo, hi)| alpha > lo && alpha < hi) {
                        return alpha;
                    }
                }
            }
        }
    }
}

impl fmt::Display for HallucinationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed => write!(f, "alpha=0.5"),
            Self::Gaussian => write!(f, "N(0.5, 0.5/3)"),
            Self::Intervals(iv) => {
                let parts: Vec<String> =
                    iv.iter().map(|(lo, hi)| format!("U({lo}, {hi})")).collect();
                write!(f, "{}", parts.join(" U "))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PolicyRepr {
    Name(String),
    Intervals(Vec<[f64; 2]>),
}

impl TryFrom<PolicyRepr> for HallucinationPolicy {
    type Error = Error;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        match r {
            PolicyRepr::Name(n) => Self::preset(&n),
            PolicyRepr::Intervals(v) => {
                Self::from_intervals(v.into_iter().map(|[a, b]| (a, b)).collect())
            }
        }
    }
}

impl From<HallucinationPolicy> for PolicyRepr {
    fn from(p: HallucinationPolicy) -> Self {
        if let Some(name) = p.preset_name() {
            return PolicyRepr::Name(name.to_string());
        }
        match p {
            HallucinationPolicy::Intervals(iv) => {
                PolicyRepr::Intervals(iv.into_iter().map(|(a, b)| [a, b]).collect())
            }
            HallucinationPolicy::Fixed => PolicyRepr::Name("fixed".into()),
            HallucinationPolicy::Gaussian => PolicyRepr::Name("gaussian".into()),
        }
    }
}

/// A batch of hallucinated descriptors with the draws that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct HallucinatedBatch {
    pub text: Tensor,
    pub alphas: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn combine(ta: &[f64], tb: &[f64], alpha: f64) -> Vec<f64> {
    ta.iter()
        .zip(tb)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect()
}

/// Draw `batch_size` rows, each with its own class pair and `alpha`.
/// `seen_semantics` holds one descriptor per row.
pub fn sample_hallucinated_batch(
    seen_semantics: &Tensor,
    policy: &HallucinationPolicy,
    batch_size: usize,
    rng: &mut SeededStream,
) -> Result<HallucinatedBatch> {
    let k = seen_semantics.rows();
    if k < 2 {
        return Err(Error::invalid(format!(
            "hallucination needs at least 2 seen classes, got {k}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::invalid("hallucinated batch size must be >= 1"));
    }
    let d = seen_semantics.cols();
    let mut data = Vec::with_capacity(batch_size * d);
    let mut alphas = Vec::with_capacity(batch_size);
    let mut pairs = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (a, b) = rng.distinct_pair(k);
        let alpha = policy.sample_alpha(rng);
        data.extend(combine(
            seen_semantics.row_slice(a),
            seen_semantics.row_slice(b),
            alpha,
        ));
        alphas.push(alpha);
        pairs.push((a, b));
    }
    Ok(HallucinatedBatch {
        text: Tensor::from_vec(batch_size, d, data)?,
        alphas,
        pairs,
    })
}

pub fn sample_hallucinated_text(
    seen_semantics: &Tensor,
    policy: &HallucinationPolicy,
    batch_size: usize,
    rng: &mut SeededStream,
) -> Result<Tensor> {
    Ok(sample_hallucinated_batch(seen_semantics, policy, batch_size, rng)?.text)
}
