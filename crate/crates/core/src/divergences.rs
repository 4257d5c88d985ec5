//! The Sharma-Mittal divergence family and the entropy loss built on it.
//!
//! Conventions: `SM_{g,b}(p||q) = ((sum_i p_i^g q_i^(1-g))^((1-b)/(1-g)) - 1) / (b - 1)`,
//! whose limits are
//!
//! * Renyi (`b -> 1`): `ln(sum p^g q^(1-g)) / (g - 1)`
//! * Tsallis (`b = g`): `(sum p^g q^(1-g) - 1) / (g - 1)`
//! * KL (`g, b -> 1`): `sum p ln(p / q)`
//! * Bhattacharyya: `-ln sum sqrt(p q)`, equal to half of Renyi at `g = 1/2`.
//!
//! Writing `R` for the Renyi divergence, `SM = expm1((b - 1) R) / (b - 1)`,
//! which is how the scalar path evaluates it: it is non-negative by
//! construction and stays accurate arbitrarily close to `g = 1` or `b = 1`.
//!
//! All inputs are floored at [`PROB_FLOOR`] and renormalized first.

use serde::{Deserialize, Serialize};

use crate::diffmath::{softplus, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;
/// Distance from a singular parameter value at which the graph path switches
/// to the closed-form limit.
pub const SINGULAR_EPS: f64 = 1e-5;
const SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SharmaMittal,
    Renyi,
    Tsallis,
    Kl,
    Bhattacharyya,
}

impl Family {
    pub fn uses_gamma(self) -> bool {
        matches!(self, Family::SharmaMittal | Family::Renyi | Family::Tsallis)
    }

    pub fn uses_beta(self) -> bool {
        self == Family::SharmaMittal
    }
}

/// Which argument the softmax takes in `D(. || .)` for the entropy loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    SoftmaxFirst,
    UniformFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivergenceSpec {
    pub family: Family,
    pub gamma: f64,
    pub beta: f64,
    pub learn_gamma: bool,
    pub learn_beta: bool,
    pub orientation: Orientation,
}

impl Default for DivergenceSpec {
    fn default() -> Self {
        Self {
            family: Family::SharmaMittal,
            gamma: 2.0,
            beta: 2.0,
            learn_gamma: true,
            learn_beta: true,
            orientation: Orientation::SoftmaxFirst,
        }
    }
}

impl DivergenceSpec {
    pub fn fixed(family: Family, gamma: f64, beta: f64) -> Self {
        Self {
            family,
            gamma,
            beta,
            learn_gamma: false,
            learn_beta: false,
            orientation: Orientation::SoftmaxFirst,
        }
    }

    pub fn kl() -> Self {
        Self::fixed(Family::Kl, 1.0, 1.0)
    }

    pub fn bhattacharyya() -> Self {
        Self::fixed(Family::Bhattacharyya, 0.5, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.family.uses_gamma() && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.family.uses_beta() && !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "beta must be finite, got {}",
                self.beta
            )));
        }
        if self.learns_gamma() && self.gamma == 1.0 {
            return Err(Error::invalid("a learnable gamma cannot start at 1"));
        }
        if self.learns_beta() && self.beta == 1.0 {
            return Err(Error::invalid("a learnable beta cannot start at 1"));
        }
        Ok(())
    }

    pub fn learns_gamma(&self) -> bool {
        self.learn_gamma && self.family.uses_gamma()
    }

    pub fn learns_beta(&self) -> bool {
        self.learn_beta && self.family.uses_beta()
    }

    pub fn is_learnable(&self) -> bool {
        self.learns_gamma() || self.learns_beta()
    }
}

/// Check a probability vector and return a floored, renormalized copy.
fn prepare(p: &[f64], what: &str) -> Result<Vec<f64>> {
    if p.len() < 2 {
        return Err(Error::invalid(format!(
            "{what}: need at least 2 entries, got {}",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!(
            "{what}: entries must be finite and >= 0"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::invalid(format!("{what}: entries sum to {s}, not 1")));
    }
    Ok(floor_renormalize(p))
}

pub fn floor_renormalize(p: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = p.iter().map(|v| v.clamp(PROB_FLOOR, 1.0)).collect();
    let s: f64 = floored.iter().sum();
    floored.into_iter().map(|v| v / s).collect()
}

fn prepare_pair(p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distributions differ in length: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok((prepare(p, "p")?, prepare(q, "q")?))
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Renyi divergence evaluated through `ln A = ln_1p(sum p expm1((g-1) ln(p/q)))`.
fn renyi_stable(p: &[f64], q: &[f64], gamma: f64) -> f64 {
    if gamma == 1.0 {
        return kl_raw(p, q);
    }
    let t = gamma - 1.0;
    let a_minus_1: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| a * (t * (a / b).ln()).exp_m1())
        .sum();
    a_minus_1.ln_1p() / t
}

fn sm_from_renyi(r: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        r
    } else {
        ((beta - 1.0) * r).exp_m1() / (beta - 1.0)
    }
}

/// Sharma-Mittal divergence `SM_{gamma,beta}(p || q)`.
pub fn sm_divergence(p: &[f64], q: &[f64], gamma: f64, beta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite() && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "invalid SM parameters ({gamma}, {beta})"
        )));
    }
    let (p, q) = prepare_pair(p, q)?;
    Ok(sm_from_renyi(renyi_stable(&p, &q, gamma), beta))
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    let (p, q) = prepare_pair(p, q)?;
    Ok(kl_raw(&p, &q))
}

fn power_sum(p: &[f64], q: &[f64], gamma: f64) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| a.powf(gamma) * b.powf(1.0 - gamma))
        .sum()
}

pub fn renyi_divergence(p: &[f64], q: &[f64], gamma: f64) -> Result<f64> {
    let (p, q) = prepare_pair(p, q)?;
    if gamma == 1.0 {
        return Ok(kl_raw(&p, &q));
    }
    Ok(power_sum(&p, &q, gamma).ln() / (gamma - 1.0))
}

pub fn tsallis_divergence(p: &[f64], q: &[f64], gamma: f64) -> Result<f64> {
    let (p, q) = prepare_pair(p, q)?;
    if gamma == 1.0 {
        return Ok(kl_raw(&p, &q));
    }
    Ok((power_sum(&p, &q, gamma) - 1.0) / (gamma - 1.0))
}

pub fn bhattacharyya_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    let (p, q) = prepare_pair(p, q)?;
    let bc: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(-bc.ln())
}

/// Closed form of the divergence named by `spec.family`.
pub fn special_case(p: &[f64], q: &[f64], spec: &DivergenceSpec) -> Result<f64> {
    spec.validate()?;
    match spec.family {
        Family::SharmaMittal => sm_divergence(p, q, spec.gamma, spec.beta),
        Family::Renyi => renyi_divergence(p, q, spec.gamma),
        Family::Tsallis => tsallis_divergence(p, q, spec.gamma),
        Family::Kl => kl_divergence(p, q),
        Family::Bhattacharyya => bhattacharyya_divergence(p, q),
    }
}

/// Divergence between a seen-class softmax and the uniform distribution.
pub fn entropy_loss(softmax: &[f64], spec: &DivergenceSpec) -> Result<f64> {
    let k = softmax.len();
    let uniform = vec![1.0 / k as f64; k];
    match spec.orientation {
        Orientation::SoftmaxFirst => special_case(softmax, &uniform, spec),
        Orientation::UniformFirst => special_case(&uniform, softmax, spec),
    }
}

// ── learnable parameters ────────────────────────────────────────────────

fn softplus_inv(y: f64) -> f64 {
    // y > 0
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// How a raw unconstrained parameter maps to its constrained value.
///
/// `Above`: `1 + softplus(u)`, values in `(1, inf)`.
/// `Below`: `1 / (1 + softplus(u))`, values in `(0, 1)` (gamma only).
/// `BelowAny`: `1 - softplus(u)`, values in `(-inf, 1)` (beta only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Above,
    Below,
    BelowAny,
}

impl Branch {
    fn forward(self, u: f64) -> f64 {
        match self {
            Branch::Above => 1.0 + softplus(u),
            Branch::Below => 1.0 / (1.0 + softplus(u)),
            Branch::BelowAny => 1.0 - softplus(u),
        }
    }

    fn inverse(self, value: f64) -> f64 {
        match self {
            Branch::Above => softplus_inv(value - 1.0),
            Branch::Below => softplus_inv(1.0 / value - 1.0),
            Branch::BelowAny => softplus_inv(1.0 - value),
        }
    }

    fn graph(self, g: &mut Graph, u: Var) -> Var {
        let sp = g.softplus(u);
        match self {
            Branch::Above => g.add_const(sp, 1.0),
            Branch::Below => {
                let d = g.add_const(sp, 1.0);
                g.recip(d)
            }
            Branch::BelowAny => {
                let n = g.neg(sp);
                g.add_const(n, 1.0)
            }
        }
    }
}

pub const GAMMA_RAW: &str = "gamma_raw";
pub const BETA_RAW: &str = "beta_raw";

/// The entropy-loss parameters: fixed settings plus the raw learnable
/// tensors, which are only present when learned.
#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceParams {
    spec: DivergenceSpec,
    gamma_branch: Branch,
    beta_branch: Branch,
    store: ParamStore,
}

impl DivergenceParams {
    pub fn new(spec: DivergenceSpec) -> Result<Self> {
        spec.validate()?;
        let gamma_branch = if spec.gamma > 1.0 {
            Branch::Above
        } else {
            Branch::Below
        };
        let beta_branch = if spec.beta > 1.0 {
            Branch::Above
        } else {
            Branch::BelowAny
        };
        let mut store = ParamStore::new();
        if spec.learns_gamma() {
            store.insert(GAMMA_RAW, Tensor::scalar(gamma_branch.inverse(spec.gamma)))?;
        }
        if spec.learns_beta() {
            store.insert(BETA_RAW, Tensor::scalar(beta_branch.inverse(spec.beta)))?;
        }
        Ok(Self {
            spec,
            gamma_branch,
            beta_branch,
            store,
        })
    }

    /// Rebuild from saved raw values.
    pub fn with_store(spec: DivergenceSpec, store: ParamStore) -> Result<Self> {
        let mut out = Self::new(spec)?;
        out.store.check_matches(&store, "divergence parameters")?;
        out.store = store;
        Ok(out)
    }

    pub fn initial_spec(&self) -> &DivergenceSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn gamma(&self) -> f64 {
        match self.store.get(GAMMA_RAW) {
            Some(t) => self.gamma_branch.forward(t.item()),
            None => self.spec.gamma,
        }
    }

    pub fn beta(&self) -> f64 {
        match self.store.get(BETA_RAW) {
            Some(t) => self.beta_branch.forward(t.item()),
            None => self.spec.beta,
        }
    }

    /// The spec with the current learned values filled in.
    pub fn current(&self) -> DivergenceSpec {
        DivergenceSpec {
            gamma: self.gamma(),
            beta: self.beta(),
            ..self.spec
        }
    }

    /// Record the raw parameters on `g`. Constants are leaves too, so that
    /// every bound quantity is a `1 x 1` node.
    pub fn bind(&self, g: &mut Graph) -> BoundDivergence {
        let vars = self.store.bind(g);
        let mut it = vars.iter().copied();
        let gamma = if self.spec.learns_gamma() {
            let u = it.next().expect("gamma_raw bound");
            self.gamma_branch.graph(g, u)
        } else {
            g.scalar(self.spec.gamma)
        };
        let beta = if self.spec.learns_beta() {
            let v = it.next().expect("beta_raw bound");
            self.beta_branch.graph(g, v)
        } else {
            g.scalar(self.spec.beta)
        };
        BoundDivergence {
            family: self.spec.family,
            orientation: self.spec.orientation,
            gamma,
            beta,
            vars,
        }
    }
}

/// Divergence parameters recorded on a graph.
#[derive(Clone, Debug)]
pub struct BoundDivergence {
    pub family: Family,
    pub orientation: Orientation,
    pub gamma: Var,
    pub beta: Var,
    /// Raw learnable variables in store order.
    pub vars: Vec<Var>,
}

/// The closed form the graph path evaluates for given parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    SharmaMittal,
    /// SM with `gamma -> 1`: `expm1((b-1) KL) / (b-1)`.
    SharmaMittalUnitGamma,
    Renyi,
    Tsallis,
    Kl,
    Bhattacharyya,
}

pub fn route(family: Family, gamma: f64, beta: f64) -> Route {
    let near = |a: f64, b: f64| (a - b).abs() < SINGULAR_EPS;
    match family {
        Family::SharmaMittal => match (near(gamma, 1.0), near(beta, 1.0)) {
            (true, true) => Route::Kl,
            (false, true) => Route::Renyi,
            (true, false) => Route::SharmaMittalUnitGamma,
            (false, false) if near(beta, gamma) => Route::Tsallis,
            (false, false) => Route::SharmaMittal,
        },
        Family::Renyi | Family::Tsallis if near(gamma, 1.0) => Route::Kl,
        Family::Renyi => Route::Renyi,
        Family::Tsallis => Route::Tsallis,
        Family::Kl => Route::Kl,
        Family::Bhattacharyya => Route::Bhattacharyya,
    }
}

/// Floor at [`PROB_FLOOR`] and renormalize each row, on the graph.
pub fn floor_rows(g: &mut Graph, p: Var) -> Var {
    let f = g.clamp(p, PROB_FLOOR, 1.0);
    let s = g.sum_cols(f);
    let r = g.recip(s);
    g.mul_col(f, r)
}

/// Row-wise divergence `D(p_i || q_i)` as an `n x 1` column.
pub fn divergence_rows(g: &mut Graph, p: Var, q: Var, d: &BoundDivergence) -> Var {
    let p = floor_rows(g, p);
    let q = floor_rows(g, q);
    let logp = g.log(p);
    let logq = g.log(q);
    let lr = g.sub(logp, logq);
    let gamma = g.value(d.gamma).item();
    let beta = g.value(d.beta).item();

    let kl = |g: &mut Graph| {
        let t = g.mul(p, lr);
        g.sum_cols(t)
    };
    // A - 1 = sum p expm1((g - 1) ln(p/q)), accurate when p is close to q
    let power_sum_m1 = |g: &mut Graph| {
        let gm1 = g.add_const(d.gamma, -1.0);
        let t = g.mul_scalar(lr, gm1);
        let t = g.exp_m1(t);
        let t = g.mul(p, t);
        g.sum_cols(t)
    };
    // expm1((b-1) x) / (b-1)
    let sm_wrap = |g: &mut Graph, x: Var| {
        let bm1 = g.add_const(d.beta, -1.0);
        let t = g.mul_scalar(x, bm1);
        let t = g.exp_m1(t);
        let inv = g.recip(bm1);
        g.mul_scalar(t, inv)
    };
    let inv_gm1 = |g: &mut Graph| {
        let gm1 = g.add_const(d.gamma, -1.0);
        g.recip(gm1)
    };

    match route(d.family, gamma, beta) {
        Route::Kl => kl(g),
        Route::Bhattacharyya => {
            // -ln sum sqrt(pq) = -ln1p(sum p expm1(-ln(p/q) / 2))
            let t = g.scale(lr, -0.5);
            let t = g.exp_m1(t);
            let t = g.mul(p, t);
            let s = g.sum_cols(t);
            let l = g.ln_1p(s);
            g.neg(l)
        }
        Route::Renyi => {
            let am1 = power_sum_m1(g);
            let la = g.ln_1p(am1);
            let inv = inv_gm1(g);
            g.mul_scalar(la, inv)
        }
        Route::Tsallis => {
            let am1 = power_sum_m1(g);
            let inv = inv_gm1(g);
            g.mul_scalar(am1, inv)
        }
        Route::SharmaMittalUnitGamma => {
            let k = kl(g);
            sm_wrap(g, k)
        }
        Route::SharmaMittal => {
            let am1 = power_sum_m1(g);
            let la = g.ln_1p(am1);
            let inv = inv_gm1(g);
            let r = g.mul_scalar(la, inv);
            sm_wrap(g, r)
        }
    }
}

/// Per-row entropy loss of a softmax batch (`n x K`) against the uniform
/// distribution, as an `n x 1` column.
pub fn entropy_rows(g: &mut Graph, softmax: Var, d: &BoundDivergence) -> Var {
    let (n, k) = g.shape(softmax);
    let u = g.leaf(Tensor::filled(n, k, 1.0 / k as f64));
    match d.orientation {
        Orientation::SoftmaxFirst => divergence_rows(g, softmax, u, d),
        Orientation::UniformFirst => divergence_rows(g, u, softmax, d),
    }
}

#[derive(Clone, Debug)]
pub struct EntropyGrad {
    pub value: f64,
    pub d_softmax: Vec<f64>,
    /// Gradient with respect to the raw learnable parameters, in store order.
    pub d_params: ParamStore,
}

/// Entropy loss and its gradient with respect to the softmax entries and
/// the raw divergence parameters.
pub fn entropy_loss_grad(softmax: &[f64], params: &DivergenceParams) -> Result<EntropyGrad> {
    prepare(softmax, "softmax")?;
    let mut g = Graph::new();
    let s = g.leaf(Tensor::row(softmax));
    let bound = params.bind(&mut g);
    let rows = entropy_rows(&mut g, s, &bound);
    let y = g.sum_all(rows);
    let value = g.value(y).item();
    if !value.is_finite() {
        return Err(Error::NumericOverflow {
            what: "entropy loss".into(),
            step: None,
        });
    }
    let mut wrt = vec![s];
    wrt.extend(&bound.vars);
    let grads = g.grad(y, &wrt);
    let d_softmax = match grads[0] {
        Some(v) => g.value(v).data().to_vec(),
        None => vec![0.0; softmax.len()],
    };
    let mut d_params = ParamStore::new();
    for ((name, _), gv) in params.store().iter().zip(&grads[1..]) {
        let t = gv
            .map(|v| g.value(v).clone())
            .unwrap_or(Tensor::scalar(0.0));
        d_params.insert(name, t)?;
    }
    Ok(EntropyGrad {
        value,
        d_softmax,
        d_params,
    })
}
