//! Dense matrix math, reverse-mode differentiation and Adam.

mod adam;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{sigmoid, softplus, Graph, Var};
pub use tensor::{dot, sq_dist, Tensor};

use crate::error::{Error, Result};

/// Squared input-gradient norms below this are treated as a zero gradient.
pub const DEGENERATE_NORM_SQ: f64 = 1e-24;

/// Named parameter tensors with a stable, insertion-ordered iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Total number of scalars across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.rows(), t.cols())))
                .collect(),
        }
    }

    /// Record every tensor as a leaf of `g`, in store order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| g.leaf(t.clone()))
            .collect()
    }

    pub fn narrowed(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.narrowed()))
                .collect(),
        }
    }

    /// Check that `other` has the same names and shapes in the same order.
    pub fn check_matches(&self, other: &ParamStore, context: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(context, self.len(), other.len()));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::dim(
                    format!("{context}: parameter `{na}`"),
                    format!("{na} {:?}", ta.shape()),
                    format!("{nb} {:?}", tb.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Parameters recorded on a graph, addressable by name.
#[derive(Clone, Debug)]
pub struct Bound {
    entries: Vec<(String, Var)>,
}

impl Bound {
    pub fn new(store: &ParamStore, g: &mut Graph) -> Self {
        let entries = store
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.leaf(t.clone())))
            .collect();
        Self { entries }
    }

    /// Panics when `name` was not bound; parameter names are fixed by the
    /// architecture, so a miss is a programming error.
    pub fn get(&self, name: &str) -> Var {
        self.try_get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }
}

/// Gradients collected from `g` for `vars`, zero-filled where `y` does not
/// depend on a variable, and checked for finiteness.
pub fn collect_grads(
    g: &mut Graph,
    y: Var,
    vars: &[Var],
    names: &ParamStore,
) -> Result<ParamStore> {
    let grads = g.grad(y, vars);
    let mut out = ParamStore::new();
    for ((name, t), gv) in names.iter().zip(grads) {
        let value = match gv {
            Some(v) => g.value(v).clone(),
            None => Tensor::zeros(t.rows(), t.cols()),
        };
        if !value.is_finite() {
            return Err(Error::NumericOverflow {
                what: format!("gradient of parameter `{name}`"),
                step: None,
            });
        }
        out.insert(name, value)?;
    }
    Ok(out)
}

pub fn check_loss(g: &Graph, loss: Var) -> Result<f64> {
    let value = g.value(loss);
    if value.shape() != (1, 1) {
        return Err(Error::dim("loss", "1x1", format!("{:?}", value.shape())));
    }
    let v = value.item();
    if !v.is_finite() {
        let origin = g
            .first_nonfinite()
            .map(|(i, op)| format!(" (first produced by `{op}` node {i})"))
            .unwrap_or_default();
        return Err(Error::NumericOverflow {
            what: format!("loss{origin}"),
            step: None,
        });
    }
    Ok(v)
}

/// Value and gradient of a scalar loss built over `params`.
///
/// `loss` receives the graph and one variable per parameter, in store order.
pub fn grad_scalar<F>(params: &ParamStore, loss: F) -> Result<(f64, ParamStore)>
where
    F: FnOnce(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let y = loss(&mut g, &vars)?;
    let value = check_loss(&g, y)?;
    let grads = collect_grads(&mut g, y, &vars, params)?;
    Ok((value, grads))
}

/// Gradient of the summed critic output with respect to the critic input.
pub fn input_gradient<F>(x: &Tensor, critic: F) -> Result<Tensor>
where
    F: FnOnce(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let scores = critic(&mut g, xv)?;
    let s = g.sum_all(scores);
    match g.grad(s, &[xv])[0] {
        Some(v) => {
            let out = g.value(v).clone();
            if !out.is_finite() {
                return Err(Error::NumericOverflow {
                    what: "critic input gradient".into(),
                    step: None,
                });
            }
            Ok(out)
        }
        None => Ok(Tensor::zeros(x.rows(), x.cols())),
    }
}

/// A gradient-penalty node and the number of rows whose input gradient
/// vanished.
pub struct PenaltyNode {
    pub value: Var,
    pub degenerate_rows: usize,
}

/// `mean_i (||d scores_i / d x_i|| - 1)^2`, built on `g` so it can be
/// differentiated with respect to the critic parameters.
///
/// Each row of `scores` must depend only on the matching row of `x`. Rows
/// whose gradient norm is below `1e-12` contribute a constant penalty of
/// one and pass no gradient.
pub fn penalty_node(g: &mut Graph, scores: Var, x: Var) -> PenaltyNode {
    let n = g.value(x).rows();
    let s = g.sum_all(scores);
    let Some(gx) = g.grad(s, &[x])[0] else {
        let value = g.scalar(1.0);
        return PenaltyNode {
            value,
            degenerate_rows: n,
        };
    };
    let sq = g.mul(gx, gx);
    let sq = g.sum_cols(sq);
    let degenerate_rows = g
        .value(sq)
        .data()
        .iter()
        .filter(|&&v| v < DEGENERATE_NORM_SQ)
        .count();
    let sq = g.clamp(sq, DEGENERATE_NORM_SQ, f64::INFINITY);
    let norm = g.powf(sq, 0.5);
    let dev = g.add_const(norm, -1.0);
    let dev2 = g.mul(dev, dev);
    let value = g.mean_all(dev2);
    PenaltyNode {
        value,
        degenerate_rows,
    }
}

#[derive(Clone, Debug)]
pub struct PenaltyGrad {
    pub penalty: f64,
    pub grads: ParamStore,
    /// Rows where the input gradient vanished and a zero parameter gradient
    /// was substituted.
    pub degenerate_rows: usize,
}

/// Gradient of the Lipschitz penalty at `x_tilde` with respect to every
/// critic parameter. `critic` maps (graph, parameter vars, input) to one
/// score per row.
pub fn grad_penalty_param_grad<F>(
    params: &ParamStore,
    x_tilde: &Tensor,
    critic: F,
) -> Result<PenaltyGrad>
where
    F: FnOnce(&mut Graph, &[Var], Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let xv = g.leaf(x_tilde.clone());
    let scores = critic(&mut g, &vars, xv)?;
    let node = penalty_node(&mut g, scores, xv);
    let penalty = check_loss(&g, node.value)?;
    let grads = collect_grads(&mut g, node.value, &vars, params)?;
    Ok(PenaltyGrad {
        penalty,
        grads,
        degenerate_rows: node.degenerate_rows,
    })
}
