//! Desk-scale models with hand-written gradients.
//!
//! Every layer is dense: `out = W x + b` with `W` stored row-major as
//! `(out_dim, in_dim)`. A layer's gradient is flattened as all weights
//! (row-major) followed by the bias, and that flat order is the wire order
//! used by the codec.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{keyed_rng, Stream};
use crate::{Error, Result};

/// Half-width of the uniform initialisation interval.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Single dense layer, one output, mean squared error.
    Linear,
    /// Single dense layer, softmax cross-entropy.
    Logistic,
    /// Dense -> tanh -> dense, softmax cross-entropy.
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(name: &str, out_dim: usize, in_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }
}

/// Ordered `(layer name, flat length)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout(pub Vec<(String, usize)>);

impl Layout {
    pub fn total_len(&self) -> usize {
        self.0.iter().map(|(_, n)| n).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|(n, _)| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    feature_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
}

impl Model {
    /// Builds a model with every parameter drawn uniformly from
    /// `[-INIT_RANGE, INIT_RANGE]` using the init stream of `seed`.
    ///
    /// `output_dim` is the class count for logistic/MLP models and must be 1
    /// for linear models. `hidden_dim` is required for MLPs and ignored
    /// otherwise.
    pub fn new(
        kind: ModelKind,
        feature_dim: usize,
        output_dim: usize,
        hidden_dim: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(kind, feature_dim, output_dim, hidden_dim)?;
        let mut rng = keyed_rng(seed, Stream::Init, &[]);
        for layer in &mut model.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.random_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        Ok(model)
    }

    pub fn zeros(
        kind: ModelKind,
        feature_dim: usize,
        output_dim: usize,
        hidden_dim: Option<usize>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        let layers = match kind {
            ModelKind::Linear => {
                if output_dim != 1 {
                    return Err(Error::Config("linear models have exactly one output".into()));
                }
                vec![Layer::zeros("fc", 1, feature_dim)]
            }
            ModelKind::Logistic => {
                if output_dim < 2 {
                    return Err(Error::Config("logistic models need at least two classes".into()));
                }
                vec![Layer::zeros("fc", output_dim, feature_dim)]
            }
            ModelKind::Mlp => {
                let hidden = hidden_dim
                    .filter(|&h| h > 0)
                    .ok_or_else(|| Error::Config("mlp requires a positive hidden_dim".into()))?;
                if output_dim < 2 {
                    return Err(Error::Config("mlp models need at least two classes".into()));
                }
                vec![
                    Layer::zeros("fc1", hidden, feature_dim),
                    Layer::zeros("fc2", output_dim, hidden),
                ]
            }
        };
        Ok(Self {
            kind,
            feature_dim,
            output_dim,
            layers,
        })
    }

    /// Model shaped for `data`: one output for linear models, otherwise one
    /// output per class.
    pub fn for_dataset(
        kind: ModelKind,
        data: &Dataset,
        hidden_dim: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let output_dim = match kind {
            ModelKind::Linear => 1,
            _ => data.num_classes().ok_or_else(|| {
                Error::Config(format!("{kind} model needs class labels, dataset is regression"))
            })?,
        };
        Self::new(kind, data.feature_dim(), output_dim, hidden_dim, seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layout(&self) -> Layout {
        Layout(
            self.layers
                .iter()
                .map(|l| (l.name.clone(), l.param_count()))
                .collect(),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened in layout order, grouped per layer.
    pub fn parameters(&self) -> GradientSet {
        GradientSet {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let mut v = l.weights.clone();
                    v.extend_from_slice(&l.bias);
                    (l.name.clone(), v)
                })
                .collect(),
        }
    }

    /// Raw outputs: the prediction for linear models, logits otherwise.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim];
        match self.kind {
            ModelKind::Linear | ModelKind::Logistic => self.layers[0].forward_into(x, &mut out),
            ModelKind::Mlp => {
                let mut h = vec![0.0; self.layers[0].out_dim];
                self.layers[0].forward_into(x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                self.layers[1].forward_into(&h, &mut out);
            }
        }
        out
    }

    fn check_batch(&self, batch: &Dataset) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if batch.feature_dim() != self.feature_dim {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.feature_dim(),
                self.feature_dim
            )));
        }
        if self.kind != ModelKind::Linear {
            match batch.num_classes() {
                Some(c) if c <= self.output_dim => {}
                Some(c) => {
                    return Err(Error::Shape(format!(
                        "batch has {c} classes, model has {} outputs",
                        self.output_dim
                    )))
                }
                None => return Err(Error::Shape("classification model given regression data".into())),
            }
        }
        Ok(())
    }
}

/// Per-layer flat vectors keyed by layer name, in a stable order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<(String, Vec<f64>)>,
}

impl GradientSet {
    pub fn new(layers: Vec<(String, Vec<f64>)>) -> Self {
        Self { layers }
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self {
            layers: layout.0.iter().map(|(n, len)| (n.clone(), vec![0.0; *len])).collect(),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout(self.layers.iter().map(|(n, v)| (n.clone(), v.len())).collect())
    }

    pub fn layers(&self) -> &[(String, Vec<f64>)] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [(String, Vec<f64>)] {
        &mut self.layers
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|(_, v)| v.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|(_, v)| v.iter_mut())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|(n, v)| (n.clone(), v.iter().map(|&x| f(x)).collect()))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &GradientSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|((a, va), (b, vb))| a == b && va.len() == vb.len())
    }

    pub(crate) fn check_layout(&self, other: &GradientSet) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "gradient layouts differ: {:?} vs {:?}",
                self.layout().0,
                other.layout().0
            )))
        }
    }

    /// `self - other`, coordinatewise.
    pub fn sub(&self, other: &GradientSet) -> Result<Self> {
        self.check_layout(other)?;
        Ok(Self {
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|((n, a), (_, b))| (n.clone(), a.iter().zip(b).map(|(x, y)| x - y).collect()))
                .collect(),
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn softmax_in_place(logits: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

/// Per-example loss and derivative with respect to the raw outputs.
fn output_loss(kind: ModelKind, out: &mut [f64], y: f64) -> f64 {
    match kind {
        ModelKind::Linear => {
            let r = out[0] - y;
            out[0] = 2.0 * r;
            r * r
        }
        ModelKind::Logistic | ModelKind::Mlp => {
            let class = y as usize;
            let logit = out[class];
            let lse = softmax_in_place(out);
            out[class] -= 1.0;
            lse - logit
        }
    }
}

/// Exact gradient of the mean batch loss together with that loss.
///
/// Linear models use mean squared error `(y_hat - y)^2`; logistic and MLP
/// models use softmax cross-entropy.
pub fn compute_gradient(model: &Model, batch: &Dataset) -> Result<(GradientSet, f64)> {
    model.check_batch(batch)?;
    let n = batch.n_examples() as f64;
    let mut grads: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer::zeros(&l.name, l.out_dim, l.in_dim))
        .collect();
    let mut total = 0.0;

    match model.kind {
        ModelKind::Linear | ModelKind::Logistic => {
            let layer = &model.layers[0];
            let g = &mut grads[0];
            let mut out = vec![0.0; layer.out_dim];
            for i in 0..batch.n_examples() {
                let x = batch.row(i);
                layer.forward_into(x, &mut out);
                total += output_loss(model.kind, &mut out, batch.label(i));
                for (k, d) in out.iter().enumerate() {
                    g.bias[k] += d;
                    for (gw, xi) in g.weights[k * layer.in_dim..(k + 1) * layer.in_dim]
                        .iter_mut()
                        .zip(x)
                    {
                        *gw += d * xi;
                    }
                }
            }
        }
        ModelKind::Mlp => {
            let (l1, l2) = (&model.layers[0], &model.layers[1]);
            let mut h = vec![0.0; l1.out_dim];
            let mut out = vec![0.0; l2.out_dim];
            let mut dh = vec![0.0; l1.out_dim];
            for i in 0..batch.n_examples() {
                let x = batch.row(i);
                l1.forward_into(x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                l2.forward_into(&h, &mut out);
                total += output_loss(model.kind, &mut out, batch.label(i));

                dh.iter_mut().for_each(|v| *v = 0.0);
                let (g1, g2) = grads.split_at_mut(1);
                let (g1, g2) = (&mut g1[0], &mut g2[0]);
                for (k, d) in out.iter().enumerate() {
                    g2.bias[k] += d;
                    let row = k * l2.in_dim..(k + 1) * l2.in_dim;
                    for ((gw, w), (hj, dhj)) in g2.weights[row.clone()]
                        .iter_mut()
                        .zip(&l2.weights[row])
                        .zip(h.iter().zip(dh.iter_mut()))
                    {
                        *gw += d * hj;
                        *dhj += d * w;
                    }
                }
                for (j, (dhj, hj)) in dh.iter().zip(&h).enumerate() {
                    let dpre = dhj * (1.0 - hj * hj);
                    g1.bias[j] += dpre;
                    for (gw, xi) in g1.weights[j * l1.in_dim..(j + 1) * l1.in_dim]
                        .iter_mut()
                        .zip(x)
                    {
                        *gw += dpre * xi;
                    }
                }
            }
        }
    }

    let set = GradientSet {
        layers: grads
            .into_iter()
            .map(|l| {
                let mut v: Vec<f64> = l.weights.into_iter().chain(l.bias).map(|g| g / n).collect();
                v.shrink_to_fit();
                (l.name, v)
            })
            .collect(),
    };
    Ok((set, total / n))
}

/// Mean loss of `model` on `data` without computing gradients.
pub fn mean_loss(model: &Model, data: &Dataset) -> Result<f64> {
    model.check_batch(data)?;
    let total: f64 = (0..data.n_examples())
        .map(|i| {
            let mut out = model.forward(data.row(i));
            output_loss(model.kind, &mut out, data.label(i))
        })
        .sum();
    Ok(total / data.n_examples() as f64)
}

/// Returns a copy of `model` with every parameter moved by `-lr * gradient`.
pub fn sgd_step(model: &Model, grads: &GradientSet, lr: f64) -> Result<Model> {
    let mut next = model.clone();
    apply_update(&mut next, grads, lr)?;
    Ok(next)
}

/// In-place form of [`sgd_step`].
pub fn apply_update(model: &mut Model, grads: &GradientSet, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if grads.layout() != model.layout() {
        return Err(Error::Shape(format!(
            "gradient layout {:?} does not match model layout {:?}",
            grads.layout().0,
            model.layout().0
        )));
    }
    for (layer, (_, g)) in model.layers.iter_mut().zip(&grads.layers) {
        let (gw, gb) = g.split_at(layer.weights.len());
        for (w, d) in layer.weights.iter_mut().zip(gw) {
            *w -= lr * d;
        }
        for (b, d) in layer.bias.iter_mut().zip(gb) {
            *b -= lr * d;
        }
    }
    Ok(())
}

/// Overwrites all parameters from a set laid out like [`Model::parameters`].
pub fn set_parameters(model: &mut Model, params: &GradientSet) -> Result<()> {
    if params.layout() != model.layout() {
        return Err(Error::Shape("parameter layout mismatch".into()));
    }
    for (layer, (_, p)) in model.layers.iter_mut().zip(&params.layers) {
        let (w, b) = p.split_at(layer.weights.len());
        layer.weights.copy_from_slice(w);
        layer.bias.copy_from_slice(b);
    }
    Ok(())
}

/// Predicted class (argmax of the logits, first maximum wins) or, for linear
/// models, the prediction rounded to the nearest integer.
pub fn predict_label(model: &Model, x: &[f64]) -> f64 {
    let out = model.forward(x);
    match model.kind {
        ModelKind::Linear => out[0].round(),
        _ => {
            let mut best = 0;
            for (k, v) in out.iter().enumerate() {
                if *v > out[best] {
                    best = k;
                }
            }
            best as f64
        }
    }
}

/// `(accuracy, mean loss)` on `data`. For linear models a prediction counts
/// as correct when it rounds to the label.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Shape("cannot evaluate on an empty dataset".into()));
    }
    let loss = mean_loss(model, data)?;
    let correct = (0..data.n_examples())
        .filter(|&i| predict_label(model, data.row(i)) == data.label(i))
        .count();
    Ok((correct as f64 / data.n_examples() as f64, loss))
}
