//! Layered feed-forward networks trained by backpropagation.
//!
//! Every layer carries its bias as the last column of its weight matrix and
//! sees its input with a constant `1` appended. Layers may be tied into a
//! shared group, in which case they hold one parameter matrix between them
//! and its gradient is the sum of the member gradients. [`unroll`] turns the
//! Euler-discretised analog dynamics into such a shared-weight network.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationFunction;
use crate::dynamics::{IntegratorConfig, NeuronState};
use crate::error::{Error, Result};
use crate::spin::{ConnectionMatrix, FieldVector};

/// Tag used for the layers produced by [`unroll`].
pub const UNROLL_GROUP: &str = "recurrent";

/// Activation applied to a whole layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum LayerActivation {
    Identity,
    Tanh { gain: f64 },
    Logistic { gain: f64 },
    /// `v = softmax(gain * u)` over the layer.
    Softmax { gain: f64 },
    /// `head` on the leading rows, the identity on the trailing
    /// `linear_units` rows.
    Augmented {
        head: ActivationFunction,
        linear_units: usize,
    },
}

impl From<ActivationFunction> for LayerActivation {
    fn from(g: ActivationFunction) -> Self {
        match g {
            ActivationFunction::Identity => Self::Identity,
            ActivationFunction::Tanh { gain } => Self::Tanh { gain },
            ActivationFunction::Logistic { gain } => Self::Logistic { gain },
        }
    }
}

impl LayerActivation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Tanh { .. } => "tanh",
            Self::Logistic { .. } => "logistic",
            Self::Softmax { .. } => "softmax",
            Self::Augmented { .. } => "augmented",
        }
    }

    fn validate(&self, rows: usize) -> Result<()> {
        let gain = match *self {
            Self::Identity => return Ok(()),
            Self::Tanh { gain } | Self::Logistic { gain } | Self::Softmax { gain } => gain,
            Self::Augmented { head, linear_units } => {
                if linear_units > rows {
                    return Err(Error::InvalidParameter(format!(
                        "{linear_units} linear units in a layer of {rows}"
                    )));
                }
                match head {
                    ActivationFunction::Identity => return Ok(()),
                    ActivationFunction::Tanh { gain } | ActivationFunction::Logistic { gain } => {
                        gain
                    }
                }
            }
        };
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "activation gain must be positive, got {gain}"
            )));
        }
        Ok(())
    }

    fn pointwise(&self, i: usize, rows: usize) -> Option<ActivationFunction> {
        match *self {
            Self::Identity => Some(ActivationFunction::Identity),
            Self::Tanh { gain } => Some(ActivationFunction::Tanh { gain }),
            Self::Logistic { gain } => Some(ActivationFunction::Logistic { gain }),
            Self::Softmax { .. } => None,
            Self::Augmented { head, linear_units } => Some(if i < rows - linear_units {
                head
            } else {
                ActivationFunction::Identity
            }),
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        if let Self::Softmax { gain } = *self {
            let m = u.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let e: Vec<f64> = u.iter().map(|&x| (gain * (x - m)).exp()).collect();
            let z: f64 = e.iter().sum();
            return e.into_iter().map(|x| x / z).collect();
        }
        let rows = u.len();
        u.iter()
            .enumerate()
            .map(|(i, &x)| self.pointwise(i, rows).map_or(x, |g| g.g(x)))
            .collect()
    }

    /// `J^T up`, where `J = dv/du` at net input `u` with output `v`.
    pub fn jacobian_transpose(&self, u: &[f64], v: &[f64], up: &[f64]) -> Vec<f64> {
        if let Self::Softmax { gain } = *self {
            let dot: f64 = v.iter().zip(up).map(|(a, b)| a * b).sum();
            return v.iter().zip(up).map(|(vi, ui)| gain * vi * (ui - dot)).collect();
        }
        let rows = u.len();
        u.iter()
            .zip(up)
            .enumerate()
            .map(|(i, (&x, &d))| self.pointwise(i, rows).map_or(d, |g| g.g_prime(x) * d))
            .collect()
    }
}

/// Weight matrix of one layer: `rows x (inputs + 1)`, bias in the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer")]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    activation: LayerActivation,
    shared_group: Option<String>,
}

#[derive(Deserialize)]
struct RawLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    activation: LayerActivation,
    #[serde(default)]
    shared_group: Option<String>,
}

impl TryFrom<RawLayer> for Layer {
    type Error = Error;

    fn try_from(r: RawLayer) -> Result<Self> {
        if r.cols == 0 {
            return Err(Error::InvalidParameter("layer needs a bias column".into()));
        }
        let mut layer = Layer::new(r.rows, r.cols - 1, r.weights, r.activation)?;
        layer.shared_group = r.shared_group;
        Ok(layer)
    }
}

impl Layer {
    /// `weights` is row-major with `inputs + 1` columns.
    pub fn new(
        rows: usize,
        inputs: usize,
        weights: Vec<f64>,
        activation: LayerActivation,
    ) -> Result<Self> {
        let cols = inputs + 1;
        if rows == 0 {
            return Err(Error::Empty("layer"));
        }
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: rows * cols,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("layer weights"));
        }
        activation.validate(rows)?;
        Ok(Self {
            rows,
            cols,
            weights,
            activation,
            shared_group: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, activation: LayerActivation) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(Error::Empty("layer"));
        }
        let mut w = Vec::with_capacity(r * cols);
        for row in &rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "layer row",
                    expected: cols,
                    actual: row.len(),
                });
            }
            w.extend_from_slice(row);
        }
        Self::new(r, cols - 1, w, activation)
    }

    /// Weights uniform in `[-1/sqrt(inputs), 1/sqrt(inputs)]`.
    pub fn random<R: Rng + ?Sized>(
        rows: usize,
        inputs: usize,
        activation: LayerActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let r = 1.0 / (inputs.max(1) as f64).sqrt();
        let w = (0..rows * (inputs + 1)).map(|_| rng.gen_range(-r..=r)).collect();
        Self::new(rows, inputs, w, activation)
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.shared_group = Some(group.into());
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Inputs excluding the bias unit.
    pub fn inputs(&self) -> usize {
        self.cols - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.weight(i, self.cols - 1)
    }

    pub fn activation(&self) -> LayerActivation {
        self.activation
    }

    pub fn shared_group(&self) -> Option<&str> {
        self.shared_group.as_deref()
    }

    /// `T [v; 1]`, where `input` already carries the trailing 1.
    fn net_input(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.cols)
            .map(|row| row.iter().zip(input).map(|(w, x)| w * x).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct LayeredNetwork {
    layers: Vec<Layer>,
}

#[derive(Deserialize)]
struct RawNetwork {
    layers: Vec<Layer>,
}

impl TryFrom<RawNetwork> for LayeredNetwork {
    type Error = Error;

    fn try_from(r: RawNetwork) -> Result<Self> {
        Self::new(r.layers)
    }
}

impl LayeredNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network"));
        }
        for w in layers.windows(2) {
            if w[1].inputs() != w[0].rows {
                return Err(Error::DimensionMismatch {
                    context: "layer inputs",
                    expected: w[0].rows,
                    actual: w[1].inputs(),
                });
            }
        }
        let mut first: HashMap<&str, &Layer> = HashMap::new();
        for layer in &layers {
            let Some(tag) = layer.shared_group() else {
                continue;
            };
            if let Some(owner) = first.get(tag) {
                let same = owner.rows == layer.rows
                    && owner.cols == layer.cols
                    && owner
                        .weights
                        .iter()
                        .zip(&layer.weights)
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(Error::InvalidParameter(format!(
                        "layers in shared group {tag:?} differ"
                    )));
                }
            } else {
                first.insert(tag, layer);
            }
        }
        Ok(Self { layers })
    }

    /// Fully connected network with the given widths (input first),
    /// `hidden` on every layer except the last, which uses `output`.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: LayerActivation,
        output: LayerActivation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least input and output widths".into(),
            ));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer::random(w[1], w[0], if l == last { output } else { hidden }, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Index of the layer that owns each layer's parameters: the first
    /// member of its shared group, or itself.
    pub fn owners(&self) -> Vec<usize> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| match layer.shared_group() {
                Some(tag) => *seen.entry(tag).or_insert(l),
                None => l,
            })
            .collect()
    }

    /// The distinct parameters, owners in layer order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for (l, o) in self.owners().into_iter().enumerate() {
            if l == o {
                p.extend_from_slice(&self.layers[l].weights);
            }
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.owners()
            .into_iter()
            .enumerate()
            .filter(|(l, o)| l == o)
            .map(|(l, _)| self.layers[l].weights.len())
            .sum()
    }

    /// Copy with the distinct parameters replaced by `p` (layout of
    /// [`params`](Self::params)).
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.num_params(),
                actual: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        let mut net = self.clone();
        let owners = self.owners();
        let mut offset = 0;
        for l in 0..net.layers.len() {
            if owners[l] == l {
                let len = net.layers[l].weights.len();
                net.layers[l].weights.copy_from_slice(&p[offset..offset + len]);
                offset += len;
            } else {
                let w = net.layers[owners[l]].weights.clone();
                net.layers[l].weights = w;
            }
        }
        Ok(net)
    }

    /// Per-layer gradients folded onto the distinct parameters: members of a
    /// shared group are summed into their owner.
    pub fn flatten_gradient(&self, grads: &[Vec<f64>]) -> Vec<f64> {
        let owners = self.owners();
        let mut summed: Vec<Option<Vec<f64>>> = vec![None; self.layers.len()];
        for (l, g) in grads.iter().enumerate() {
            match &mut summed[owners[l]] {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g.clone()),
            }
        }
        summed.into_iter().flatten().flatten().collect()
    }

    /// Same weights with every shared group dissolved.
    pub fn unshared(&self) -> Self {
        let mut net = self.clone();
        for layer in &mut net.layers {
            layer.shared_group = None;
        }
        net
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Net inputs and outputs of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `u[l]` is the net input of layer `l`.
    pub u: Vec<Vec<f64>>,
    /// `v[0]` is the input and `v[l + 1]` the output of layer `l`; all but
    /// the last end with the constant bias unit.
    pub v: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.v.last().expect("trace holds the input")
    }
}

pub fn forward(net: &LayeredNetwork, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != net.input_width() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: net.input_width(),
            actual: x.len(),
        });
    }
    let depth = net.depth();
    let mut input = x.to_vec();
    input.push(1.0);
    let mut trace = ForwardTrace {
        u: Vec::with_capacity(depth),
        v: vec![input],
    };
    for (l, layer) in net.layers.iter().enumerate() {
        let u = layer.net_input(&trace.v[l]);
        let mut v = layer.activation.apply(&u);
        if l + 1 < depth {
            v.push(1.0);
        }
        trace.u.push(u);
        trace.v.push(v);
    }
    Ok(trace)
}

/// Output of the network for `x`.
pub fn predict(net: &LayeredNetwork, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(net, x)?.v.pop().expect("trace holds the input"))
}

/// Error signals and gradients of `1/2 |v_L - y|^2` for one pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropState {
    pub deltas: Vec<Vec<f64>>,
    /// Row-major, same shape as the layer weights.
    pub grads: Vec<Vec<f64>>,
}

pub fn backprop(net: &LayeredNetwork, x: &[f64], y: &[f64]) -> Result<BackpropState> {
    let trace = forward(net, x)?;
    if y.len() != net.output_width() {
        return Err(Error::DimensionMismatch {
            context: "target",
            expected: net.output_width(),
            actual: y.len(),
        });
    }
    let depth = net.depth();
    let mut deltas = vec![Vec::new(); depth];
    let out = trace.output();
    let err: Vec<f64> = out.iter().zip(y).map(|(v, y)| v - y).collect();
    deltas[depth - 1] = net.layers[depth - 1]
        .activation
        .jacobian_transpose(&trace.u[depth - 1], out, &err);
    for l in (1..depth).rev() {
        let layer = &net.layers[l];
        // the bias column has nothing upstream
        let mut up = vec![0.0; layer.inputs()];
        for (i, d) in deltas[l].iter().enumerate() {
            let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols - 1];
            for (acc, w) in up.iter_mut().zip(row) {
                *acc += w * d;
            }
        }
        let below = &net.layers[l - 1];
        let v = &trace.v[l][..below.rows];
        deltas[l - 1] = below.activation.jacobian_transpose(&trace.u[l - 1], v, &up);
    }
    let grads = deltas
        .iter()
        .zip(&trace.v)
        .map(|(d, input)| {
            d.iter()
                .flat_map(|&di| input.iter().map(move |&vj| di * vj))
                .collect()
        })
        .collect();
    Ok(BackpropState { deltas, grads })
}

/// Inputs and targets, one row per pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl TrainingBatch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "targets per input",
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        for (set, context) in [(&inputs, "input width"), (&targets, "target width")] {
            let w = set[0].len();
            if let Some(bad) = set.iter().find(|r| r.len() != w) {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: w,
                    actual: bad.len(),
                });
            }
        }
        if inputs.iter().chain(&targets).flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("training batch"));
        }
        Ok(Self { inputs, targets })
    }

    /// The four XOR patterns with 0/1 inputs and targets.
    pub fn xor() -> Self {
        Self::new(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0], vec![1.0], vec![1.0], vec![0.0]],
        )
        .expect("static data")
    }

    /// CSV with a header naming input columns `x...` followed by target
    /// columns `y...`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let split = header.iter().take_while(|h| h.starts_with('x')).count();
        let targets_ok = header.iter().skip(split).all(|h| h.starts_with('y'));
        if split == 0 || split == header.len() || !targets_ok {
            return Err(Error::Parse(format!(
                "header must list x columns then y columns, got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: bad number {f:?}", k + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            targets.push(row[split..].to_vec());
            inputs.push(row[..split].to_vec());
        }
        Self::new(inputs, targets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    fn check(&self, net: &LayeredNetwork) -> Result<()> {
        for (context, expected, actual) in [
            ("batch input width", net.input_width(), self.inputs[0].len()),
            ("batch target width", net.output_width(), self.targets[0].len()),
        ] {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// `sum_p 1/2 |v_L(x_p) - y_p|^2 + lambda/2 sum T^2`, with each shared
/// matrix counted once in the decay term.
pub fn loss(net: &LayeredNetwork, batch: &TrainingBatch, lambda: f64) -> Result<f64> {
    batch.check(net)?;
    let mut data = 0.0;
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let out = predict(net, x)?;
        data += 0.5 * out.iter().zip(y).map(|(v, y)| (v - y) * (v - y)).sum::<f64>();
    }
    if lambda == 0.0 {
        return Ok(data);
    }
    let decay: f64 = net.params().iter().map(|w| w * w).sum();
    Ok(data + 0.5 * lambda * decay)
}

/// Sum of the per-pattern gradients in pattern order.
pub fn batch_gradient(net: &LayeredNetwork, batch: &TrainingBatch) -> Result<Vec<Vec<f64>>> {
    batch.check(net)?;
    let mut acc: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let bp = backprop(net, x, y)?;
        for (a, g) in acc.iter_mut().zip(&bp.grads) {
            a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    FullBatch,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub eta: f64,
    pub lambda: f64,
    pub batch_mode: BatchMode,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// `T <- T - eta * grad - eta * lambda * T` for every distinct parameter
/// matrix; a shared matrix receives the sum of its members' gradients and
/// is copied back to all of them.
pub fn apply_update(
    net: &LayeredNetwork,
    grads: &[Vec<f64>],
    cfg: &TrainingConfig,
) -> Result<LayeredNetwork> {
    if grads.len() != net.depth() {
        return Err(Error::DimensionMismatch {
            context: "gradient layers",
            expected: net.depth(),
            actual: grads.len(),
        });
    }
    for (layer, g) in net.layers.iter().zip(grads) {
        if g.len() != layer.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient shape",
                expected: layer.weights.len(),
                actual: g.len(),
            });
        }
    }
    let (eta, lambda) = (cfg.eta, cfg.lambda);
    let g = net.flatten_gradient(grads);
    let p: Vec<f64> = net
        .params()
        .iter()
        .zip(&g)
        .map(|(w, g)| w - eta * g - eta * lambda * w)
        .collect();
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("updated weights"));
    }
    net.with_params(&p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub network: LayeredNetwork,
    /// Regularised loss before training followed by the loss after each
    /// epoch.
    pub losses: Vec<f64>,
}

/// Gradient descent for `cfg.epochs` epochs. Stochastic mode visits the
/// patterns in a fresh seeded shuffle each epoch.
pub fn train(net: &LayeredNetwork, batch: &TrainingBatch, cfg: &TrainingConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    batch.check(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net.clone();
    let mut losses = vec![loss(&net, batch, cfg.lambda)?];
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for epoch in 1..=cfg.epochs {
        let step = match cfg.batch_mode {
            BatchMode::FullBatch => {
                let g = batch_gradient(&net, batch)?;
                apply_update(&net, &g, cfg).map(|n| net = n)
            }
            BatchMode::Stochastic => {
                order.shuffle(&mut rng);
                order.iter().try_for_each(|&p| {
                    let bp = backprop(&net, &batch.inputs[p], &batch.targets[p])?;
                    net = apply_update(&net, &bp.grads, cfg)?;
                    Ok(())
                })
            }
        };
        step.map_err(|_| Error::Diverged(epoch))?;
        let l = loss(&net, batch, cfg.lambda)?;
        if !l.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        losses.push(l);
    }
    Ok(TrainingRun {
        network: net,
        losses,
    })
}

fn full_steps(cfg: &IntegratorConfig) -> bool {
    cfg.tau.iter().all(|&tau| cfg.dt / tau == 1.0)
}

/// `K` Euler steps of the analog dynamics as a `K`-layer network in one
/// shared group.
///
/// With `dt = tau` for every unit each layer is `v <- g(T v + h)` and the
/// input is `v`. Otherwise the input is `[v; u]` and each layer carries `n`
/// extra linear units that pass `u` forward: both row blocks are
/// `[a T | diag(1 - a) | a h]`, with `g` applied to the first block only,
/// so the output is `[v'; u']`.
pub fn unroll(
    t: &ConnectionMatrix,
    h: &FieldVector,
    g: &ActivationFunction,
    cfg: &IntegratorConfig,
    k: usize,
) -> Result<LayeredNetwork> {
    let n = t.n();
    if h.len() != n {
        return Err(Error::DimensionMismatch {
            context: "field vector",
            expected: n,
            actual: h.len(),
        });
    }
    cfg.validate(n)?;
    if k == 0 {
        return Err(Error::InvalidParameter("unroll needs at least one layer".into()));
    }
    let layer = if full_steps(cfg) {
        let rows = (0..n)
            .map(|i| {
                let mut r = t.row(i).to_vec();
                r.push(h[i]);
                r
            })
            .collect();
        Layer::from_rows(rows, (*g).into())?
    } else {
        let mut rows = Vec::with_capacity(2 * n);
        for i in 0..n {
            let a = cfg.dt / cfg.tau[i];
            let mut r: Vec<f64> = t.row(i).iter().map(|x| a * x).collect();
            r.extend((0..n).map(|j| if j == i { 1.0 - a } else { 0.0 }));
            r.push(a * h[i]);
            rows.push(r);
        }
        rows.extend_from_within(..);
        Layer::from_rows(
            rows,
            LayerActivation::Augmented {
                head: *g,
                linear_units: n,
            },
        )?
    };
    let layer = layer.with_group(UNROLL_GROUP);
    LayeredNetwork::new(vec![layer; k])
}

/// Network input for [`unroll`]: `v`, or `[v; u]` when auxiliary units are
/// in use. The first `n` outputs of the network are the new `v`.
pub fn unroll_input(state: &NeuronState, cfg: &IntegratorConfig) -> Vec<f64> {
    let mut x = state.v().to_vec();
    if !full_steps(cfg) {
        x.extend_from_slice(state.u());
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::euler_step;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn single(x: f64, y: f64) -> TrainingBatch {
        TrainingBatch::new(vec![vec![x]], vec![vec![y]]).unwrap()
    }

    fn sgd(eta: f64, lambda: f64) -> TrainingConfig {
        TrainingConfig {
            eta,
            lambda,
            batch_mode: BatchMode::FullBatch,
            epochs: 1,
            seed: 0,
        }
    }

    /// Central differences of the single-pattern loss in the distinct
    /// parameters.
    fn fd_gradient(net: &LayeredNetwork, x: &[f64], y: &[f64], step: f64) -> Vec<f64> {
        let batch = TrainingBatch::new(vec![x.to_vec()], vec![y.to_vec()]).unwrap();
        let p = net.params();
        (0..p.len())
            .map(|k| {
                let mut plus = p.clone();
                plus[k] += step;
                let mut minus = p.clone();
                minus[k] -= step;
                let lp = loss(&net.with_params(&plus).unwrap(), &batch, 0.0).unwrap();
                let lm = loss(&net.with_params(&minus).unwrap(), &batch, 0.0).unwrap();
                (lp - lm) / (2.0 * step)
            })
            .collect()
    }

    fn assert_gradient_matches(net: &LayeredNetwork, x: &[f64], y: &[f64]) {
        let bp = backprop(net, x, y).unwrap();
        let an = net.flatten_gradient(&bp.grads);
        let fd = fd_gradient(net, x, y, 1e-5);
        for (k, (a, f)) in an.iter().zip(&fd).enumerate() {
            let err = (a - f).abs();
            assert!(
                err <= 1e-10 || err <= 1e-6 * a.abs().max(f.abs()),
                "param {k}: backprop {a} vs fd {f}"
            );
        }
    }

    #[test]
    fn affine_layer() {
        let net = LayeredNetwork::new(vec![
            Layer::from_rows(vec![vec![2.5, -1.0]], LayerActivation::Identity).unwrap(),
        ])
        .unwrap();
        assert_eq!(predict(&net, &[3.0]).unwrap(), vec![6.5]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let b = [0.3, -1.2];
        let net = LayeredNetwork::new(vec![Layer::from_rows(
            vec![vec![0.0, 0.0, 0.0, b[0]], vec![0.0, 0.0, 0.0, b[1]]],
            LayerActivation::Tanh { gain: 1.0 },
        )
        .unwrap()])
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [5.0, -3.0, 1e3]] {
            let out = predict(&net, &x).unwrap();
            assert_eq!(out, vec![b[0].tanh(), b[1].tanh()]);
        }
    }

    #[test]
    fn forward_composes_over_layers() {
        let mut r = rng(4);
        let tanh = LayerActivation::Tanh { gain: 1.0 };
        let net = LayeredNetwork::random(&[3, 4, 2], tanh, LayerActivation::Identity, &mut r).unwrap();
        let first = LayeredNetwork::new(vec![net.layers[0].clone()]).unwrap();
        let second = LayeredNetwork::new(vec![net.layers[1].clone()]).unwrap();
        let x = random_vec(3, &mut r);
        let whole = predict(&net, &x).unwrap();
        let split = predict(&second, &predict(&first, &x).unwrap()).unwrap();
        assert_eq!(whole, split);
    }

    #[test]
    fn trace_layout() {
        let mut r = rng(9);
        let net = LayeredNetwork::random(
            &[3, 5, 4, 2],
            LayerActivation::Logistic { gain: 1.3 },
            LayerActivation::Tanh { gain: 0.7 },
            &mut r,
        )
        .unwrap();
        let x = random_vec(3, &mut r);
        let tr = forward(&net, &x).unwrap();
        assert_eq!(tr.v.len(), 4);
        assert_eq!(tr.u.len(), 3);
        assert_eq!(&tr.v[0][..3], &x[..]);
        for l in 0..3 {
            let layer = &net.layers()[l];
            let g = layer.activation();
            let out = &tr.v[l + 1];
            if l < 2 {
                assert_eq!(out.len(), layer.rows() + 1);
                assert_eq!(*out.last().unwrap(), 1.0);
            } else {
                assert_eq!(out.len(), layer.rows());
            }
            assert_eq!(tr.v[l].last(), Some(&1.0));
            let expect = g.apply(&tr.u[l]);
            for i in 0..layer.rows() {
                assert!((out[i] - expect[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let net = LayeredNetwork::random(
            &[2, 1],
            LayerActivation::Identity,
            LayerActivation::Identity,
            &mut rng(0),
        )
        .unwrap();
        assert!(matches!(forward(&net, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(backprop(&net, &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn incompatible_layers_are_rejected() {
        let a = Layer::from_rows(vec![vec![1.0, 0.0]], LayerActivation::Identity).unwrap();
        let b = Layer::from_rows(vec![vec![1.0, 1.0, 0.0]], LayerActivation::Identity).unwrap();
        assert!(LayeredNetwork::new(vec![a.clone(), b]).is_err());
        assert!(LayeredNetwork::new(vec![]).is_err());
        let c = Layer::from_rows(vec![vec![2.0, 0.0]], LayerActivation::Identity).unwrap();
        assert!(LayeredNetwork::new(vec![a.with_group("g"), c.with_group("g")]).is_err());
    }

    #[test]
    fn loss_examples() {
        let id = LayerActivation::Identity;
        let net = LayeredNetwork::new(vec![
            Layer::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]], id).unwrap(),
        ])
        .unwrap();
        let perfect = TrainingBatch::new(vec![vec![4.0]], vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(loss(&net, &perfect, 0.0).unwrap(), 0.0);
        let off = TrainingBatch::new(vec![vec![4.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(loss(&net, &off, 0.0).unwrap(), 0.5);

        let w = LayeredNetwork::new(vec![Layer::from_rows(vec![vec![3.0, 0.0]], id).unwrap()]).unwrap();
        assert_eq!(loss(&w, &single(0.0, 0.0), 2.0).unwrap(), 9.0);
    }

    #[test]
    fn hand_chain_rule() {
        let net = LayeredNetwork::new(vec![
            Layer::from_rows(vec![vec![2.0, 1.0]], LayerActivation::Identity).unwrap(),
        ])
        .unwrap();
        let bp = backprop(&net, &[1.0], &[0.0]).unwrap();
        assert_eq!(bp.deltas, vec![vec![3.0]]);
        assert_eq!(bp.grads, vec![vec![3.0, 3.0]]);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let mut r = rng(2);
        let net = LayeredNetwork::random(
            &[3, 4, 2],
            LayerActivation::Tanh { gain: 1.0 },
            LayerActivation::Logistic { gain: 1.0 },
            &mut r,
        )
        .unwrap();
        let x = random_vec(3, &mut r);
        let y = predict(&net, &x).unwrap();
        let bp = backprop(&net, &x, &y).unwrap();
        assert!(bp.deltas.iter().chain(&bp.grads).flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn grads_are_outer_products_of_deltas() {
        let mut r = rng(12);
        let net = LayeredNetwork::random(
            &[4, 5, 3, 2],
            LayerActivation::Tanh { gain: 1.0 },
            LayerActivation::Softmax { gain: 1.0 },
            &mut r,
        )
        .unwrap();
        let x = random_vec(4, &mut r);
        let y = random_vec(2, &mut r);
        let bp = backprop(&net, &x, &y).unwrap();
        let tr = forward(&net, &x).unwrap();
        for l in 0..3 {
            let input = &tr.v[l];
            for (i, d) in bp.deltas[l].iter().enumerate() {
                for (j, v) in input.iter().enumerate() {
                    assert_eq!(bp.grads[l][i * input.len() + j], d * v);
                }
            }
        }
    }

    #[test]
    fn deep_tanh_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut r = rng(seed);
            let tanh = LayerActivation::Tanh { gain: 1.0 };
            let net = LayeredNetwork::random(&[4, 5, 3, 2], tanh, tanh, &mut r).unwrap();
            let x = random_vec(4, &mut r);
            let y = random_vec(2, &mut r);
            assert_gradient_matches(&net, &x, &y);
        }
    }

    #[test]
    fn softmax_output_rows_sum_to_one_and_gradient_matches() {
        for seed in 0..20 {
            let mut r = rng(500 + seed);
            let net = LayeredNetwork::random(
                &[3, 4, 3],
                LayerActivation::Logistic { gain: 1.0 },
                LayerActivation::Softmax { gain: 1.5 },
                &mut r,
            )
            .unwrap();
            let x = random_vec(3, &mut r);
            let out = predict(&net, &x).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let y = vec![0.0, 1.0, 0.0];
            assert_gradient_matches(&net, &x, &y);
        }
    }

    #[test]
    fn shared_gradient_is_sum_of_unshared() {
        let mut r = rng(21);
        let l = Layer::random(3, 3, LayerActivation::Tanh { gain: 1.0 }, &mut r)
            .unwrap()
            .with_group("w");
        let net = LayeredNetwork::new(vec![l.clone(), l.clone(), l]).unwrap();
        assert_eq!(net.num_params(), 12);
        let free = net.unshared();
        assert_eq!(free.num_params(), 36);
        let x = random_vec(3, &mut r);
        let y = random_vec(3, &mut r);
        let shared = net.flatten_gradient(&backprop(&net, &x, &y).unwrap().grads);
        let per = free.flatten_gradient(&backprop(&free, &x, &y).unwrap().grads);
        for k in 0..12 {
            let sum = per[k] + per[12 + k] + per[24 + k];
            assert_eq!(shared[k], sum);
        }
        assert_gradient_matches(&net, &x, &y);
    }

    #[test]
    fn single_step_lands_on_optimum() {
        let net = LayeredNetwork::new(vec![
            Layer::from_rows(vec![vec![0.0, 0.0]], LayerActivation::Identity).unwrap(),
        ])
        .unwrap();
        let batch = single(1.0, 2.0);
        let g = batch_gradient(&net, &batch).unwrap();
        let next = apply_update(&net, &g, &sgd(1.0, 0.0)).unwrap();
        assert_eq!(next.layers()[0].weight(0, 0), 2.0);
    }

    #[test]
    fn decay_alone_shrinks_weights() {
        let mut r = rng(8);
        let net = LayeredNetwork::random(
            &[2, 3, 1],
            LayerActivation::Tanh { gain: 1.0 },
            LayerActivation::Identity,
            &mut r,
        )
        .unwrap();
        let zero: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect();
        let cfg = sgd(0.1, 0.5);
        let mut cur = net.clone();
        for k in 1..=5 {
            cur = apply_update(&cur, &zero, &cfg).unwrap();
            let factor = (1.0 - 0.05f64).powi(k);
            for (a, b) in cur.params().iter().zip(net.params()) {
                assert!((a - factor * b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn batch_gradient_is_sequential_sum() {
        let mut r = rng(33);
        let net = LayeredNetwork::random(
            &[2, 3, 2],
            LayerActivation::Tanh { gain: 1.0 },
            LayerActivation::Identity,
            &mut r,
        )
        .unwrap();
        let inputs: Vec<_> = (0..6).map(|_| random_vec(2, &mut r)).collect();
        let targets: Vec<_> = (0..6).map(|_| random_vec(2, &mut r)).collect();
        let batch = TrainingBatch::new(inputs.clone(), targets.clone()).unwrap();
        let total = batch_gradient(&net, &batch).unwrap();
        let mut seq: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect();
        for (x, y) in inputs.iter().zip(&targets) {
            let g = backprop(&net, x, y).unwrap().grads;
            for (a, b) in seq.iter_mut().zip(&g) {
                for (a, b) in a.iter_mut().zip(b) {
                    *a += b;
                }
            }
        }
        let bits = |v: &Vec<Vec<f64>>| -> Vec<u64> { v.iter().flatten().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&total), bits(&seq));
    }

    #[test]
    fn shared_update_keeps_members_identical() {
        let mut r = rng(17);
        let l = Layer::random(2, 2, LayerActivation::Tanh { gain: 1.0 }, &mut r)
            .unwrap()
            .with_group("w");
        let net = LayeredNetwork::new(vec![l.clone(), l]).unwrap();
        let batch = TrainingBatch::new(vec![vec![0.5, -0.2]], vec![vec![0.1, 0.4]]).unwrap();
        let run = train(
            &net,
            &batch,
            &TrainingConfig {
                eta: 0.1,
                lambda: 0.01,
                batch_mode: BatchMode::Stochastic,
                epochs: 50,
                seed: 3,
            },
        )
        .unwrap();
        let layers = run.network.layers();
        assert_eq!(layers[0].weights(), layers[1].weights());
        assert!(run.losses.last().unwrap() < &run.losses[0]);
    }

    #[test]
    fn xor_trains_below_threshold() {
        let batch = TrainingBatch::xor();
        let tanh = LayerActivation::Tanh { gain: 1.0 };
        let cfg = TrainingConfig {
            eta: 0.1,
            lambda: 0.0,
            batch_mode: BatchMode::FullBatch,
            epochs: 5000,
            seed: 0,
        };
        let best = (0..5u64)
            .map(|seed| {
                let net = LayeredNetwork::random(&[2, 2, 1], tanh, tanh, &mut rng(seed)).unwrap();
                *train(&net, &batch, &cfg).unwrap().losses.last().unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.01, "{best}");
    }

    #[test]
    fn training_is_reproducible() {
        let batch = TrainingBatch::xor();
        let tanh = LayerActivation::Tanh { gain: 1.0 };
        let net = LayeredNetwork::random(&[2, 3, 1], tanh, tanh, &mut rng(1)).unwrap();
        let cfg = TrainingConfig {
            eta: 0.05,
            lambda: 1e-4,
            batch_mode: BatchMode::Stochastic,
            epochs: 100,
            seed: 9,
        };
        let a = train(&net, &batch, &cfg).unwrap();
        let b = train(&net, &batch, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_training_config_is_rejected() {
        let mut cfg = sgd(0.0, 0.0);
        assert!(cfg.validate().is_err());
        cfg.eta = 0.1;
        cfg.lambda = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mut r = rng(41);
        let net = LayeredNetwork::random(
            &[3, 2, 2],
            LayerActivation::Logistic { gain: 2.0 },
            LayerActivation::Softmax { gain: 1.0 },
            &mut r,
        )
        .unwrap();
        let back = LayeredNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let t = ConnectionMatrix::random(3, 1.0, &mut r);
        let h = FieldVector::random(3, 1.0, &mut r);
        let cfg = IntegratorConfig::uniform(3, 0.5, 1.0, 1);
        let un = unroll(&t, &h, &ActivationFunction::tanh(1.0), &cfg, 2).unwrap();
        let text = un.to_json();
        assert!(text.contains("\"shared_group\": \"recurrent\""));
        assert!(text.contains("\"name\": \"augmented\""));
        assert_eq!(LayeredNetwork::from_json(&text).unwrap(), un);
        let broken = text.replacen("\"rows\": 6", "\"rows\": 5", 1);
        assert!(LayeredNetwork::from_json(&broken).is_err());
    }

    #[test]
    fn csv_split_follows_header() {
        let text = "x0,x1,y0\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n";
        let b = TrainingBatch::from_csv(text.as_bytes()).unwrap();
        assert_eq!(b, TrainingBatch::xor());
        assert!(TrainingBatch::from_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(TrainingBatch::from_csv("x0,y0,x1\n1,2,3\n".as_bytes()).is_err());
        assert!(TrainingBatch::from_csv("x0,y0\n1,z\n".as_bytes()).is_err());
    }

    fn unroll_case(seed: u64, dt: f64, tau: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng(seed);
        let n = 4;
        let t = ConnectionMatrix::random(n, 1.0, &mut r);
        let h = FieldVector::random(n, 0.5, &mut r);
        let g = ActivationFunction::tanh(1.3);
        let cfg = IntegratorConfig::uniform(n, dt, tau, 1);
        let s0 = NeuronState::from_potentials(random_vec(n, &mut r), &g);
        let net = unroll(&t, &h, &g, &cfg, k).unwrap();
        let out = predict(&net, &unroll_input(&s0, &cfg)).unwrap();
        let mut s = s0;
        for _ in 0..k {
            s = euler_step(&s, &t, &h, &g, &cfg).unwrap();
        }
        (out[..n].to_vec(), s.v().to_vec())
    }

    #[test]
    fn unroll_matches_euler_at_full_step() {
        for k in [1, 3] {
            let (net, euler) = unroll_case(5, 0.2, 0.2, k);
            for (a, b) in net.iter().zip(&euler) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unroll_matches_euler_with_auxiliary_units() {
        for k in [1, 3, 6] {
            let (net, euler) = unroll_case(6, 0.5, 1.0, k);
            for (a, b) in net.iter().zip(&euler) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        for seed in 0..5 {
            for (dt, tau) in [(1.0, 1.0), (0.5, 1.0)] {
                let mut r = rng(70 + seed);
                let t = ConnectionMatrix::random(4, 1.0, &mut r);
                let h = FieldVector::random(4, 0.5, &mut r);
                let g = ActivationFunction::tanh(1.0);
                let cfg = IntegratorConfig::uniform(4, dt, tau, 1);
                let net = unroll(&t, &h, &g, &cfg, 3).unwrap();
                let s0 = NeuronState::from_potentials(random_vec(4, &mut r), &g);
                let x = unroll_input(&s0, &cfg);
                let y = random_vec(net.output_width(), &mut r);
                assert_gradient_matches(&net, &x, &y);
            }
        }
    }

    #[test]
    fn unroll_rejects_zero_layers() {
        let cfg = IntegratorConfig::uniform(2, 1.0, 1.0, 1);
        let g = ActivationFunction::tanh(1.0);
        let r = unroll(&ConnectionMatrix::zeros(2), &FieldVector::zeros(2), &g, &cfg, 0);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn small_step_decreases_loss(seed in 0u64..5000, hidden in 1usize..5, lambda in 0.0f64..0.1) {
            let mut r = rng(seed);
            let net = LayeredNetwork::random(
                &[2, hidden, 2],
                LayerActivation::Tanh { gain: 1.0 },
                LayerActivation::Identity,
                &mut r,
            ).unwrap();
            let inputs: Vec<_> = (0..4).map(|_| random_vec(2, &mut r)).collect();
            let targets: Vec<_> = (0..4).map(|_| random_vec(2, &mut r)).collect();
            let batch = TrainingBatch::new(inputs, targets).unwrap();
            let before = loss(&net, &batch, lambda).unwrap();
            let g = batch_gradient(&net, &batch).unwrap();
            let flat = net.flatten_gradient(&g);
            let full_norm = flat.iter().zip(net.params())
                .map(|(g, w)| (g + lambda * w).abs()).fold(0.0, f64::max);
            let after = loss(&apply_update(&net, &g, &sgd(1e-4, lambda)).unwrap(), &batch, lambda).unwrap();
            if full_norm < 1e-12 {
                prop_assert!(after <= before);
            } else {
                prop_assert!(after < before);
            }
        }

        #[test]
        fn linear_and_logistic_gradients(seed in 0u64..5000, logistic in any::<bool>()) {
            let mut r = rng(seed);
            let act = if logistic {
                LayerActivation::Logistic { gain: 1.0 }
            } else {
                LayerActivation::Identity
            };
            let net = LayeredNetwork::random(&[3, 4, 2], act, act, &mut r).unwrap();
            let x = random_vec(3, &mut r);
            let y = random_vec(2, &mut r);
            assert_gradient_matches(&net, &x, &y);
        }
    }
}
