//! Differentiable predictors and the per-sample square loss.
//!
//! Two model families are supported: a linear map (no bias) and a tanh
//! multilayer perceptron with a linear output layer. Both may have several
//! output heads; a sample's loss is `Σ_k ½ (t_k − f_k(w))²` where the target
//! vector `t` is the raw label for single-head models and the ±1 one-hot
//! encoding of the class label otherwise.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, DenseMatrix, DenseVector, RngStream};
use crate::parallel::Execution;

/// Samples per accumulation chunk in batched gradients. Fixed so that the
/// summation order does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DenseVector,
    pub y: f64,
}

impl Sample {
    pub fn new(x: impl Into<DenseVector>, y: f64) -> Self {
        Self { x: x.into(), y }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    corrupted: BTreeSet<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.x.len();
            for (i, s) in samples.iter().enumerate() {
                if s.x.len() != d {
                    return Err(Error::DimensionMismatch {
                        context: "dataset sample",
                        expected: d,
                        found: s.x.len(),
                    });
                }
                if !s.x.is_finite() || !s.y.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "sample {i} has non-finite entries"
                    )));
                }
            }
        }
        Ok(Self {
            samples,
            corrupted: BTreeSet::new(),
        })
    }

    /// Rows of `x` paired with the entries of `y`.
    pub fn from_xy(x: &DenseMatrix, y: &[f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: x.rows(),
                found: y.len(),
            });
        }
        Self::new(
            (0..x.rows())
                .map(|r| Sample::new(x.row(r).to_vec(), y[r]))
                .collect(),
        )
    }

    /// Same features, new labels; `corrupted` records which labels were
    /// redrawn.
    pub fn with_labels(&self, labels: Vec<f64>, corrupted: BTreeSet<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "relabel",
                expected: self.len(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = corrupted.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, y)| Sample { x: s.x.clone(), y })
            .collect();
        Ok(Self { samples, corrupted })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.x.len())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> Result<&Sample> {
        self.samples.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.samples.len(),
        })
    }

    pub fn corrupted_indices(&self) -> &BTreeSet<usize> {
        &self.corrupted
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// Design matrix with one sample per row.
    pub fn design_matrix(&self) -> DenseMatrix {
        let d = self.dim().unwrap_or(0);
        let data = self
            .samples
            .iter()
            .flat_map(|s| s.x.iter().copied())
            .collect();
        DenseMatrix::from_vec(self.len(), d, data).expect("rows share one dimension")
    }

    /// Headerless CSV, one sample per row: the feature columns then the label.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(0, e))?;
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| csv_error(row, e))?;
            let values = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Csv {
                        row,
                        message: format!("`{f}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() < 2 {
                return Err(Error::Csv {
                    row,
                    message: "need at least one feature and a label".into(),
                });
            }
            let (features, label) = values.split_at(values.len() - 1);
            samples.push(Sample::new(features.to_vec(), label[0]));
        }
        Self::new(samples)
    }
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    Error::Csv {
        row,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    /// `f_k(x, w) = Σ_j W[k, j] x[j]`; with one output this is `xᵀw`.
    Linear { inputs: usize, outputs: usize },
    /// Layer widths from input to output; tanh hidden units, linear output.
    Mlp { widths: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSpec {
    /// `ℓ(e) = e²/2`
    #[default]
    Square,
}

impl LossSpec {
    pub fn value(self, e: f64) -> f64 {
        match self {
            Self::Square => 0.5 * e * e,
        }
    }

    pub fn derivative(self, e: f64) -> f64 {
        match self {
            Self::Square => e,
        }
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    target: Vec<f64>,
}

impl ModelSpec {
    pub fn linear(inputs: usize) -> Self {
        Self::Linear { inputs, outputs: 1 }
    }

    pub fn mlp(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP needs at least input and output widths, all positive; got {widths:?}"
            )));
        }
        Ok(Self::Mlp { widths })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Linear { inputs, .. } => *inputs,
            Self::Mlp { widths } => widths[0],
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Self::Linear { outputs, .. } => *outputs,
            Self::Mlp { widths } => *widths.last().expect("validated widths"),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Linear { inputs, outputs } => inputs * outputs,
            Self::Mlp { widths } => widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum(),
        }
    }

    pub fn workspace(&self) -> Workspace {
        let widths = self.layer_widths();
        let max = widths.iter().copied().max().unwrap_or(1);
        Workspace {
            acts: widths.iter().map(|&n| vec![0.0; n]).collect(),
            delta: Vec::with_capacity(max),
            delta_prev: Vec::with_capacity(max),
            target: Vec::with_capacity(self.outputs()),
        }
    }

    fn layer_widths(&self) -> Vec<usize> {
        match self {
            Self::Linear { inputs, outputs } => vec![*inputs, *outputs],
            Self::Mlp { widths } => widths.clone(),
        }
    }

    fn check(&self, w: &[f64], x: &[f64]) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "weights",
                expected: self.param_count(),
                found: w.len(),
            });
        }
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Gaussian weights around zero with standard deviation `std`.
    pub fn init_weights(&self, std: f64, rng: &mut RngStream) -> DenseVector {
        rng.gaussian_vector(self.param_count(), std)
    }

    /// Runs the forward pass, leaving activations in `ws`.
    fn forward_into(&self, w: &[f64], x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        match self {
            Self::Linear { inputs, outputs } => {
                let (input, rest) = ws.acts.split_at_mut(1);
                let out = &mut rest[0];
                for k in 0..*outputs {
                    out[k] = dot(&w[k * inputs..(k + 1) * inputs], &input[0]);
                }
            }
            Self::Mlp { widths } => {
                let last = widths.len() - 2;
                let mut offset = 0;
                for (l, pair) in widths.windows(2).enumerate() {
                    let (n_in, n_out) = (pair[0], pair[1]);
                    let weights = &w[offset..offset + n_in * n_out];
                    let bias = &w[offset + n_in * n_out..offset + n_in * n_out + n_out];
                    offset += n_out * (n_in + 1);
                    let (before, after) = ws.acts.split_at_mut(l + 1);
                    let input = &before[l];
                    let out = &mut after[0];
                    for j in 0..n_out {
                        let z = bias[j] + dot(&weights[j * n_in..(j + 1) * n_in], input);
                        out[j] = if l < last { z.tanh() } else { z };
                    }
                }
            }
        }
    }

    fn output<'a>(&self, ws: &'a Workspace) -> &'a [f64] {
        ws.acts.last().expect("at least two layers")
    }

    /// All output heads at `x`.
    pub fn predict_heads(&self, w: &[f64], x: &[f64]) -> Result<DenseVector> {
        self.check(w, x)?;
        let mut ws = self.workspace();
        self.forward_into(w, x, &mut ws);
        Ok(DenseVector::from_vec(self.output(&ws).to_vec()))
    }

    /// Scalar prediction `f(x, w)` of a single-head model.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        if self.outputs() != 1 {
            return Err(Error::DimensionMismatch {
                context: "scalar prediction heads",
                expected: 1,
                found: self.outputs(),
            });
        }
        Ok(self.predict_heads(w, x)?[0])
    }

    fn encode_target(&self, y: f64, target: &mut Vec<f64>) -> Result<()> {
        target.clear();
        let k = self.outputs();
        if k == 1 {
            target.push(y);
            return Ok(());
        }
        let class = class_index(y, k)?;
        target.extend((0..k).map(|c| if c == class { 1.0 } else { -1.0 }));
        Ok(())
    }

    fn residual_loss(&self, loss: LossSpec, ws: &Workspace) -> f64 {
        self.output(ws)
            .iter()
            .zip(&ws.target)
            .map(|(f, t)| loss.value(t - f))
            .sum()
    }

    /// `L(w) = Σ_k ℓ(t_k − f_k(x, w))`
    pub fn loss(&self, loss: LossSpec, w: &[f64], s: &Sample) -> Result<f64> {
        let mut ws = self.workspace();
        self.loss_with(loss, w, s, &mut ws)
    }

    pub fn loss_with(
        &self,
        loss: LossSpec,
        w: &[f64],
        s: &Sample,
        ws: &mut Workspace,
    ) -> Result<f64> {
        self.check(w, &s.x)?;
        self.encode_target(s.y, &mut ws.target)?;
        self.forward_into(w, &s.x, ws);
        Ok(self.residual_loss(loss, ws))
    }

    /// `∇_w L(w)` at one sample.
    pub fn loss_grad(&self, loss: LossSpec, w: &[f64], s: &Sample) -> Result<DenseVector> {
        let mut grad = DenseVector::zeros(self.param_count());
        let mut ws = self.workspace();
        self.accumulate_loss_grad(loss, w, s, 1.0, &mut grad, &mut ws)?;
        Ok(grad)
    }

    /// Adds `scale · ∇L(w)` to `grad` and returns `L(w)`.
    pub fn accumulate_loss_grad(
        &self,
        loss: LossSpec,
        w: &[f64],
        s: &Sample,
        scale: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64> {
        let value = self.loss_with(loss, w, s, ws)?;
        // ∂L/∂f_k = −ℓ'(t_k − f_k)
        ws.delta.clear();
        let out = ws.acts.last().expect("layers");
        ws.delta.extend(
            out.iter()
                .zip(&ws.target)
                .map(|(f, t)| -loss.derivative(t - f)),
        );
        match self {
            Self::Linear { inputs, .. } => {
                for (k, &d) in ws.delta.iter().enumerate() {
                    axpy(
                        scale * d,
                        &ws.acts[0],
                        &mut grad[k * inputs..(k + 1) * inputs],
                    );
                }
            }
            Self::Mlp { widths } => {
                let mut offsets = Vec::with_capacity(widths.len() - 1);
                let mut offset = 0;
                for pair in widths.windows(2) {
                    offsets.push(offset);
                    offset += pair[1] * (pair[0] + 1);
                }
                for l in (0..widths.len() - 1).rev() {
                    let (n_in, n_out) = (widths[l], widths[l + 1]);
                    let base = offsets[l];
                    let input = &ws.acts[l];
                    {
                        let (gw, gb) =
                            grad[base..base + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
                        for (j, &d) in ws.delta.iter().enumerate() {
                            if d != 0.0 {
                                axpy(scale * d, input, &mut gw[j * n_in..(j + 1) * n_in]);
                                gb[j] += scale * d;
                            }
                        }
                    }
                    if l > 0 {
                        let weights = &w[base..base + n_in * n_out];
                        ws.delta_prev.clear();
                        ws.delta_prev.resize(n_in, 0.0);
                        for (j, &d) in ws.delta.iter().enumerate() {
                            if d != 0.0 {
                                axpy(d, &weights[j * n_in..(j + 1) * n_in], &mut ws.delta_prev);
                            }
                        }
                        for (dp, a) in ws.delta_prev.iter_mut().zip(input) {
                            *dp *= 1.0 - a * a;
                        }
                        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
                    }
                }
            }
        }
        Ok(value)
    }

    /// Whether the model classifies `s` correctly: sign agreement for a
    /// single head, arg-max against the class label otherwise.
    pub fn is_correct(&self, w: &[f64], s: &Sample, ws: &mut Workspace) -> Result<bool> {
        self.check(w, &s.x)?;
        self.forward_into(w, &s.x, ws);
        let out = self.output(ws);
        if out.len() == 1 {
            return Ok(out[0] * s.y > 0.0 || (out[0] == 0.0 && s.y == 0.0));
        }
        let class = class_index(s.y, out.len())?;
        Ok(argmax(out) == class)
    }

    /// Mean loss and mean gradient over `indices`.
    pub fn batch_mean_loss_grad(
        &self,
        loss: LossSpec,
        w: &[f64],
        data: &Dataset,
        indices: &[usize],
        exec: Execution,
    ) -> Result<(f64, DenseVector)> {
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: data.len(),
            });
        }
        let p = self.param_count();
        let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();
        let partials = exec.map(&chunks, |chunk| -> Result<(f64, Vec<f64>)> {
            let mut ws = self.workspace();
            let mut g = vec![0.0; p];
            let mut l = 0.0;
            for &i in chunk.iter() {
                l += self.accumulate_loss_grad(loss, w, &data.samples[i], 1.0, &mut g, &mut ws)?;
            }
            Ok((l, g))
        });
        let mut total = 0.0;
        let mut grad = DenseVector::zeros(p);
        for part in partials {
            let (l, g) = part?;
            total += l;
            grad.axpy(1.0, &g);
        }
        let inv = 1.0 / indices.len() as f64;
        grad.scale(inv);
        Ok((total * inv, grad))
    }

    /// Per-sample losses and correctness flags over a whole dataset.
    pub fn evaluate(
        &self,
        loss: LossSpec,
        w: &[f64],
        data: &Dataset,
        exec: Execution,
    ) -> Result<Evaluation> {
        let rows = exec.map(&data.samples, |s| -> Result<(f64, bool)> {
            let mut ws = self.workspace();
            let l = self.loss_with(loss, w, s, &mut ws)?;
            let out = self.output(&ws);
            let correct = if out.len() == 1 {
                out[0] * s.y > 0.0 || (out[0] == 0.0 && s.y == 0.0)
            } else {
                argmax(out) == class_index(s.y, out.len())?
            };
            Ok((l, correct))
        });
        let mut losses = Vec::with_capacity(rows.len());
        let mut correct = 0;
        for r in rows {
            let (l, c) = r?;
            losses.push(l);
            correct += usize::from(c);
        }
        Ok(Evaluation { losses, correct })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub losses: Vec<f64>,
    pub correct: usize,
}

impl Evaluation {
    pub fn mean_loss(&self) -> f64 {
        if self.losses.is_empty() {
            f64::NAN
        } else {
            self.losses.iter().sum::<f64>() / self.losses.len() as f64
        }
    }

    /// Percentage in `[0, 100]`, NaN for an empty dataset.
    pub fn accuracy(&self) -> f64 {
        if self.losses.is_empty() {
            f64::NAN
        } else {
            100.0 * self.correct as f64 / self.losses.len() as f64
        }
    }
}

fn class_index(y: f64, classes: usize) -> Result<usize> {
    if y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes {
        Ok(y as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "label {y} is not a class index below {classes}"
        )))
    }
}

/// First index of the maximum entry.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { inputs, outputs } => write!(f, "linear:{inputs}x{outputs}"),
            Self::Mlp { widths } => {
                let w: Vec<String> = widths.iter().map(ToString::to_string).collect();
                write!(f, "mlp:{}", w.join(","))
            }
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// `linear:<d>`, `linear:<d>x<k>` or `mlp:<w0>,<w1>,...`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad model spec `{s}`"));
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        match s.trim().split_once(':') {
            Some(("linear", rest)) => {
                let (i, o) = match rest.split_once('x') {
                    Some((i, o)) => (num(i)?, num(o)?),
                    None => (num(rest)?, 1),
                };
                if i == 0 || o == 0 {
                    return Err(bad());
                }
                Ok(Self::Linear {
                    inputs: i,
                    outputs: o,
                })
            }
            Some(("mlp", rest)) => Self::mlp(rest.split(',').map(num).collect::<Result<_>>()?),
            _ => Err(bad()),
        }
    }
}
