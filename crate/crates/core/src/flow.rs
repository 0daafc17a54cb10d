//! Symmetric flow-matching objective.
//!
//! A data point `x` and its label code `y` travel along opposing straight
//! paths: `x` is pulled out of noise while `y` dissolves into noise,
//!
//! ```text
//! x_t = (1 - t) ξ_x + t x        v_x = x - ξ_x
//! y_t = (1 - t) y   + t ξ_y      v_y = ξ_y - y
//! ```
//!
//! and one network regresses the joint velocity `(v_x, v_y)` from `(x_t, y_t, t)`.

use std::fmt;
use std::str::FromStr;

use crate::codec::ClassCodebook;
use crate::datasets::Dataset;
use crate::error::{check_dim, invalid, Error, Result};
use crate::nn::{cosine_lr, Activation, AdamConfig, AdamState, Matrix, MlpGrads, MlpParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSample<S> {
    pub x: Vec<S>,
    pub y: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState<S> {
    pub x: Vec<S>,
    pub y: Vec<S>,
    pub t: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledVelocity<S> {
    pub x: Vec<S>,
    pub y: Vec<S>,
}

/// Per-element randomness of one training draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<S> {
    pub t: S,
    pub xi_x: Vec<S>,
    pub xi_y: Vec<S>,
}

impl<S: Scalar> NoiseDraw<S> {
    pub fn sample(dim_x: usize, dim_y: usize, rng: &mut SeededRng) -> Self {
        let t = S::lit(rng.uniform());
        let xi_x = rng.normal_vec(dim_x);
        let xi_y = rng.normal_vec(dim_y);
        Self { t, xi_x, xi_y }
    }
}

pub fn draw_noise<S: Scalar>(
    len: usize,
    dim_x: usize,
    dim_y: usize,
    rng: &mut SeededRng,
) -> Vec<NoiseDraw<S>> {
    (0..len).map(|_| NoiseDraw::sample(dim_x, dim_y, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeEncoding {
    /// `t` appended as one scalar feature.
    #[default]
    Raw,
    /// `sin(2^k π t), cos(2^k π t)` for `k = 0..4`.
    Sinusoidal,
}

const SINUSOIDAL_FREQS: usize = 4;

impl TimeEncoding {
    pub fn width(self) -> usize {
        match self {
            TimeEncoding::Raw => 1,
            TimeEncoding::Sinusoidal => 2 * SINUSOIDAL_FREQS,
        }
    }

    pub fn encode_into<S: Scalar>(self, t: S, out: &mut [S]) {
        match self {
            TimeEncoding::Raw => out[0] = t,
            TimeEncoding::Sinusoidal => {
                let pi = S::lit(std::f64::consts::PI);
                let mut freq = S::one();
                for k in 0..SINUSOIDAL_FREQS {
                    let arg = freq * pi * t;
                    out[2 * k] = arg.sin();
                    out[2 * k + 1] = arg.cos();
                    freq = freq + freq;
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeEncoding::Raw => "raw",
            TimeEncoding::Sinusoidal => "sinusoidal",
        }
    }
}

impl fmt::Display for TimeEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimeEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(TimeEncoding::Raw),
            "sinusoidal" => Ok(TimeEncoding::Sinusoidal),
            other => Err(invalid("time_encoding", format!("unknown encoding `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Both paths move; loss on all output coordinates.
    #[default]
    Symmetric,
    /// Standard conditional flow matching: `y` stays at its code for all `t`
    /// and only the `v_x` head is trained.
    ConditionalBaseline,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Symmetric => "symmetric",
            Objective::ConditionalBaseline => "conditional-baseline",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Objective::Symmetric),
            "conditional-baseline" => Ok(Objective::ConditionalBaseline),
            other => Err(invalid("objective", format!("unknown objective `{other}`"))),
        }
    }
}

/// Straight-line perturbation of a coupled sample at time `t`.
pub fn perturb<S: Scalar>(
    sample: &CoupledSample<S>,
    t: S,
    xi_x: &[S],
    xi_y: &[S],
) -> Result<CoupledState<S>> {
    check_dim("perturb xi_x", sample.x.len(), xi_x.len())?;
    check_dim("perturb xi_y", sample.y.len(), xi_y.len())?;
    if !(t >= S::zero() && t <= S::one()) {
        return Err(invalid("t", format!("must lie in [0, 1], got {t}")));
    }
    let s = S::one() - t;
    Ok(CoupledState {
        x: xi_x.iter().zip(&sample.x).map(|(&n, &x)| s * n + t * x).collect(),
        y: sample.y.iter().zip(xi_y).map(|(&y, &n)| s * y + t * n).collect(),
        t,
    })
}

/// Time derivative of the [`perturb`] path; constant in `t`.
pub fn target_velocity<S: Scalar>(
    sample: &CoupledSample<S>,
    xi_x: &[S],
    xi_y: &[S],
) -> Result<CoupledVelocity<S>> {
    check_dim("target_velocity xi_x", sample.x.len(), xi_x.len())?;
    check_dim("target_velocity xi_y", sample.y.len(), xi_y.len())?;
    Ok(CoupledVelocity {
        x: sample.x.iter().zip(xi_x).map(|(&x, &n)| x - n).collect(),
        y: xi_y.iter().zip(&sample.y).map(|(&n, &y)| n - y).collect(),
    })
}

/// How the network's input and output are laid out around the coupled state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowLayout {
    pub dim_x: usize,
    pub dim_y: usize,
    pub time_encoding: TimeEncoding,
}

impl FlowLayout {
    pub fn new(dim_x: usize, dim_y: usize, time_encoding: TimeEncoding) -> Self {
        Self {
            dim_x,
            dim_y,
            time_encoding,
        }
    }

    /// `[x_t, y_t, time features]`
    pub fn input_width(&self) -> usize {
        self.dim_x + self.dim_y + self.time_encoding.width()
    }

    /// `[v_x, v_y]`
    pub fn output_width(&self) -> usize {
        self.dim_x + self.dim_y
    }

    /// Network widths for the given hidden layer sizes.
    pub fn widths(&self, hidden: &[usize]) -> Vec<usize> {
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(self.input_width());
        w.extend_from_slice(hidden);
        w.push(self.output_width());
        w
    }

    pub fn check_params<S: Scalar>(&self, params: &MlpParams<S>) -> Result<()> {
        check_dim("network input width", self.input_width(), params.input_width())?;
        check_dim("network output width", self.output_width(), params.output_width())
    }

    pub fn write_input_row<S: Scalar>(&self, x: &[S], y: &[S], t: S, row: &mut [S]) {
        row[..self.dim_x].copy_from_slice(x);
        row[self.dim_x..self.dim_x + self.dim_y].copy_from_slice(y);
        self.time_encoding
            .encode_into(t, &mut row[self.dim_x + self.dim_y..]);
    }
}

/// Trained velocity network together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel<S> {
    pub layout: FlowLayout,
    pub params: MlpParams<S>,
    pub objective: Objective,
}

impl<S: Scalar> FlowModel<S> {
    pub fn new(layout: FlowLayout, params: MlpParams<S>, objective: Objective) -> Result<Self> {
        layout.check_params(&params)?;
        Ok(Self {
            layout,
            params,
            objective,
        })
    }

    /// Network output for one state, split into `(v_x, v_y)`.
    ///
    /// Under [`Objective::ConditionalBaseline`] the `v_y` head was never
    /// trained and `y` does not flow, so `v_y` is reported as zero.
    pub fn velocity(&self, x: &[S], y: &[S], t: S) -> Result<CoupledVelocity<S>> {
        let mut v = model_velocity(&self.layout, &self.params, x, y, t)?;
        if self.objective == Objective::ConditionalBaseline {
            v.y.iter_mut().for_each(|c| *c = S::zero());
        }
        Ok(v)
    }

    /// Raw network outputs for many states at once, one row per state.
    pub fn raw_velocity_batch(&self, inputs: &Matrix<S>) -> Result<Matrix<S>> {
        self.params.predict(inputs)
    }
}

/// Evaluates the network at `(x_t, y_t, t)` and splits its output positionally.
pub fn model_velocity<S: Scalar>(
    layout: &FlowLayout,
    params: &MlpParams<S>,
    x: &[S],
    y: &[S],
    t: S,
) -> Result<CoupledVelocity<S>> {
    layout.check_params(params)?;
    check_dim("model_velocity x", layout.dim_x, x.len())?;
    check_dim("model_velocity y", layout.dim_y, y.len())?;
    let mut input = Matrix::zeros(1, layout.input_width());
    layout.write_input_row(x, y, t, input.row_mut(0));
    let out = params.predict(&input)?.into_vec();
    let (vx, vy) = out.split_at(layout.dim_x);
    Ok(CoupledVelocity {
        x: vx.to_vec(),
        y: vy.to_vec(),
    })
}

/// Network inputs, regression targets and the number of penalised output
/// columns for one minibatch.
struct RegressionBatch<S> {
    inputs: Matrix<S>,
    targets: Matrix<S>,
    penalised: usize,
}

fn build_regression_batch<S: Scalar>(
    layout: &FlowLayout,
    objective: Objective,
    batch: &[CoupledSample<S>],
    draws: &[NoiseDraw<S>],
) -> Result<RegressionBatch<S>> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    check_dim("noise draws", batch.len(), draws.len())?;
    let mut inputs = Matrix::zeros(batch.len(), layout.input_width());
    let mut targets = Matrix::zeros(batch.len(), layout.output_width());
    for (r, (sample, draw)) in batch.iter().zip(draws).enumerate() {
        check_dim("sample x", layout.dim_x, sample.x.len())?;
        check_dim("sample y", layout.dim_y, sample.y.len())?;
        let state = perturb(sample, draw.t, &draw.xi_x, &draw.xi_y)?;
        let target = target_velocity(sample, &draw.xi_x, &draw.xi_y)?;
        let y_in = match objective {
            Objective::Symmetric => &state.y,
            Objective::ConditionalBaseline => &sample.y,
        };
        layout.write_input_row(&state.x, y_in, draw.t, inputs.row_mut(r));
        let row = targets.row_mut(r);
        row[..layout.dim_x].copy_from_slice(&target.x);
        if objective == Objective::Symmetric {
            row[layout.dim_x..].copy_from_slice(&target.y);
        }
    }
    let penalised = match objective {
        Objective::Symmetric => layout.output_width(),
        Objective::ConditionalBaseline => layout.dim_x,
    };
    Ok(RegressionBatch {
        inputs,
        targets,
        penalised,
    })
}

/// Mean squared velocity error over the batch and the penalised coordinates,
/// plus its gradient with respect to the parameters, for fixed noise draws.
pub fn loss_and_grad_with_draws<S: Scalar>(
    layout: &FlowLayout,
    params: &MlpParams<S>,
    objective: Objective,
    batch: &[CoupledSample<S>],
    draws: &[NoiseDraw<S>],
) -> Result<(S, MlpGrads<S>)> {
    layout.check_params(params)?;
    let rb = build_regression_batch(layout, objective, batch, draws)?;
    let (out, cache) = params.forward(&rb.inputs)?;
    let count = S::count(batch.len() * rb.penalised);
    let two = S::lit(2.0);
    let mut loss = S::zero();
    let mut out_grad = Matrix::zeros(out.rows(), out.cols());
    for r in 0..out.rows() {
        let (o, t, g) = (out.row(r), rb.targets.row(r), out_grad.row_mut(r));
        for c in 0..rb.penalised {
            let diff = o[c] - t[c];
            loss += diff * diff;
            g[c] = two * diff / count;
        }
    }
    let (grads, _) = params.backward(&cache, &out_grad)?;
    Ok((loss / count, grads))
}

/// Loss only; same value as [`loss_and_grad_with_draws`] without backprop.
pub fn loss_with_draws<S: Scalar>(
    layout: &FlowLayout,
    params: &MlpParams<S>,
    objective: Objective,
    batch: &[CoupledSample<S>],
    draws: &[NoiseDraw<S>],
) -> Result<S> {
    layout.check_params(params)?;
    let rb = build_regression_batch(layout, objective, batch, draws)?;
    let out = params.predict(&rb.inputs)?;
    let mut loss = S::zero();
    for r in 0..out.rows() {
        for c in 0..rb.penalised {
            let diff = out.row(r)[c] - rb.targets.row(r)[c];
            loss += diff * diff;
        }
    }
    Ok(loss / S::count(batch.len() * rb.penalised))
}

/// Symmetric objective with fresh per-element `(t, ξ_x, ξ_y)` drawn from `rng`.
pub fn symmflow_loss_and_grad<S: Scalar>(
    layout: &FlowLayout,
    params: &MlpParams<S>,
    batch: &[CoupledSample<S>],
    rng: &mut SeededRng,
) -> Result<(S, MlpGrads<S>)> {
    let draws = draw_noise(batch.len(), layout.dim_x, layout.dim_y, rng);
    loss_and_grad_with_draws(layout, params, Objective::Symmetric, batch, &draws)
}

/// Conditional baseline: `y` fixed at its code, only `v_x` penalised.
pub fn conditional_baseline_loss_and_grad<S: Scalar>(
    layout: &FlowLayout,
    params: &MlpParams<S>,
    batch: &[CoupledSample<S>],
    rng: &mut SeededRng,
) -> Result<(S, MlpGrads<S>)> {
    let draws = draw_noise(batch.len(), layout.dim_x, layout.dim_y, rng);
    loss_and_grad_with_draws(layout, params, Objective::ConditionalBaseline, batch, &draws)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub cosine_annealing: bool,
    pub objective: Objective,
    pub time_encoding: TimeEncoding,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 256,
            adam: AdamConfig::default(),
            cosine_annealing: true,
            objective: Objective::Symmetric,
            time_encoding: TimeEncoding::Raw,
            hidden: vec![128; 4],
            activation: Activation::Silu,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(invalid("lr", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<S> {
    pub model: FlowModel<S>,
    /// Mean minibatch loss per epoch, weighted by minibatch size.
    pub loss_history: Vec<f64>,
    pub optimizer_steps: u64,
}

/// Initialises a network from `config` and trains it on `dataset`.
pub fn train<S: Scalar>(
    dataset: &Dataset<S>,
    codebook: &ClassCodebook<S>,
    config: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    let layout = FlowLayout::new(dataset.dim_x(), codebook.dim_y(), config.time_encoding);
    let mut rng = SeededRng::new(config.seed);
    let mut init_rng = rng.fork();
    let params = MlpParams::init(&layout.widths(&config.hidden), config.activation, &mut init_rng)?;
    let model = FlowModel::new(layout, params, config.objective)?;
    train_model(model, dataset, codebook, config, &mut rng)
}

/// Continues training `model`; the optimizer state starts fresh.
///
/// Per epoch: seeded shuffle, then for each minibatch fresh dequantized codes,
/// fresh `(t, ξ)` per element and one Adam step.
pub fn train_model<S: Scalar>(
    mut model: FlowModel<S>,
    dataset: &Dataset<S>,
    codebook: &ClassCodebook<S>,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    check_dim("dataset dim_x", model.layout.dim_x, dataset.dim_x())?;
    check_dim("codebook dim_y", model.layout.dim_y, codebook.dim_y())?;
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= codebook.num_classes()) {
        return Err(Error::ClassOutOfRange {
            index: bad,
            num_classes: codebook.num_classes(),
        });
    }

    let n = dataset.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (config.epochs * batches_per_epoch) as u64;
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let layout = model.layout;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    Ok(CoupledSample {
                        x: dataset.point(i).to_vec(),
                        y: codebook.dequantize(dataset.labels()[i], rng)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let draws = draw_noise(batch.len(), layout.dim_x, layout.dim_y, rng);
            let (loss, grads) =
                loss_and_grad_with_draws(&layout, &model.params, model.objective, &batch, &draws)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
            }
            let lr = if config.cosine_annealing {
                cosine_lr(config.adam.lr, adam.step_count(), total_steps)
            } else {
                config.adam.lr
            };
            adam.update_with_lr(&mut model.params, &grads, lr)?;
            epoch_loss += loss.as_f64() * chunk.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
        optimizer_steps: adam.step_count(),
    })
}
