//! SGD, stochastic mirror descent (SMD) and regularizer mirror descent
//! (RMD), per-sample and mini-batch, plus the epoch-driven training loop.
//!
//! RMD minimizes `λ Σ_i L_i(w) + D_ψ(w, w₀)` by running mirror descent on
//! the augmented variables `(w, z)` with potential `ψ(w) + (λ/2)‖z‖²` and
//! one constraint `z[i] = √(2 L_i(w))` per sample. A visit to sample `i`
//! computes `c = η ℓ̂'(z[i] − √(2L_i))`, moves `∇ψ(w)` by
//! `c / √(2L_i) · ∇L_i(w)` and `z[i]` by `−c / λ`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Dataset, LossSpec, ModelSpec, Workspace};
use crate::numerics::{DenseVector, RngStream};
use crate::parallel::Execution;
use crate::potential::PotentialSpec;

/// The data-fitting side of a training problem.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub model: &'a ModelSpec,
    pub loss: LossSpec,
    pub data: &'a Dataset,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a ModelSpec, loss: LossSpec, data: &'a Dataset) -> Self {
        Self { model, loss, data }
    }

    fn sample_loss_grad(
        &self,
        w: &[f64],
        i: usize,
        ws: &mut Workspace,
    ) -> Result<(f64, DenseVector)> {
        let s = self.data.sample(i)?;
        let mut g = DenseVector::zeros(self.model.param_count());
        let l = self
            .model
            .accumulate_loss_grad(self.loss, w, s, 1.0, &mut g, ws)?;
        Ok((l, g))
    }

    fn batch_loss_grad(
        &self,
        w: &[f64],
        batch: &[usize],
        exec: Execution,
    ) -> Result<(f64, DenseVector)> {
        self.model
            .batch_mean_loss_grad(self.loss, w, self.data, batch, exec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub eta: f64,
    pub lambda: f64,
    pub batch_size: usize,
    /// Floor for the `√(2L)` denominator in the RMD weight update.
    pub epsilon_guard: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 0.01,
            lambda: 1.0,
            batch_size: 1,
            epsilon_guard: 1e-12,
        }
    }
}

impl HyperParams {
    pub fn new(eta: f64, lambda: f64) -> Self {
        Self {
            eta,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("eta", self.eta)?;
        positive("lambda", self.lambda)?;
        positive("epsilon_guard", self.epsilon_guard)?;
        if self.batch_size == 0 || self.batch_size > n.max(1) {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must lie in 1..={n}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Constraint-enforcing loss `ℓ̂` of the augmented problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintLoss {
    /// `ℓ̂(e) = e²/2`, so `ℓ̂'(e) = e`.
    #[default]
    Square,
}

impl ConstraintLoss {
    pub fn derivative(self, e: f64) -> f64 {
        match self {
            Self::Square => e,
        }
    }
}

/// Optional weight vector to regularize towards (`D_ψ(w, w_reg)`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSpec {
    pub w_reg: Option<DenseVector>,
}

impl AnchorSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(w_reg: DenseVector) -> Self {
        Self { w_reg: Some(w_reg) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w: DenseVector,
    /// One auxiliary entry per training sample; only RMD moves it.
    pub z: DenseVector,
    pub step: u64,
    pub epoch: usize,
    /// Per-epoch `Σ_i |z[i] − √(2L_i(w))|`, append-only.
    pub residual_history: Vec<f64>,
}

impl OptimizerState {
    /// `w` as given, `z = 0`.
    pub fn new(w: DenseVector, n: usize) -> Self {
        Self {
            w,
            z: DenseVector::zeros(n),
            step: 0,
            epoch: 0,
            residual_history: Vec::new(),
        }
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.w.is_finite() && self.z.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { step: self.step })
        }
    }
}

/// `w ← w − η ∇L_i(w)`
pub fn sgd_step(
    state: &mut OptimizerState,
    obj: &Objective,
    i: usize,
    hp: &HyperParams,
) -> Result<()> {
    let mut ws = obj.model.workspace();
    let (_, g) = obj.sample_loss_grad(&state.w, i, &mut ws)?;
    state.w.axpy(-hp.eta, &g);
    state.step += 1;
    Ok(())
}

/// `∇ψ(w) ← ∇ψ(w) − η ∇L_i(w)`
pub fn smd_step(
    state: &mut OptimizerState,
    obj: &Objective,
    potential: &PotentialSpec,
    i: usize,
    hp: &HyperParams,
) -> Result<()> {
    let mut ws = obj.model.workspace();
    let (_, g) = obj.sample_loss_grad(&state.w, i, &mut ws)?;
    potential.mirror_step(&mut state.w, &g, -hp.eta)?;
    state.step += 1;
    Ok(())
}

/// One RMD update on sample `i`.
pub fn rmd_step(
    state: &mut OptimizerState,
    obj: &Objective,
    potential: &PotentialSpec,
    closs: ConstraintLoss,
    i: usize,
    hp: &HyperParams,
) -> Result<()> {
    check_z(state, obj)?;
    let mut ws = obj.model.workspace();
    let (l, g) = obj.sample_loss_grad(&state.w, i, &mut ws)?;
    let r = (2.0 * l).sqrt();
    let c = hp.eta * closs.derivative(state.z[i] - r);
    potential.mirror_step(&mut state.w, &g, c / r.max(hp.epsilon_guard))?;
    state.z[i] -= c / hp.lambda;
    state.step += 1;
    Ok(())
}

/// Mini-batch RMD: the constraint is enforced on batch means
/// (`L̄`, `∇L̄`, `z̄`) and every member's `z` moves by the same `−c/λ`.
pub fn rmd_minibatch_step(
    state: &mut OptimizerState,
    obj: &Objective,
    potential: &PotentialSpec,
    closs: ConstraintLoss,
    batch: &[usize],
    hp: &HyperParams,
    exec: Execution,
) -> Result<()> {
    check_z(state, obj)?;
    let (l_bar, g_bar) = obj.batch_loss_grad(&state.w, batch, exec)?;
    let z_bar = batch.iter().map(|&i| state.z[i]).sum::<f64>() / batch.len() as f64;
    let r = (2.0 * l_bar).sqrt();
    let c = hp.eta * closs.derivative(z_bar - r);
    potential.mirror_step(&mut state.w, &g_bar, c / r.max(hp.epsilon_guard))?;
    for &i in batch {
        state.z[i] -= c / hp.lambda;
    }
    state.step += 1;
    Ok(())
}

/// Mini-batch SGD on the mean loss.
pub fn sgd_minibatch_step(
    state: &mut OptimizerState,
    obj: &Objective,
    batch: &[usize],
    hp: &HyperParams,
    exec: Execution,
) -> Result<()> {
    let (_, g) = obj.batch_loss_grad(&state.w, batch, exec)?;
    state.w.axpy(-hp.eta, &g);
    state.step += 1;
    Ok(())
}

/// Mini-batch SMD on the mean loss.
pub fn smd_minibatch_step(
    state: &mut OptimizerState,
    obj: &Objective,
    potential: &PotentialSpec,
    batch: &[usize],
    hp: &HyperParams,
    exec: Execution,
) -> Result<()> {
    let (_, g) = obj.batch_loss_grad(&state.w, batch, exec)?;
    potential.mirror_step(&mut state.w, &g, -hp.eta)?;
    state.step += 1;
    Ok(())
}

/// Weight-decay baseline: SGD on `L̄(w) + ½‖w‖² / (λ n)`, the per-sample
/// share of `Σ_i L_i(w) + ½‖w‖²/λ`.
pub fn weight_decay_step(
    state: &mut OptimizerState,
    obj: &Objective,
    batch: &[usize],
    hp: &HyperParams,
    exec: Execution,
) -> Result<()> {
    let (_, mut g) = obj.batch_loss_grad(&state.w, batch, exec)?;
    let decay = 1.0 / (hp.lambda * obj.data.len() as f64);
    g.axpy(decay, &state.w);
    state.w.axpy(-hp.eta, &g);
    state.step += 1;
    Ok(())
}

fn check_z(state: &OptimizerState, obj: &Objective) -> Result<()> {
    if state.z.len() == obj.data.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: "auxiliary z",
            expected: obj.data.len(),
            found: state.z.len(),
        })
    }
}

/// `Σ_i |z[i] − √(2 L_i)|` for per-sample losses `losses`.
pub fn constraint_residual(z: &[f64], losses: &[f64]) -> f64 {
    z.iter()
        .zip(losses)
        .map(|(zi, li)| (zi - (2.0 * li).sqrt()).abs())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Sgd,
    Smd,
    Rmd,
    WeightDecay,
}

impl Algorithm {
    pub fn uses_lambda(self) -> bool {
        matches!(self, Self::Rmd | Self::WeightDecay)
    }

    /// Potential that actually drives the update; SGD and weight decay are
    /// Euclidean regardless of configuration.
    pub fn effective_potential(self, configured: PotentialSpec) -> PotentialSpec {
        match self {
            Self::Sgd | Self::WeightDecay => PotentialSpec::SquaredL2,
            Self::Smd | Self::Rmd => configured,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Smd => "smd",
            Self::Rmd => "rmd",
            Self::WeightDecay => "weight_decay",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(Self::Sgd),
            "smd" => Ok(Self::Smd),
            "rmd" => Ok(Self::Rmd),
            "weight_decay" | "wd" => Ok(Self::WeightDecay),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    /// Every training sample fitted (by accuracy or residual tolerance).
    Interpolated,
    ConstraintConverged,
    LossConverged,
    Budget,
    NonFinite,
    DomainError,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Interpolated => "interpolated",
            Self::ConstraintConverged => "constraint-converged",
            Self::LossConverged => "loss-converged",
            Self::Budget => "budget",
            Self::NonFinite => "non-finite",
            Self::DomainError => "domain-error",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Halts when a statistic improves by less than `tol` (relative) across
/// `epochs` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub epochs: usize,
    pub tol: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            epochs: 500,
            tol: 1e-4,
        }
    }
}

impl Window {
    fn stalled(&self, history: &[f64], absolute: bool) -> bool {
        if self.epochs == 0 || history.len() <= self.epochs {
            return false;
        }
        let cur = history[history.len() - 1];
        let prev = history[history.len() - 1 - self.epochs];
        if prev == 0.0 {
            return true;
        }
        let change = (prev - cur) / prev.abs();
        let change = if absolute { change.abs() } else { change };
        change < self.tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StoppingRule {
    /// Stop at 100% training accuracy.
    pub full_accuracy: bool,
    /// Stop once every `√(2L_i) < tol`.
    pub interpolation_tol: Option<f64>,
    /// Constraint-residual plateau (RMD).
    pub constraint_window: Option<Window>,
    /// Total-loss plateau (weight decay).
    pub loss_window: Option<Window>,
}

impl StoppingRule {
    pub fn for_algorithm(algorithm: Algorithm, window: Window) -> Self {
        match algorithm {
            Algorithm::Sgd | Algorithm::Smd => Self {
                full_accuracy: true,
                ..Self::default()
            },
            Algorithm::Rmd => Self {
                constraint_window: Some(window),
                ..Self::default()
            },
            Algorithm::WeightDecay => Self {
                loss_window: Some(window),
                ..Self::default()
            },
        }
    }

    pub fn interpolation(tol: f64) -> Self {
        Self {
            interpolation_tol: Some(tol),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub max_epochs: usize,
    pub stopping: StoppingRule,
    /// Emit metrics every this many epochs (the final epoch always).
    pub log_every: usize,
}

impl Schedule {
    pub fn new(max_epochs: usize, stopping: StoppingRule) -> Self {
        Self {
            max_epochs,
            stopping,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub potential: PotentialSpec,
    pub closs: ConstraintLoss,
    pub hp: HyperParams,
    pub anchor: AnchorSpec,
    /// Standard deviation of the random initialization around the
    /// potential's minimizer; 0 starts exactly there.
    pub init_std: f64,
    /// Standard deviation of a random `z₀`; 0 starts at `z = 0`.
    pub z_init_std: f64,
    pub schedule: Schedule,
    pub exec: Execution,
}

impl RunConfig {
    pub fn new(
        algorithm: Algorithm,
        potential: PotentialSpec,
        hp: HyperParams,
        schedule: Schedule,
    ) -> Self {
        Self {
            algorithm,
            potential,
            closs: ConstraintLoss::Square,
            hp,
            anchor: AnchorSpec::none(),
            init_std: 0.01,
            z_init_std: 0.0,
            schedule,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// NaN without a test set.
    pub test_accuracy: f64,
    pub constraint_residual: f64,
    pub bregman_from_init: f64,
    /// Set on the final row only.
    pub stop_reason: Option<StopReason>,
}

impl EpochMetrics {
    /// Row reported for an epoch that aborted; every metric is NaN.
    pub fn aborted(epoch: usize, reason: StopReason) -> Self {
        Self {
            epoch,
            train_loss: f64::NAN,
            train_accuracy: f64::NAN,
            test_accuracy: f64::NAN,
            constraint_residual: f64::NAN,
            bregman_from_init: f64::NAN,
            stop_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: OptimizerState,
    pub w_init: DenseVector,
    pub stop_reason: StopReason,
    pub metrics: Vec<EpochMetrics>,
}

/// Initial weights: the anchor when present, otherwise a Gaussian
/// perturbation of the potential's minimizer (taken in the mirror space for
/// negative entropy so the start stays positive).
pub fn initial_weights(
    model: &ModelSpec,
    cfg: &RunConfig,
    rng: &mut RngStream,
) -> Result<DenseVector> {
    let potential = cfg.algorithm.effective_potential(cfg.potential);
    let w = match &cfg.anchor.w_reg {
        Some(w_reg) => {
            if w_reg.len() != model.param_count() {
                return Err(Error::DimensionMismatch {
                    context: "anchor",
                    expected: model.param_count(),
                    found: w_reg.len(),
                });
            }
            w_reg.clone()
        }
        None => {
            let noise = model.init_weights(cfg.init_std, rng);
            match potential {
                PotentialSpec::NegativeEntropy => potential.grad_inverse(&noise),
                _ => noise,
            }
        }
    };
    potential.check_domain(&w)?;
    Ok(w)
}

/// Trains from scratch until the stopping rule fires or the epoch budget
/// runs out. Every epoch visits each training sample once in a freshly
/// shuffled order. `on_epoch` sees each logged metrics row as it is
/// produced, including the final one. A run that hits a non-finite weight or
/// leaves the potential's domain reports one [`EpochMetrics::aborted`] row
/// and then returns the error.
pub fn run(
    model: &ModelSpec,
    loss: LossSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &RunConfig,
    rng: &mut RngStream,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<RunOutcome> {
    let n = train.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    cfg.hp.validate(n)?;
    if cfg.schedule.max_epochs == 0 {
        return Err(Error::InvalidArgument(
            "epoch budget must be positive".into(),
        ));
    }
    let potential = cfg.algorithm.effective_potential(cfg.potential);
    let w0 = initial_weights(model, cfg, rng)?;
    let mut state = OptimizerState::new(w0.clone(), n);
    if cfg.algorithm == Algorithm::Rmd && cfg.z_init_std > 0.0 {
        state.z = rng.gaussian_vector(n, cfg.z_init_std);
    }
    let obj = Objective::new(model, loss, train);
    let mut order: Vec<usize> = (0..n).collect();
    let mut metrics = Vec::new();
    let hp = cfg.hp;
    let log_every = cfg.schedule.log_every.max(1);
    let mut loss_history = Vec::new();

    loop {
        rng.shuffle(&mut order);
        let mut epoch_steps = || -> Result<()> {
            for batch in order.chunks(hp.batch_size) {
                match (cfg.algorithm, batch.len()) {
                    (Algorithm::Sgd, 1) => sgd_step(&mut state, &obj, batch[0], &hp),
                    (Algorithm::Smd, 1) => smd_step(&mut state, &obj, &potential, batch[0], &hp),
                    (Algorithm::Rmd, 1) => {
                        rmd_step(&mut state, &obj, &potential, cfg.closs, batch[0], &hp)
                    }
                    (Algorithm::Sgd, _) => {
                        sgd_minibatch_step(&mut state, &obj, batch, &hp, cfg.exec)
                    }
                    (Algorithm::Smd, _) => {
                        smd_minibatch_step(&mut state, &obj, &potential, batch, &hp, cfg.exec)
                    }
                    (Algorithm::Rmd, _) => rmd_minibatch_step(
                        &mut state, &obj, &potential, cfg.closs, batch, &hp, cfg.exec,
                    ),
                    (Algorithm::WeightDecay, _) => {
                        weight_decay_step(&mut state, &obj, batch, &hp, cfg.exec)
                    }
                }?;
            }
            state.ensure_finite()
        };
        if let Err(e) = epoch_steps() {
            let reason = match e {
                Error::NonFinite { .. } => Some(StopReason::NonFinite),
                Error::DomainError { .. } => Some(StopReason::DomainError),
                _ => None,
            };
            if let Some(reason) = reason {
                on_epoch(&EpochMetrics::aborted(state.epoch + 1, reason));
            }
            return Err(e);
        }
        state.epoch += 1;

        let eval = model.evaluate(loss, &state.w, train, cfg.exec)?;
        let residual = constraint_residual(&state.z, &eval.losses);
        state.residual_history.push(residual);
        loss_history.push(eval.losses.iter().sum::<f64>());

        let rule = &cfg.schedule.stopping;
        let stop = if rule
            .interpolation_tol
            .is_some_and(|tol| eval.losses.iter().all(|&l| (2.0 * l).sqrt() < tol))
            || (rule.full_accuracy && eval.correct == n)
        {
            Some(StopReason::Interpolated)
        } else if rule
            .constraint_window
            .is_some_and(|w| w.stalled(&state.residual_history, false))
        {
            Some(StopReason::ConstraintConverged)
        } else if rule
            .loss_window
            .is_some_and(|w| w.stalled(&loss_history, true))
        {
            Some(StopReason::LossConverged)
        } else if state.epoch >= cfg.schedule.max_epochs {
            Some(StopReason::Budget)
        } else {
            None
        };

        if stop.is_some() || state.epoch.is_multiple_of(log_every) {
            let test_accuracy = match test {
                Some(t) if !t.is_empty() => model.evaluate(loss, &state.w, t, cfg.exec)?.accuracy(),
                _ => f64::NAN,
            };
            let row = EpochMetrics {
                epoch: state.epoch,
                train_loss: eval.mean_loss(),
                train_accuracy: eval.accuracy(),
                test_accuracy,
                constraint_residual: residual,
                bregman_from_init: potential.bregman(&state.w, &w0)?.value(),
                stop_reason: stop,
            };
            on_epoch(&row);
            metrics.push(row);
        }
        if let Some(stop_reason) = stop {
            return Ok(RunOutcome {
                state,
                w_init: w0,
                stop_reason,
                metrics,
            });
        }
    }
}
