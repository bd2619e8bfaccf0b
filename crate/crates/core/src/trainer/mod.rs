//! Sequence-prediction training: per-sequence MSE with Adam, thresholded
//! set prediction, sequence-level accuracy and multi-seed aggregation.

mod adam;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use report::{Aggregate, RunReport, SeedResult};

use crate::diffcore::{Noise, RngStream, Tape, Var};
use crate::error::{Error, Result};
use crate::langs::{encode, Dataset, Encoded};
use crate::models::{
    run_sequence, ActionFn, Bound, Model, ModelConfig, ModelParams, RunOptions, Snapshot,
};

pub const DEFAULT_EPOCHS: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CLIP_NORM: f64 = 1.0;

// Independent random streams derived from one run seed.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub threshold: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            adam: AdamConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            clip_norm: Some(DEFAULT_CLIP_NORM),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !self.adam.lr.is_finite() || self.adam.lr <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.adam.lr
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "clip norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

fn check_same_shape(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if predictions.len() != targets.len()
        || predictions
            .iter()
            .zip(targets)
            .any(|(p, t)| p.len() != t.len())
    {
        return Err(Error::Shape {
            op: "mse_loss",
            detail: "predictions and targets differ in shape".into(),
        });
    }
    Ok(())
}

/// Mean over all `T x D_out` entries of the squared error.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_same_shape(predictions, targets)?;
    let n: usize = targets.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::InvalidArgument("empty prediction matrix".into()));
    }
    let total: f64 = predictions
        .iter()
        .flatten()
        .zip(targets.iter().flatten())
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    Ok(total / n as f64)
}

/// Tape version of [`mse_loss`] over per-step outputs.
pub fn mse_loss_on_tape(tape: &mut Tape, outputs: &[Var], targets: &[Vec<f64>]) -> Result<Var> {
    if outputs.len() != targets.len() {
        return Err(Error::Shape {
            op: "mse_loss",
            detail: format!(
                "{} outputs for {} target rows",
                outputs.len(),
                targets.len()
            ),
        });
    }
    let y = tape.concat(outputs)?;
    let flat: Vec<f64> = targets.concat();
    let t = tape.constant(&[flat.len()], flat)?;
    let diff = tape.sub(y, t)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

/// Indices predicted at each step: entries strictly above `threshold`.
pub fn predict_sets(predictions: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    predictions
        .iter()
        .map(|row| (0..row.len()).filter(|&j| row[j] > threshold).collect())
        .collect()
}

/// Index sets of a k-hot target matrix.
pub fn target_sets(targets: &[Vec<f64>]) -> Vec<Vec<usize>> {
    predict_sets(targets, 0.5)
}

/// A sequence counts as correct only if every step's set matches exactly.
pub fn sequence_correct(predicted: &[Vec<usize>], targets: &[Vec<usize>]) -> bool {
    predicted.len() == targets.len() && predicted.iter().zip(targets).all(|(p, t)| p == t)
}

fn gradients(tape: &Tape, w: &Bound) -> Vec<Vec<f64>> {
    w.iter()
        .map(|(_, v)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
        })
        .collect()
}

/// Forward and backward pass for one sequence; returns the loss and the
/// gradient of every parameter tensor in order.
pub fn sequence_gradients(
    config: &ModelConfig,
    params: &ModelParams,
    sample: &Encoded,
    noise: &mut Noise,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let w = Bound::new(&mut tape, params, true)?;
    let run = run_sequence(
        &mut tape,
        config,
        &w,
        &sample.inputs,
        RunOptions {
            noise,
            forced: None,
            snapshot: Snapshot::None,
        },
    )?;
    let loss = mse_loss_on_tape(&mut tape, &run.outputs, &sample.targets)?;
    let value = tape.value(loss)[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss ({value})")));
    }
    tape.backward(loss)?;
    let grads = gradients(&tape, &w);
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((value, grads))
}

/// Result of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean loss over each epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub updates: u64,
}

/// Error from a run that diverged part-way, keeping the losses seen so far.
#[derive(Clone, Debug)]
pub struct Diverged {
    pub reason: String,
    pub epoch_losses: Vec<f64>,
}

fn noise_for(action: ActionFn, seed: u64) -> Noise {
    match action {
        ActionFn::GumbelSoftmax { .. } => Noise::Sampled(RngStream::new(seed, NOISE_STREAM)),
        _ => Noise::Frozen,
    }
}

/// Trains freshly initialized parameters. Initialization, the per-epoch
/// shuffles and Gumbel noise all derive from `seed`.
pub fn train(
    config: &ModelConfig,
    data: &[Encoded],
    tc: &TrainConfig,
    seed: u64,
) -> Result<Result<TrainOutcome, Diverged>> {
    let params = ModelParams::init(config, &mut RngStream::new(seed, INIT_STREAM))?;
    train_from(Model::new(config.clone(), params)?, data, tc, seed)
}

/// Trains starting from `model`. The outer error covers invalid input; the
/// inner one reports numeric divergence.
pub fn train_from(
    mut model: Model,
    data: &[Encoded],
    tc: &TrainConfig,
    seed: u64,
) -> Result<Result<TrainOutcome, Diverged>> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut order_rng = RngStream::new(seed, SHUFFLE_STREAM);
    let mut noise = noise_for(model.config.action, seed);
    let mut adam = AdamState::new(tc.adam, &model.params);
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..tc.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let (loss, mut grads) =
                match sequence_gradients(&model.config, &model.params, &data[i], &mut noise) {
                    Ok(r) => r,
                    Err(Error::NonFinite(what)) => {
                        return Ok(Err(Diverged {
                            reason: format!(
                                "non-finite {what} after {} updates",
                                adam.step_count()
                            ),
                            epoch_losses,
                        }))
                    }
                    Err(e) => return Err(e),
                };
            if let Some(max) = tc.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adam.update(&mut model.params, &grads)?;
            total += loss;
        }
        epoch_losses.push(total / data.len() as f64);
    }
    if model
        .params
        .tensors
        .iter()
        .flat_map(|p| &p.values)
        .any(|v| !v.is_finite())
    {
        return Ok(Err(Diverged {
            reason: "non-finite parameters".into(),
            epoch_losses,
        }));
    }
    Ok(Ok(TrainOutcome {
        model,
        epoch_losses,
        updates: adam.step_count(),
    }))
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<Encoded>> {
    let vocab = ds.vocabulary();
    ds.samples.iter().map(|s| encode(s, &vocab)).collect()
}

/// Whether the model gets every step of `sample` right.
pub fn sample_correct(model: &Model, sample: &Encoded, threshold: f64) -> Result<bool> {
    let predictions = model.predict(&sample.inputs)?;
    Ok(sequence_correct(
        &predict_sets(&predictions, threshold),
        &target_sets(&sample.targets),
    ))
}

/// Percentage of sequences predicted entirely correctly, with Gumbel noise
/// frozen.
pub fn evaluate(model: &Model, data: &[Encoded], threshold: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut correct = 0usize;
    for sample in data {
        correct += usize::from(sample_correct(model, sample, threshold)?);
    }
    Ok(100.0 * correct as f64 / data.len() as f64)
}

/// One seed's trained model (absent when training diverged) and its result.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub result: SeedResult,
    pub model: Option<Model>,
}

/// Trains and evaluates a single seed.
pub fn run_seed(
    config: &ModelConfig,
    train_data: &[Encoded],
    test_data: &[Encoded],
    tc: &TrainConfig,
    seed: u64,
) -> Result<SeedRun> {
    match train(config, train_data, tc, seed)? {
        Ok(outcome) => {
            let train_accuracy = evaluate(&outcome.model, train_data, tc.threshold)?;
            let test_accuracy = evaluate(&outcome.model, test_data, tc.threshold)?;
            Ok(SeedRun {
                result: SeedResult {
                    seed,
                    train_accuracy,
                    test_accuracy,
                    epoch_losses: outcome.epoch_losses,
                    failure: None,
                },
                model: Some(outcome.model),
            })
        }
        Err(d) => Ok(SeedRun {
            result: SeedResult {
                seed,
                train_accuracy: 0.0,
                test_accuracy: 0.0,
                epoch_losses: d.epoch_losses,
                failure: Some(d.reason),
            },
            model: None,
        }),
    }
}

/// Everything needed to run one model variant over several seeds.
pub struct ExperimentInputs<'a> {
    pub label: &'a str,
    pub fingerprint: &'a str,
    pub model: &'a ModelConfig,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub train_config: &'a TrainConfig,
    pub seeds: &'a [u64],
    /// Worker threads; seeds run in parallel, each on a single thread.
    pub workers: usize,
}

pub struct Experiment {
    pub report: RunReport,
    /// Per-seed runs, in seed order.
    pub runs: Vec<SeedRun>,
}

pub fn run_experiment(inputs: &ExperimentInputs) -> Result<Experiment> {
    if inputs.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one seed is required".into(),
        ));
    }
    inputs.model.validate()?;
    inputs.train_config.validate()?;
    let vocab = inputs.train.vocabulary();
    if vocab != inputs.test.vocabulary()
        || vocab.d_in() != inputs.model.d_in
        || vocab.d_out() != inputs.model.d_out
    {
        return Err(Error::InvalidArgument(format!(
            "model dimensions {}x{} do not fit datasets {} / {}",
            inputs.model.d_in,
            inputs.model.d_out,
            vocab,
            inputs.test.vocabulary()
        )));
    }
    let train_data = encode_dataset(inputs.train)?;
    let test_data = encode_dataset(inputs.test)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inputs.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut runs = pool.install(|| {
        inputs
            .seeds
            .par_iter()
            .map(|&seed| {
                run_seed(
                    inputs.model,
                    &train_data,
                    &test_data,
                    inputs.train_config,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    runs.sort_by_key(|r| r.result.seed);
    let report = RunReport::new(
        inputs.label,
        inputs.fingerprint,
        runs.iter().map(|r| r.result.clone()).collect(),
    )?;
    Ok(Experiment { report, runs })
}
