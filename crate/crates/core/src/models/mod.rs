//! Recurrent architectures with and without differentiable external memory.

mod cells;
mod config;
mod memory;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cells::{
    baby_ntm_step, initial_state, joulin_stack_rnn_step, run_sequence, stack_lstm_step,
    stack_rnn_step, step, vanilla_lstm_step, vanilla_rnn_step, ActionSource, Bound, Memory,
    RecurrentState, RunOptions, SequenceRun, Snapshot, StepOutput, StepTrace,
};
pub use config::{
    ActionFn, Architecture, ModelConfig, ModelParams, DEFAULT_HIDDEN, DEFAULT_JOULIN_K,
    DEFAULT_MEMORY_SLOTS, DEFAULT_MEM_DIM, LSTM_FORGET_BIAS,
};
pub use memory::{
    memory_update, op_matrices, stack_update, MemoryOp, MemoryState, OpMatrix, StackState,
};

use crate::diffcore::{Noise, Tape};
use crate::error::{Error, Result};

/// A configured architecture together with its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self { config, params })
    }

    /// Forward pass with frozen noise; returns per-step outputs and traces.
    pub fn run(
        &self,
        inputs: &[Vec<f64>],
        snapshot: Snapshot,
    ) -> Result<(Vec<Vec<f64>>, Vec<StepTrace>)> {
        let mut tape = Tape::new();
        let w = Bound::new(&mut tape, &self.params, false)?;
        let mut noise = Noise::Frozen;
        let run = run_sequence(
            &mut tape,
            &self.config,
            &w,
            inputs,
            RunOptions {
                noise: &mut noise,
                forced: None,
                snapshot,
            },
        )?;
        Ok((run.predictions(&tape), run.traces))
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(inputs, Snapshot::None)?.0)
    }
}

pub const CHECKPOINT_FORMAT: &str = "marnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON checkpoint. Floats are written in shortest
/// round-trip form, so loading reproduces every weight bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Task the model was trained on, used to check vocabularies.
    pub task: String,
    pub seed: u64,
    pub fingerprint: String,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(task: &str, seed: u64, fingerprint: &str, model: Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            task: task.into(),
            seed,
            fingerprint: fingerprint.into(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.model.config.validate()?;
        ck.model.params.check(&ck.model.config)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
