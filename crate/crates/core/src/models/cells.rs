//! Single-timestep transitions for each architecture, recorded on a tape.

use super::config::{ActionFn, Architecture, ModelConfig, ModelParams};
use super::memory::{memory_update, op_matrices, MemoryState, OpMatrix, StackState};
use crate::diffcore::{gumbel_softmax, Noise, Tape, Var};
use crate::error::{Error, Result};

/// Parameters registered on a tape, looked up by name.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    /// Registers every tensor of `params`; `trainable` controls gradient tracking.
    pub fn new(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Result<Self> {
        let vars = params
            .tensors
            .iter()
            .map(|p| {
                Ok((
                    p.name.clone(),
                    tape.leaf(&p.shape, p.values.clone(), trainable)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vars })
    }

    pub fn from_vars(names: &[&str], vars: &[Var]) -> Self {
        Self {
            vars: names
                .iter()
                .map(|n| n.to_string())
                .zip(vars.iter().copied())
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::MissingParameter(name.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Where action weights come from at a step.
pub enum ActionSource<'a> {
    /// Computed by the controller from `W_a h`.
    Learned {
        action: ActionFn,
        noise: &'a mut Noise,
    },
    /// Fixed weights, bypassing the controller.
    Forced(&'a [f64]),
}

fn action_weights(tape: &mut Tape, w: &Bound, h: Var, src: &mut ActionSource) -> Result<Var> {
    match src {
        ActionSource::Forced(a) => tape.constant(&[a.len()], a.to_vec()),
        ActionSource::Learned { action, noise } => {
            let logits = tape.matvec(w.get("W_a")?, h)?;
            match *action {
                ActionFn::Softmax => tape.softmax(logits),
                ActionFn::SoftmaxTemp { tau } => tape.softmax_temp(logits, tau),
                ActionFn::GumbelSoftmax { tau } => {
                    let p = tape.softmax(logits)?;
                    gumbel_softmax(tape, p, tau, noise)
                }
            }
        }
    }
}

fn check_input(tape: &Tape, w: &Bound, x: Var, h_prev: Var) -> Result<()> {
    let w_ih = tape.shape(w.get("W_ih")?);
    if tape.shape(x) != [w_ih[1]] {
        return Err(Error::Shape {
            op: "step",
            detail: format!("input {:?} does not match W_ih {:?}", tape.shape(x), w_ih),
        });
    }
    let w_hh = tape.shape(w.get("W_hh")?);
    if tape.shape(h_prev) != [w_hh[1]] {
        return Err(Error::Shape {
            op: "step",
            detail: format!(
                "hidden state {:?} does not match W_hh {:?}",
                tape.shape(h_prev),
                w_hh
            ),
        });
    }
    Ok(())
}

/// `tanh(W_ih x + b_ih + W_hh h + b_hh)`.
fn rnn_cell(tape: &mut Tape, w: &Bound, x: Var, h: Var) -> Result<Var> {
    let a = tape.matvec(w.get("W_ih")?, x)?;
    let a = tape.add(a, w.get("b_ih")?)?;
    let b = tape.matvec(w.get("W_hh")?, h)?;
    let b = tape.add(b, w.get("b_hh")?)?;
    let z = tape.add(a, b)?;
    Ok(tape.tanh(z))
}

/// Standard LSTM with gate blocks `[input, forget, candidate, output]`.
fn lstm_cell(tape: &mut Tape, w: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hidden = tape.shape(h)[0];
    let a = tape.matvec(w.get("W_ih")?, x)?;
    let a = tape.add(a, w.get("b_ih")?)?;
    let b = tape.matvec(w.get("W_hh")?, h)?;
    let b = tape.add(b, w.get("b_hh")?)?;
    let gates = tape.add(a, b)?;
    let block = |tape: &mut Tape, k: usize| tape.slice(gates, k * hidden, hidden);
    let i = block(tape, 0)?;
    let i = tape.sigmoid(i);
    let f = block(tape, 1)?;
    let f = tape.sigmoid(f);
    let g = block(tape, 2)?;
    let g = tape.tanh(g);
    let o = block(tape, 3)?;
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_new = tape.add(keep, write)?;
    let squashed = tape.tanh(c_new);
    let h_new = tape.mul(o, squashed)?;
    Ok((h_new, c_new))
}

fn output(tape: &mut Tape, w: &Bound, h: Var) -> Result<Var> {
    let z = tape.matvec(w.get("W_y")?, h)?;
    Ok(tape.sigmoid(z))
}

fn inserted_value(tape: &mut Tape, w: &Bound, h: Var) -> Result<Var> {
    let z = tape.matvec(w.get("W_n")?, h)?;
    Ok(tape.sigmoid(z))
}

/// `h + W · read`, the hidden state seen by the recurrence.
fn mix_read(tape: &mut Tape, w: &Bound, weight: &str, h: Var, read: Var) -> Result<Var> {
    let r = tape.matvec(w.get(weight)?, read)?;
    tape.add(h, r)
}

/// External memory carried between steps.
#[derive(Clone, Copy, Debug)]
pub enum Memory {
    None,
    Stack(StackState),
    Slots(MemoryState),
}

#[derive(Clone, Copy, Debug)]
pub struct RecurrentState {
    pub h: Var,
    pub c: Option<Var>,
    pub memory: Memory,
}

/// Everything a step produces. `actions` and `inserted` are absent for the
/// memoryless baselines.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub state: RecurrentState,
    pub y: Var,
    pub actions: Option<Var>,
    pub inserted: Option<Var>,
}

pub fn vanilla_rnn_step(tape: &mut Tape, w: &Bound, x: Var, h_prev: Var) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let h = rnn_cell(tape, w, x, h_prev)?;
    let y = output(tape, w, h)?;
    Ok(StepOutput {
        state: RecurrentState {
            h,
            c: None,
            memory: Memory::None,
        },
        y,
        actions: None,
        inserted: None,
    })
}

pub fn vanilla_lstm_step(
    tape: &mut Tape,
    w: &Bound,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let (h, c) = lstm_cell(tape, w, x, h_prev, c_prev)?;
    let y = output(tape, w, h)?;
    Ok(StepOutput {
        state: RecurrentState {
            h,
            c: Some(c),
            memory: Memory::None,
        },
        y,
        actions: None,
        inserted: None,
    })
}

fn stack_tail(
    tape: &mut Tape,
    w: &Bound,
    h: Var,
    c: Option<Var>,
    stack: &StackState,
    src: &mut ActionSource,
) -> Result<StepOutput> {
    let y = output(tape, w, h)?;
    let a = action_weights(tape, w, h, src)?;
    let n = inserted_value(tape, w, h)?;
    let stack = super::memory::stack_update(tape, stack, a, n)?;
    Ok(StepOutput {
        state: RecurrentState {
            h,
            c,
            memory: Memory::Stack(stack),
        },
        y,
        actions: Some(a),
        inserted: Some(n),
    })
}

pub fn stack_rnn_step(
    tape: &mut Tape,
    w: &Bound,
    x: Var,
    h_prev: Var,
    stack: &StackState,
    src: &mut ActionSource,
) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let top = stack.top(tape)?;
    let h_read = mix_read(tape, w, "W_sh", h_prev, top)?;
    let h = rnn_cell(tape, w, x, h_read)?;
    stack_tail(tape, w, h, None, stack, src)
}

pub fn stack_lstm_step(
    tape: &mut Tape,
    w: &Bound,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    stack: &StackState,
    src: &mut ActionSource,
) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let top = stack.top(tape)?;
    let h_read = mix_read(tape, w, "W_sh", h_prev, top)?;
    let (h, c) = lstm_cell(tape, w, x, h_read, c_prev)?;
    stack_tail(tape, w, h, Some(c), stack, src)
}

/// `sigmoid(W_ih x + W_hh h + W_sh s[0..k])`, no biases, no read-mixing.
pub fn joulin_stack_rnn_step(
    tape: &mut Tape,
    w: &Bound,
    x: Var,
    h_prev: Var,
    stack: &StackState,
    k: usize,
    src: &mut ActionSource,
) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let top = stack.top_k(tape, k)?;
    let a = tape.matvec(w.get("W_ih")?, x)?;
    let b = tape.matvec(w.get("W_hh")?, h_prev)?;
    let s = tape.matvec(w.get("W_sh")?, top)?;
    let z = tape.add(a, b)?;
    let z = tape.add(z, s)?;
    let h = tape.sigmoid(z);
    stack_tail(tape, w, h, None, stack, src)
}

pub fn baby_ntm_step(
    tape: &mut Tape,
    w: &Bound,
    x: Var,
    h_prev: Var,
    memory: &MemoryState,
    ops: &[OpMatrix],
    src: &mut ActionSource,
) -> Result<StepOutput> {
    check_input(tape, w, x, h_prev)?;
    let first = memory.first(tape)?;
    let h_read = mix_read(tape, w, "W_m", h_prev, first)?;
    let h = rnn_cell(tape, w, x, h_read)?;
    let y = output(tape, w, h)?;
    let a = action_weights(tape, w, h, src)?;
    let n = inserted_value(tape, w, h)?;
    let memory = memory_update(tape, memory, a, n, ops)?;
    Ok(StepOutput {
        state: RecurrentState {
            h,
            c: None,
            memory: Memory::Slots(memory),
        },
        y,
        actions: Some(a),
        inserted: Some(n),
    })
}

/// Per-step record of the controller's memory behaviour.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepTrace {
    pub actions: Vec<f64>,
    pub inserted: Vec<f64>,
    /// Top of stack / slot 0 after the update.
    pub top: Vec<f64>,
    /// Leading rows of the memory after the update, when requested.
    pub snapshot: Option<Vec<Vec<f64>>>,
}

/// How much memory state to copy into each [`StepTrace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Snapshot {
    #[default]
    None,
    Rows(usize),
    Full,
}

/// Zero-initialized state for a fresh sequence.
pub fn initial_state(tape: &mut Tape, config: &ModelConfig) -> Result<RecurrentState> {
    let h = tape.zeros(&[config.hidden])?;
    let c = if config.arch.is_lstm() {
        Some(tape.zeros(&[config.hidden])?)
    } else {
        None
    };
    let memory = match config.arch {
        Architecture::VanillaRnn | Architecture::VanillaLstm => Memory::None,
        Architecture::BabyNtm => Memory::Slots(MemoryState::zeros(
            tape,
            config.memory_slots,
            config.mem_dim,
        )?),
        _ => Memory::Stack(StackState::empty(tape, config.mem_dim)?),
    };
    Ok(RecurrentState { h, c, memory })
}

/// Output of [`run_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceRun {
    pub outputs: Vec<Var>,
    pub traces: Vec<StepTrace>,
}

impl SequenceRun {
    pub fn predictions(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.outputs
            .iter()
            .map(|&y| tape.value(y).to_vec())
            .collect()
    }
}

/// Per-sequence driver options.
pub struct RunOptions<'a> {
    pub noise: &'a mut Noise,
    /// Forced action weights, one row per step, replacing the controller.
    pub forced: Option<&'a [Vec<f64>]>,
    pub snapshot: Snapshot,
}

/// Dispatches one step for `config.arch`.
pub fn step(
    tape: &mut Tape,
    config: &ModelConfig,
    w: &Bound,
    ops: &[OpMatrix],
    x: Var,
    state: &RecurrentState,
    src: &mut ActionSource,
) -> Result<StepOutput> {
    let need_c = || {
        state
            .c
            .ok_or_else(|| Error::InvalidArgument("LSTM state lacks a cell".into()))
    };
    match (config.arch, state.memory) {
        (Architecture::VanillaRnn, _) => vanilla_rnn_step(tape, w, x, state.h),
        (Architecture::VanillaLstm, _) => vanilla_lstm_step(tape, w, x, state.h, need_c()?),
        (Architecture::StackRnn, Memory::Stack(s)) => stack_rnn_step(tape, w, x, state.h, &s, src),
        (Architecture::StackLstm, Memory::Stack(s)) => {
            stack_lstm_step(tape, w, x, state.h, need_c()?, &s, src)
        }
        (Architecture::JoulinStackRnn, Memory::Stack(s)) => {
            joulin_stack_rnn_step(tape, w, x, state.h, &s, config.joulin_k, src)
        }
        (Architecture::BabyNtm, Memory::Slots(m)) => {
            baby_ntm_step(tape, w, x, state.h, &m, ops, src)
        }
        (arch, _) => Err(Error::InvalidArgument(format!(
            "state does not match architecture {arch}"
        ))),
    }
}

fn trace_of(tape: &Tape, out: &StepOutput, snapshot: Snapshot) -> StepTrace {
    let rows = |all: Vec<Vec<f64>>| match snapshot {
        Snapshot::None => None,
        Snapshot::Rows(k) => Some(all.into_iter().take(k).collect()),
        Snapshot::Full => Some(all),
    };
    let (top, snap) = match out.state.memory {
        Memory::None => (Vec::new(), None),
        Memory::Stack(s) => (s.read(tape, 0), rows(s.rows(tape))),
        Memory::Slots(m) => {
            let all = m.rows(tape);
            (all[0].clone(), rows(all))
        }
    };
    StepTrace {
        actions: out
            .actions
            .map(|a| tape.value(a).to_vec())
            .unwrap_or_default(),
        inserted: out
            .inserted
            .map(|n| tape.value(n).to_vec())
            .unwrap_or_default(),
        top,
        snapshot: snap,
    }
}

/// Runs the model over a one-hot input sequence from the zero state.
pub fn run_sequence(
    tape: &mut Tape,
    config: &ModelConfig,
    w: &Bound,
    inputs: &[Vec<f64>],
    opts: RunOptions,
) -> Result<SequenceRun> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    if let Some(f) = opts.forced {
        if f.len() != inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} forced action rows for {} steps",
                f.len(),
                inputs.len()
            )));
        }
    }
    let ops = if config.arch == Architecture::BabyNtm {
        op_matrices(config.memory_slots)?
    } else {
        Vec::new()
    };
    let mut state = initial_state(tape, config)?;
    let mut run = SequenceRun {
        outputs: Vec::with_capacity(inputs.len()),
        traces: Vec::with_capacity(inputs.len()),
    };
    for (t, row) in inputs.iter().enumerate() {
        let x = tape.constant(&[row.len()], row.clone())?;
        let mut src = match opts.forced {
            Some(f) => ActionSource::Forced(&f[t]),
            None => ActionSource::Learned {
                action: config.action,
                noise: &mut *opts.noise,
            },
        };
        let out = step(tape, config, w, &ops, x, &state, &mut src)?;
        run.traces.push(trace_of(tape, &out, opts.snapshot));
        run.outputs.push(out.y);
        state = out.state;
    }
    Ok(run)
}
