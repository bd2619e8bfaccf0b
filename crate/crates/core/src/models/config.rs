use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamTensor, RngStream};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    VanillaRnn,
    VanillaLstm,
    StackRnn,
    StackLstm,
    BabyNtm,
    JoulinStackRnn,
}

impl Architecture {
    pub fn id(&self) -> &'static str {
        match self {
            Architecture::VanillaRnn => "vanilla_rnn",
            Architecture::VanillaLstm => "vanilla_lstm",
            Architecture::StackRnn => "stack_rnn",
            Architecture::StackLstm => "stack_lstm",
            Architecture::BabyNtm => "baby_ntm",
            Architecture::JoulinStackRnn => "joulin_stack_rnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            Architecture::VanillaRnn,
            Architecture::VanillaLstm,
            Architecture::StackRnn,
            Architecture::StackLstm,
            Architecture::BabyNtm,
            Architecture::JoulinStackRnn,
        ]
        .into_iter()
        .find(|a| a.id() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture {s:?}")))
    }

    pub fn has_memory(&self) -> bool {
        !matches!(self, Architecture::VanillaRnn | Architecture::VanillaLstm)
    }

    pub fn is_lstm(&self) -> bool {
        matches!(self, Architecture::VanillaLstm | Architecture::StackLstm)
    }

    /// Number of memory actions the controller chooses between.
    pub fn n_actions(&self) -> usize {
        match self {
            Architecture::VanillaRnn | Architecture::VanillaLstm => 0,
            Architecture::BabyNtm => 5,
            _ => 2,
        }
    }

    pub fn action_names(&self) -> &'static [&'static str] {
        match self {
            Architecture::VanillaRnn | Architecture::VanillaLstm => &[],
            Architecture::BabyNtm => &[
                "ROTATE-RIGHT",
                "ROTATE-LEFT",
                "NO-OP",
                "POP-LEFT",
                "POP-RIGHT",
            ],
            _ => &["PUSH", "POP"],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// How the controller turns `W_a h` into action weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionFn {
    Softmax,
    SoftmaxTemp { tau: f64 },
    GumbelSoftmax { tau: f64 },
}

impl ActionFn {
    pub fn id(&self) -> &'static str {
        match self {
            ActionFn::Softmax => "softmax",
            ActionFn::SoftmaxTemp { .. } => "softmax_temp",
            ActionFn::GumbelSoftmax { .. } => "gumbel_softmax",
        }
    }

    /// Builds from an id; the temperature variants require `tau`.
    pub fn parse(s: &str, tau: Option<f64>) -> Result<Self> {
        let need_tau = || {
            tau.ok_or_else(|| {
                Error::InvalidArgument(format!("action function {s} requires a temperature (tau)"))
            })
        };
        match s {
            "softmax" => Ok(ActionFn::Softmax),
            "softmax_temp" => Ok(ActionFn::SoftmaxTemp { tau: need_tau()? }),
            "gumbel_softmax" => Ok(ActionFn::GumbelSoftmax { tau: need_tau()? }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown action function {s:?}"
            ))),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            ActionFn::Softmax => None,
            ActionFn::SoftmaxTemp { tau } | ActionFn::GumbelSoftmax { tau } => Some(tau),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub d_in: usize,
    pub d_out: usize,
    pub hidden: usize,
    pub mem_dim: usize,
    /// Slot count of the rotating memory (Baby-NTM only).
    pub memory_slots: usize,
    pub action: ActionFn,
    /// Stack rows read by the Joulin-style cell.
    pub joulin_k: usize,
}

pub const DEFAULT_HIDDEN: usize = 8;
pub const DEFAULT_MEM_DIM: usize = 1;
pub const DEFAULT_MEMORY_SLOTS: usize = 104;
pub const DEFAULT_JOULIN_K: usize = 2;
pub const LSTM_FORGET_BIAS: f64 = 1.0;

impl ModelConfig {
    pub fn new(arch: Architecture, d_in: usize, d_out: usize) -> Self {
        Self {
            arch,
            d_in,
            d_out,
            hidden: DEFAULT_HIDDEN,
            mem_dim: DEFAULT_MEM_DIM,
            memory_slots: DEFAULT_MEMORY_SLOTS,
            action: ActionFn::Softmax,
            joulin_k: DEFAULT_JOULIN_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.d_in == 0 || self.d_out == 0 {
            return bad("symbol dimensions must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden size must be at least 1");
        }
        if self.mem_dim == 0 {
            return bad("memory entry dimension must be at least 1");
        }
        if self.arch == Architecture::BabyNtm && self.memory_slots < 2 {
            return bad("Baby-NTM needs at least 2 memory slots");
        }
        if self.arch == Architecture::JoulinStackRnn && self.joulin_k == 0 {
            return bad("Joulin stack read depth k must be at least 1");
        }
        if let Some(tau) = self.action.tau() {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad("temperature must be positive");
            }
        }
        Ok(())
    }

    /// Parameter names and shapes for this architecture, in a fixed order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (h, m, a) = (self.hidden, self.mem_dim, self.arch.n_actions());
        let mut shapes = match self.arch {
            Architecture::VanillaRnn | Architecture::StackRnn | Architecture::BabyNtm => vec![
                ("W_ih", vec![h, self.d_in]),
                ("b_ih", vec![h]),
                ("W_hh", vec![h, h]),
                ("b_hh", vec![h]),
            ],
            Architecture::VanillaLstm | Architecture::StackLstm => vec![
                ("W_ih", vec![4 * h, self.d_in]),
                ("b_ih", vec![4 * h]),
                ("W_hh", vec![4 * h, h]),
                ("b_hh", vec![4 * h]),
            ],
            Architecture::JoulinStackRnn => vec![
                ("W_ih", vec![h, self.d_in]),
                ("W_hh", vec![h, h]),
                ("W_sh", vec![h, self.joulin_k * m]),
            ],
        };
        shapes.push(("W_y", vec![self.d_out, h]));
        match self.arch {
            Architecture::StackRnn | Architecture::StackLstm => shapes.push(("W_sh", vec![h, m])),
            Architecture::BabyNtm => shapes.push(("W_m", vec![h, m])),
            _ => {}
        }
        if self.arch.has_memory() {
            shapes.push(("W_a", vec![a, h]));
            shapes.push(("W_n", vec![m, h]));
        }
        shapes
    }
}

/// Learnable weights of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: Vec<ParamTensor>,
}

impl ModelParams {
    /// Weights uniform in `[-1/sqrt(H), 1/sqrt(H)]`, biases zero, LSTM forget
    /// gate bias one.
    pub fn init(config: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (config.hidden as f64).sqrt();
        let tensors = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let mut p = ParamTensor::zeros(name, shape);
                if name.starts_with('W') {
                    p.values
                        .iter_mut()
                        .for_each(|v| *v = rng.uniform_range(-bound, bound));
                } else if name == "b_ih" && config.arch.is_lstm() {
                    let h = config.hidden;
                    p.values[h..2 * h]
                        .iter_mut()
                        .for_each(|v| *v = LSTM_FORGET_BIAS);
                }
                p
            })
            .collect();
        Ok(Self { tensors })
    }

    /// All-zero parameters of the right shapes.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            tensors: config
                .param_shapes()
                .into_iter()
                .map(|(name, shape)| ParamTensor::zeros(name, shape))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::MissingParameter(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamTensor> {
        self.tensors
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::MissingParameter(name.into()))
    }

    /// Checks names and shapes against `config`.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in expected {
            let p = self.get(name)?;
            if p.shape != shape || p.values.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape {
                    op: "params",
                    detail: format!("{name}: expected {shape:?}, found {:?}", p.shape),
                });
            }
        }
        Ok(())
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }
}
