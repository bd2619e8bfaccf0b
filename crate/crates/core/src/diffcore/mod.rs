//! Reverse-mode differentiation over small dense tensors, plus the action
//! distributions used by the memory controllers.

mod rng;
mod tape;

pub use rng::RngStream;
pub use tape::{softmax_values, RowMap, Tape, Tensor, Var};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are floored here before taking a log in [`gumbel_softmax`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Named learnable tensor living outside any tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != values.len() {
            return Err(Error::Shape {
                op: "param",
                detail: format!(
                    "{name}: shape {shape:?} does not hold {} values",
                    values.len()
                ),
            });
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Source of Gumbel noise. `Frozen` forces every draw to zero, which makes
/// Gumbel-softmax deterministic (evaluation and gradient checks).
#[derive(Clone, Debug)]
pub enum Noise {
    Frozen,
    Sampled(RngStream),
}

impl Noise {
    fn draw(&mut self, n: usize) -> Vec<f64> {
        match self {
            Noise::Frozen => vec![0.0; n],
            Noise::Sampled(rng) => (0..n).map(|_| rng.gumbel()).collect(),
        }
    }
}

/// Softmax with temperature over a vector.
pub fn softmax_temp(tape: &mut Tape, x: Var, tau: f64) -> Result<Var> {
    tape.softmax_temp(x, tau)
}

/// Gumbel-softmax relaxation of a categorical sample from the probability
/// vector `x`: `softmax((ln x + g) / tau)` with `g` i.i.d. standard Gumbel.
/// Gradients flow through `x` only.
pub fn gumbel_softmax(tape: &mut Tape, x: Var, tau: f64, noise: &mut Noise) -> Result<Var> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    let shape = tape.shape(x).to_vec();
    if shape.len() != 1 {
        return Err(Error::Shape {
            op: "gumbel_softmax",
            detail: format!("expected a vector, got {shape:?}"),
        });
    }
    let log_x = tape.ln_floor(x, PROB_FLOOR);
    let g = tape.constant(&shape, noise.draw(shape[0]))?;
    let perturbed = tape.add(log_x, g)?;
    tape.softmax_temp(perturbed, tau)
}

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter index, component)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

fn eval_scalar<F>(f: &F, params: &[ParamTensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.constant(&p.shape, p.values.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    if tape.tensor(out).len() != 1 {
        return Err(Error::NotScalar(tape.shape(out).to_vec()));
    }
    Ok(tape.value(out)[0])
}

/// Compares the tape gradient of the scalar program `f` against central
/// differences, returning the maximum over all parameter components of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[ParamTensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    let first = eval_scalar(&f, params)?;
    let second = eval_scalar(&f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic(first, second));
    }

    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(&p.shape, p.values.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        tol,
    };
    for (pi, param) in params.iter().enumerate() {
        for k in 0..param.len() {
            let base = param.values[k];
            probe[pi].values[k] = base + eps;
            let plus = eval_scalar(&f, &probe)?;
            probe[pi].values[k] = base - eps;
            let minus = eval_scalar(&f, &probe)?;
            probe[pi].values[k] = base;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((pi, k));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(t: &Tape, v: Var) -> Vec<f64> {
        t.value(v).to_vec()
    }

    #[test]
    fn temperature_one_is_plain_softmax() {
        let mut t = Tape::new();
        let x = t.constant(&[4], vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let a = softmax_temp(&mut t, x, 1.0).unwrap();
        let b = t.softmax(x).unwrap();
        assert_eq!(probs(&t, a), probs(&t, b));
        let exps: Vec<f64> = [0.3f64, -1.2, 2.5, 0.0].iter().map(|v| v.exp()).collect();
        let z: f64 = exps.iter().sum();
        for (p, e) in probs(&t, a).iter().zip(&exps) {
            assert!((p - e / z).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_logits_give_uniform() {
        let mut t = Tape::new();
        for (c, tau) in [(0.0, 1.0), (37.5, 0.01), (-4.0, 9.0)] {
            let x = t.constant(&[5], vec![c; 5]).unwrap();
            let y = softmax_temp(&mut t, x, tau).unwrap();
            for p in t.value(y) {
                assert!((p - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn low_temperature_pair() {
        // exp(20)/(exp(20)+1) and 1/(exp(20)+1), from a 40-digit evaluation.
        let expected = [0.999_999_997_938_846_4, 2.061_153_618_190_203_6e-9];
        let mut t = Tape::new();
        let x = t.constant(&[2], vec![2.0, 0.0]).unwrap();
        let y = softmax_temp(&mut t, x, 0.1).unwrap();
        for (p, e) in t.value(y).iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
    }

    #[test]
    fn bad_temperature_and_inputs_rejected() {
        let mut t = Tape::new();
        let x = t.constant(&[2], vec![1.0, 2.0]).unwrap();
        assert!(softmax_temp(&mut t, x, 0.0).is_err());
        assert!(softmax_temp(&mut t, x, -1.0).is_err());
        assert!(gumbel_softmax(&mut t, x, 0.0, &mut Noise::Frozen).is_err());
        let bad = t.constant(&[2], vec![f64::NAN, 1.0]).unwrap();
        assert!(matches!(
            softmax_temp(&mut t, bad, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn frozen_gumbel_at_unit_temperature_normalizes() {
        let mut t = Tape::new();
        let x = t.constant(&[3], vec![0.2, 0.5, 0.3]).unwrap();
        let y = gumbel_softmax(&mut t, x, 1.0, &mut Noise::Frozen).unwrap();
        for (p, e) in t.value(y).iter().zip([0.2, 0.5, 0.3]) {
            assert!((p - e).abs() < 1e-15);
        }
        // Unnormalized input: result is x / sum(x).
        let x = t.constant(&[2], vec![1.0, 3.0]).unwrap();
        let y = gumbel_softmax(&mut t, x, 1.0, &mut Noise::Frozen).unwrap();
        assert!((t.value(y)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gumbel_handles_zero_probability() {
        let mut t = Tape::new();
        let x = t.param(&[3], vec![0.0, 0.5, 0.5]).unwrap();
        let y = gumbel_softmax(&mut t, x, 0.5, &mut Noise::Frozen).unwrap();
        let v = t.value(y).to_vec();
        assert!(v.iter().all(|p| p.is_finite()));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let i = t.index(y, 1).unwrap();
        t.backward(i).unwrap();
        assert!(t.grad(x).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn grad_check_rejects_bad_eps_and_nondeterminism() {
        let p = vec![ParamTensor::zeros("w", vec![2])];
        let f = |t: &mut Tape, v: &[Var]| Ok(t.sum(v[0]));
        assert!(grad_check(f, &p, 1e-2, 1e-6).is_err());

        let counter = std::cell::Cell::new(0.0);
        let g = |t: &mut Tape, v: &[Var]| {
            counter.set(counter.get() + 1.0);
            let s = t.sum(v[0]);
            let c = t.constant(&[1], vec![counter.get()])?;
            t.add(s, c)
        };
        assert!(matches!(
            grad_check(g, &p, 1e-5, 1e-6),
            Err(Error::NonDeterministic(..))
        ));
    }

    #[test]
    fn constant_program_has_zero_error() {
        let p = vec![ParamTensor::new("w", vec![3], vec![0.1, 0.2, 0.3]).unwrap()];
        let f = |t: &mut Tape, _: &[Var]| t.constant(&[1], vec![4.0]);
        let r = grad_check(f, &p, 1e-5, 1e-9).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }
}
