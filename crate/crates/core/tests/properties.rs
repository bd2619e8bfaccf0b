use std::rc::Rc;

use proptest::prelude::*;

use marnn::diffcore::{
    grad_check, gumbel_softmax, softmax_values, Noise, ParamTensor, RngStream, RowMap, Tape,
};
use marnn::langs::{
    decode, encode, targets_for, verify_disjoint, Dataset, Sample, Split, Task, LETTERS,
};
use marnn::models::{
    run_sequence, ActionFn, Architecture, Bound, ModelConfig, ModelParams, RunOptions, Snapshot,
};
use marnn::trainer::mse_loss;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

fn param(name: &str, shape: Vec<usize>, v: Vec<f64>) -> ParamTensor {
    ParamTensor::new(name, shape, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elementwise_gradients_match_differences(x in values(4), y in values(4)) {
        let p = [param("x", vec![4], x), param("y", vec![4], y)];
        let r = grad_check(
            |t, v| {
                let a = t.tanh(v[0]);
                let b = t.sigmoid(v[1]);
                let m = t.mul(a, b)?;
                let s = t.sub(m, v[1])?;
                let q = t.square(s);
                Ok(t.mean(q))
            },
            &p,
            1e-5,
            1e-6,
        )
        .unwrap();
        prop_assert!(r.passed(), "{}", r.max_rel_error);
    }

    #[test]
    fn matvec_and_softmax_gradients_match_differences(
        m in values(12),
        x in values(4),
        tau in 0.3..3.0f64,
    ) {
        let p = [param("m", vec![3, 4], m), param("x", vec![4], x)];
        let r = grad_check(
            |t, v| {
                let y = t.matvec(v[0], v[1])?;
                let s = t.softmax_temp(y, tau)?;
                let first = t.index(s, 0)?;
                let w = t.constant(&[1], vec![3.0])?;
                let z = t.mul(first, w)?;
                Ok(t.sum(z))
            },
            &p,
            1e-5,
            1e-6,
        )
        .unwrap();
        prop_assert!(r.passed(), "{}", r.max_rel_error);
    }

    #[test]
    fn row_mixing_gradients_match_differences(mem in values(8), w in values(3), v in values(2)) {
        let maps: Rc<[RowMap]> = vec![
            RowMap::from(vec![Some(3), Some(0), Some(1), Some(2)]),
            RowMap::from(vec![Some(1), Some(2), Some(3), None]),
            RowMap::from(vec![None, Some(0), Some(1), Some(2)]),
        ]
        .into();
        let p = [param("m", vec![4, 2], mem), param("w", vec![3], w), param("v", vec![2], v)];
        let r = grad_check(
            |t, vars| {
                let mixed = t.mix_rows(vars[0], vars[1], &maps)?;
                let written = t.add_to_row(mixed, vars[2], 0)?;
                let g = t.gather_rows(written, &maps[0])?;
                let q = t.square(g);
                Ok(t.sum(q))
            },
            &p,
            1e-5,
            1e-6,
        )
        .unwrap();
        prop_assert!(r.passed(), "{}", r.max_rel_error);
    }

    #[test]
    fn softmax_ignores_constant_shifts(x in values(5), shift in -50.0..50.0f64, tau in 0.1..5.0f64) {
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = softmax_values(&x, tau);
        let b = softmax_values(&shifted, tau);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_ignores_output_symbol_order(
        rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 5), 1..8),
        seed in any::<u64>(),
    ) {
        let targets: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v.round()).collect()).collect();
        let preds: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 0.9 + 0.03).collect()).collect();
        let mut order: Vec<usize> = (0..5).collect();
        RngStream::new(seed, 0).shuffle(&mut order);
        let permute = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            m.iter().map(|r| order.iter().map(|&i| r[i]).collect()).collect()
        };
        let a = mse_loss(&preds, &targets).unwrap();
        let b = mse_loss(&permute(&preds), &permute(&targets)).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
    }
}

fn word(task: Task, len: usize, rng: &mut RngStream) -> Vec<char> {
    let half: Vec<char> = (0..len).map(|_| LETTERS[rng.below(3)]).collect();
    match task {
        Task::Dyck(n) => {
            // Random walk that closes everything it opens.
            let pairs = &marnn::langs::BRACKET_PAIRS[..n];
            let mut open = Vec::new();
            let mut out = Vec::new();
            while out.len() + open.len() < 2 * len {
                if open.is_empty() || rng.uniform() < 0.5 {
                    let p = pairs[rng.below(n)];
                    open.push(p.1);
                    out.push(p.0);
                } else {
                    out.push(open.pop().unwrap());
                }
            }
            out.extend(open.into_iter().rev());
            out
        }
        Task::HomPalindrome | Task::Palindrome => {
            let mut w = half.clone();
            w.push('#');
            w.extend(half.iter().rev().map(|&c| {
                if task == Task::HomPalindrome {
                    marnn::langs::MIRROR_LETTERS[LETTERS.iter().position(|&l| l == c).unwrap()]
                } else {
                    c
                }
            }));
            w
        }
        Task::Reversal => {
            let mut w = half;
            w.extend(std::iter::repeat_n('#', len));
            w
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn encoding_round_trips(task_ix in 0usize..6, len in 1usize..20, seed in any::<u64>()) {
        let task = [Task::Dyck(2), Task::Dyck(3), Task::Dyck(6), Task::HomPalindrome, Task::Palindrome, Task::Reversal][task_ix];
        let input = word(task, len, &mut RngStream::new(seed, 0));
        let sample = Sample::new(input.clone(), targets_for(task, &input).unwrap());
        let vocab = task.vocabulary();
        let e = encode(&sample, &vocab).unwrap();
        prop_assert!(e.inputs.iter().all(|r| r.iter().sum::<f64>() == 1.0));
        prop_assert_eq!(decode(&e, &vocab).unwrap(), sample);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gumbel_argmax_follows_the_probabilities(
        raw in prop::collection::vec(0.05..1.0f64, 2..5),
        seed in any::<u64>(),
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut noise = Noise::Sampled(RngStream::new(seed, 3));
        let draws = 4000;
        let mut wins = vec![0usize; probs.len()];
        for _ in 0..draws {
            let mut t = Tape::new();
            let x = t.constant(&[probs.len()], probs.clone()).unwrap();
            let y = gumbel_softmax(&mut t, x, 0.1, &mut noise).unwrap();
            let v = t.value(y);
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let arg = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            wins[arg] += 1;
        }
        for (w, p) in wins.iter().zip(&probs) {
            prop_assert!((*w as f64 / draws as f64 - p).abs() < 0.03, "{wins:?} vs {probs:?}");
        }
    }

    #[test]
    fn memory_invariants_hold_along_any_run(
        arch_ix in 0usize..4,
        len in 1usize..12,
        seed in any::<u64>(),
    ) {
        let arch = [
            Architecture::StackRnn,
            Architecture::StackLstm,
            Architecture::JoulinStackRnn,
            Architecture::BabyNtm,
        ][arch_ix];
        let config = ModelConfig {
            hidden: 4,
            mem_dim: 2,
            memory_slots: 8,
            action: ActionFn::SoftmaxTemp { tau: 0.7 },
            ..ModelConfig::new(arch, 3, 3)
        };
        let mut rng = RngStream::new(seed, 1);
        let params = ModelParams::init(&config, &mut rng).unwrap();
        let inputs: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                let mut v = vec![0.0; 3];
                v[rng.below(3)] = 1.0;
                v
            })
            .collect();
        let mut tape = Tape::new();
        let w = Bound::new(&mut tape, &params, false).unwrap();
        let run = run_sequence(
            &mut tape,
            &config,
            &w,
            &inputs,
            RunOptions { noise: &mut Noise::Frozen, forced: None, snapshot: Snapshot::Full },
        )
        .unwrap();
        for (t, trace) in run.traces.iter().enumerate() {
            let rows = trace.snapshot.as_ref().unwrap().len();
            if arch == Architecture::BabyNtm {
                prop_assert_eq!(rows, 8);
                prop_assert!((trace.actions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(rows, t + 2, "stack depth after step {}", t);
                if !trace.actions.is_empty() {
                    prop_assert!((trace.actions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
        prop_assert!(run.outputs.iter().all(|&y| tape.value(y).iter().all(|v| (0.0..=1.0).contains(v))));
    }
}

#[test]
fn disjointness_check_catches_a_planted_duplicate() {
    let mk = |words: &[&str], split| {
        let samples = words
            .iter()
            .map(|w| {
                let input: Vec<char> = w.chars().collect();
                Sample::new(input.clone(), targets_for(Task::Dyck(2), &input).unwrap())
            })
            .collect();
        Dataset::new(Task::Dyck(2), split, &"fixture", samples).unwrap()
    };
    let train = mk(&["()", "[]", "([])"], Split::Train);
    let test = mk(&["(())", "[[]]"], Split::Test);
    assert!(verify_disjoint(&train, &test));
    let leaked = mk(&["(())", "[]"], Split::Test);
    assert!(!verify_disjoint(&train, &leaked));
}
