use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::vocab::{Task, BRACKET_PAIRS};
use super::{rejection_sample, Dataset, Sample, Split};
use crate::diffcore::RngStream;
use crate::error::{Error, Result};

/// Probabilistic grammar for Dyck-n:
/// `S -> o_i S c_i` with probability `p/n` for each pair, `S -> S S` with
/// probability `q`, `S -> ε` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub n_pairs: usize,
    pub p: f64,
    pub q: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub count: usize,
    pub seed: u64,
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=BRACKET_PAIRS.len()).contains(&self.n_pairs) {
            return bad(format!("n_pairs must be in 1..={}", BRACKET_PAIRS.len()));
        }
        if !(self.p > 0.0 && self.p < 1.0 && self.q > 0.0 && self.q < 1.0 && self.p + self.q < 1.0)
        {
            return bad(format!(
                "need 0 < p, q < 1 and p + q < 1, got p={} q={}",
                self.p, self.q
            ));
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return bad(format!(
                "invalid length range [{}, {}]",
                self.min_len, self.max_len
            ));
        }
        Ok(())
    }
}

/// Expansions per draw are capped at this multiple of `max_len`; a derivation
/// that exceeds it is discarded like any other out-of-range draw.
const EXPANSION_CAP_FACTOR: usize = 64;

enum Item {
    Expand,
    Close(usize),
}

/// One top-down expansion of `S`, or `None` when the word leaves the length window.
fn draw_word(cfg: &GrammarConfig, rng: &mut RngStream) -> Option<String> {
    let per_pair = cfg.p / cfg.n_pairs as f64;
    let cap = EXPANSION_CAP_FACTOR * cfg.max_len + 16;
    let mut out = String::new();
    let mut emitted = 0usize;
    let mut pending_closers = 0usize;
    let mut expansions = 0usize;
    let mut work = vec![Item::Expand];
    while let Some(item) = work.pop() {
        match item {
            Item::Close(j) => {
                out.push(BRACKET_PAIRS[j].1);
                emitted += 1;
                pending_closers -= 1;
            }
            Item::Expand => {
                expansions += 1;
                if expansions > cap {
                    return None;
                }
                let u = rng.uniform();
                if u < cfg.p {
                    let j = ((u / per_pair) as usize).min(cfg.n_pairs - 1);
                    out.push(BRACKET_PAIRS[j].0);
                    emitted += 1;
                    pending_closers += 1;
                    work.push(Item::Close(j));
                    work.push(Item::Expand);
                    if emitted + pending_closers > cfg.max_len {
                        return None;
                    }
                } else if u < cfg.p + cfg.q {
                    work.push(Item::Expand);
                    work.push(Item::Expand);
                }
            }
        }
    }
    (emitted >= cfg.min_len).then_some(out)
}

/// Samples `cfg.count` distinct Dyck words within the length window.
pub fn sample_dyck(cfg: &GrammarConfig) -> Result<Dataset> {
    sample_dyck_excluding(cfg, &HashSet::new())
}

/// Like [`sample_dyck`], additionally rejecting any word in `exclude`.
pub fn sample_dyck_excluding(cfg: &GrammarConfig, exclude: &HashSet<String>) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let words = rejection_sample(cfg.count, exclude, || draw_word(cfg, &mut rng))?;
    let samples = words
        .into_iter()
        .map(|w| {
            let targets = dyck_targets(&w, cfg.n_pairs)?;
            Ok(Sample::new(w.chars().collect(), targets))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(Task::Dyck(cfg.n_pairs), Split::Train, cfg, samples)
}

fn pair_of(c: char, n_pairs: usize) -> Option<(usize, bool)> {
    BRACKET_PAIRS[..n_pairs]
        .iter()
        .enumerate()
        .find_map(|(i, &(o, cl))| {
            if c == o {
                Some((i, true))
            } else if c == cl {
                Some((i, false))
            } else {
                None
            }
        })
}

/// Pushdown run over `word`; returns the maximum stack depth, or an error
/// naming the first violation.
pub fn check_dyck(word: &str, n_pairs: usize) -> Result<usize> {
    let mut stack = Vec::new();
    let mut max_depth = 0;
    for (pos, c) in word.chars().enumerate() {
        match pair_of(c, n_pairs) {
            Some((i, true)) => {
                stack.push(i);
                max_depth = max_depth.max(stack.len());
            }
            Some((i, false)) => {
                if stack.pop() != Some(i) {
                    return Err(Error::InvalidWord(format!(
                        "{word:?}: unmatched {c:?} at {pos}"
                    )));
                }
            }
            None => {
                return Err(Error::InvalidWord(format!(
                    "{word:?}: {c:?} is not a bracket"
                )))
            }
        }
    }
    if !stack.is_empty() {
        return Err(Error::InvalidWord(format!(
            "{word:?}: {} unclosed",
            stack.len()
        )));
    }
    Ok(max_depth)
}

/// Next-symbol sets for each prefix of a Dyck word: every opener, plus the
/// closer of the current stack top when the stack is non-empty.
pub fn dyck_targets(word: &str, n_pairs: usize) -> Result<Vec<Vec<char>>> {
    check_dyck(word, n_pairs)?;
    let openers: Vec<char> = BRACKET_PAIRS[..n_pairs].iter().map(|p| p.0).collect();
    let mut stack = Vec::new();
    let mut targets = Vec::with_capacity(word.len());
    for c in word.chars() {
        match pair_of(c, n_pairs) {
            Some((i, true)) => stack.push(i),
            _ => {
                stack.pop();
            }
        }
        let mut set = openers.clone();
        if let Some(&top) = stack.last() {
            set.push(BRACKET_PAIRS[top].1);
        }
        targets.push(set);
    }
    Ok(targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, min: usize, max: usize, count: usize) -> GrammarConfig {
        GrammarConfig {
            n_pairs: n,
            p: 0.5,
            q: 0.25,
            min_len: min,
            max_len: max,
            count,
            seed: 11,
        }
    }

    fn sets(spec: &[&str]) -> Vec<Vec<char>> {
        spec.iter().map(|s| s.chars().collect()).collect()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(
            dyck_targets("([])", 2).unwrap(),
            sets(&["([)", "([]", "([)", "(["])
        );
        assert_eq!(dyck_targets("()", 2).unwrap(), sets(&["([)", "(["]));
    }

    #[test]
    fn invalid_words_rejected() {
        for w in ["(]", "(", ")(", "([)]", "(a)"] {
            assert!(dyck_targets(w, 2).is_err(), "{w}");
        }
        assert!(dyck_targets("{}", 2).is_err());
        assert!(dyck_targets("{}", 3).is_ok());
    }

    #[test]
    fn sampled_words_are_balanced_distinct_and_in_range() {
        let ds = sample_dyck(&cfg(2, 2, 50, 400)).unwrap();
        let mut seen = HashSet::new();
        for s in &ds.samples {
            let w = s.input_string();
            assert!((2..=50).contains(&w.chars().count()));
            check_dyck(&w, 2).unwrap();
            assert!(seen.insert(w));
        }
        assert_eq!(ds.samples.len(), 400);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_dyck(&cfg(3, 10, 30, 50)).unwrap();
        let b = sample_dyck(&cfg(3, 10, 30, 50)).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn unreachable_count_names_budget() {
        // Only "()" and "[]" have length 2.
        let err = sample_dyck(&cfg(2, 2, 2, 3)).unwrap_err();
        match err {
            Error::BudgetExhausted {
                requested,
                generated,
                budget,
            } => {
                assert_eq!((requested, generated, budget), (3, 2, 300));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_grammar_rejected() {
        let mut c = cfg(2, 2, 50, 10);
        c.q = 0.6;
        assert!(sample_dyck(&c).is_err());
        let mut c = cfg(2, 1, 50, 10);
        c.min_len = 1;
        assert!(sample_dyck(&c).is_err());
    }

    #[test]
    fn empty_word_rate_matches_grammar() {
        // A single expansion is ε with probability 1/4; the whole derivation is
        // empty with probability r solving r = 1/4 + r²/4, r = 2 - √3.
        let mut c = cfg(2, 2, 50, 1);
        c.min_len = 0;
        let mut rng = RngStream::new(5, 0);
        let n = 40_000;
        let empty = (0..n)
            .filter(|_| draw_word(&c, &mut rng).is_some_and(|w| w.is_empty()))
            .count();
        let rate = empty as f64 / n as f64;
        assert!((rate - (2.0 - 3f64.sqrt())).abs() < 0.01, "{rate}");
    }
}
