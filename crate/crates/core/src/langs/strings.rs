use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::vocab::{Task, END_MARKER, LETTERS, MIRROR_LETTERS, SEPARATOR};
use super::{rejection_sample, Dataset, Sample, Split};
use crate::diffcore::RngStream;
use crate::error::{Error, Result};

/// Corpus settings for the palindrome and reversal tasks. Lengths count the
/// whole input string, separators included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringCorpusConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub count: usize,
    pub seed: u64,
}

fn mirror(c: char) -> char {
    LETTERS
        .iter()
        .position(|&l| l == c)
        .map(|i| MIRROR_LETTERS[i])
        .unwrap_or(c)
}

/// Half-lengths `k >= 1` whose total length `2k + extra` lies in the window.
fn feasible_halves(cfg: &StringCorpusConfig, extra: usize) -> Result<Vec<usize>> {
    let halves: Vec<usize> = (1..=cfg.max_len / 2)
        .filter(|k| (cfg.min_len..=cfg.max_len).contains(&(2 * k + extra)))
        .collect();
    if halves.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no feasible word length in [{}, {}]",
            cfg.min_len, cfg.max_len
        )));
    }
    Ok(halves)
}

fn draw_half(halves: &[usize], rng: &mut RngStream) -> String {
    let k = halves[rng.below(halves.len())];
    (0..k).map(|_| LETTERS[rng.below(LETTERS.len())]).collect()
}

fn split_input(input: &[char], homomorphic: bool) -> Result<usize> {
    let bad = || Error::InvalidWord(input.iter().collect());
    let k = input.iter().position(|&c| c == SEPARATOR).ok_or_else(bad)?;
    if k == 0 || input.len() != 2 * k + 1 {
        return Err(bad());
    }
    let (w, rest) = (&input[..k], &input[k + 1..]);
    if !w.iter().all(|c| LETTERS.contains(c)) {
        return Err(bad());
    }
    let expected = w
        .iter()
        .rev()
        .map(|&c| if homomorphic { mirror(c) } else { c });
    if !expected.eq(rest.iter().copied()) {
        return Err(bad());
    }
    Ok(k)
}

/// Targets for `w#φ(w^R)`: the open set `{a,b,c,#}` while reading `w`, then
/// the single forced next symbol, and the end marker after the last symbol.
pub fn palindrome_targets(input: &[char], homomorphic: bool) -> Result<Vec<Vec<char>>> {
    let k = split_input(input, homomorphic)?;
    let open: Vec<char> = LETTERS.iter().copied().chain([SEPARATOR]).collect();
    let mut targets = vec![open; k];
    targets.extend(input[k + 1..].iter().map(|&c| vec![c]));
    targets.push(vec![END_MARKER]);
    Ok(targets)
}

pub fn sample_palindrome(homomorphic: bool, cfg: &StringCorpusConfig) -> Result<Dataset> {
    sample_palindrome_excluding(homomorphic, cfg, &HashSet::new())
}

pub fn sample_palindrome_excluding(
    homomorphic: bool,
    cfg: &StringCorpusConfig,
    exclude: &HashSet<String>,
) -> Result<Dataset> {
    let halves = feasible_halves(cfg, 1)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let words = rejection_sample(cfg.count, exclude, || {
        let w = draw_half(&halves, &mut rng);
        let tail: String = w
            .chars()
            .rev()
            .map(|c| if homomorphic { mirror(c) } else { c })
            .collect();
        Some(format!("{w}{SEPARATOR}{tail}"))
    })?;
    let samples = words
        .into_iter()
        .map(|s| {
            let input: Vec<char> = s.chars().collect();
            let targets = palindrome_targets(&input, homomorphic)?;
            Ok(Sample::new(input, targets))
        })
        .collect::<Result<Vec<_>>>()?;
    let task = if homomorphic {
        Task::HomPalindrome
    } else {
        Task::Palindrome
    };
    Dataset::new(task, Split::Train, cfg, samples)
}

/// Targets for the transduction `w #^|w| -> #^|w| w^R`.
pub fn reversal_targets(input: &[char]) -> Result<Vec<Vec<char>>> {
    let bad = || Error::InvalidWord(input.iter().collect());
    let k = input.len() / 2;
    if k == 0 || !input.len().is_multiple_of(2) {
        return Err(bad());
    }
    let (w, fill) = input.split_at(k);
    if !w.iter().all(|c| LETTERS.contains(c)) || !fill.iter().all(|&c| c == SEPARATOR) {
        return Err(bad());
    }
    let mut targets = vec![vec![SEPARATOR]; k];
    targets.extend(w.iter().rev().map(|&c| vec![c]));
    Ok(targets)
}

pub fn reversal_pairs(cfg: &StringCorpusConfig) -> Result<Dataset> {
    reversal_pairs_excluding(cfg, &HashSet::new())
}

pub fn reversal_pairs_excluding(
    cfg: &StringCorpusConfig,
    exclude: &HashSet<String>,
) -> Result<Dataset> {
    let halves = feasible_halves(cfg, 0)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let words = rejection_sample(cfg.count, exclude, || {
        let w = draw_half(&halves, &mut rng);
        let fill: String = std::iter::repeat_n(SEPARATOR, w.len()).collect();
        Some(w + &fill)
    })?;
    let samples = words
        .into_iter()
        .map(|s| {
            let input: Vec<char> = s.chars().collect();
            let targets = reversal_targets(&input)?;
            Ok(Sample::new(input, targets))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(Task::Reversal, Split::Train, cfg, samples)
}
