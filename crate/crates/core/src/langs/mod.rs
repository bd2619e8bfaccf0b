//! Task corpora: Dyck-n words, palindromes and string reversal, each sample
//! carrying the set of admissible next symbols at every position.

mod dyck;
mod strings;
mod vocab;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use dyck::{check_dyck, dyck_targets, sample_dyck, sample_dyck_excluding, GrammarConfig};
pub use strings::{
    palindrome_targets, reversal_pairs, reversal_pairs_excluding, reversal_targets,
    sample_palindrome, sample_palindrome_excluding, StringCorpusConfig,
};
pub use vocab::{Task, Vocabulary, BRACKET_PAIRS, END_MARKER, LETTERS, MIRROR_LETTERS, SEPARATOR};

use crate::error::{Error, Result};

/// Draws are retried at most this many times per requested sample.
pub const RESAMPLE_BUDGET_FACTOR: usize = 100;

const HEADER_TAG: &str = "#marnn-dataset v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub input: Vec<char>,
    /// Admissible next symbols after each prefix, in display order.
    pub targets: Vec<Vec<char>>,
}

impl Sample {
    pub fn new(input: Vec<char>, targets: Vec<Vec<char>>) -> Self {
        debug_assert_eq!(input.len(), targets.len());
        Self { input, targets }
    }

    pub fn input_string(&self) -> String {
        self.input.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub task: Task,
    pub split: Split,
    pub fingerprint: String,
    pub samples: Vec<Sample>,
}

/// Short hex digest of a serializable value.
pub fn fingerprint_of(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}

impl Dataset {
    pub fn new(
        task: Task,
        split: Split,
        config: &impl Serialize,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let fingerprint = fingerprint_of(&(task.id(), config));
        Ok(Self {
            task,
            split,
            fingerprint,
            samples,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.task.vocabulary()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_set(&self) -> HashSet<String> {
        self.samples.iter().map(Sample::input_string).collect()
    }

    /// Writes the line-oriented text form: a header, then one
    /// `input<TAB>targets` record per sample with targets as space-separated,
    /// `/`-joined sets.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "{HEADER_TAG}\ttask={}\tsplit={}\tfingerprint={}\tcount={}",
            self.task,
            self.split,
            self.fingerprint,
            self.samples.len()
        )?;
        for s in &self.samples {
            writeln!(
                w,
                "{}\t{}",
                s.input_string(),
                format_target_sets(&s.targets)
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("dataset text is UTF-8")
    }

    /// Parses the text form, checking every record against the task's target scheme.
    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            detail: "empty file".into(),
        })??;
        let perr = |line: usize, detail: String| Error::Parse { line, detail };

        let mut fields = header.split('\t');
        if fields.next() != Some(HEADER_TAG) {
            return Err(perr(1, format!("expected header {HEADER_TAG:?}")));
        }
        let mut kv = BTreeMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| perr(1, format!("bad header field {f:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| perr(1, format!("header lacks {k}")))
        };
        let task = Task::parse(&get("task")?).map_err(|e| perr(1, e.to_string()))?;
        let split = Split::parse(&get("split")?).ok_or_else(|| perr(1, "bad split".into()))?;
        let fingerprint = get("fingerprint")?;
        let count: usize = get("count")?
            .parse()
            .map_err(|_| perr(1, "bad count".into()))?;
        let vocab = task.vocabulary();

        let mut samples = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            let (input, targets) = line
                .split_once('\t')
                .ok_or_else(|| perr(lineno, "missing tab".into()))?;
            let input: Vec<char> = input.chars().collect();
            for &c in &input {
                vocab
                    .input_index(c)
                    .map_err(|e| perr(lineno, e.to_string()))?;
            }
            let targets =
                parse_target_sets(targets, &vocab).map_err(|e| perr(lineno, e.to_string()))?;
            let expected = targets_for(task, &input).map_err(|e| perr(lineno, e.to_string()))?;
            if targets != expected {
                return Err(perr(
                    lineno,
                    "targets disagree with the task's target scheme".into(),
                ));
            }
            samples.push(Sample::new(input, targets));
        }
        if samples.len() != count {
            return Err(perr(
                1,
                format!("header count {count} but {} records", samples.len()),
            ));
        }
        Ok(Self {
            task,
            split,
            fingerprint,
            samples,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

pub fn format_target_sets(targets: &[Vec<char>]) -> String {
    targets
        .iter()
        .map(|set| {
            set.iter()
                .map(char::to_string)
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_target_sets(text: &str, vocab: &Vocabulary) -> Result<Vec<Vec<char>>> {
    text.split(' ')
        .map(|set| {
            let symbols = set
                .split('/')
                .map(|s| {
                    let mut cs = s.chars();
                    match (cs.next(), cs.next()) {
                        (Some(c), None) => Ok(c),
                        _ => Err(Error::InvalidArgument(format!("bad symbol {s:?}"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let canonical = vocab.canonical_set(symbols.iter().copied())?;
            if canonical != symbols {
                return Err(Error::InvalidArgument(format!(
                    "set {set:?} is not in canonical order"
                )));
            }
            Ok(canonical)
        })
        .collect()
}

/// Applies the task's target scheme to an input string.
pub fn targets_for(task: Task, input: &[char]) -> Result<Vec<Vec<char>>> {
    match task {
        Task::Dyck(n) => dyck_targets(&input.iter().collect::<String>(), n),
        Task::HomPalindrome => palindrome_targets(input, true),
        Task::Palindrome => palindrome_targets(input, false),
        Task::Reversal => reversal_targets(input),
    }
}

/// Nesting depth the task needs for this input: bracket depth for Dyck, the
/// half length for palindromes and reversal.
pub fn max_depth(task: Task, input: &[char]) -> Result<usize> {
    match task {
        Task::Dyck(n) => check_dyck(&input.iter().collect::<String>(), n),
        Task::HomPalindrome | Task::Palindrome => Ok(input.len() / 2),
        Task::Reversal => Ok(input.len() / 2),
    }
}

/// `true` iff no input string occurs in both datasets.
pub fn verify_disjoint(train: &Dataset, test: &Dataset) -> bool {
    let seen = train.input_set();
    test.samples
        .iter()
        .all(|s| !seen.contains(&s.input_string()))
}

/// Length and maximum-depth histograms.
pub fn length_depth_histogram(
    ds: &Dataset,
) -> Result<(BTreeMap<usize, usize>, BTreeMap<usize, usize>)> {
    let mut lengths = BTreeMap::new();
    let mut depths = BTreeMap::new();
    for s in &ds.samples {
        *lengths.entry(s.len()).or_insert(0) += 1;
        *depths.entry(max_depth(ds.task, &s.input)?).or_insert(0) += 1;
    }
    Ok((lengths, depths))
}

/// Collects `count` distinct strings from `draw`, skipping `None` draws,
/// duplicates and excluded strings, within `RESAMPLE_BUDGET_FACTOR * count` attempts.
pub(crate) fn rejection_sample(
    count: usize,
    exclude: &HashSet<String>,
    mut draw: impl FnMut() -> Option<String>,
) -> Result<Vec<String>> {
    let budget = RESAMPLE_BUDGET_FACTOR * count;
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        if let Some(w) = draw() {
            if !exclude.contains(&w) && seen.insert(w.clone()) {
                out.push(w);
            }
        }
    }
    if out.len() < count {
        return Err(Error::BudgetExhausted {
            requested: count,
            generated: out.len(),
            budget,
        });
    }
    Ok(out)
}

/// One-hot inputs and k-hot targets for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    /// `T x D_in`, exactly one 1 per row.
    pub inputs: Vec<Vec<f64>>,
    /// `T x D_out`.
    pub targets: Vec<Vec<f64>>,
}

pub fn encode(sample: &Sample, vocab: &Vocabulary) -> Result<Encoded> {
    let inputs = sample
        .input
        .iter()
        .map(|&c| {
            let mut row = vec![0.0; vocab.d_in()];
            row[vocab.input_index(c)?] = 1.0;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = sample
        .targets
        .iter()
        .map(|set| {
            let mut row = vec![0.0; vocab.d_out()];
            for &c in set {
                row[vocab.output_index(c)?] = 1.0;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoded { inputs, targets })
}

/// Output indices whose entry exceeds `threshold`, listed in display order.
pub fn decode_set(row: &[f64], vocab: &Vocabulary, threshold: f64) -> Vec<char> {
    vocab
        .display_order()
        .into_iter()
        .filter(|&i| row[i] > threshold)
        .map(|i| vocab.output_symbols()[i])
        .collect()
}

pub fn decode(encoded: &Encoded, vocab: &Vocabulary) -> Result<Sample> {
    let input = encoded
        .inputs
        .iter()
        .map(|row| {
            let hot: Vec<usize> = (0..row.len()).filter(|&i| row[i] == 1.0).collect();
            match hot[..] {
                [i] if row.iter().filter(|&&v| v != 0.0).count() == 1 => {
                    Ok(vocab.input_symbols()[i])
                }
                _ => Err(Error::InvalidArgument("input row is not one-hot".into())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = encoded
        .targets
        .iter()
        .map(|row| decode_set(row, vocab, 0.5))
        .collect();
    Ok(Sample::new(input, targets))
}
