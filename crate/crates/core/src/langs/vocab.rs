use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output-only end-of-sequence marker.
pub const END_MARKER: char = '⊣';
/// Palindrome centre and reversal filler symbol.
pub const SEPARATOR: char = '#';
pub const LETTERS: [char; 3] = ['a', 'b', 'c'];
pub const MIRROR_LETTERS: [char; 3] = ['x', 'y', 'z'];

/// Bracket pairs, in order; Dyck-n uses the first n.
pub const BRACKET_PAIRS: [(char, char); 6] = [
    ('(', ')'),
    ('[', ']'),
    ('{', '}'),
    ('<', '>'),
    ('⟨', '⟩'),
    ('⟦', '⟧'),
];

/// A task family with its fixed alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Dyck(usize),
    HomPalindrome,
    Palindrome,
    Reversal,
}

impl Task {
    pub fn id(&self) -> String {
        match self {
            Task::Dyck(n) => format!("dyck{n}"),
            Task::HomPalindrome => "hom_palindrome".into(),
            Task::Palindrome => "palindrome".into(),
            Task::Reversal => "reversal".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hom_palindrome" => Ok(Task::HomPalindrome),
            "palindrome" => Ok(Task::Palindrome),
            "reversal" => Ok(Task::Reversal),
            _ => {
                let n = s
                    .strip_prefix("dyck")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|n| (1..=BRACKET_PAIRS.len()).contains(n));
                n.map(Task::Dyck)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown task {s:?}")))
            }
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        match *self {
            Task::Dyck(n) => Vocabulary::dyck(n).expect("task holds a valid pair count"),
            Task::HomPalindrome => Vocabulary::palindrome(true),
            Task::Palindrome => Vocabulary::palindrome(false),
            Task::Reversal => Vocabulary::reversal(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Input and output alphabets with dense indices.
///
/// The output alphabet extends the input alphabet (possibly with the end
/// marker). `set_order` fixes how members of a target set are listed when
/// printed, e.g. `(/[/)` with openers before closers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    name: String,
    input: Vec<char>,
    output: Vec<char>,
    set_rank: Vec<usize>,
}

impl Vocabulary {
    fn build(name: String, input: Vec<char>, output: Vec<char>, display: &[char]) -> Self {
        let set_rank = output
            .iter()
            .map(|c| {
                display
                    .iter()
                    .position(|d| d == c)
                    .expect("display order covers output")
            })
            .collect();
        Self {
            name,
            input,
            output,
            set_rank,
        }
    }

    pub fn dyck(n_pairs: usize) -> Result<Self> {
        if !(1..=BRACKET_PAIRS.len()).contains(&n_pairs) {
            return Err(Error::InvalidArgument(format!(
                "Dyck order must be in 1..={}, got {n_pairs}",
                BRACKET_PAIRS.len()
            )));
        }
        let pairs = &BRACKET_PAIRS[..n_pairs];
        let symbols: Vec<char> = pairs.iter().flat_map(|&(o, c)| [o, c]).collect();
        let display: Vec<char> = pairs
            .iter()
            .map(|p| p.0)
            .chain(pairs.iter().map(|p| p.1))
            .collect();
        Ok(Self::build(
            format!("dyck{n_pairs}"),
            symbols.clone(),
            symbols,
            &display,
        ))
    }

    pub fn palindrome(homomorphic: bool) -> Self {
        let mut input: Vec<char> = LETTERS.to_vec();
        input.push(SEPARATOR);
        let name = if homomorphic {
            input.extend(MIRROR_LETTERS);
            "hom_palindrome"
        } else {
            "palindrome"
        };
        let mut output = input.clone();
        output.push(END_MARKER);
        Self::build(name.into(), input, output.clone(), &output)
    }

    pub fn reversal() -> Self {
        let mut symbols: Vec<char> = LETTERS.to_vec();
        symbols.push(SEPARATOR);
        Self::build(
            "reversal".into(),
            symbols.clone(),
            symbols.clone(),
            &symbols,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_symbols(&self) -> &[char] {
        &self.input
    }

    pub fn output_symbols(&self) -> &[char] {
        &self.output
    }

    pub fn d_in(&self) -> usize {
        self.input.len()
    }

    pub fn d_out(&self) -> usize {
        self.output.len()
    }

    pub fn input_index(&self, c: char) -> Result<usize> {
        self.input
            .iter()
            .position(|&s| s == c)
            .ok_or_else(|| self.unknown(c))
    }

    pub fn output_index(&self, c: char) -> Result<usize> {
        self.output
            .iter()
            .position(|&s| s == c)
            .ok_or_else(|| self.unknown(c))
    }

    fn unknown(&self, c: char) -> Error {
        Error::UnknownSymbol {
            symbol: c,
            vocabulary: self.to_string(),
        }
    }

    /// Puts an output-symbol set into display order, rejecting unknown symbols.
    pub fn canonical_set(&self, symbols: impl IntoIterator<Item = char>) -> Result<Vec<char>> {
        let mut idx = symbols
            .into_iter()
            .map(|c| self.output_index(c))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_by_key(|&i| self.set_rank[i]);
        idx.dedup();
        Ok(idx.into_iter().map(|i| self.output[i]).collect())
    }

    /// Output indices in display order.
    pub fn display_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.output.len()).collect();
        idx.sort_by_key(|&i| self.set_rank[i]);
        idx
    }
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let input: String = self.input.iter().collect();
        let output: String = self.output.iter().collect();
        write!(f, "{} (input {input:?}, output {output:?})", self.name)
    }
}
