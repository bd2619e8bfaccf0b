use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min, max, median and mean of a list of accuracies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
}

impl Aggregate {
    /// `None` for an empty list. The median of an even-length list is the
    /// midpoint of the two central values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            min: sorted[0],
            max: sorted[n - 1],
            median,
            mean: sorted.iter().sum::<f64>() / n as f64,
        })
    }
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean training loss of each epoch (possibly truncated on failure).
    pub epoch_losses: Vec<f64>,
    /// Set when the run diverged; accuracies are then recorded as 0.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Model variant label, e.g. `stack_rnn+softmax`.
    pub label: String,
    pub fingerprint: String,
    /// Sorted by seed, so the report does not depend on execution order.
    pub seeds: Vec<SeedResult>,
    pub train: Aggregate,
    pub test: Aggregate,
}

impl RunReport {
    pub fn new(label: &str, fingerprint: &str, mut seeds: Vec<SeedResult>) -> Result<Self> {
        seeds.sort_by_key(|s| s.seed);
        let train: Vec<f64> = seeds.iter().map(|s| s.train_accuracy).collect();
        let test: Vec<f64> = seeds.iter().map(|s| s.test_accuracy).collect();
        let empty = || Error::InvalidArgument("report needs at least one seed".into());
        Ok(Self {
            label: label.into(),
            fingerprint: fingerprint.into(),
            train: Aggregate::of(&train).ok_or_else(empty)?,
            test: Aggregate::of(&test).ok_or_else(empty)?,
            seeds,
        })
    }

    pub fn failed_seeds(&self) -> usize {
        self.seeds.iter().filter(|s| s.failure.is_some()).count()
    }

    /// Per-seed rows followed by the aggregate rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# fingerprint={}", self.fingerprint).unwrap();
        out.push_str("model,row,train_accuracy,test_accuracy,epoch_losses,failure\n");
        for s in &self.seeds {
            let losses: Vec<String> = s.epoch_losses.iter().map(f64::to_string).collect();
            writeln!(
                out,
                "{},seed={},{},{},{},{}",
                self.label,
                s.seed,
                s.train_accuracy,
                s.test_accuracy,
                losses.join(";"),
                s.failure.as_deref().unwrap_or("").replace([',', '\n'], " ")
            )
            .unwrap();
        }
        for (name, a, b) in [
            ("min", self.train.min, self.test.min),
            ("max", self.train.max, self.test.max),
            ("median", self.train.median, self.test.median),
            ("mean", self.train.mean, self.test.mean),
        ] {
            writeln!(out, "{},{name},{a},{b},,", self.label).unwrap();
        }
        out
    }

    /// Aligned text table: `Min Max Med Mean` under `Training Set` and `Test Set`.
    pub fn to_table(reports: &[RunReport]) -> String {
        let width = reports
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("Models".len());
        let cell = 7;
        let block = 4 * cell + 3;
        let mut out = String::new();
        writeln!(
            out,
            "{:width$} | {:^block$} | {:^block$}",
            "", "Training Set", "Test Set"
        )
        .unwrap();
        let heads = format!(
            "{:>cell$} {:>cell$} {:>cell$} {:>cell$}",
            "Min", "Max", "Med", "Mean"
        );
        writeln!(out, "{:width$} | {heads} | {heads}", "Models").unwrap();
        writeln!(out, "{}", "-".repeat(width + 2 * block + 6)).unwrap();
        let fmt = |a: &Aggregate| {
            format!(
                "{:>cell$.2} {:>cell$.2} {:>cell$.2} {:>cell$.2}",
                a.min, a.max, a.median, a.mean
            )
        };
        for r in reports {
            writeln!(
                out,
                "{:width$} | {} | {}",
                r.label,
                fmt(&r.train),
                fmt(&r.test)
            )
            .unwrap();
        }
        out
    }
}
