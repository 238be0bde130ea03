//! Vote histograms, the move-distance metric, and the prefix-sum dominance
//! order.
//!
//! A [`VoteHistogram`] holds the per-class vote counts of one query to a
//! teacher ensemble. The [`distance`] between two histograms is the smallest
//! number of single-vote moves transforming one into the other, and
//! [`dominates`] is the prefix-sum partial order under which the mislabel
//! probability `q` is monotone; both underpin the smooth-sensitivity search.

use crate::error::{PateError, Result};
use std::io::Read;
use std::path::Path;

/// Per-class teacher vote counts for a single query.
///
/// Invariants (enforced by [`VoteHistogram::new`]): at least two classes,
/// at least one vote in total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteHistogram {
    counts: Vec<u64>,
}

impl VoteHistogram {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(PateError::InvalidHistogram(format!(
                "need at least 2 classes, got {}",
                counts.len()
            )));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(PateError::InvalidHistogram(
                "histogram has no votes".to_string(),
            ));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of classes `m`.
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Total number of teachers `n`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the plurality class; ties broken by lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate().skip(1) {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_count(&self) -> u64 {
        *self.counts.iter().max().expect("non-empty by invariant")
    }

    /// Counts sorted in descending order (`n^(1) >= n^(2) >= ...`).
    pub fn sorted_desc(&self) -> Vec<u64> {
        let mut s = self.counts.clone();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    /// The two largest counts `(n^(1), n^(2))`.
    pub fn top_two(&self) -> (u64, u64) {
        let mut first = 0u64;
        let mut second = 0u64;
        for &c in &self.counts {
            if c > first {
                second = first;
                first = c;
            } else if c > second {
                second = c;
            }
        }
        (first, second)
    }
}

/// Move distance between two histograms over the same classes: the larger of
/// the total over-count and the total under-count, i.e. the smallest number of
/// single-vote moves (including adding or removing voters) mapping `a` to `b`.
pub fn distance(a: &VoteHistogram, b: &VoteHistogram) -> Result<u64> {
    if a.num_classes() != b.num_classes() {
        return Err(PateError::DimensionMismatch {
            expected: a.num_classes(),
            got: b.num_classes(),
        });
    }
    let mut over = 0u64;
    let mut under = 0u64;
    for (&x, &y) in a.counts.iter().zip(&b.counts) {
        if x > y {
            over += x - y;
        } else {
            under += y - x;
        }
    }
    Ok(over.max(under))
}

/// Prefix sums `S_2..S_m` with `S_i = sum_{j<=i} (n^(1) - n^(j))` over the
/// descending-sorted counts. Non-negative and non-decreasing in `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSums {
    values: Vec<u64>,
}

impl PrefixSums {
    /// `S_i` for `i` in `2..=m`.
    pub fn values(&self) -> &[u64] {
        &self.values
    }
}

pub fn prefix_sums(h: &VoteHistogram) -> PrefixSums {
    let sorted = h.sorted_desc();
    let top = sorted[0];
    let mut acc = 0u64;
    let values = sorted[1..]
        .iter()
        .map(|&c| {
            acc += top - c;
            acc
        })
        .collect();
    PrefixSums { values }
}

/// Dominance partial order: `a` dominates `b` iff `S_i(a) >= S_i(b)` for all
/// `i` in `2..=m`. Reflexive and transitive; permutation-invariant.
pub fn dominates(a: &VoteHistogram, b: &VoteHistogram) -> Result<bool> {
    if a.num_classes() != b.num_classes() {
        return Err(PateError::DimensionMismatch {
            expected: a.num_classes(),
            got: b.num_classes(),
        });
    }
    let sa = prefix_sums(a);
    let sb = prefix_sums(b);
    Ok(sa.values.iter().zip(&sb.values).all(|(&x, &y)| x >= y))
}

/// One row of a votes CSV: a query id and its vote histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub id: String,
    pub histogram: VoteHistogram,
}

/// A first row is a header when any of its value columns is non-numeric;
/// the id column is free-form text, so it says nothing either way.
fn is_header_row(row: &csv::StringRecord) -> bool {
    let mut values = row.iter().skip(1).peekable();
    values.peek().is_some() && values.any(|f| f.trim().parse::<f64>().is_err())
}

/// Reads a votes CSV with rows `query_id,c_0,c_1,...,c_{m-1}`.
///
/// A header row is optional and detected by a non-numeric count field in the
/// first row. All rows must have the same number of classes; counts must be
/// non-negative integers. Errors carry 1-based line numbers.
pub fn read_votes_csv(path: &Path) -> Result<Vec<VoteRecord>> {
    let mut file = std::fs::File::open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    parse_votes_csv(&text)
}

pub fn parse_votes_csv(text: &str) -> Result<Vec<VoteRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    let mut expected_m: Option<usize> = None;
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 1;
        let row = row?;
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if idx == 0 && is_header_row(&row) {
            continue;
        }
        if row.len() < 3 {
            return Err(PateError::CsvFormat {
                line,
                message: format!(
                    "expected query_id plus at least 2 counts, got {} fields",
                    row.len()
                ),
            });
        }
        let id = row.get(0).unwrap().trim().to_string();
        let m = row.len() - 1;
        if let Some(em) = expected_m {
            if m != em {
                return Err(PateError::CsvFormat {
                    line,
                    message: format!("row has {m} classes but previous rows have {em}"),
                });
            }
        } else {
            expected_m = Some(m);
        }
        let mut counts = Vec::with_capacity(m);
        for field in row.iter().skip(1) {
            let c: u64 = field.trim().parse().map_err(|_| PateError::CsvFormat {
                line,
                message: format!("count {:?} is not a non-negative integer", field.trim()),
            })?;
            counts.push(c);
        }
        let histogram = VoteHistogram::new(counts).map_err(|e| PateError::CsvFormat {
            line,
            message: e.to_string(),
        })?;
        records.push(VoteRecord { id, histogram });
    }
    Ok(records)
}

/// Writes records in the same `query_id,c_0,...,c_{m-1}` format, with a
/// header row.
pub fn write_votes_csv(path: &Path, records: &[VoteRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    if let Some(first) = records.first() {
        let mut header = vec!["query_id".to_string()];
        for i in 0..first.histogram.num_classes() {
            header.push(format!("c_{i}"));
        }
        writer.write_record(&header)?;
    }
    for r in records {
        let mut row = vec![r.id.clone()];
        row.extend(r.histogram.counts().iter().map(|c| c.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a probabilities CSV with rows `query_id,p_0,...,p_{m-1}` (used for
/// the student predictions of the interactive mechanism). Header detection and
/// consistency rules match [`read_votes_csv`]; each row must sum to 1 within
/// 1e-9.
pub fn read_probs_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut file = std::fs::File::open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut expected_m: Option<usize> = None;
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 1;
        let row = row?;
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if idx == 0 && is_header_row(&row) {
            continue;
        }
        if row.len() < 3 {
            return Err(PateError::CsvFormat {
                line,
                message: format!(
                    "expected query_id plus at least 2 probabilities, got {} fields",
                    row.len()
                ),
            });
        }
        let id = row.get(0).unwrap().trim().to_string();
        let m = row.len() - 1;
        if let Some(em) = expected_m {
            if m != em {
                return Err(PateError::CsvFormat {
                    line,
                    message: format!("row has {m} classes but previous rows have {em}"),
                });
            }
        } else {
            expected_m = Some(m);
        }
        let mut probs = Vec::with_capacity(m);
        for field in row.iter().skip(1) {
            let p: f64 = field.trim().parse().map_err(|_| PateError::CsvFormat {
                line,
                message: format!("probability {:?} is not a number", field.trim()),
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(PateError::CsvFormat {
                    line,
                    message: format!("probability {p} outside [0, 1]"),
                });
            }
            probs.push(p);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PateError::CsvFormat {
                line,
                message: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        out.push((id, probs));
    }
    Ok(out)
}
