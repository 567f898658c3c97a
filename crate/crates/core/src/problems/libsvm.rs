use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Labelled samples, densified. Labels are ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "label {} of sample {i} is not ±1",
                labels[i]
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self { features, labels })
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Contiguous block of samples and feature columns.
    pub fn subset(&self, rows: Range<usize>, cols: Range<usize>) -> Dataset {
        let features = self
            .features
            .view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned();
        Dataset {
            features,
            labels: self.labels[rows].to_vec(),
        }
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric label {tok:?}"),
    })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == 2.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(Error::Parse {
            line,
            message: format!("unsupported label {tok:?} (expected 1/2 or +1/-1)"),
        })
    }
}

/// Parses `label idx:val ...` lines with 1-based feature indices. Labels
/// `{1, 2}` map to `{+1, −1}`; `±1` pass through. Blank lines and `#`
/// comments are skipped.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut n = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = parse_label(toks.next().unwrap(), line_no)?;
        let mut row = Vec::new();
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index {i:?}"),
            })?;
            if i == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value {v:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite feature value".into(),
                });
            }
            n = n.max(i);
            row.push((i - 1, v));
        }
        labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut features = DMatrix::zeros(rows.len(), n);
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(r, j)] = v;
        }
    }
    Dataset::new(features, labels)
}

/// Renders a dataset in libsvm format with labels written as 1 (for +1) and
/// 2 (for −1); zero features are omitted.
pub fn write_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for (r, &label) in data.labels.iter().enumerate() {
        out.push_str(if label > 0.0 { "1" } else { "2" });
        for j in 0..data.cols() {
            let v = data.features[(r, j)];
            if v != 0.0 {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

/// Category counts of the 22 attributes of the UCI mushroom data; their
/// one-hot encoding has 117 columns.
pub const MUSHROOM_CARDINALITIES: [usize; 22] =
    [6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7];

/// Stand-in with the shape of the libsvm `mushrooms` file: 8124 one-hot
/// encoded samples over 117 columns, labels from a planted logistic model
/// with noise. Category frequencies are skewed like the real attributes.
pub fn synthetic_mushrooms(seed: u64) -> Dataset {
    const ROWS: usize = 8124;
    let n: usize = MUSHROOM_CARDINALITIES.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut features = DMatrix::zeros(ROWS, n);
    let mut labels = Vec::with_capacity(ROWS);
    for r in 0..ROWS {
        let mut offset = 0;
        let mut score = 0.0;
        for &card in &MUSHROOM_CARDINALITIES {
            // Zipf-like frequencies 1/(j+1).
            let total: f64 = (1..=card).map(|j| 1.0 / j as f64).sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = card - 1;
            for j in 0..card {
                u -= 1.0 / (j + 1) as f64;
                if u <= 0.0 {
                    pick = j;
                    break;
                }
            }
            features[(r, offset + pick)] = 1.0;
            score += weights[offset + pick];
            offset += card;
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        labels.push(if score + noise >= 0.0 { 1.0 } else { -1.0 });
    }
    Dataset { features, labels }
}
