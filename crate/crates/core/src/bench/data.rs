//! Dataset ingestion, train/test splitting, standardization and error metrics.

use std::path::Path;

use crate::error::{read_file, Error, Result};

/// Input/output sequence of a single-output system.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IoDataset {
    /// One row of inputs per sample.
    pub u: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl IoDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// First half for training, second half for testing. An odd sample goes to
    /// the test half.
    pub fn split_half(&self) -> (IoDataset, IoDataset) {
        let k = self.len() / 2;
        (
            IoDataset {
                u: self.u[..k].to_vec(),
                y: self.y[..k].to_vec(),
            },
            IoDataset {
                u: self.u[k..].to_vec(),
                y: self.y[k..].to_vec(),
            },
        )
    }
}

/// Reads a whitespace- or comma-delimited numeric table. Blank lines and lines
/// starting with `#` or `%` are skipped. Column indices are zero-based.
pub fn load_daisy(path: &Path, input_cols: &[usize], output_col: usize) -> Result<IoDataset> {
    let text = read_file(path)?;
    parse_table(&text, path, input_cols, output_col)
}

pub(crate) fn parse_table(
    text: &str,
    path: &Path,
    input_cols: &[usize],
    output_col: usize,
) -> Result<IoDataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let needed = input_cols
        .iter()
        .copied()
        .chain([output_col])
        .max()
        .unwrap_or(0)
        + 1;
    let mut data = IoDataset::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("not a number: {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() < needed {
            return Err(parse_err(
                i + 1,
                format!("expected at least {needed} columns, found {}", fields.len()),
            ));
        }
        data.u.push(input_cols.iter().map(|&c| fields[c]).collect());
        data.y.push(fields[output_col]);
    }
    Ok(data)
}

/// Per-channel affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Scaler {
    pub mean: f64,
    pub scale: f64,
}

impl Scaler {
    /// Fits to `values`. A constant channel keeps scale 1.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 {
            var.sqrt()
        } else {
            log::warn!("zero-variance channel; leaving it unscaled");
            1.0
        };
        Self { mean, scale }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.mean
    }
}

/// Scalers for every input channel and the output.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Standardization {
    pub inputs: Vec<Scaler>,
    pub output: Scaler,
}

impl Standardization {
    pub fn apply(&self, d: &IoDataset) -> IoDataset {
        IoDataset {
            u: d.u
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&self.inputs)
                        .map(|(v, s)| s.apply(*v))
                        .collect()
                })
                .collect(),
            y: d.y.iter().map(|v| self.output.apply(*v)).collect(),
        }
    }

    pub fn invert(&self, d: &IoDataset) -> IoDataset {
        IoDataset {
            u: d.u
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&self.inputs)
                        .map(|(v, s)| s.invert(*v))
                        .collect()
                })
                .collect(),
            y: d.y.iter().map(|v| self.output.invert(*v)).collect(),
        }
    }
}

/// Standardizes both splits with statistics of the training split.
pub fn standardize(train: &IoDataset, test: &IoDataset) -> (IoDataset, IoDataset, Standardization) {
    let n_u = train.u.first().map_or(0, Vec::len);
    let inputs = (0..n_u)
        .map(|c| Scaler::fit(&train.u.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let s = Standardization {
        inputs,
        output: Scaler::fit(&train.y),
    };
    (s.apply(train), s.apply(test), s)
}

/// Root mean squared error over all entries.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            what: "rmse operands",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}
