use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// How a sweep walks through the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Sort by the (single) input column so steps are non-negative.
    SortByInput,
    /// Keep the rows in the order given, e.g. time order for flight logs.
    GivenOrder,
}

/// Training inputs `x` (`n × d`) and targets `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub ordering: SweepOrder,
}

impl RegressionDataset {
    /// Builds a dataset with the default ordering for its input dimension:
    /// sorted for scalar inputs, given order otherwise.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let ordering = if x.ncols() == 1 { SweepOrder::SortByInput } else { SweepOrder::GivenOrder };
        Self::with_ordering(x, y, ordering)
    }

    pub fn with_ordering(x: DMatrix<f64>, y: DVector<f64>, ordering: SweepOrder) -> Result<Self> {
        let data = RegressionDataset { x, y, ordering };
        data.validate()?;
        Ok(data)
    }

    pub fn from_scalar(xs: &[f64], ys: &[f64]) -> Result<Self> {
        ensure!(xs.len() == ys.len(), Dimension, "{} inputs but {} targets", xs.len(), ys.len());
        Self::new(DMatrix::from_column_slice(xs.len(), 1, xs), DVector::from_column_slice(ys))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.y.is_empty(), Validation, "dataset is empty");
        ensure!(
            self.x.nrows() == self.y.len(),
            Dimension,
            "{} input rows but {} targets",
            self.x.nrows(),
            self.y.len()
        );
        ensure!(self.x.ncols() >= 1, Dimension, "inputs need at least one column");
        ensure!(
            self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()),
            Validation,
            "dataset contains NaN or infinite values"
        );
        ensure!(
            self.ordering == SweepOrder::GivenOrder || self.x.ncols() == 1,
            Validation,
            "sort-by-input ordering requires a single input column, got {}",
            self.x.ncols()
        );
        Ok(())
    }
}

/// Reads a CSV with a header naming input columns `x0, x1, …` (or a single
/// `x`) and a target column `y`. Other columns are ignored.
pub fn read_csv<R: Read>(reader: R) -> Result<RegressionDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    let mut y_col = None;
    for (i, h) in headers.iter().enumerate() {
        if h == "y" {
            y_col = Some(i);
        } else if h == "x" {
            x_cols.push((0, i));
        } else if let Some(k) = h.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()) {
            x_cols.push((k, i));
        }
    }
    let y_col = y_col.ok_or_else(|| Error::Validation("dataset CSV needs a 'y' column".into()))?;
    ensure!(!x_cols.is_empty(), Validation, "dataset CSV needs input columns named x or x0, x1, ...");
    x_cols.sort();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Validation(format!("row {}: column {} is not a number", line + 1, &headers[i])))
        };
        for &(_, i) in &x_cols {
            xs.push(field(i)?);
        }
        ys.push(field(y_col)?);
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, x_cols.len(), &xs);
    RegressionDataset::new(x, DVector::from_vec(ys))
}

pub fn write_csv<W: Write>(writer: W, data: &RegressionDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let d = data.input_dim();
    let mut header: Vec<String> = (0..d).map(|c| format!("x{c}")).collect();
    header.push("y".into());
    wtr.write_record(&header)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = (0..d).map(|c| data.x[(i, c)].to_string()).collect();
        row.push(data.y[i].to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Noisy additive sine data: `y = Σ_c sin(x_c) + ε` with inputs uniform on
/// `[0, span)` and noise variance `var(signal) / snr`.
///
/// Returns the dataset and the noise-free signal.
pub fn synthetic_sine(n: usize, d: usize, span: f64, snr: f64, seed: u64) -> Result<(RegressionDataset, DVector<f64>)> {
    ensure!(n >= 1 && d >= 1, Validation, "need n >= 1 and d >= 1");
    ensure!(span > 0.0 && snr > 0.0, Validation, "span and snr must be > 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * span);
    let f = DVector::from_fn(n, |i, _| (0..d).map(|c| x[(i, c)].sin()).sum::<f64>());
    let mean = f.mean();
    let var = (f.map(|v| (v - mean).powi(2)).sum() / n as f64).max(1e-12);
    let noise = Normal::new(0.0, (var / snr).sqrt()).map_err(|e| Error::Validation(e.to_string()))?;
    let y = DVector::from_fn(n, |i, _| f[i] + noise.sample(&mut rng));
    Ok((RegressionDataset::new(x, y)?, f))
}
