//! Dataset loading and window extraction.
//!
//! The on-disk format is a plain CSV with a `date` column of
//! `YYYY-MM-DD HH:MM[:SS]` timestamps at a constant spacing, followed by one
//! numeric column per variable. Loading validates the file aggressively
//! (header, column counts, finite floats, constant spacing) so that every
//! later stage can assume a clean, regular series.
//!
//! Splits are half-open row ranges. Validation and test ranges are extended
//! backwards by one input length so that the first forecastable position of
//! each split has a full history window, without ever letting a *target*
//! row leak across a split border.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use crate::nncore::Tensor;
use crate::timefeat::{build_feature_matrix, CalendarStamp, FeatureMatrix, FeatureSpec};
use crate::{Error, Result};

/// A loaded CSV series: `n_rows` stamps and an `n_rows × n_vars` value
/// matrix in row-major order.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub stamps: Vec<CalendarStamp>,
    /// Variable (column) names, in file order.
    pub names: Vec<String>,
    /// Row-major `n_rows × n_vars`.
    pub values: Vec<f64>,
    pub n_rows: usize,
    pub n_vars: usize,
    /// Constant spacing between consecutive rows.
    pub granularity_minutes: i64,
}

impl RawDataset {
    /// One variable's full series as an owned vector.
    pub fn column(&self, v: usize) -> Vec<f64> {
        (0..self.n_rows)
            .map(|t| self.values[t * self.n_vars + v])
            .collect()
    }

    /// Index of a variable by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Load and validate a CSV series.
pub fn load_csv(path: &Path) -> Result<RawDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        line: 0,
        reason: format!("cannot read file: {e}"),
    })?;
    let err = |line: usize, reason: String| Error::Csv {
        path: path.display().to_string(),
        line,
        reason,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "file is empty".into()))?;
    let header_cells: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if header_cells.first().map(|c| c.trim()) != Some("date") {
        return Err(err(
            1,
            format!(
                "first header column must be \"date\", got {:?}",
                header_cells.first().unwrap_or(&"").trim()
            ),
        ));
    }
    if header_cells.len() < 2 {
        return Err(err(1, "no value columns after \"date\"".into()));
    }
    let names: Vec<String> = header_cells[1..]
        .iter()
        .map(|c| c.trim().to_string())
        .collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(err(1, "empty column name in header".into()));
    }
    let n_vars = names.len();

    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, matches editors
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_vars + 1 {
            return Err(err(
                line_no,
                format!("expected {} fields, got {}", n_vars + 1, cells.len()),
            ));
        }
        let stamp = CalendarStamp::parse(cells[0].trim())
            .map_err(|e| err(line_no, format!("bad timestamp: {e}")))?;
        stamps.push(stamp);
        for (v, cell) in cells[1..].iter().enumerate() {
            let x: f64 = cell.trim().parse().map_err(|_| {
                err(
                    line_no,
                    format!("column {:?}: cannot parse {:?} as a number", names[v], cell),
                )
            })?;
            if !x.is_finite() {
                return Err(err(
                    line_no,
                    format!("column {:?}: non-finite value {cell:?}", names[v]),
                ));
            }
            values.push(x);
        }
    }

    let n_rows = stamps.len();
    if n_rows < 2 {
        return Err(err(0, format!("need at least 2 data rows, got {n_rows}")));
    }
    let granularity_minutes =
        stamps[1].minutes_since_epoch() - stamps[0].minutes_since_epoch();
    if granularity_minutes <= 0 {
        return Err(err(
            3,
            format!("timestamps must be strictly increasing (spacing {granularity_minutes} min)"),
        ));
    }
    for t in 1..n_rows {
        let d = stamps[t].minutes_since_epoch() - stamps[t - 1].minutes_since_epoch();
        if d != granularity_minutes {
            return Err(err(
                t + 2, // +1 header, +1 to land on the second row of the pair
                format!(
                    "irregular spacing: {d} min between rows, expected {granularity_minutes} min"
                ),
            ));
        }
    }

    Ok(RawDataset {
        stamps,
        names,
        values,
        n_rows,
        n_vars,
        granularity_minutes,
    })
}

/// How to carve the series into train/validation/test row ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    /// Calendar-month borders used by the ETT benchmarks: 12 months train,
    /// 4 validation, 4 test, with a month fixed at 30 days.
    EttMonths,
    /// 70% train / 10% validation / 20% test by row count.
    Ratio,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitKind::EttMonths => write!(f, "ett"),
            SplitKind::Ratio => write!(f, "ratio"),
        }
    }
}

/// Train/validation/test row ranges. Validation and test start `seq_len`
/// rows early so their first target row sits exactly at the split border.
pub fn split_ranges(
    n_rows: usize,
    granularity_minutes: i64,
    kind: SplitKind,
    seq_len: usize,
) -> Result<[Range<usize>; 3]> {
    let (train_end, val_end, test_end) = match kind {
        SplitKind::EttMonths => {
            if granularity_minutes <= 0 || 1440 % granularity_minutes != 0 {
                return Err(Error::Data(format!(
                    "month-based split needs a spacing that divides a day; got {granularity_minutes} min"
                )));
            }
            let month = 30 * (1440 / granularity_minutes) as usize;
            if n_rows < 20 * month {
                return Err(Error::Data(format!(
                    "month-based split needs at least 20 months = {} rows, got {n_rows}",
                    20 * month
                )));
            }
            (12 * month, 16 * month, 20 * month)
        }
        SplitKind::Ratio => {
            let n_train = n_rows * 7 / 10;
            let n_test = n_rows * 2 / 10;
            (n_train, n_rows - n_test, n_rows)
        }
    };
    if train_end < seq_len {
        return Err(Error::Data(format!(
            "training range has {train_end} rows, fewer than the input length {seq_len}"
        )));
    }
    Ok([
        0..train_end,
        train_end - seq_len..val_end,
        val_end - seq_len..test_end,
    ])
}

/// Standardize every column in place using mean and *sample* standard
/// deviation (ddof = 1) computed over `train_range` only. Returns the
/// per-column `(mean, std)` used.
pub fn standardize(ds: &mut RawDataset, train_range: &Range<usize>) -> Result<Vec<(f64, f64)>> {
    let n = train_range.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "standardization needs at least 2 training rows, got {n}"
        )));
    }
    if train_range.end > ds.n_rows {
        return Err(Error::Data(format!(
            "training range {train_range:?} exceeds the {} available rows",
            ds.n_rows
        )));
    }
    let mut stats = Vec::with_capacity(ds.n_vars);
    for v in 0..ds.n_vars {
        let mut sum = 0.0;
        for t in train_range.clone() {
            sum += ds.values[t * ds.n_vars + v];
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for t in train_range.clone() {
            let d = ds.values[t * ds.n_vars + v] - mean;
            ss += d * d;
        }
        let std = (ss / (n - 1) as f64).sqrt();
        if std < 1e-12 {
            return Err(Error::Data(format!(
                "column {:?} is constant over the training range; cannot standardize",
                ds.names[v]
            )));
        }
        stats.push((mean, std));
    }
    for (i, cell) in ds.values.iter_mut().enumerate() {
        let (mean, std) = stats[i % ds.n_vars];
        *cell = (*cell - mean) / std;
    }
    Ok(stats)
}

/// One training example: history window, target block, and the stamp
/// features aligned with each.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// History `L × V`.
    pub x: Tensor,
    /// Target `T × V`.
    pub y: Tensor,
    /// Historical stamp features `L × r`.
    pub u: Tensor,
    /// Future stamp features `T × r`.
    pub p: Tensor,
}

/// All sliding windows of one split, sharing the dataset storage.
#[derive(Debug, Clone)]
pub struct WindowSet {
    values: Arc<Vec<f64>>,
    feats: Arc<FeatureMatrix>,
    range: Range<usize>,
    n_vars: usize,
    seq_len: usize,
    pred_len: usize,
    count: usize,
}

impl WindowSet {
    pub fn new(
        values: Arc<Vec<f64>>,
        feats: Arc<FeatureMatrix>,
        range: Range<usize>,
        n_vars: usize,
        seq_len: usize,
        pred_len: usize,
    ) -> Result<Self> {
        let n_rows = values.len() / n_vars;
        if range.end > n_rows || range.start > range.end {
            return Err(Error::Data(format!(
                "window range {range:?} exceeds the {n_rows} available rows"
            )));
        }
        if feats.rows != n_rows {
            return Err(Error::Data(format!(
                "feature matrix has {} rows but the series has {n_rows}",
                feats.rows
            )));
        }
        let len = range.len();
        if len < seq_len + pred_len {
            return Err(Error::Data(format!(
                "split of {len} rows is too short for one {seq_len}+{pred_len} window"
            )));
        }
        let count = len - seq_len - pred_len + 1;
        Ok(WindowSet {
            values,
            feats,
            range,
            n_vars,
            seq_len,
            pred_len,
            count,
        })
    }

    /// Number of sliding windows in this split.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn pred_len(&self) -> usize {
        self.pred_len
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Materialize window `i` (0-based within this split).
    pub fn get(&self, i: usize) -> WindowSample {
        assert!(i < self.count, "window {i} out of {} windows", self.count);
        let v = self.n_vars;
        let r = self.feats.cols;
        let x_start = self.range.start + i;
        let y_start = x_start + self.seq_len;
        let slice2 = |data: &[f64], row0: usize, rows: usize, cols: usize| {
            Tensor::from_vec(
                &[rows, cols],
                data[row0 * cols..(row0 + rows) * cols].to_vec(),
            )
            .expect("slice length matches shape")
        };
        WindowSample {
            x: slice2(&self.values, x_start, self.seq_len, v),
            y: slice2(&self.values, y_start, self.pred_len, v),
            u: slice2(&self.feats.data, x_start, self.seq_len, r),
            p: slice2(&self.feats.data, y_start, self.pred_len, r),
        }
    }
}

/// Everything a training run needs: the three window sets plus the metadata
/// that produced them.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub names: Vec<String>,
    pub n_vars: usize,
    pub seq_len: usize,
    pub pred_len: usize,
    pub feature_dim: usize,
    pub granularity_minutes: i64,
    /// Per-column `(mean, sample std)` used for standardization.
    pub norm: Vec<(f64, f64)>,
}

/// Load a CSV, split it, standardize it with training statistics, encode
/// stamp features, and expose each split as sliding windows.
pub fn prepare_dataset(
    path: &Path,
    kind: SplitKind,
    seq_len: usize,
    pred_len: usize,
    spec: &FeatureSpec,
) -> Result<DatasetBundle> {
    if seq_len == 0 || pred_len == 0 {
        return Err(Error::Config(format!(
            "window lengths must be positive, got seq_len={seq_len} pred_len={pred_len}"
        )));
    }
    let mut ds = load_csv(path)?;
    let [train_r, val_r, test_r] = split_ranges(ds.n_rows, ds.granularity_minutes, kind, seq_len)?;
    let norm = standardize(&mut ds, &train_r)?;
    let feats = Arc::new(build_feature_matrix(&ds.stamps, spec)?);
    let values = Arc::new(ds.values);
    let mk = |range: Range<usize>| {
        WindowSet::new(
            Arc::clone(&values),
            Arc::clone(&feats),
            range,
            ds.n_vars,
            seq_len,
            pred_len,
        )
    };
    Ok(DatasetBundle {
        train: mk(train_r)?,
        val: mk(val_r)?,
        test: mk(test_r)?,
        names: ds.names,
        n_vars: ds.n_vars,
        seq_len,
        pred_len,
        feature_dim: feats.cols,
        granularity_minutes: ds.granularity_minutes,
        norm,
    })
}
