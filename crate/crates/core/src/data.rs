//! Column-named numeric panels, CSV ingestion, normalization and temporal splits.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T × d` panel of uniformly sampled observations with named columns.
///
/// Row `r` corresponds to timestep `start_index + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    values: Array2<f64>,
    names: Vec<String>,
    start_index: i64,
}

impl TimeSeriesMatrix {
    pub fn new(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        Self::with_start(values, names, 0)
    }

    pub fn with_start(values: Array2<f64>, names: Vec<String>, start_index: i64) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Schema("matrix has no rows".into()));
        }
        if values.ncols() != names.len() {
            return Err(Error::Schema(format!(
                "{} columns but {} names",
                values.ncols(),
                names.len()
            )));
        }
        check_names(&names)?;
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "non-finite value at row {r}, column '{}'",
                names[c]
            )));
        }
        Ok(Self {
            values,
            names,
            start_index,
        })
    }

    /// Builds a matrix from named columns of equal length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let len = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
        if columns.iter().any(|(_, c)| c.len() != len) {
            return Err(Error::Schema("columns have different lengths".into()));
        }
        let mut values = Array2::zeros((len, columns.len()));
        for (j, (_, col)) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        Self::new(values, columns.into_iter().map(|(n, _)| n).collect())
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Timestep label of row `r`.
    pub fn timestep(&self, r: usize) -> i64 {
        self.start_index + r as i64
    }

    /// Rows `[start, end)` as a new matrix; timesteps are preserved.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Argument(format!(
                "row range {start}..{end} invalid for {} rows",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            names: self.names.clone(),
            start_index: self.start_index + start as i64,
        })
    }

    /// Keeps only the rows where `keep` is true. Timestep labels restart at the
    /// original start index, so the result is only meaningful for order-free use.
    pub fn select_rows(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(Error::Argument("row mask length mismatch".into()));
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&r| keep[r]).collect();
        if idx.is_empty() {
            return Err(Error::Argument("row mask removes every row".into()));
        }
        Ok(Self {
            values: self.values.select(Axis(0), &idx),
            names: self.names.clone(),
            start_index: self.start_index,
        })
    }

    /// Temporal split at `⌊fraction·T⌋`; no shuffling.
    pub fn train_test_split(&self, fraction: f64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let cut = (fraction * self.len() as f64).floor() as usize;
        if cut == 0 || cut == self.len() {
            return Err(Error::Argument(format!(
                "split of {} rows at fraction {fraction} leaves an empty half",
                self.len()
            )));
        }
        Ok((self.slice_rows(0, cut)?, self.slice_rows(cut, self.len())?))
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if n.trim().is_empty() {
            return Err(Error::Schema("empty column name".into()));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{n}'")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NanPolicy {
    #[default]
    DropRow,
    ForwardFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub nan_policy: NanPolicy,
    /// Header names (case-insensitive) treated as timestamp columns and dropped.
    pub timestamp_columns: Vec<String>,
    /// Additional columns to ignore, e.g. attack labels shipped with the data.
    pub drop_columns: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            nan_policy: NanPolicy::DropRow,
            timestamp_columns: ["timestamp", "time", "date", "datetime"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            drop_columns: Vec::new(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &IngestOptions) -> Result<TimeSeriesMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), options)
}

/// Parses a header row of column names followed by numeric rows.
///
/// Row numbers in parse errors are 1-based file lines (the header is line 1);
/// column numbers are 1-based positions in the file.
pub fn read_csv(reader: impl Read, options: &IngestOptions) -> Result<TimeSeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Schema("empty file".into())),
    };
    let mut keep = Vec::new();
    let mut names = Vec::new();
    for (c, name) in header.iter().enumerate() {
        let lower = name.to_ascii_lowercase();
        if options.timestamp_columns.iter().any(|t| t.eq_ignore_ascii_case(&lower)) {
            warn!("dropping timestamp column '{name}'; rows are treated as uniformly sampled");
            continue;
        }
        if options.drop_columns.iter().any(|d| d == name) {
            continue;
        }
        keep.push(c);
        names.push(name.to_string());
    }
    check_names(&names)?;
    if names.is_empty() {
        return Err(Error::Schema("no data columns in header".into()));
    }

    let d = names.len();
    let mut flat = Vec::new();
    let mut last: Option<Vec<f64>> = None;
    let mut dropped = 0usize;
    for (r, rec) in records.enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for &c in &keep {
            let cell = &rec[c];
            // Empty cells are gaps, handled like NaN.
            let v: f64 = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("'{cell}' is not a number"),
                })?
            };
            row.push(v);
        }
        if row.iter().any(|v| !v.is_finite()) {
            match (options.nan_policy, &last) {
                (NanPolicy::ForwardFill, Some(prev)) => {
                    for (v, p) in row.iter_mut().zip(prev) {
                        if !v.is_finite() {
                            *v = *p;
                        }
                    }
                }
                _ => {
                    dropped += 1;
                    continue;
                }
            }
        }
        flat.extend_from_slice(&row);
        last = Some(row);
    }
    if dropped > 0 {
        warn!("dropped {dropped} rows containing non-finite values");
    }
    if flat.is_empty() {
        return Err(Error::Schema("file contains no data rows".into()));
    }
    let t = flat.len() / d;
    let values = Array2::from_shape_vec((t, d), flat).expect("row-major buffer matches shape");
    TimeSeriesMatrix::new(values, names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    #[default]
    Zscore,
    Minmax,
    None,
}

pub const MIN_SCALE: f64 = 1e-12;

/// Per-column affine map `(x − center) / scale`, fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormalizeMode,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(train: &TimeSeriesMatrix, mode: NormalizeMode) -> Self {
        let v = train.values();
        let d = train.n_vars();
        let (center, scale) = match mode {
            NormalizeMode::None => (vec![0.0; d], vec![1.0; d]),
            NormalizeMode::Zscore => v
                .columns()
                .into_iter()
                .map(|c| {
                    let n = c.len() as f64;
                    let mean = c.sum() / n;
                    let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt().max(MIN_SCALE))
                })
                .unzip(),
            NormalizeMode::Minmax => v
                .columns()
                .into_iter()
                .map(|c| {
                    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (lo, (hi - lo).max(MIN_SCALE))
                })
                .unzip(),
        };
        Self { mode, center, scale }
    }

    pub fn apply(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.map(m, |x, c, s| (x - c) / s)
    }

    pub fn invert(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.map(m, |x, c, s| x * s + c)
    }

    fn map(&self, m: &TimeSeriesMatrix, f: impl Fn(f64, f64, f64) -> f64) -> Result<TimeSeriesMatrix> {
        if m.n_vars() != self.center.len() {
            return Err(Error::Schema(format!(
                "normalizer fitted on {} columns, matrix has {}",
                self.center.len(),
                m.n_vars()
            )));
        }
        let mut values = m.values().to_owned();
        for (j, mut col) in values.columns_mut().into_iter().enumerate() {
            let (c, s) = (self.center[j], self.scale[j]);
            col.mapv_inplace(|x| f(x, c, s));
        }
        TimeSeriesMatrix::with_start(values, m.names().to_vec(), m.start_index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str) -> Result<TimeSeriesMatrix> {
        read_csv(text.as_bytes(), &IngestOptions::default())
    }

    #[test]
    fn parses_three_rows() {
        let m = parse("a,b\n1,2\n3,4\n5,6").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.names(), ["a", "b"]);
        assert_eq!(m.values(), array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn drops_nan_rows() {
        let m = parse("a,b\n1,2\n1,NaN\n5,6").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.values(), array![[1.0, 2.0], [5.0, 6.0]]);
    }

    #[test]
    fn forward_fills() {
        let opts = IngestOptions {
            nan_policy: NanPolicy::ForwardFill,
            ..Default::default()
        };
        let m = read_csv("a,b\nNaN,0\n1,2\n3,nan\n".as_bytes(), &opts).unwrap();
        assert_eq!(m.values(), array![[1.0, 2.0], [3.0, 2.0]]);
    }

    #[test]
    fn duplicate_header_is_schema_error() {
        assert!(matches!(parse("a,a\n1,2"), Err(Error::Schema(_))));
    }

    #[test]
    fn empty_file_is_schema_error() {
        assert!(matches!(parse(""), Err(Error::Schema(_))));
        assert!(matches!(parse("a,b\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_cell_reports_location() {
        match parse("a,b\n1,2\n3,x") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn timestamp_column_dropped() {
        let m = parse("timestamp,a\n10,1\n11,2").unwrap();
        assert_eq!(m.names(), ["a"]);
    }

    #[test]
    fn constant_column_zscore() {
        let m = TimeSeriesMatrix::from_columns(vec![("a".into(), vec![2.0, 2.0, 2.0])]).unwrap();
        let n = Normalizer::fit(&m, NormalizeMode::Zscore);
        assert_eq!(n.center, vec![2.0]);
        assert_eq!(n.scale, vec![MIN_SCALE]);
        assert!(n.apply(&m).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minmax_endpoints() {
        let m = TimeSeriesMatrix::from_columns(vec![("a".into(), vec![0.0, 10.0])]).unwrap();
        let n = Normalizer::fit(&m, NormalizeMode::Minmax);
        assert_eq!(n.apply(&m).unwrap().values(), array![[0.0], [1.0]]);
    }

    #[test]
    fn zscore_moments() {
        let m = TimeSeriesMatrix::from_columns(vec![
            ("a".into(), (0..50).map(|i| (i as f64).sin() * 3.0 + 1.0).collect()),
            ("b".into(), (0..50).map(|i| i as f64).collect()),
        ])
        .unwrap();
        let z = Normalizer::fit(&m, NormalizeMode::Zscore).apply(&m).unwrap();
        for c in z.values().columns() {
            let mean = c.mean().unwrap();
            let sd = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_floor() {
        let m = TimeSeriesMatrix::from_columns(vec![("a".into(), (0..10).map(f64::from).collect())]).unwrap();
        let (a, b) = m.train_test_split(0.7).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(b.start_index(), 7);
        let big = TimeSeriesMatrix::new(Array2::zeros((20000, 1)), vec!["a".into()]).unwrap();
        let (a, b) = big.train_test_split(0.5).unwrap();
        assert_eq!((a.len(), b.len()), (10000, 10000));
    }

    #[test]
    fn split_empty_half_rejected() {
        let m = TimeSeriesMatrix::from_columns(vec![("a".into(), vec![1.0])]).unwrap();
        assert!(matches!(m.train_test_split(0.5), Err(Error::Argument(_))));
        assert!(m.train_test_split(1.0).is_err());
    }

    #[test]
    fn csv_write_read_identity() {
        let m = TimeSeriesMatrix::from_columns(vec![
            ("a".into(), vec![0.1, 1.0 / 3.0, -2.5e-17]),
            ("b c".into(), vec![1e300, 4.0, 5.0]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &IngestOptions::default()).unwrap();
        assert_eq!(back, m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalizer_round_trip(
                data in proptest::collection::vec(-1e3f64..1e3, 100 * 5),
                mode in prop_oneof![Just(NormalizeMode::Zscore), Just(NormalizeMode::Minmax)],
            ) {
                let m = TimeSeriesMatrix::new(
                    Array2::from_shape_vec((100, 5), data).unwrap(),
                    (0..5).map(|i| format!("v{i}")).collect(),
                ).unwrap();
                let n = Normalizer::fit(&m, mode);
                let back = n.invert(&n.apply(&m).unwrap()).unwrap();
                for (x, y) in m.values().iter().zip(back.values().iter()) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                }
            }

            #[test]
            fn split_concatenates_to_original(t in 2usize..200, f in 0.01f64..0.99) {
                let m = TimeSeriesMatrix::from_columns(vec![
                    ("a".into(), (0..t).map(|i| i as f64).collect()),
                ]).unwrap();
                if let Ok((a, b)) = m.train_test_split(f) {
                    let joined: Vec<f64> = a.column(0).iter().chain(b.column(0).iter()).copied().collect();
                    prop_assert_eq!(joined, m.column(0).to_vec());
                    prop_assert_eq!(b.start_index(), a.len() as i64);
                }
            }
        }
    }
}
