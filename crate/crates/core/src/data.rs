//! Price ingestion and log-return construction.
//!
//! Price files are CSV with a header `date,<asset1>,<asset2>,...` and ISO-8601
//! dates. Several files may be given; they are merged on date and only dates
//! for which every asset has a close are kept.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// T x n, strictly positive.
    pub closes: DMatrix<f64>,
    /// Dates dropped because at least one asset had no close.
    pub dropped_rows: usize,
}

impl PriceSeries {
    pub fn new(asset_names: Vec<String>, dates: Vec<NaiveDate>, closes: DMatrix<f64>) -> Result<Self> {
        if closes.ncols() != asset_names.len() || closes.nrows() != dates.len() {
            return Err(Error::InvalidParameter(format!(
                "closes is {}x{} but there are {} dates and {} assets",
                closes.nrows(),
                closes.ncols(),
                dates.len(),
                asset_names.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("dates must be strictly increasing".into()));
        }
        for (t, row) in closes.row_iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositivePrice {
                        asset: asset_names[i].clone(),
                        date: dates[t].to_string(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { asset_names, dates, closes, dropped_rows: 0 })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Matrix of per-period returns, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSample {
    pub asset_names: Vec<String>,
    /// End date of each return period, when the sample came from prices.
    pub dates: Option<Vec<NaiveDate>>,
    pub returns: DMatrix<f64>,
}

impl ReturnSample {
    pub fn new(asset_names: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if asset_names.len() != returns.ncols() {
            return Err(Error::InvalidParameter(format!(
                "{} asset names for {} columns",
                asset_names.len(),
                returns.ncols()
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("returns contain non-finite entries".into()));
        }
        Ok(Self { asset_names, dates: None, returns })
    }

    /// Sample with generated names `asset_1..asset_n`.
    pub fn unnamed(returns: DMatrix<f64>) -> Result<Self> {
        let names = (1..=returns.ncols()).map(|i| format!("asset_{i}")).collect();
        Self::new(names, returns)
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn len(&self) -> usize {
        self.returns.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.nrows() == 0
    }

    /// Per-row portfolio return `ω·R_j`.
    pub fn portfolio_returns(&self, weights: &DVector<f64>) -> Result<DVector<f64>> {
        if weights.len() != self.n_assets() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} assets",
                weights.len(),
                self.n_assets()
            )));
        }
        Ok(&self.returns * weights)
    }

    pub fn sample_mean(&self) -> DVector<f64> {
        let t = self.len() as f64;
        DVector::from_iterator(self.n_assets(), self.returns.column_iter().map(|c| c.sum() / t))
    }

    /// Covariance with divisor `T` (maximum-likelihood form).
    pub fn biased_covariance(&self) -> DMatrix<f64> {
        let mean = self.sample_mean();
        let mut centered = self.returns.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        (centered.transpose() * &centered) / self.len() as f64
    }

    /// Writes `date,r_<asset>...`; the date column holds the row index when
    /// the sample has no dates.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.asset_names.iter().map(|a| format!("r_{a}")));
        w.write_record(&header).map_err(csv_io)?;
        for (t, row) in self.returns.row_iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(match &self.dates {
                Some(d) => d[t].to_string(),
                None => (t + 1).to_string(),
            });
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`ReturnSample::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let headers = reader.headers().map_err(|e| csv_parse(e, 1))?.clone();
        if headers.len() < 2 || &headers[0] != "date" {
            return Err(Error::Parse { line: 1, column: 1, message: "expected header `date,r_<asset>...`".into() });
        }
        let names: Vec<String> = headers
            .iter()
            .skip(1)
            .map(|h| h.strip_prefix("r_").unwrap_or(h).to_string())
            .collect();
        let mut values = Vec::new();
        let mut rows = 0;
        let mut dates = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_parse(e, 0))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            dates.push(rec[0].parse::<NaiveDate>().ok());
            for (j, cell) in rec.iter().enumerate().skip(1) {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("not a number: {cell:?}"),
                })?;
                values.push(v);
            }
            rows += 1;
        }
        let mut sample = Self::new(names.clone(), DMatrix::from_row_slice(rows, names.len(), &values))?;
        if rows > 0 && dates.iter().all(Option::is_some) {
            sample.dates = Some(dates.into_iter().flatten().collect());
        }
        Ok(sample)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn csv_parse(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse { line, column: 0, message: e.to_string() }
}

/// Loads and merges one or more price files.
pub fn load_prices<P: AsRef<Path>>(paths: &[P]) -> Result<PriceSeries> {
    if paths.is_empty() {
        return Err(Error::InvalidParameter("no price files given".into()));
    }
    let mut sources = Vec::with_capacity(paths.len());
    for p in paths {
        let file = std::fs::File::open(p.as_ref())?;
        sources.push(file);
    }
    load_prices_from_readers(sources)
}

/// Reader-based variant of [`load_prices`].
pub fn load_prices_from_readers<R: Read>(sources: Vec<R>) -> Result<PriceSeries> {
    let mut names: Vec<String> = Vec::new();
    let mut table: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();

    for source in sources {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers().map_err(|e| csv_parse(e, 1))?.clone();
        if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("date") {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "expected header `date,<asset1>,...`".into(),
            });
        }
        let offset = names.len();
        for h in headers.iter().skip(1) {
            if names.iter().any(|n| n == h) {
                return Err(Error::Parse { line: 1, column: 0, message: format!("duplicate asset {h:?}") });
            }
            names.push(h.to_string());
        }
        let width = headers.len() - 1;
        let mut seen = std::collections::HashSet::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_parse(e, 0))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let date: NaiveDate = rec[0].parse().map_err(|_| Error::Parse {
                line,
                column: 1,
                message: format!("invalid ISO-8601 date {:?}", &rec[0]),
            })?;
            if !seen.insert(date) {
                return Err(Error::Parse { line, column: 1, message: format!("duplicate date {date}") });
            }
            let slot = table.entry(date).or_default();
            for (j, cell) in rec.iter().enumerate().skip(1) {
                let value = if cell.is_empty() {
                    None
                } else {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        line,
                        column: j + 1,
                        message: format!("not a number: {cell:?}"),
                    })?;
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::NonPositivePrice {
                            asset: names[offset + j - 1].clone(),
                            date: date.to_string(),
                            value: v,
                        });
                    }
                    Some(v)
                };
                let idx = offset + j - 1;
                if slot.len() <= idx {
                    slot.resize(offset + width, None);
                }
                slot[idx] = value;
            }
        }
    }

    let n = names.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for (date, mut row) in table {
        row.resize(n, None);
        if row.iter().all(Option::is_some) {
            dates.push(date);
            values.extend(row.into_iter().flatten());
        } else {
            dropped += 1;
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let closes = DMatrix::from_row_slice(dates.len(), n, &values);
    let mut series = PriceSeries::new(names, dates, closes)?;
    series.dropped_rows = dropped;
    Ok(series)
}

/// `r_{t,i} = ln close_{t+1,i} − ln close_{t,i}`.
pub fn to_log_returns(prices: &PriceSeries) -> Result<ReturnSample> {
    let t = prices.len();
    if t < 2 {
        return Err(Error::TooFewRows { needed: 2, got: t });
    }
    let n = prices.n_assets();
    let returns = DMatrix::from_fn(t - 1, n, |r, i| prices.closes[(r + 1, i)].ln() - prices.closes[(r, i)].ln());
    let mut sample = ReturnSample::new(prices.asset_names.clone(), returns)?;
    sample.dates = Some(prices.dates[1..].to_vec());
    Ok(sample)
}
