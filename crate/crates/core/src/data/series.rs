use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dated, univariate close-price series.
///
/// Dates are strictly increasing and every close is finite and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::data(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::data("empty series"));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "dates not increasing at row {} ({} after {})",
                i + 1,
                dates[i + 1],
                dates[i]
            )));
        }
        if let Some(i) = closes.iter().position(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::data(format!(
                "close at row {i} is not a finite positive number: {}",
                closes[i]
            )));
        }
        Ok(Self { dates, closes })
    }

    /// Builds a series with consecutive calendar dates starting at `start`.
    /// Handy for synthetic data.
    pub fn from_values(start: NaiveDate, closes: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(closes.len()).collect();
        Self::new(dates, closes)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Reads a `Date,Close` CSV (extra columns ignored) in file order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Same as [`load_csv`] but over any reader.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::data(format!("missing `{name}` column")))
    };
    let date_col = column("Date")?;
    let close_col = column("Close")?;

    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let raw_date = record.get(date_col).unwrap_or("");
        let raw_close = record.get(close_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| Error::data(format!("line {line}: bad date {raw_date:?}: {e}")))?;
        let close: f64 = raw_close
            .parse()
            .map_err(|_| Error::data(format!("line {line}: bad close {raw_close:?}")))?;
        dates.push(date);
        closes.push(close);
    }
    PriceSeries::new(dates, closes)
}
