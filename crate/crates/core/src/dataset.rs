//! Immutable columnar table of named numeric variables.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical source column that was expanded into 0/1 indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    /// Level absorbed into the intercept (no indicator column).
    pub reference: String,
    /// Indicator column names, one per non-reference level, in level order.
    pub indicators: Vec<String>,
    /// Raw label of every row.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n: usize,
    factors: BTreeMap<String, Factor>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::invalid("a dataset needs at least one row and one column"));
        }
        let mut seen = HashSet::new();
        for (name, col) in names.iter().zip(&columns) {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate column label '{name}'")));
            }
            if col.len() != n {
                return Err(Error::invalid(format!(
                    "column '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "column '{name}' holds a non-finite value at row {row}"
                )));
            }
        }
        Ok(Self {
            names,
            columns,
            n,
            factors: BTreeMap::new(),
        })
    }

    /// Convenience constructor from `(name, values)` pairs.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let (names, columns) = pairs.into_iter().map(|(k, v)| (k.into(), v)).unzip();
        Self::new(names, columns)
    }

    pub(crate) fn with_factors(mut self, factors: BTreeMap<String, Factor>) -> Result<Self> {
        for (source, factor) in &factors {
            if factor.labels.len() != self.n {
                return Err(Error::invalid(format!("factor '{source}' has the wrong length")));
            }
            for ind in &factor.indicators {
                if !self.has_column(ind) {
                    return Err(Error::UnknownColumn(ind.clone()));
                }
            }
        }
        self.factors = factors;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn factor(&self, source: &str) -> Option<&Factor> {
        self.factors.get(source)
    }

    pub fn factors(&self) -> &BTreeMap<String, Factor> {
        &self.factors
    }

    /// Maps user-facing labels to column names, expanding categorical source
    /// columns into their indicator columns.
    pub fn resolve(&self, labels: &[String]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for label in labels {
            if let Some(f) = self.factors.get(label) {
                out.extend(f.indicators.iter().cloned());
            } else if self.has_column(label) {
                out.push(label.clone());
            } else {
                return Err(Error::UnknownColumn(label.clone()));
            }
        }
        Ok(out)
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyAfterFiltering);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n) {
            return Err(Error::invalid(format!("row index {bad} out of range")));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let factors = self
            .factors
            .iter()
            .map(|(k, f)| {
                let labels = rows.iter().map(|&r| f.labels[r].clone()).collect();
                (k.clone(), Factor { labels, ..f.clone() })
            })
            .collect();
        Ok(Self {
            names: self.names.clone(),
            columns,
            n: rows.len(),
            factors,
        })
    }

    /// Splits the rows by the distinct values of `by`, sorted by stratum label.
    pub fn strata(&self, by: &str) -> Result<Vec<(String, Dataset)>> {
        let keys: Vec<String> = match self.factors.get(by) {
            Some(f) => f.labels.clone(),
            None => self.column(by)?.iter().map(|v| v.to_string()).collect(),
        };
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.into_iter().enumerate() {
            groups.entry(k).or_default().push(i);
        }
        groups
            .into_iter()
            .map(|(k, rows)| Ok((k, self.subset(&rows)?)))
            .collect()
    }

    /// Writes the numeric columns as CSV with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_io = |e: csv::Error| Error::Io(e.into());
        w.write_record(&self.names).map_err(to_io)?;
        for i in 0..self.n {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))
                .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}
