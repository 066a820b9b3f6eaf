//! CSV ingestion into a [`Dataset`].
//!
//! A column whose every non-empty cell parses as a finite number is numeric.
//! Any other column is categorical and is replaced by 0/1 indicator columns
//! named `column:level`, one per level except the reference level, which is
//! the most frequent level (ties go to the alphabetically first). Rows with an
//! empty cell anywhere are dropped and counted.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use crate::dataset::{Dataset, Factor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Reads a CSV file; the path `-` means standard input.
pub fn ingest_csv(path: &Path) -> Result<Ingested> {
    if path.as_os_str() == "-" {
        ingest_reader(std::io::stdin().lock())
    } else {
        ingest_reader(std::fs::File::open(path)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
        _ => Error::Parse { row, column: None, message: e.to_string() },
    }
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(Error::Parse { row: 1, column: None, message: "empty column label".into() });
        }
        if !seen.insert(h.as_str()) {
            return Err(Error::Parse {
                row: 1,
                column: Some(h.clone()),
                message: "duplicate column label".into(),
            });
        }
    }

    // (line number, cells) of complete rows.
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut dropped_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().any(str::is_empty) {
            dropped_rows += 1;
            continue;
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut factors = BTreeMap::new();
    for (j, header) in headers.iter().enumerate() {
        let parsed: Option<Vec<f64>> = rows.iter().map(|(_, cells)| cells[j].parse::<f64>().ok()).collect();
        match parsed {
            Some(values) => {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        row: rows[i].0,
                        column: Some(header.clone()),
                        message: format!("non-finite value '{}'", rows[i].1[j]),
                    });
                }
                names.push(header.clone());
                columns.push(values);
            }
            None => {
                let labels: Vec<String> = rows.iter().map(|(_, cells)| cells[j].clone()).collect();
                let factor = expand_factor(header, labels);
                for ind in &factor.indicators {
                    if headers.contains(ind) {
                        return Err(Error::Parse {
                            row: 1,
                            column: Some(ind.clone()),
                            message: format!("indicator for '{header}' collides with an existing column"),
                        });
                    }
                    let level = &ind[header.len() + 1..];
                    names.push(ind.clone());
                    columns.push(
                        factor
                            .labels
                            .iter()
                            .map(|l| if l == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
                factors.insert(header.clone(), factor);
            }
        }
    }
    let dataset = Dataset::new(names, columns)?.with_factors(factors)?;
    Ok(Ingested { dataset, dropped_rows })
}

fn expand_factor(header: &str, labels: Vec<String>) -> Factor {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let mut reference = "";
    let mut best = 0;
    for (&level, &count) in &counts {
        if count > best {
            best = count;
            reference = level;
        }
    }
    let reference = reference.to_string();
    let indicators = counts
        .keys()
        .filter(|&&l| l != reference)
        .map(|l| format!("{header}:{l}"))
        .collect();
    Factor { reference, indicators, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<Ingested> {
        ingest_reader(text.as_bytes())
    }

    #[test]
    fn numeric_file() {
        let got = ingest("y,x\n1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(got.dataset.n_rows(), 3);
        assert_eq!(got.dropped_rows, 0);
        assert_eq!(got.dataset.column("x").unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn categorical_uses_most_frequent_reference() {
        let text = "race,v\nWhite,1\nBlack,2\nOther,3\nWhite,4\nWhite,5\nBlack,6\n";
        let d = ingest(text).unwrap().dataset;
        let f = d.factor("race").unwrap();
        assert_eq!(f.reference, "White");
        assert_eq!(f.indicators, vec!["race:Black", "race:Other"]);
        assert_eq!(d.column("race:Black").unwrap(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.resolve(&["race".to_string()]).unwrap(), f.indicators);
        assert!(!d.has_column("race"));
    }

    #[test]
    fn tie_goes_to_first_sorted_level() {
        let d = ingest("g\nb\na\n").unwrap().dataset;
        assert_eq!(d.factor("g").unwrap().reference, "a");
    }

    #[test]
    fn missing_cells_drop_rows() {
        let got = ingest("y,x\n1,2\n,4\n5,6\n").unwrap();
        assert_eq!(got.dropped_rows, 1);
        assert_eq!(got.dataset.n_rows(), 2);
    }

    #[test]
    fn all_rows_missing() {
        assert!(matches!(ingest("y,x\n1,\n,4\n"), Err(Error::EmptyAfterFiltering)));
    }

    #[test]
    fn ragged_row_reports_location() {
        match ingest("y,x\n1,2\n3\n") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_reports_row_and_column() {
        match ingest("y,x\n1,2\n3,inf\n") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column.as_deref(), Some("x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_header() {
        assert!(matches!(ingest("a,a\n1,2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn categorical_strata() {
        let d = ingest("sex,v\nM,1\nF,2\nM,3\n").unwrap().dataset;
        let s = d.strata("sex").unwrap();
        assert_eq!(s[0].0, "F");
        assert_eq!(s[1].1.column("v").unwrap(), &[1.0, 3.0]);
        assert_eq!(s[1].1.factor("sex").unwrap().labels, vec!["M", "M"]);
    }
}
