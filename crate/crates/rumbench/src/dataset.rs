//! `ChoiceDataset`, the tabular exchange format shared by every module.
//!
//! A dataset is a dense numeric attribute matrix plus one chosen alternative
//! per row, with optional per-row group identifiers (for grouped validation
//! splits) and an optional "systematic" flag marking rows whose observed
//! choice coincides with the noise-free utility maximiser.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Column name used for the chosen alternative in CSV files.
const CHOICE_COLUMN: &str = "choice";
/// Column name used for group identifiers in CSV files.
const GROUP_COLUMN: &str = "group";
/// Column name used for the systematic-choice flag in CSV files.
const SYSTEMATIC_COLUMN: &str = "systematic";

/// A choice dataset: one row per decision, one column per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDataset {
    attribute_names: Vec<String>,
    alternative_names: Vec<String>,
    /// Row-major `n_rows x n_attributes` matrix; all entries finite.
    features: Vec<f64>,
    /// Chosen alternative index per row, each `< alternative_names.len()`.
    chosen: Vec<usize>,
    group_ids: Option<Vec<String>>,
    systematic: Option<Vec<bool>>,
}

impl ChoiceDataset {
    /// Build a dataset, validating shapes, finiteness and label ranges.
    pub fn new(
        attribute_names: Vec<String>,
        alternative_names: Vec<String>,
        features: Vec<f64>,
        chosen: Vec<usize>,
        group_ids: Option<Vec<String>>,
        systematic: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n_attrs = attribute_names.len();
        if n_attrs == 0 {
            return Err(Error::config("a dataset needs at least one attribute"));
        }
        if alternative_names.len() < 2 {
            return Err(Error::config("a dataset needs at least two alternatives"));
        }
        let unique: BTreeSet<&String> = attribute_names.iter().collect();
        if unique.len() != n_attrs {
            return Err(Error::config("duplicate attribute names"));
        }
        let n_rows = chosen.len();
        if features.len() != n_rows * n_attrs {
            return Err(Error::dimension(format!(
                "feature matrix has {} entries, expected {} rows x {} attributes",
                features.len(),
                n_rows,
                n_attrs
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite attribute value at row {} column {}",
                bad / n_attrs,
                bad % n_attrs
            )));
        }
        if let Some(&bad) = chosen.iter().find(|&&c| c >= alternative_names.len()) {
            return Err(Error::domain(format!(
                "chosen alternative {bad} out of range (dataset has {} alternatives)",
                alternative_names.len()
            )));
        }
        if let Some(g) = &group_ids {
            if g.len() != n_rows {
                return Err(Error::dimension("group column length differs from row count"));
            }
        }
        if let Some(s) = &systematic {
            if s.len() != n_rows {
                return Err(Error::dimension(
                    "systematic column length differs from row count",
                ));
            }
        }
        Ok(ChoiceDataset {
            attribute_names,
            alternative_names,
            features,
            chosen,
            group_ids,
            systematic,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.chosen.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternative_names.len()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn alternative_names(&self) -> &[String] {
        &self.alternative_names
    }

    /// Index of the attribute column with the given name.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|n| n == name)
    }

    /// Attribute row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_attributes();
        &self.features[i * w..(i + 1) * w]
    }

    /// Chosen alternative of row `i`.
    pub fn chosen(&self, i: usize) -> usize {
        self.chosen[i]
    }

    pub fn chosen_all(&self) -> &[usize] {
        &self.chosen
    }

    pub fn group_ids(&self) -> Option<&[String]> {
        self.group_ids.as_deref()
    }

    pub fn systematic(&self) -> Option<&[bool]> {
        self.systematic.as_deref()
    }

    /// Values of one attribute column.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    /// Mean of one attribute column.
    pub fn column_mean(&self, j: usize) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        self.column(j).iter().sum::<f64>() / self.n_rows() as f64
    }

    /// Population standard deviation of one attribute column.
    pub fn column_std(&self, j: usize) -> f64 {
        let n = self.n_rows();
        if n == 0 {
            return 0.0;
        }
        let mean = self.column_mean(j);
        let var = self
            .column(j)
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        var.sqrt()
    }

    /// Observed share of each alternative, in percent.
    pub fn label_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_alternatives()];
        for &c in &self.chosen {
            counts[c] += 1;
        }
        let n = self.n_rows().max(1) as f64;
        counts.iter().map(|&c| 100.0 * c as f64 / n).collect()
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let w = self.n_attributes();
        let mut features = Vec::with_capacity(rows.len() * w);
        let mut chosen = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n_rows() {
                return Err(Error::dimension(format!(
                    "row index {r} out of range ({} rows)",
                    self.n_rows()
                )));
            }
            features.extend_from_slice(self.row(r));
            chosen.push(self.chosen[r]);
        }
        let group_ids = self
            .group_ids
            .as_ref()
            .map(|g| rows.iter().map(|&r| g[r].clone()).collect());
        let systematic = self
            .systematic
            .as_ref()
            .map(|s| rows.iter().map(|&r| s[r]).collect());
        ChoiceDataset::new(
            self.attribute_names.clone(),
            self.alternative_names.clone(),
            features,
            chosen,
            group_ids,
            systematic,
        )
    }

    /// Replace the attribute matrix, keeping labels and metadata.
    ///
    /// Used by scenario transforms and normalisation; the new matrix must
    /// have the same shape.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        ChoiceDataset::new(
            self.attribute_names.clone(),
            self.alternative_names.clone(),
            features,
            self.chosen.clone(),
            self.group_ids.clone(),
            self.systematic.clone(),
        )
    }

    /// Replace attribute names and matrix (used when columns are dropped).
    pub fn with_columns(&self, attribute_names: Vec<String>, features: Vec<f64>) -> Result<Self> {
        ChoiceDataset::new(
            attribute_names,
            self.alternative_names.clone(),
            features,
            self.chosen.clone(),
            self.group_ids.clone(),
            self.systematic.clone(),
        )
    }

    /// Write the dataset as CSV.
    ///
    /// Header: attribute columns in order, then `choice`, then `group` and
    /// `systematic` when present. The choice is written as its alternative
    /// name. Floats use the shortest round-trip representation, so writing
    /// and re-reading a dataset is lossless and re-running a generator with an
    /// unchanged configuration reproduces files byte for byte.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.attribute_names.iter().map(String::as_str).collect();
        header.push(CHOICE_COLUMN);
        if self.group_ids.is_some() {
            header.push(GROUP_COLUMN);
        }
        if self.systematic.is_some() {
            header.push(SYSTEMATIC_COLUMN);
        }
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| format!("{v}")));
            record.push(self.alternative_names[self.chosen[i]].clone());
            if let Some(g) = &self.group_ids {
                record.push(g[i].clone());
            }
            if let Some(s) = &self.systematic {
                record.push(if s[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write the dataset to a CSV file.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    /// Read a dataset written by [`ChoiceDataset::write_csv`].
    ///
    /// Alternative names are the distinct values of the `choice` column in
    /// lexicographic order. Malformed numeric cells are reported with their
    /// row and column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
        let header = reader.headers()?.clone();
        let mut choice_idx = None;
        let mut group_idx = None;
        let mut systematic_idx = None;
        let mut attr_cols: Vec<(usize, String)> = Vec::new();
        for (i, name) in header.iter().enumerate() {
            match name {
                CHOICE_COLUMN => choice_idx = Some(i),
                GROUP_COLUMN => group_idx = Some(i),
                SYSTEMATIC_COLUMN => systematic_idx = Some(i),
                _ => attr_cols.push((i, name.to_string())),
            }
        }
        let choice_idx =
            choice_idx.ok_or_else(|| Error::config(format!("missing `{CHOICE_COLUMN}` column")))?;

        let mut features = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut groups: Vec<String> = Vec::new();
        let mut flags: Vec<bool> = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            for (col, name) in &attr_cols {
                let cell = record.get(*col).unwrap_or("");
                let value: f64 = cell.parse().map_err(|_| {
                    Error::domain(format!(
                        "row {}: column `{}` has non-numeric value {:?}",
                        row_no + 1,
                        name,
                        cell
                    ))
                })?;
                features.push(value);
            }
            labels.push(
                record
                    .get(choice_idx)
                    .ok_or_else(|| Error::domain(format!("row {}: missing choice", row_no + 1)))?
                    .to_string(),
            );
            if let Some(g) = group_idx {
                groups.push(record.get(g).unwrap_or("").to_string());
            }
            if let Some(s) = systematic_idx {
                let cell = record.get(s).unwrap_or("");
                flags.push(match cell {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(Error::domain(format!(
                            "row {}: systematic flag must be 0 or 1, got {:?}",
                            row_no + 1,
                            other
                        )))
                    }
                });
            }
        }

        let alternative_names: Vec<String> = {
            let set: BTreeSet<&String> = labels.iter().collect();
            set.into_iter().cloned().collect()
        };
        if alternative_names.len() < 2 {
            return Err(Error::config(
                "choice column must contain at least two distinct alternatives",
            ));
        }
        let chosen = labels
            .iter()
            .map(|l| alternative_names.binary_search(l).expect("label present"))
            .collect();
        ChoiceDataset::new(
            attr_cols.into_iter().map(|(_, n)| n).collect(),
            alternative_names,
            features,
            chosen,
            group_idx.map(|_| groups),
            systematic_idx.map(|_| flags),
        )
    }

    /// Read a dataset from a CSV file.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        ChoiceDataset::read_csv(std::io::BufReader::new(file))
    }
}
