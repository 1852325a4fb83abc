//! Schema-driven ingestion of externally supplied choice data.
//!
//! External files name their own columns, mix numeric and categorical
//! attributes and identify alternatives by arbitrary strings, so ingestion is
//! driven by a small schema: which columns are numeric attributes, which are
//! categorical (expanded to one-hot indicators), which column holds the
//! label, and optionally which columns carry observation groups or a
//! declared train/test split. Categorical levels and label names are mapped
//! in sorted order, making the encoding independent of row order.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rumbench::{ChoiceDataset, Error, Result};

/// Column roles of an external CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSchema {
    /// Numeric attribute columns, kept in this order.
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Categorical columns, each expanded to one one-hot column per level,
    /// appended after the numeric attributes.
    #[serde(default)]
    pub categoricals: Vec<String>,
    /// Column holding the chosen alternative.
    pub label: String,
    /// Observation-group column (individual, household) for leakage-free
    /// splitting.
    #[serde(default)]
    pub group: Option<String>,
    /// Column with `train` / `test` markers for a declared split.
    #[serde(default)]
    pub split: Option<String>,
}

impl IngestSchema {
    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() && self.categoricals.is_empty() {
            return Err(Error::config("schema declares no attribute columns"));
        }
        let mut seen = BTreeSet::new();
        let roles = self
            .attributes
            .iter()
            .chain(&self.categoricals)
            .chain(std::iter::once(&self.label))
            .chain(self.group.iter())
            .chain(self.split.iter());
        for column in roles {
            if column.is_empty() {
                return Err(Error::config("schema contains an empty column name"));
            }
            if !seen.insert(column.as_str()) {
                return Err(Error::config(format!(
                    "column {column:?} is used in more than one role"
                )));
            }
        }
        Ok(())
    }
}

/// Everything read from one external file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: ChoiceDataset,
    /// Values of the declared split column, when the schema names one.
    pub split: Option<Vec<String>>,
}

/// Ingest a CSV file on disk. See [`ingest_reader`].
pub fn ingest_csv(path: impl AsRef<Path>, schema: &IngestSchema) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        Error::config(format!("cannot open dataset file {}: {e}", path.display()))
    })?;
    ingest_reader(file, schema)
}

/// Ingest CSV data from any reader according to `schema`.
///
/// Numeric columns must parse as finite floats (failures report the data row
/// and column). Categorical columns become one-hot blocks named
/// `column=level` with levels in sorted order; labels map to alternatives in
/// sorted order as well.
pub fn ingest_reader<R: Read>(input: R, schema: &IngestSchema) -> Result<Ingested> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&String> = schema
        .attributes
        .iter()
        .chain(&schema.categoricals)
        .chain(std::iter::once(&schema.label))
        .chain(schema.group.iter())
        .chain(schema.split.iter())
        .filter(|c| index_of(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::config(format!(
            "columns {missing:?} not found in the file header {headers:?}"
        )));
    }
    let numeric_idx: Vec<usize> = schema
        .attributes
        .iter()
        .map(|c| index_of(c).unwrap())
        .collect();
    let categorical_idx: Vec<usize> = schema
        .categoricals
        .iter()
        .map(|c| index_of(c).unwrap())
        .collect();
    let label_idx = index_of(&schema.label).unwrap();
    let group_idx = schema.group.as_deref().map(|c| index_of(c).unwrap());
    let split_idx = schema.split.as_deref().map(|c| index_of(c).unwrap());

    let mut numeric_rows: Vec<Vec<f64>> = Vec::new();
    let mut categorical_rows: Vec<Vec<String>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    let mut split: Vec<String> = Vec::new();
    for (row_number, record) in reader.records().enumerate() {
        let record = record?;
        let mut numerics = Vec::with_capacity(numeric_idx.len());
        for (&idx, name) in numeric_idx.iter().zip(&schema.attributes) {
            let raw = record.get(idx).unwrap_or("").trim();
            let value: f64 = raw.parse().map_err(|_| {
                Error::domain(format!(
                    "row {}, column {name:?}: cannot parse {raw:?} as a number",
                    row_number + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::domain(format!(
                    "row {}, column {name:?}: non-finite value",
                    row_number + 1
                )));
            }
            numerics.push(value);
        }
        numeric_rows.push(numerics);
        categorical_rows.push(
            categorical_idx
                .iter()
                .map(|&idx| record.get(idx).unwrap_or("").trim().to_string())
                .collect(),
        );
        labels.push(record.get(label_idx).unwrap_or("").trim().to_string());
        if let Some(idx) = group_idx {
            groups.push(record.get(idx).unwrap_or("").trim().to_string());
        }
        if let Some(idx) = split_idx {
            split.push(record.get(idx).unwrap_or("").trim().to_string());
        }
    }
    if labels.is_empty() {
        return Err(Error::config("the file contains no data rows"));
    }

    // Sorted levels make the encoding stable under row reordering.
    let levels: Vec<Vec<String>> = (0..schema.categoricals.len())
        .map(|c| {
            categorical_rows
                .iter()
                .map(|row| row[c].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let alternative_names: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if alternative_names.len() < 2 {
        return Err(Error::config(format!(
            "label column {:?} holds fewer than two distinct values",
            schema.label
        )));
    }

    let mut attribute_names = schema.attributes.clone();
    for (column, column_levels) in schema.categoricals.iter().zip(&levels) {
        for level in column_levels {
            attribute_names.push(format!("{column}={level}"));
        }
    }
    let n_attrs = attribute_names.len();
    let mut features = Vec::with_capacity(labels.len() * n_attrs);
    for (numerics, categoricals) in numeric_rows.iter().zip(&categorical_rows) {
        features.extend_from_slice(numerics);
        for (value, column_levels) in categoricals.iter().zip(&levels) {
            for level in column_levels {
                features.push(if value == level { 1.0 } else { 0.0 });
            }
        }
    }
    let chosen: Vec<usize> = labels
        .iter()
        .map(|l| alternative_names.iter().position(|a| a == l).unwrap())
        .collect();
    let dataset = ChoiceDataset::new(
        attribute_names,
        alternative_names,
        features,
        chosen,
        group_idx.map(|_| groups),
        None,
    )?;
    Ok(Ingested {
        dataset,
        split: split_idx.map(|_| split),
    })
}

/// Partition an ingested dataset by its declared split column.
///
/// Markers are matched case-insensitively against `train` and `test`; any
/// other value is an error.
pub fn split_by_column(ingested: &Ingested) -> Result<(ChoiceDataset, ChoiceDataset)> {
    let Some(markers) = &ingested.split else {
        return Err(Error::config("the schema declares no split column"));
    };
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (i, marker) in markers.iter().enumerate() {
        match marker.to_ascii_lowercase().as_str() {
            "train" => train_rows.push(i),
            "test" => test_rows.push(i),
            other => {
                return Err(Error::domain(format!(
                    "row {}: split marker {other:?} is neither train nor test",
                    i + 1
                )))
            }
        }
    }
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::config("the declared split leaves one side empty"));
    }
    Ok((
        ingested.dataset.subset(&train_rows)?,
        ingested.dataset.subset(&test_rows)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> IngestSchema {
        IngestSchema {
            attributes: vec!["time".into(), "cost".into()],
            categoricals: vec!["purpose".into()],
            label: "mode".into(),
            group: Some("person".into()),
            split: None,
        }
    }

    const TOY_CSV: &str = "\
person,time,cost,purpose,mode
p1,10.0,2.5,work,car
p1,12.0,1.0,leisure,bus
p2,8.0,3.0,work,car
";

    #[test]
    fn one_hot_expansion_and_sorted_labels() {
        let ingested = ingest_reader(TOY_CSV.as_bytes(), &toy_schema()).unwrap();
        let ds = &ingested.dataset;
        assert_eq!(
            ds.attribute_names(),
            ["time", "cost", "purpose=leisure", "purpose=work"]
        );
        assert_eq!(ds.alternative_names(), ["bus", "car"]);
        assert_eq!(ds.row(0), [10.0, 2.5, 0.0, 1.0]);
        assert_eq!(ds.row(1), [12.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.chosen_all(), [1, 0, 1]);
        assert_eq!(
            ds.group_ids().unwrap(),
            ["p1".to_string(), "p1".into(), "p2".into()]
        );
    }

    #[test]
    fn missing_columns_and_bad_cells_are_reported() {
        let mut schema = toy_schema();
        schema.attributes.push("speed".into());
        let err = ingest_reader(TOY_CSV.as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");

        let bad = "person,time,cost,purpose,mode\np1,oops,2.5,work,car\np2,1,1,work,bus\n";
        let err = ingest_reader(bad.as_bytes(), &toy_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("time"), "{msg}");
    }

    #[test]
    fn duplicate_roles_are_rejected() {
        let mut schema = toy_schema();
        schema.group = Some("time".into());
        assert!(schema.validate().is_err());
        let empty = IngestSchema {
            attributes: vec![],
            categoricals: vec![],
            label: "mode".into(),
            group: None,
            split: None,
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn declared_split_partitions_rows() {
        let schema = IngestSchema {
            attributes: vec!["x".into()],
            categoricals: vec![],
            label: "y".into(),
            group: None,
            split: Some("part".into()),
        };
        let csv = "x,y,part\n1,a,train\n2,b,test\n3,a,TRAIN\n4,b,train\n";
        let ingested = ingest_reader(csv.as_bytes(), &schema).unwrap();
        let (train, test) = split_by_column(&ingested).unwrap();
        assert_eq!(train.n_rows(), 3);
        assert_eq!(test.n_rows(), 1);
        assert_eq!(test.row(0), [2.0]);

        let bad = "x,y,part\n1,a,train\n2,b,validate\n";
        let ingested = ingest_reader(bad.as_bytes(), &schema).unwrap();
        assert!(split_by_column(&ingested).is_err());
    }

    #[test]
    fn single_label_files_are_rejected() {
        let csv = "x,y\n1,a\n2,a\n";
        let schema = IngestSchema {
            attributes: vec!["x".into()],
            categoricals: vec![],
            label: "y".into(),
            group: None,
            split: None,
        };
        assert!(ingest_reader(csv.as_bytes(), &schema).is_err());
    }

    #[test]
    fn round_trip_of_a_native_dataset() {
        // Write a dataset with our own writer, ingest it through the schema
        // path, and expect the identical matrix.
        let ds = ChoiceDataset::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![0.25, 1.5, 0.75, 2.5, 0.1, 3.5],
            vec![0, 1, 1],
            None,
            None,
        )
        .unwrap();
        let mut buffer = Vec::new();
        ds.write_csv(&mut buffer).unwrap();
        let schema = IngestSchema {
            attributes: vec!["a".into(), "b".into()],
            categoricals: vec![],
            label: "choice".into(),
            group: None,
            split: None,
        };
        let ingested = ingest_reader(buffer.as_slice(), &schema).unwrap();
        assert_eq!(ingested.dataset.chosen_all(), ds.chosen_all());
        for i in 0..ds.n_rows() {
            assert_eq!(ingested.dataset.row(i), ds.row(i));
        }
    }
}
