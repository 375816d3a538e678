//! Variable typing, in-memory tables, CSV ingestion, and the encoders that map
//! raw values into the model's continuous space.

pub(crate) mod csv_io;
mod encoder;
mod mixture;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{infer_schema, ingest_csv, ingest_csv_reader, write_csv, write_csv_writer};
pub use encoder::{
    CategoricalEncoder, ContinuousEncoder, EncoderSet, VariableEncoder, DEFAULT_N_MODES,
    DEFAULT_SMOOTHING,
};
pub use mixture::{fit_gaussian_mixture, GaussianMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
            categories: Vec::new(),
            bounds: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some([lo, hi]);
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VariableKind::Categorical
    }

    pub fn category_index(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            VariableKind::Categorical => {
                if self.categories.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "categorical variable {:?} needs at least 2 categories",
                        self.name
                    )));
                }
                let unique: HashSet<_> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate categories in {:?}",
                        self.name
                    )));
                }
                if self.bounds.is_some() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical variable {:?} cannot declare bounds",
                        self.name
                    )));
                }
            }
            VariableKind::Continuous => {
                if !self.categories.is_empty() {
                    return Err(Error::InvalidSchema(format!(
                        "continuous variable {:?} cannot declare categories",
                        self.name
                    )));
                }
                if let Some([lo, hi]) = self.bounds {
                    if !(lo < hi) {
                        return Err(Error::InvalidSchema(format!(
                            "bounds of {:?} must satisfy min < max",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered variable list; the order is the canonical column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub variables: Vec<VariableSpec>,
}

impl TableSchema {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        let schema = Self { variables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return Err(Error::InvalidSchema("empty variable name".into()));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate variable {:?}",
                    v.name
                )));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    /// Sub-schema with the named variables, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let variables = names
            .iter()
            .map(|n| {
                self.get(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownVariable((*n).to_owned()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { variables })
    }
}

/// A single typed column. Categorical cells hold indices into the variable's
/// category list.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Column::Continuous(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Continuous(_) => None,
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    fn kind(&self) -> VariableKind {
        match self {
            Column::Continuous(_) => VariableKind::Continuous,
            Column::Categorical(_) => VariableKind::Categorical,
        }
    }
}

/// Column-typed in-memory table.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    schema: TableSchema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl DataTable {
    pub fn new(schema: TableSchema, columns: Vec<Column>) -> Result<Self> {
        schema.validate()?;
        if schema.len() != columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} variables but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.variables.iter().zip(&columns) {
            if col.kind() != spec.kind {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} has the wrong kind",
                    spec.name
                )));
            }
            if col.len() != n_rows {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            match col {
                Column::Categorical(codes) => {
                    if let Some((row, &code)) = codes
                        .iter()
                        .enumerate()
                        .find(|(_, &c)| c as usize >= spec.categories.len())
                    {
                        return Err(Error::UnknownCategory {
                            value: code.to_string(),
                            column: spec.name.clone(),
                            row: Some(row),
                        });
                    }
                }
                Column::Continuous(values) => {
                    if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                        return Err(Error::TypeMismatch {
                            row,
                            column: spec.name.clone(),
                            value: values[row].to_string(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    /// Table with the given schema and no rows.
    pub fn empty(schema: TableSchema) -> Result<Self> {
        let columns = schema
            .variables
            .iter()
            .map(|v| match v.kind {
                VariableKind::Continuous => Column::Continuous(Vec::new()),
                VariableKind::Categorical => Column::Categorical(Vec::new()),
            })
            .collect();
        Self::new(schema, columns)
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_at(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn spec(&self, name: &str) -> Option<&VariableSpec> {
        self.schema.get(name)
    }

    /// Textual form of a cell, as written to CSV.
    pub fn cell_label(&self, row: usize, col: usize) -> String {
        match &self.columns[col] {
            Column::Continuous(v) => v[row].to_string(),
            Column::Categorical(v) => self.schema.variables[col].categories[v[row] as usize].clone(),
        }
    }

    /// Category label of a categorical cell.
    pub fn label(&self, row: usize, name: &str) -> Option<&str> {
        let idx = self.schema.index_of(name)?;
        let codes = self.columns[idx].as_categorical()?;
        Some(self.schema.variables[idx].categories[codes[row] as usize].as_str())
    }

    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> DataTable {
        let rows: Vec<usize> = (start..end.min(self.n_rows)).collect();
        self.select_rows(&rows)
    }

    pub fn select_columns(&self, names: &[&str]) -> Result<DataTable> {
        let schema = self.schema.select(names)?;
        let columns = names
            .iter()
            .map(|n| self.column(n).cloned().expect("checked by select"))
            .collect();
        Ok(DataTable {
            schema,
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Columns of `self` followed by those of `other`; names must be disjoint.
    pub fn hstack(&self, other: &DataTable) -> Result<DataTable> {
        if self.n_rows != other.n_rows {
            return Err(Error::SchemaMismatch(format!(
                "cannot join tables of {} and {} rows",
                self.n_rows, other.n_rows
            )));
        }
        if let Some(dup) = other.schema.names().find(|n| self.schema.index_of(n).is_some()) {
            return Err(Error::SchemaMismatch(format!(
                "column {dup:?} present in both tables"
            )));
        }
        let mut variables = self.schema.variables.clone();
        variables.extend(other.schema.variables.iter().cloned());
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Ok(DataTable {
            schema: TableSchema { variables },
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Rows of `self` followed by rows of `other`; schemas must be equal.
    pub fn vstack(&self, other: &DataTable) -> Result<DataTable> {
        if self.schema != other.schema {
            return Err(Error::SchemaMismatch("cannot stack tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| match (a, b) {
                (Column::Continuous(a), Column::Continuous(b)) => {
                    Column::Continuous(a.iter().chain(b).copied().collect())
                }
                (Column::Categorical(a), Column::Categorical(b)) => {
                    Column::Categorical(a.iter().chain(b).copied().collect())
                }
                _ => unreachable!("schemas are equal"),
            })
            .collect();
        Ok(DataTable {
            schema: self.schema.clone(),
            columns,
            n_rows: self.n_rows + other.n_rows,
        })
    }

    /// Reorders the columns to match `schema` (same variable set required).
    pub fn reorder(&self, names: &[&str]) -> Result<DataTable> {
        if names.len() != self.n_cols() {
            return Err(Error::SchemaMismatch("column sets differ".into()));
        }
        self.select_columns(names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> TableSchema {
        TableSchema::new(vec![
            VariableSpec::continuous("age"),
            VariableSpec::categorical("gender", ["M", "F"]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_names_and_single_category() {
        let dup = TableSchema::new(vec![
            VariableSpec::continuous("a"),
            VariableSpec::continuous("a"),
        ]);
        assert!(matches!(dup, Err(Error::InvalidSchema(_))));
        let single = TableSchema::new(vec![VariableSpec::categorical("g", ["M"])]);
        assert!(matches!(single, Err(Error::InvalidSchema(_))));
        let bounds = TableSchema::new(vec![VariableSpec::continuous("a").with_bounds(2.0, 1.0)]);
        assert!(matches!(bounds, Err(Error::InvalidSchema(_))));
    }

    #[test]
    fn schema_json_round_trip() {
        let text = r#"{"variables":[{"name":"age","kind":"continuous","bounds":[0,120]},
            {"name":"gender","kind":"categorical","categories":["M","F"]}]}"#;
        let s = TableSchema::from_json_str(text).unwrap();
        assert_eq!(s.variables[0].bounds, Some([0.0, 120.0]));
        let again = TableSchema::from_json_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn table_rejects_out_of_range_codes() {
        let t = DataTable::new(
            schema(),
            vec![Column::Continuous(vec![1.0]), Column::Categorical(vec![2])],
        );
        assert!(matches!(t, Err(Error::UnknownCategory { .. })));
    }

    #[test]
    fn hstack_refuses_collisions() {
        let t = DataTable::new(
            schema(),
            vec![Column::Continuous(vec![1.0]), Column::Categorical(vec![1])],
        )
        .unwrap();
        assert!(t.hstack(&t).is_err());
        assert_eq!(t.label(0, "gender"), Some("F"));
        assert_eq!(t.cell_label(0, 0), "1");
    }
}
