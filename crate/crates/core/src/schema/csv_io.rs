use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Column, DataTable, TableSchema, VariableKind, VariableSpec};
use crate::error::{Error, Result};

/// Reads a headered CSV file into a table with `schema`'s column order.
/// Extra CSV columns are ignored.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &TableSchema) -> Result<DataTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_csv_reader(file, schema)
}

pub fn ingest_csv_reader<R: Read>(reader: R, schema: &TableSchema) -> Result<DataTable> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = reader.headers()?.clone();
    let positions = schema
        .variables
        .iter()
        .map(|v| {
            headers
                .iter()
                .position(|h| h.trim() == v.name)
                .ok_or_else(|| Error::MissingColumn(v.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns: Vec<Column> = schema
        .variables
        .iter()
        .map(|v| match v.kind {
            VariableKind::Continuous => Column::Continuous(Vec::new()),
            VariableKind::Categorical => Column::Categorical(Vec::new()),
        })
        .collect();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for ((spec, &pos), column) in schema.variables.iter().zip(&positions).zip(&mut columns) {
            let raw = record.get(pos).unwrap_or("").trim();
            push_cell(column, spec, raw, row)?;
        }
    }
    if columns.first().map_or(true, Column::is_empty) {
        return Err(Error::EmptyTable);
    }
    DataTable::new(schema.clone(), columns)
}

pub(crate) fn push_cell(column: &mut Column, spec: &VariableSpec, raw: &str, row: usize) -> Result<()> {
    match column {
        Column::Continuous(values) => {
            let value = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::TypeMismatch {
                    row,
                    column: spec.name.clone(),
                    value: raw.to_owned(),
                })?;
            values.push(value);
        }
        Column::Categorical(codes) => {
            if raw.is_empty() {
                return Err(Error::TypeMismatch {
                    row,
                    column: spec.name.clone(),
                    value: String::new(),
                });
            }
            let code = spec
                .category_index(raw)
                .ok_or_else(|| Error::UnknownCategory {
                    value: raw.to_owned(),
                    column: spec.name.clone(),
                    row: Some(row),
                })?;
            codes.push(code);
        }
    }
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, table: &DataTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_writer(file, table)
}

pub fn write_csv_writer<W: Write>(writer: W, table: &DataTable) -> Result<()> {
    let mut writer = csv::Writer::from_writer(writer);
    writer.write_record(table.schema().names())?;
    let mut record = Vec::with_capacity(table.n_cols());
    for row in 0..table.n_rows() {
        record.clear();
        record.extend((0..table.n_cols()).map(|c| table.cell_label(row, c)));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Guesses a schema from a CSV file: all-numeric columns are continuous,
/// anything else is categorical with sorted distinct labels.
pub fn infer_schema(path: impl AsRef<Path>) -> Result<TableSchema> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let mut numeric = vec![true; headers.len()];
    let mut labels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); headers.len()];
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        rows += 1;
        for (i, cell) in record.iter().enumerate().take(headers.len()) {
            let cell = cell.trim();
            if numeric[i] && !cell.parse::<f64>().is_ok_and(f64::is_finite) {
                numeric[i] = false;
            }
            labels[i].insert(cell.to_owned());
        }
    }
    if rows == 0 {
        return Err(Error::EmptyTable);
    }
    let variables = headers
        .into_iter()
        .zip(numeric)
        .zip(labels)
        .map(|((name, numeric), labels)| {
            if numeric {
                VariableSpec::continuous(name)
            } else {
                VariableSpec::categorical(name, labels)
            }
        })
        .collect();
    TableSchema::new(variables)
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
    fn parses_three_rows() {
        let csv = "gender,age\nM,31\nF,45.5\nM,18\n";
        let t = ingest_csv_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.schema().variables[0].name, "age");
        assert_eq!(t.column("age").unwrap().as_continuous().unwrap(), &[31.0, 45.5, 18.0]);
        assert_eq!(t.column("gender").unwrap().as_categorical().unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn missing_column() {
        let csv = "gender\nM\n";
        match ingest_csv_reader(csv.as_bytes(), &schema()) {
            Err(Error::MissingColumn(name)) => assert_eq!(name, "age"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_names_row_and_column() {
        let csv = "age,gender\n3,M\nabc,F\n";
        match ingest_csv_reader(csv.as_bytes(), &schema()) {
            Err(Error::TypeMismatch { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (1, "age", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cell_and_empty_table() {
        let csv = "age,gender\n,M\n";
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes(), &schema()),
            Err(Error::TypeMismatch { row: 0, .. })
        ));
        let csv = "age,gender\n";
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes(), &schema()),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn write_then_read() {
        let csv = "age,gender\n31,M\n45.5,F\n";
        let t = ingest_csv_reader(csv.as_bytes(), &schema()).unwrap();
        let mut out = Vec::new();
        write_csv_writer(&mut out, &t).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }
}
