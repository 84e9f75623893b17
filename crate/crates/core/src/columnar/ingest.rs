use std::io::Read;
use std::sync::Arc;

use super::{ColumnBatch, ColumnBuilder, ColumnarError, DataType, Result, Schema, Table};

#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Maximum rows per batch.
    pub batch_rows: usize,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            batch_rows: 65536,
            delimiter: b',',
        }
    }
}

/// Reads a headed CSV stream into a table. Empty cells are nulls; list cells
/// use the bracketed form `[1.0;2.5]`.
pub fn ingest_csv<R: Read>(source: R, schema: &Schema, options: &CsvOptions) -> Result<Table> {
    let schema = Arc::new(schema.clone());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(options.delimiter)
        .flexible(true)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| ColumnarError::SchemaMismatch(format!("unreadable header: {e}")))?
        .clone();
    let header_names: Vec<&str> = headers.iter().collect();
    let schema_names: Vec<&str> = schema.names().collect();
    if header_names != schema_names {
        return Err(ColumnarError::SchemaMismatch(format!(
            "header [{}] does not match schema [{}]",
            header_names.join(","),
            schema_names.join(",")
        )));
    }

    let batch_rows = options.batch_rows.max(1);
    let new_builders = || -> Vec<ColumnBuilder> {
        schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::with_capacity(f.data_type, batch_rows.min(1 << 16)))
            .collect()
    };
    let mut builders = new_builders();
    let mut batches = Vec::new();
    let mut row = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| ColumnarError::ParseError {
            row: row + 1,
            column: 0,
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        row += 1;
        if record.len() != schema.len() {
            return Err(ColumnarError::ParseError {
                row,
                column: record.len().min(schema.len()) + 1,
                message: format!("expected {} fields, found {}", schema.len(), record.len()),
            });
        }
        for (c, (cell, field)) in record.iter().zip(schema.fields()).enumerate() {
            let b = &mut builders[c];
            if cell.is_empty() {
                if !field.nullable {
                    return Err(ColumnarError::ParseError {
                        row,
                        column: c + 1,
                        message: format!("null in non-nullable column `{}`", field.name),
                    });
                }
                b.push_null();
                continue;
            }
            parse_cell(b, field.data_type, cell).map_err(|message| ColumnarError::ParseError {
                row,
                column: c + 1,
                message,
            })?;
        }
        if builders[0].len() == batch_rows {
            let full = std::mem::replace(&mut builders, new_builders());
            batches.push(finish_batch(&schema, full)?);
        }
    }
    if !builders.is_empty() && !builders[0].is_empty() {
        batches.push(finish_batch(&schema, builders)?);
    }
    Table::try_new(schema, batches)
}

fn finish_batch(schema: &Arc<Schema>, builders: Vec<ColumnBuilder>) -> Result<ColumnBatch> {
    ColumnBatch::try_new(schema.clone(), builders.into_iter().map(|b| b.finish()).collect())
}

fn parse_cell(b: &mut ColumnBuilder, data_type: DataType, cell: &str) -> std::result::Result<(), String> {
    if data_type == DataType::Utf8 {
        b.push_str(cell);
        return Ok(());
    }
    let cell = cell.trim();
    match data_type {
        DataType::Int32 => b.push_i32(cell.parse().map_err(|e| format!("`{cell}`: {e}"))?),
        DataType::Int64 => b.push_i64(cell.parse().map_err(|e| format!("`{cell}`: {e}"))?),
        DataType::Float64 => b.push_f64(cell.parse().map_err(|e| format!("`{cell}`: {e}"))?),
        DataType::Boolean => match cell.to_ascii_lowercase().as_str() {
            "true" => b.push_bool(true),
            "false" => b.push_bool(false),
            _ => return Err(format!("`{cell}` is not a boolean")),
        },
        DataType::Utf8 => unreachable!(),
        DataType::ListFloat64 => b.push_list_f64(&parse_list_literal(cell)?),
        DataType::ListInt32 => b.push_list_i32(&parse_list_literal(cell)?),
    }
    Ok(())
}

/// Parses `[a;b;c]` (or `[]`) into elements.
pub fn parse_list_literal<T: std::str::FromStr>(cell: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let inner = cell
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("`{cell}` is not a bracketed list"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(';')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("list element `{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Field, Value};

    fn schema(fields: &[(&str, DataType)]) -> Schema {
        Schema::new(fields.iter().map(|(n, t)| Field::new(*n, *t, true)).collect()).unwrap()
    }

    #[test]
    fn two_floats() {
        let s = schema(&[("x", DataType::Float64)]);
        let t = ingest_csv("x\n1.5\n2.0\n".as_bytes(), &s, &CsvOptions::default()).unwrap();
        assert_eq!(t.num_rows(), 2);
        assert_eq!(t.logical_bytes(), 16 + 1);
        assert_eq!(t.rows()[1], vec![Value::Float64(2.0)]);
    }

    #[test]
    fn header_only() {
        let s = schema(&[("x", DataType::Float64), ("y", DataType::Int32)]);
        let t = ingest_csv("x,y\n".as_bytes(), &s, &CsvOptions::default()).unwrap();
        assert_eq!(t.num_rows(), 0);
        assert_eq!(t.schema().as_ref(), &s);
    }

    #[test]
    fn list_cell() {
        let s = schema(&[("m", DataType::ListFloat64)]);
        let t = ingest_csv("m\n[0.4;0.6]\n".as_bytes(), &s, &CsvOptions::default()).unwrap();
        assert_eq!(t.rows()[0][0], Value::ListFloat64(vec![0.4, 0.6]));
    }

    #[test]
    fn empty_cell_is_null() {
        let s = schema(&[("a", DataType::Int64), ("b", DataType::Float64)]);
        let t = ingest_csv("a,b\n,1\n2,\n".as_bytes(), &s, &CsvOptions::default()).unwrap();
        let rows = t.rows();
        assert_eq!(rows[0][0], Value::Null);
        assert_eq!(rows[1][1], Value::Null);
    }

    #[test]
    fn header_mismatch() {
        let s = schema(&[("x", DataType::Float64)]);
        let err = ingest_csv("y\n1\n".as_bytes(), &s, &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, ColumnarError::SchemaMismatch(_)));
    }

    #[test]
    fn parse_error_coordinates() {
        let s = schema(&[("x", DataType::Float64), ("n", DataType::Int32)]);
        let err = ingest_csv("x,n\n1.0,2\n2.0,zz\n".as_bytes(), &s, &CsvOptions::default()).unwrap_err();
        assert!(
            matches!(err, ColumnarError::ParseError { row: 2, column: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn ragged_row() {
        let s = schema(&[("x", DataType::Float64), ("n", DataType::Int32)]);
        let err = ingest_csv("x,n\n1.0\n".as_bytes(), &s, &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, ColumnarError::ParseError { row: 1, .. }));
    }

    #[test]
    fn batches_split_at_batch_rows() {
        let s = schema(&[("x", DataType::Int64)]);
        let csv: String = std::iter::once("x\n".to_string())
            .chain((0..10).map(|i| format!("{i}\n")))
            .collect();
        let opts = CsvOptions {
            batch_rows: 4,
            ..Default::default()
        };
        let t = ingest_csv(csv.as_bytes(), &s, &opts).unwrap();
        let sizes: Vec<usize> = t.batches().iter().map(|b| b.num_rows()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }
}
