//! Client-facing result encodings.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use super::{serialize_columnar, ColumnBuilder, ColumnarError, DataType, Result, Schema, Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Columnar,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "columnar" | "tiercol" => Ok(OutputFormat::Columnar),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown output format `{other}`")),
        }
    }
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Columnar => "columnar",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

pub fn emit_output(table: &Table, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Columnar => serialize_columnar(table),
        OutputFormat::Csv => emit_csv(table),
        OutputFormat::Json => emit_json(table),
    }
}

fn emit_csv(table: &Table) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(table.schema().names())
        .expect("writing to a Vec cannot fail");
    let mut cells: Vec<String> = Vec::with_capacity(table.schema().len());
    for batch in table.batches() {
        for i in 0..batch.num_rows() {
            cells.clear();
            for col in batch.columns() {
                cells.push(text_cell(&col.value(i)));
            }
            w.write_record(&cells).expect("writing to a Vec cannot fail");
        }
    }
    w.into_inner().expect("flush to Vec")
}

fn text_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn emit_json(table: &Table) -> Vec<u8> {
    let names: Vec<String> = table
        .schema()
        .names()
        .map(|n| serde_json::to_string(n).unwrap())
        .collect();
    let mut out = String::new();
    for batch in table.batches() {
        for i in 0..batch.num_rows() {
            out.push('{');
            let mut first = true;
            for (c, col) in batch.columns().iter().enumerate() {
                let v = col.value(i);
                if v.is_null() {
                    continue;
                }
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&names[c]);
                out.push(':');
                json_value(&mut out, &v);
            }
            out.push_str("}\n");
        }
    }
    out.into_bytes()
}

fn json_f64(out: &mut String, v: f64) {
    if v.is_finite() {
        out.push_str(&serde_json::to_string(&v).unwrap());
    } else {
        // JSON has no non-finite numbers; these round-trip as strings.
        let _ = write!(out, "\"{v}\"");
    }
}

fn json_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Int32(x) => {
            let _ = write!(out, "{x}");
        }
        Value::Int64(x) => {
            let _ = write!(out, "{x}");
        }
        Value::Float64(x) => json_f64(out, *x),
        Value::Boolean(x) => {
            let _ = write!(out, "{x}");
        }
        Value::Utf8(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::ListFloat64(xs) => {
            out.push('[');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                json_f64(out, *x);
            }
            out.push(']');
        }
        Value::ListInt32(xs) => {
            out.push('[');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{x}");
            }
            out.push(']');
        }
    }
}

/// Decodes newline-delimited JSON objects produced by [`emit_output`] back
/// into a single-batch table under `schema`.
pub fn read_json_lines(bytes: &[u8], schema: &Schema) -> Result<Table> {
    let text = std::str::from_utf8(bytes).map_err(|e| ColumnarError::ParseError {
        row: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let mut builders: Vec<ColumnBuilder> = schema
        .fields()
        .iter()
        .map(|f| ColumnBuilder::with_capacity(f.data_type, 0))
        .collect();
    let mut rows = 0;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |column: usize, message: String| ColumnarError::ParseError {
            row: line_no + 1,
            column,
            message,
        };
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| err(e.column(), e.to_string()))?;
        for key in obj.keys() {
            if schema.index_of(key).is_none() {
                return Err(ColumnarError::SchemaMismatch(format!("unknown key `{key}`")));
            }
        }
        for (c, field) in schema.fields().iter().enumerate() {
            let b = &mut builders[c];
            match obj.get(&field.name) {
                None | Some(serde_json::Value::Null) => b.push_null(),
                Some(v) => {
                    let value = json_to_value(v, field.data_type)
                        .ok_or_else(|| err(c + 1, format!("`{v}` is not a {}", field.data_type)))?;
                    b.push_value(&value)?;
                }
            }
        }
        rows += 1;
    }
    let schema = Arc::new(schema.clone());
    if rows == 0 {
        return Ok(Table::empty(schema));
    }
    let batch = super::ColumnBatch::try_new(schema.clone(), builders.into_iter().map(|b| b.finish()).collect())?;
    Table::try_new(schema, vec![batch])
}

fn json_f64_value(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn json_to_value(v: &serde_json::Value, dt: DataType) -> Option<Value> {
    Some(match dt {
        DataType::Int32 => Value::Int32(i32::try_from(v.as_i64()?).ok()?),
        DataType::Int64 => Value::Int64(v.as_i64()?),
        DataType::Float64 => Value::Float64(json_f64_value(v)?),
        DataType::Boolean => Value::Boolean(v.as_bool()?),
        DataType::Utf8 => Value::Utf8(v.as_str()?.to_string()),
        DataType::ListFloat64 => {
            Value::ListFloat64(v.as_array()?.iter().map(json_f64_value).collect::<Option<Vec<_>>>()?)
        }
        DataType::ListInt32 => Value::ListInt32(
            v.as_array()?
                .iter()
                .map(|x| x.as_i64().and_then(|i| i32::try_from(i).ok()))
                .collect::<Option<Vec<_>>>()?,
        ),
    })
}
