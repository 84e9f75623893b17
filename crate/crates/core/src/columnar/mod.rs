//! Columnar data model: schemas, typed columns with validity, batches and tables.
//!
//! Null slots always hold the type's default value so that structural equality
//! and serialized length depend only on the logical content of a column.

pub(crate) mod framing;
mod ingest;
mod output;
mod tiercol;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use ingest::{ingest_csv, parse_list_literal, CsvOptions};
pub use output::{emit_output, read_json_lines, OutputFormat};
pub(crate) use tiercol::{decode_schema, encode_schema};
pub use tiercol::{deserialize_columnar, serialize_columnar, TIERCOL_MAGIC, TIERCOL_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColumnarError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError { row: usize, column: usize, message: String },
    #[error("corrupt frame: {0}")]
    CorruptFrame(String),
    #[error("unsupported TIERCOL version {0}")]
    VersionUnsupported(u8),
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("invalid column: {0}")]
    InvalidColumn(String),
}

pub type Result<T, E = ColumnarError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Int32,
    Int64,
    Float64,
    Utf8,
    Boolean,
    ListFloat64,
    ListInt32,
}

impl DataType {
    pub const ALL: [DataType; 7] = [
        DataType::Int32,
        DataType::Int64,
        DataType::Float64,
        DataType::Utf8,
        DataType::Boolean,
        DataType::ListFloat64,
        DataType::ListInt32,
    ];

    pub fn is_list(self) -> bool {
        matches!(self, DataType::ListFloat64 | DataType::ListInt32)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int32 | DataType::Int64 | DataType::Float64)
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DataType::Int32 | DataType::Int64)
    }

    /// Element type of a list type.
    pub fn element_type(self) -> Option<DataType> {
        match self {
            DataType::ListFloat64 => Some(DataType::Float64),
            DataType::ListInt32 => Some(DataType::Int32),
            _ => None,
        }
    }

    /// Byte width of one value for fixed-width types.
    pub fn fixed_width(self) -> Option<usize> {
        match self {
            DataType::Int32 => Some(4),
            DataType::Int64 | DataType::Float64 => Some(8),
            DataType::Boolean => Some(1),
            DataType::Utf8 | DataType::ListFloat64 | DataType::ListInt32 => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Int32 => "Int32",
            DataType::Int64 => "Int64",
            DataType::Float64 => "Float64",
            DataType::Utf8 => "Utf8",
            DataType::Boolean => "Boolean",
            DataType::ListFloat64 => "ListFloat64",
            DataType::ListInt32 => "ListInt32",
        }
    }

    pub fn from_name(name: &str) -> Option<DataType> {
        DataType::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(name))
    }

    pub(crate) fn type_code(self) -> u8 {
        match self {
            DataType::Int32 => 1,
            DataType::Int64 => 2,
            DataType::Float64 => 3,
            DataType::Utf8 => 4,
            DataType::ListFloat64 => 5,
            DataType::ListInt32 => 6,
            DataType::Boolean => 7,
        }
    }

    pub(crate) fn from_type_code(code: u8) -> Option<DataType> {
        DataType::ALL.iter().copied().find(|t| t.type_code() == code)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    pub data_type: DataType,
    pub nullable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, data_type: DataType, nullable: bool) -> Self {
        Field {
            name: name.into(),
            data_type,
            nullable,
        }
    }
}

/// Ordered list of uniquely named fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(ColumnarError::DuplicateField(f.name.clone()));
            }
        }
        Ok(Schema { fields })
    }

    pub fn empty() -> Self {
        Schema { fields: Vec::new() }
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, i: usize) -> &Field {
        &self.fields[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field_by_name(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Schema file text: one `name: Type` line per field, `?` after the
    /// type marks it nullable. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Schema> {
        let mut fields = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || ColumnarError::SchemaMismatch(format!("schema line {}: cannot parse `{raw}`", n + 1));
            let (name, ty) = line.split_once(':').ok_or_else(bad)?;
            let ty = ty.trim();
            let (ty, nullable) = match ty.strip_suffix('?') {
                Some(t) => (t.trim(), true),
                None => (ty, false),
            };
            let data_type = DataType::from_name(ty)
                .ok_or_else(|| ColumnarError::SchemaMismatch(format!("schema line {}: unknown type `{ty}`", n + 1)))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(bad());
            }
            fields.push(Field::new(name, data_type, nullable));
        }
        if fields.is_empty() {
            return Err(ColumnarError::SchemaMismatch("schema has no fields".into()));
        }
        Schema::new(fields)
    }

    pub fn to_text(&self) -> String {
        self.fields
            .iter()
            .map(|f| format!("{}: {}{}\n", f.name, f.data_type, if f.nullable { "?" } else { "" }))
            .collect()
    }

    /// Same fields in the same order with new names.
    pub fn renamed(&self, names: &[String]) -> Result<Schema> {
        if names.len() != self.fields.len() {
            return Err(ColumnarError::SchemaMismatch(format!(
                "{} names for {} fields",
                names.len(),
                self.fields.len()
            )));
        }
        Schema::new(
            self.fields
                .iter()
                .zip(names)
                .map(|(f, n)| Field::new(n.clone(), f.data_type, f.nullable))
                .collect(),
        )
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", field.name, field.data_type)?;
            if field.nullable {
                f.write_str("?")?;
            }
        }
        f.write_str("}")
    }
}

/// A single logical value, used at row granularity (ingest, output, tests).
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int32(i32),
    Int64(i64),
    Float64(f64),
    Utf8(String),
    Boolean(bool),
    ListFloat64(Vec<f64>),
    ListInt32(Vec<i32>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int32(v) => Some(*v as f64),
            Value::Int64(v) => Some(*v as f64),
            Value::Float64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int32(v) => Some(*v as i64),
            Value::Int64(v) => Some(*v),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Int32(a), Value::Int32(b)) => a == b,
            (Value::Int64(a), Value::Int64(b)) => a == b,
            (Value::Float64(a), Value::Float64(b)) => a.to_bits() == b.to_bits(),
            (Value::Utf8(a), Value::Utf8(b)) => a == b,
            (Value::Boolean(a), Value::Boolean(b)) => a == b,
            (Value::ListFloat64(a), Value::ListFloat64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Value::ListInt32(a), Value::ListInt32(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int32(v) => write!(f, "{v}"),
            Value::Int64(v) => write!(f, "{v}"),
            Value::Float64(v) => write!(f, "{v}"),
            Value::Utf8(v) => f.write_str(v),
            Value::Boolean(v) => write!(f, "{v}"),
            Value::ListFloat64(v) => write_list(f, v),
            Value::ListInt32(v) => write_list(f, v),
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_str("[")?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(";")?;
        }
        write!(f, "{item}")?;
    }
    f.write_str("]")
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    Int32(Vec<i32>),
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Utf8(Vec<String>),
    Boolean(Vec<bool>),
    ListFloat64 { offsets: Vec<u32>, values: Vec<f64> },
    ListInt32 { offsets: Vec<u32>, values: Vec<i32> },
}

impl ColumnData {
    pub fn empty(data_type: DataType) -> Self {
        match data_type {
            DataType::Int32 => ColumnData::Int32(Vec::new()),
            DataType::Int64 => ColumnData::Int64(Vec::new()),
            DataType::Float64 => ColumnData::Float64(Vec::new()),
            DataType::Utf8 => ColumnData::Utf8(Vec::new()),
            DataType::Boolean => ColumnData::Boolean(Vec::new()),
            DataType::ListFloat64 => ColumnData::ListFloat64 {
                offsets: vec![0],
                values: Vec::new(),
            },
            DataType::ListInt32 => ColumnData::ListInt32 {
                offsets: vec![0],
                values: Vec::new(),
            },
        }
    }

    pub fn data_type(&self) -> DataType {
        match self {
            ColumnData::Int32(_) => DataType::Int32,
            ColumnData::Int64(_) => DataType::Int64,
            ColumnData::Float64(_) => DataType::Float64,
            ColumnData::Utf8(_) => DataType::Utf8,
            ColumnData::Boolean(_) => DataType::Boolean,
            ColumnData::ListFloat64 { .. } => DataType::ListFloat64,
            ColumnData::ListInt32 { .. } => DataType::ListInt32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int32(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Utf8(v) => v.len(),
            ColumnData::Boolean(v) => v.len(),
            ColumnData::ListFloat64 { offsets, .. } | ColumnData::ListInt32 { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PartialEq for ColumnData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnData::Int32(a), ColumnData::Int32(b)) => a == b,
            (ColumnData::Int64(a), ColumnData::Int64(b)) => a == b,
            (ColumnData::Float64(a), ColumnData::Float64(b)) => floats_eq(a, b),
            (ColumnData::Utf8(a), ColumnData::Utf8(b)) => a == b,
            (ColumnData::Boolean(a), ColumnData::Boolean(b)) => a == b,
            (
                ColumnData::ListFloat64 {
                    offsets: oa,
                    values: va,
                },
                ColumnData::ListFloat64 {
                    offsets: ob,
                    values: vb,
                },
            ) => oa == ob && floats_eq(va, vb),
            (
                ColumnData::ListInt32 {
                    offsets: oa,
                    values: va,
                },
                ColumnData::ListInt32 {
                    offsets: ob,
                    values: vb,
                },
            ) => oa == ob && va == vb,
            _ => false,
        }
    }
}

fn floats_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// A typed value vector plus an optional validity mask (`None` = no nulls).
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    data: ColumnData,
    validity: Option<Vec<bool>>,
}

impl Column {
    /// Builds a column, normalizing null slots to default values and dropping
    /// an all-valid mask.
    pub fn new(data: ColumnData, validity: Option<Vec<bool>>) -> Result<Self> {
        if let Some(v) = &validity {
            if v.len() != data.len() {
                return Err(ColumnarError::InvalidColumn(format!(
                    "validity length {} != data length {}",
                    v.len(),
                    data.len()
                )));
            }
        }
        if let ColumnData::ListFloat64 { offsets, values } = &data {
            check_offsets(offsets, values.len())?;
        }
        if let ColumnData::ListInt32 { offsets, values } = &data {
            check_offsets(offsets, values.len())?;
        }
        let mut col = Column { data, validity };
        col.normalize();
        Ok(col)
    }

    pub fn from_data(data: ColumnData) -> Self {
        Column { data, validity: None }
    }

    pub fn new_null(data_type: DataType, len: usize) -> Self {
        let mut b = ColumnBuilder::with_capacity(data_type, len);
        for _ in 0..len {
            b.push_null();
        }
        b.finish()
    }

    fn normalize(&mut self) {
        let Some(validity) = &self.validity else {
            return;
        };
        if validity.iter().all(|v| *v) {
            self.validity = None;
            return;
        }
        let validity = self.validity.take().unwrap();
        // Rebuild so null slots hold defaults (lists become empty).
        let mut b = ColumnBuilder::with_capacity(self.data.data_type(), validity.len());
        for (i, valid) in validity.iter().enumerate() {
            if *valid {
                b.push_from(&self.data, i);
            } else {
                b.push_null();
            }
        }
        *self = b.finish();
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    pub fn data_type(&self) -> DataType {
        self.data.data_type()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[i])
    }

    pub fn null_count(&self) -> usize {
        self.validity.as_ref().map_or(0, |v| v.iter().filter(|b| !**b).count())
    }

    pub fn value(&self, i: usize) -> Value {
        if !self.is_valid(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Int32(v) => Value::Int32(v[i]),
            ColumnData::Int64(v) => Value::Int64(v[i]),
            ColumnData::Float64(v) => Value::Float64(v[i]),
            ColumnData::Utf8(v) => Value::Utf8(v[i].clone()),
            ColumnData::Boolean(v) => Value::Boolean(v[i]),
            ColumnData::ListFloat64 { offsets, values } => {
                Value::ListFloat64(values[offsets[i] as usize..offsets[i + 1] as usize].to_vec())
            }
            ColumnData::ListInt32 { offsets, values } => {
                Value::ListInt32(values[offsets[i] as usize..offsets[i + 1] as usize].to_vec())
            }
        }
    }

    pub fn from_values(data_type: DataType, values: &[Value]) -> Result<Self> {
        let mut b = ColumnBuilder::with_capacity(data_type, values.len());
        for v in values {
            b.push_value(v)?;
        }
        Ok(b.finish())
    }

    /// Gathers rows by index.
    pub fn take(&self, indices: &[usize]) -> Column {
        let validity = self
            .validity
            .as_ref()
            .map(|v| indices.iter().map(|&i| v[i]).collect::<Vec<_>>());
        let data = match &self.data {
            ColumnData::Int32(v) => ColumnData::Int32(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Int64(v) => ColumnData::Int64(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Float64(v) => ColumnData::Float64(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Boolean(v) => ColumnData::Boolean(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Utf8(v) => ColumnData::Utf8(indices.iter().map(|&i| v[i].clone()).collect()),
            ColumnData::ListFloat64 { offsets, values } => {
                let (offsets, values) = take_list(offsets, values, indices);
                ColumnData::ListFloat64 { offsets, values }
            }
            ColumnData::ListInt32 { offsets, values } => {
                let (offsets, values) = take_list(offsets, values, indices);
                ColumnData::ListInt32 { offsets, values }
            }
        };
        let mut col = Column { data, validity };
        if col.validity.as_ref().is_some_and(|v| v.iter().all(|b| *b)) {
            col.validity = None;
        }
        col
    }

    /// Keeps rows where `mask` is true.
    pub fn filter(&self, mask: &[bool]) -> Column {
        let indices: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, keep)| keep.then_some(i))
            .collect();
        self.take(&indices)
    }

    pub fn slice(&self, start: usize, len: usize) -> Column {
        let indices: Vec<usize> = (start..start + len).collect();
        self.take(&indices)
    }

    pub fn concat(parts: &[&Column], data_type: DataType) -> Column {
        let total = parts.iter().map(|c| c.len()).sum();
        let mut b = ColumnBuilder::with_capacity(data_type, total);
        for part in parts {
            for i in 0..part.len() {
                if part.is_valid(i) {
                    b.push_from(&part.data, i);
                } else {
                    b.push_null();
                }
            }
        }
        b.finish()
    }

    /// Bytes attributed to this column by the logical size model: value bytes of
    /// non-null entries (4-byte offset plus payload for variable-width types)
    /// and one validity bit per row.
    pub fn logical_bytes(&self) -> u64 {
        let rows = self.len();
        let validity = rows.div_ceil(8) as u64;
        let values: u64 = match &self.data {
            ColumnData::Int32(_) | ColumnData::Int64(_) | ColumnData::Float64(_) | ColumnData::Boolean(_) => {
                let w = self.data_type().fixed_width().unwrap() as u64;
                w * (rows - self.null_count()) as u64
            }
            ColumnData::Utf8(v) => (0..rows)
                .filter(|&i| self.is_valid(i))
                .map(|i| 4 + v[i].len() as u64)
                .sum(),
            ColumnData::ListFloat64 { values, .. } => 4 * (rows - self.null_count()) as u64 + 8 * values.len() as u64,
            ColumnData::ListInt32 { values, .. } => 4 * (rows - self.null_count()) as u64 + 4 * values.len() as u64,
        };
        values + validity
    }
}

fn check_offsets(offsets: &[u32], values_len: usize) -> Result<()> {
    if offsets.is_empty()
        || offsets[0] != 0
        || *offsets.last().unwrap() as usize != values_len
        || offsets.windows(2).any(|w| w[0] > w[1])
    {
        return Err(ColumnarError::InvalidColumn("malformed list offsets".into()));
    }
    Ok(())
}

fn take_list<T: Copy>(offsets: &[u32], values: &[T], indices: &[usize]) -> (Vec<u32>, Vec<T>) {
    let mut out_offsets = Vec::with_capacity(indices.len() + 1);
    let mut out_values = Vec::new();
    out_offsets.push(0u32);
    for &i in indices {
        out_values.extend_from_slice(&values[offsets[i] as usize..offsets[i + 1] as usize]);
        out_offsets.push(out_values.len() as u32);
    }
    (out_offsets, out_values)
}

/// Incremental column construction.
pub struct ColumnBuilder {
    data: ColumnData,
    validity: Vec<bool>,
    has_null: bool,
}

impl ColumnBuilder {
    pub fn with_capacity(data_type: DataType, capacity: usize) -> Self {
        let data = match data_type {
            DataType::Int32 => ColumnData::Int32(Vec::with_capacity(capacity)),
            DataType::Int64 => ColumnData::Int64(Vec::with_capacity(capacity)),
            DataType::Float64 => ColumnData::Float64(Vec::with_capacity(capacity)),
            DataType::Boolean => ColumnData::Boolean(Vec::with_capacity(capacity)),
            DataType::Utf8 => ColumnData::Utf8(Vec::with_capacity(capacity)),
            other => ColumnData::empty(other),
        };
        ColumnBuilder {
            data,
            validity: Vec::with_capacity(capacity),
            has_null: false,
        }
    }

    pub fn data_type(&self) -> DataType {
        self.data.data_type()
    }

    pub fn push_null(&mut self) {
        match &mut self.data {
            ColumnData::Int32(v) => v.push(0),
            ColumnData::Int64(v) => v.push(0),
            ColumnData::Float64(v) => v.push(0.0),
            ColumnData::Boolean(v) => v.push(false),
            ColumnData::Utf8(v) => v.push(String::new()),
            ColumnData::ListFloat64 { offsets, .. } | ColumnData::ListInt32 { offsets, .. } => {
                let last = *offsets.last().unwrap();
                offsets.push(last);
            }
        }
        self.validity.push(false);
        self.has_null = true;
    }

    pub fn push_i32(&mut self, v: i32) {
        if let ColumnData::Int32(d) = &mut self.data {
            d.push(v);
            self.validity.push(true);
        } else {
            panic!("push_i32 on {:?}", self.data_type());
        }
    }

    pub fn push_i64(&mut self, v: i64) {
        if let ColumnData::Int64(d) = &mut self.data {
            d.push(v);
            self.validity.push(true);
        } else {
            panic!("push_i64 on {:?}", self.data_type());
        }
    }

    pub fn push_f64(&mut self, v: f64) {
        if let ColumnData::Float64(d) = &mut self.data {
            d.push(v);
            self.validity.push(true);
        } else {
            panic!("push_f64 on {:?}", self.data_type());
        }
    }

    pub fn push_bool(&mut self, v: bool) {
        if let ColumnData::Boolean(d) = &mut self.data {
            d.push(v);
            self.validity.push(true);
        } else {
            panic!("push_bool on {:?}", self.data_type());
        }
    }

    pub fn push_str(&mut self, v: &str) {
        if let ColumnData::Utf8(d) = &mut self.data {
            d.push(v.to_string());
            self.validity.push(true);
        } else {
            panic!("push_str on {:?}", self.data_type());
        }
    }

    pub fn push_list_f64(&mut self, items: &[f64]) {
        if let ColumnData::ListFloat64 { offsets, values } = &mut self.data {
            values.extend_from_slice(items);
            offsets.push(values.len() as u32);
            self.validity.push(true);
        } else {
            panic!("push_list_f64 on {:?}", self.data_type());
        }
    }

    pub fn push_list_i32(&mut self, items: &[i32]) {
        if let ColumnData::ListInt32 { offsets, values } = &mut self.data {
            values.extend_from_slice(items);
            offsets.push(values.len() as u32);
            self.validity.push(true);
        } else {
            panic!("push_list_i32 on {:?}", self.data_type());
        }
    }

    /// Appends a value, widening Int32 to Int64/Float64 and Int64 to Float64
    /// where the target type requires it.
    pub fn push_value(&mut self, value: &Value) -> Result<()> {
        let dt = self.data_type();
        match (dt, value) {
            (_, Value::Null) => self.push_null(),
            (DataType::Int32, Value::Int32(v)) => self.push_i32(*v),
            (DataType::Int64, Value::Int32(v)) => self.push_i64(*v as i64),
            (DataType::Int64, Value::Int64(v)) => self.push_i64(*v),
            (DataType::Float64, Value::Float64(v)) => self.push_f64(*v),
            (DataType::Float64, Value::Int32(v)) => self.push_f64(*v as f64),
            (DataType::Float64, Value::Int64(v)) => self.push_f64(*v as f64),
            (DataType::Utf8, Value::Utf8(v)) => self.push_str(v),
            (DataType::Boolean, Value::Boolean(v)) => self.push_bool(*v),
            (DataType::ListFloat64, Value::ListFloat64(v)) => self.push_list_f64(v),
            (DataType::ListInt32, Value::ListInt32(v)) => self.push_list_i32(v),
            (dt, v) => {
                return Err(ColumnarError::InvalidColumn(format!(
                    "cannot store {v:?} in {dt} column"
                )))
            }
        }
        Ok(())
    }

    /// Copies row `i` of `src` (same type) without going through `Value`.
    pub fn push_from(&mut self, src: &ColumnData, i: usize) {
        match (&mut self.data, src) {
            (ColumnData::Int32(d), ColumnData::Int32(s)) => d.push(s[i]),
            (ColumnData::Int64(d), ColumnData::Int64(s)) => d.push(s[i]),
            (ColumnData::Float64(d), ColumnData::Float64(s)) => d.push(s[i]),
            (ColumnData::Boolean(d), ColumnData::Boolean(s)) => d.push(s[i]),
            (ColumnData::Utf8(d), ColumnData::Utf8(s)) => d.push(s[i].clone()),
            (
                ColumnData::ListFloat64 { offsets, values },
                ColumnData::ListFloat64 {
                    offsets: so,
                    values: sv,
                },
            ) => {
                values.extend_from_slice(&sv[so[i] as usize..so[i + 1] as usize]);
                offsets.push(values.len() as u32);
            }
            (
                ColumnData::ListInt32 { offsets, values },
                ColumnData::ListInt32 {
                    offsets: so,
                    values: sv,
                },
            ) => {
                values.extend_from_slice(&sv[so[i] as usize..so[i + 1] as usize]);
                offsets.push(values.len() as u32);
            }
            (d, s) => panic!("push_from type mismatch: {:?} <- {:?}", d.data_type(), s.data_type()),
        }
        self.validity.push(true);
    }

    pub fn len(&self) -> usize {
        self.validity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validity.is_empty()
    }

    pub fn finish(self) -> Column {
        Column {
            data: self.data,
            validity: if self.has_null { Some(self.validity) } else { None },
        }
    }
}

/// Immutable set of equal-length columns conforming to a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBatch {
    schema: Arc<Schema>,
    columns: Vec<Column>,
    row_count: usize,
}

impl ColumnBatch {
    pub fn try_new(schema: Arc<Schema>, columns: Vec<Column>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(ColumnarError::SchemaMismatch(format!(
                "schema has {} fields, batch has {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let row_count = columns.first().map_or(0, |c| c.len());
        for (field, col) in schema.fields().iter().zip(&columns) {
            if col.data_type() != field.data_type {
                return Err(ColumnarError::SchemaMismatch(format!(
                    "column `{}` declared {} but holds {}",
                    field.name,
                    field.data_type,
                    col.data_type()
                )));
            }
            if col.len() != row_count {
                return Err(ColumnarError::InvalidColumn(format!(
                    "column `{}` has {} rows, expected {}",
                    field.name,
                    col.len(),
                    row_count
                )));
            }
            if !field.nullable && col.null_count() > 0 {
                return Err(ColumnarError::InvalidColumn(format!(
                    "null in non-nullable column `{}`",
                    field.name
                )));
            }
        }
        Ok(ColumnBatch {
            schema,
            columns,
            row_count,
        })
    }

    /// A batch with columns but no fields is not representable, so zero-column
    /// batches carry an explicit row count.
    pub fn try_new_with_rows(schema: Arc<Schema>, columns: Vec<Column>, row_count: usize) -> Result<Self> {
        let mut b = Self::try_new(schema, columns)?;
        if b.columns.is_empty() {
            b.row_count = row_count;
        } else if b.row_count != row_count {
            return Err(ColumnarError::InvalidColumn(format!(
                "row count {} does not match columns ({})",
                row_count, b.row_count
            )));
        }
        Ok(b)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn num_rows(&self) -> usize {
        self.row_count
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn take(&self, indices: &[usize]) -> ColumnBatch {
        ColumnBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(indices)).collect(),
            row_count: indices.len(),
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> ColumnBatch {
        ColumnBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.slice(start, len)).collect(),
            row_count: len,
        }
    }

    /// Same columns under a schema with different field names.
    pub fn with_schema(&self, schema: Arc<Schema>) -> Result<ColumnBatch> {
        ColumnBatch::try_new_with_rows(schema, self.columns.clone(), self.row_count)
    }

    pub fn logical_bytes(&self) -> u64 {
        self.columns.iter().map(|c| c.logical_bytes()).sum()
    }
}

/// Ordered batches sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Arc<Schema>,
    batches: Vec<ColumnBatch>,
}

impl Table {
    pub fn try_new(schema: Arc<Schema>, batches: Vec<ColumnBatch>) -> Result<Self> {
        for b in &batches {
            if b.schema() != &schema {
                return Err(ColumnarError::SchemaMismatch(format!(
                    "batch schema {} differs from table schema {}",
                    b.schema(),
                    schema
                )));
            }
        }
        Ok(Table { schema, batches })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Table {
            schema,
            batches: Vec::new(),
        }
    }

    /// Builds a table from rows, splitting into batches of at most `batch_rows`.
    pub fn from_rows(schema: Arc<Schema>, rows: &[Vec<Value>], batch_rows: usize) -> Result<Self> {
        let batch_rows = batch_rows.max(1);
        let mut batches = Vec::new();
        for chunk in rows.chunks(batch_rows) {
            let mut builders: Vec<ColumnBuilder> = schema
                .fields()
                .iter()
                .map(|f| ColumnBuilder::with_capacity(f.data_type, chunk.len()))
                .collect();
            for row in chunk {
                if row.len() != builders.len() {
                    return Err(ColumnarError::SchemaMismatch(format!(
                        "row has {} values, schema has {} fields",
                        row.len(),
                        builders.len()
                    )));
                }
                for (b, v) in builders.iter_mut().zip(row) {
                    b.push_value(v)?;
                }
            }
            let columns = builders.into_iter().map(|b| b.finish()).collect();
            batches.push(ColumnBatch::try_new_with_rows(schema.clone(), columns, chunk.len())?);
        }
        Ok(Table { schema, batches })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn batches(&self) -> &[ColumnBatch] {
        &self.batches
    }

    pub fn into_batches(self) -> Vec<ColumnBatch> {
        self.batches
    }

    pub fn num_rows(&self) -> usize {
        self.batches.iter().map(|b| b.num_rows()).sum()
    }

    pub fn rows(&self) -> Vec<Vec<Value>> {
        let mut out = Vec::with_capacity(self.num_rows());
        for b in &self.batches {
            for i in 0..b.num_rows() {
                out.push(b.row(i));
            }
        }
        out
    }

    /// One batch holding every row.
    pub fn concat_column(&self, i: usize) -> Column {
        let parts: Vec<&Column> = self.batches.iter().map(|b| b.column(i)).collect();
        Column::concat(&parts, self.schema.field(i).data_type)
    }

    pub fn logical_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.logical_bytes()).sum()
    }

    /// Concatenates tables with identical schemas, keeping batch boundaries.
    pub fn concat(schema: Arc<Schema>, tables: &[Table]) -> Result<Table> {
        let mut batches = Vec::new();
        for t in tables {
            if t.schema() != &schema {
                return Err(ColumnarError::SchemaMismatch(format!(
                    "cannot concatenate {} into {}",
                    t.schema(),
                    schema
                )));
            }
            batches.extend(t.batches.iter().cloned());
        }
        Ok(Table { schema, batches })
    }

    /// Rows `start .. start + len`, keeping batch boundaries inside the range.
    pub fn slice(&self, start: usize, len: usize) -> Table {
        let end = (start + len).min(self.num_rows());
        let mut batches = Vec::new();
        let mut offset = 0;
        for b in &self.batches {
            let (lo, hi) = (offset, offset + b.num_rows());
            offset = hi;
            let (from, to) = (start.max(lo), end.min(hi));
            if from < to {
                batches.push(b.slice(from - lo, to - from));
            }
        }
        Table {
            schema: self.schema.clone(),
            batches,
        }
    }

    /// Same data under renamed fields.
    pub fn with_field_names(&self, names: &[String]) -> Result<Table> {
        let schema = Arc::new(self.schema.renamed(names)?);
        let batches = self
            .batches
            .iter()
            .map(|b| b.with_schema(schema.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { schema, batches })
    }
}
