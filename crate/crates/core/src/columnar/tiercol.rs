//! TIERCOL: the byte-exact columnar stream used for every inter-tier transfer.
//!
//! ```text
//! "TCOL" | version=1 | flags=0
//! frame 0x01 schema: u32 field_count, per field: u32 name_len, name, u8 type_code, u8 nullable
//! frame 0x02 batch (zero or more): u32 row_count, per column:
//!     u32 validity_len, validity bitmap (LSB-first, 1 = valid; empty when no nulls)
//!     [Utf8/list only] u32 offsets_len, (row_count + 1) u32 LE offsets
//!     u32 data_len, data (LE fixed-width values; 1 byte per boolean; UTF-8 bytes)
//! frame 0xFF end (empty payload)
//! ```
//! Every frame is `type | u32 LE payload length | payload | crc32(payload) LE`.

use std::sync::Arc;

use super::framing::{put_block, put_str, put_u32, FrameReader, FrameWriter, PayloadReader};
use super::{Column, ColumnBatch, ColumnData, ColumnarError, DataType, Field, Result, Schema, Table};

pub const TIERCOL_MAGIC: &[u8; 4] = b"TCOL";
pub const TIERCOL_VERSION: u8 = 1;

const FRAME_SCHEMA: u8 = 0x01;
const FRAME_BATCH: u8 = 0x02;

pub fn serialize_columnar(table: &Table) -> Vec<u8> {
    let mut w = FrameWriter::new(TIERCOL_MAGIC, TIERCOL_VERSION, 0);
    w.frame(FRAME_SCHEMA, &encode_schema(table.schema()));
    for batch in table.batches() {
        w.frame(FRAME_BATCH, &encode_batch(batch));
    }
    w.finish()
}

pub fn deserialize_columnar(bytes: &[u8]) -> Result<Table> {
    let mut r = FrameReader::open(bytes, TIERCOL_MAGIC)?;
    if r.version != TIERCOL_VERSION {
        return Err(ColumnarError::VersionUnsupported(r.version));
    }
    if r.flags != 0 {
        return Err(ColumnarError::CorruptFrame(format!(
            "unsupported flags {:#04x}",
            r.flags
        )));
    }
    let schema = match r.next_frame()? {
        Some((FRAME_SCHEMA, payload)) => Arc::new(decode_schema(payload)?),
        Some((t, _)) => {
            return Err(ColumnarError::CorruptFrame(format!(
                "expected schema frame, found type {t:#04x}"
            )))
        }
        None => return Err(ColumnarError::CorruptFrame("missing schema frame".into())),
    };
    let mut batches = Vec::new();
    while let Some((frame_type, payload)) = r.next_frame()? {
        if frame_type != FRAME_BATCH {
            return Err(ColumnarError::CorruptFrame(format!(
                "unexpected frame type {frame_type:#04x}"
            )));
        }
        batches.push(decode_batch(&schema, payload)?);
    }
    Table::try_new(schema, batches)
}

pub(crate) fn encode_schema(schema: &Schema) -> Vec<u8> {
    let mut p = Vec::new();
    put_u32(&mut p, schema.len() as u32);
    for f in schema.fields() {
        put_str(&mut p, &f.name);
        p.push(f.data_type.type_code());
        p.push(f.nullable as u8);
    }
    p
}

pub(crate) fn decode_schema(payload: &[u8]) -> Result<Schema> {
    let mut r = PayloadReader::new(payload);
    let n = r.u32()? as usize;
    let mut fields = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        let name = r.string()?;
        let code = r.u8()?;
        let data_type = DataType::from_type_code(code)
            .ok_or_else(|| ColumnarError::CorruptFrame(format!("unknown type code {code}")))?;
        let nullable = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(ColumnarError::CorruptFrame(format!("bad nullable byte {b}"))),
        };
        fields.push(Field::new(name, data_type, nullable));
    }
    r.finish()?;
    Schema::new(fields).map_err(|e| ColumnarError::CorruptFrame(e.to_string()))
}

fn encode_batch(batch: &ColumnBatch) -> Vec<u8> {
    let rows = batch.num_rows();
    let mut p = Vec::new();
    put_u32(&mut p, rows as u32);
    for col in batch.columns() {
        match col.validity() {
            Some(v) => put_block(&mut p, &pack_bits(v)),
            None => put_u32(&mut p, 0),
        }
        match col.data() {
            ColumnData::Int32(v) => put_block(&mut p, &le_bytes(v, |x| x.to_le_bytes())),
            ColumnData::Int64(v) => put_block(&mut p, &le_bytes(v, |x| x.to_le_bytes())),
            ColumnData::Float64(v) => put_block(&mut p, &le_bytes(v, |x| x.to_le_bytes())),
            ColumnData::Boolean(v) => {
                let data: Vec<u8> = v.iter().map(|b| *b as u8).collect();
                put_block(&mut p, &data);
            }
            ColumnData::Utf8(v) => {
                let mut offsets = Vec::with_capacity(v.len() + 1);
                let mut data = Vec::new();
                offsets.push(0u32);
                for s in v {
                    data.extend_from_slice(s.as_bytes());
                    offsets.push(data.len() as u32);
                }
                put_block(&mut p, &le_bytes(&offsets, |x| x.to_le_bytes()));
                put_block(&mut p, &data);
            }
            ColumnData::ListFloat64 { offsets, values } => {
                put_block(&mut p, &le_bytes(offsets, |x| x.to_le_bytes()));
                put_block(&mut p, &le_bytes(values, |x| x.to_le_bytes()));
            }
            ColumnData::ListInt32 { offsets, values } => {
                put_block(&mut p, &le_bytes(offsets, |x| x.to_le_bytes()));
                put_block(&mut p, &le_bytes(values, |x| x.to_le_bytes()));
            }
        }
    }
    p
}

fn decode_batch(schema: &Arc<Schema>, payload: &[u8]) -> Result<ColumnBatch> {
    let mut r = PayloadReader::new(payload);
    let rows = r.u32()? as usize;
    let mut columns = Vec::with_capacity(schema.len());
    for field in schema.fields() {
        let validity_bytes = r.block()?;
        let validity = if validity_bytes.is_empty() {
            None
        } else {
            if validity_bytes.len() != rows.div_ceil(8) {
                return Err(ColumnarError::CorruptFrame(format!(
                    "validity for `{}` has {} bytes, expected {}",
                    field.name,
                    validity_bytes.len(),
                    rows.div_ceil(8)
                )));
            }
            Some(unpack_bits(validity_bytes, rows))
        };
        let data = match field.data_type {
            DataType::Int32 => ColumnData::Int32(fixed(r.block()?, rows, i32::from_le_bytes)?),
            DataType::Int64 => ColumnData::Int64(fixed(r.block()?, rows, i64::from_le_bytes)?),
            DataType::Float64 => ColumnData::Float64(fixed(r.block()?, rows, f64::from_le_bytes)?),
            DataType::Boolean => {
                let d = r.block()?;
                if d.len() != rows {
                    return Err(ColumnarError::CorruptFrame("boolean data length".into()));
                }
                ColumnData::Boolean(d.iter().map(|b| *b != 0).collect())
            }
            DataType::Utf8 => {
                let offsets = fixed(r.block()?, rows + 1, u32::from_le_bytes)?;
                let data = r.block()?;
                check_offsets(&offsets, data.len())?;
                let mut strings = Vec::with_capacity(rows);
                for w in offsets.windows(2) {
                    let s = std::str::from_utf8(&data[w[0] as usize..w[1] as usize])
                        .map_err(|_| ColumnarError::CorruptFrame("invalid UTF-8".into()))?;
                    strings.push(s.to_string());
                }
                ColumnData::Utf8(strings)
            }
            DataType::ListFloat64 => {
                let offsets = fixed(r.block()?, rows + 1, u32::from_le_bytes)?;
                let values = r.block()?;
                let values = fixed(values, values.len() / 8, f64::from_le_bytes)?;
                check_offsets(&offsets, values.len())?;
                ColumnData::ListFloat64 { offsets, values }
            }
            DataType::ListInt32 => {
                let offsets = fixed(r.block()?, rows + 1, u32::from_le_bytes)?;
                let values = r.block()?;
                let values = fixed(values, values.len() / 4, i32::from_le_bytes)?;
                check_offsets(&offsets, values.len())?;
                ColumnData::ListInt32 { offsets, values }
            }
        };
        let col = Column::new(data, validity).map_err(|e| ColumnarError::CorruptFrame(e.to_string()))?;
        columns.push(col);
    }
    r.finish()?;
    ColumnBatch::try_new_with_rows(schema.clone(), columns, rows)
        .map_err(|e| ColumnarError::CorruptFrame(e.to_string()))
}

fn check_offsets(offsets: &[u32], len: usize) -> Result<()> {
    if offsets.first() != Some(&0)
        || *offsets.last().unwrap() as usize != len
        || offsets.windows(2).any(|w| w[0] > w[1])
    {
        return Err(ColumnarError::CorruptFrame("malformed offsets".into()));
    }
    Ok(())
}

fn le_bytes<T: Copy, const N: usize>(values: &[T], f: impl Fn(T) -> [u8; N]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * N);
    for v in values {
        out.extend_from_slice(&f(*v));
    }
    out
}

fn fixed<T, const N: usize>(bytes: &[u8], count: usize, f: impl Fn([u8; N]) -> T) -> Result<Vec<T>> {
    if bytes.len() != count * N {
        return Err(ColumnarError::CorruptFrame(format!(
            "data block has {} bytes, expected {}",
            bytes.len(),
            count * N
        )));
    }
    Ok(bytes.chunks_exact(N).map(|c| f(c.try_into().unwrap())).collect())
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, b) in bits.iter().enumerate() {
        if *b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}
