use std::collections::HashMap;
use std::sync::Arc;

use crate::columnar::{Column, ColumnBatch, ColumnBuilder, ColumnData, DataType, Schema, Value};
use crate::planir::{AggFunc, AggPhase, Measure};

use super::eval::eval;

/// Hashable form of a grouping value. Floats hash by bit pattern after
/// folding -0.0 into 0.0 and all NaNs into one value, so equal keys group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum KeyPart {
    Null,
    Int(i64),
    Float(u64),
    Str(String),
    Bool(bool),
}

fn key_part(col: &Column, i: usize) -> KeyPart {
    if !col.is_valid(i) {
        return KeyPart::Null;
    }
    match col.data() {
        ColumnData::Int32(v) => KeyPart::Int(v[i] as i64),
        ColumnData::Int64(v) => KeyPart::Int(v[i]),
        ColumnData::Float64(v) => {
            let x = v[i];
            let x = if x == 0.0 {
                0.0
            } else if x.is_nan() {
                f64::NAN
            } else {
                x
            };
            KeyPart::Float(x.to_bits())
        }
        ColumnData::Utf8(v) => KeyPart::Str(v[i].clone()),
        ColumnData::Boolean(v) => KeyPart::Bool(v[i]),
        ColumnData::ListFloat64 { .. } | ColumnData::ListInt32 { .. } => KeyPart::Null,
    }
}

/// Per-measure running state, one slot per group.
enum Acc {
    CountRows(Vec<i64>),
    CountValid(Vec<i64>),
    /// Final phase of count: sum of partial counts.
    SumCounts(Vec<i64>),
    SumInt(Vec<Option<i64>>),
    SumFloat(Vec<Option<f64>>),
    MinMaxInt {
        vals: Vec<Option<i64>>,
        max: bool,
    },
    MinMaxFloat {
        vals: Vec<Option<f64>>,
        max: bool,
    },
    Avg {
        sum: Vec<f64>,
        count: Vec<i64>,
        partial: bool,
    },
    AvgFinal {
        sum: Vec<f64>,
        count: Vec<i64>,
    },
    MedianInt(Vec<Vec<i64>>),
    MedianFloat(Vec<Vec<f64>>),
}

impl Acc {
    fn new(phase: AggPhase, m: &Measure, input: &Schema) -> Result<Acc, String> {
        let arg_type = match m.args.first() {
            Some(e) => Some(e.data_type(input)?),
            None => None,
        };
        let float = arg_type == Some(DataType::Float64);
        let max = m.func == AggFunc::Max;
        Ok(match (phase, m.func) {
            (_, AggFunc::Count) if m.args.is_empty() => Acc::CountRows(Vec::new()),
            (AggPhase::Final, AggFunc::Count) => Acc::SumCounts(Vec::new()),
            (_, AggFunc::Count) => Acc::CountValid(Vec::new()),
            (_, AggFunc::Sum) if float => Acc::SumFloat(Vec::new()),
            (_, AggFunc::Sum) => Acc::SumInt(Vec::new()),
            (_, AggFunc::Min | AggFunc::Max) if float => Acc::MinMaxFloat { vals: Vec::new(), max },
            (_, AggFunc::Min | AggFunc::Max) => Acc::MinMaxInt { vals: Vec::new(), max },
            (AggPhase::Final, AggFunc::Avg) => Acc::AvgFinal {
                sum: Vec::new(),
                count: Vec::new(),
            },
            (phase, AggFunc::Avg) => Acc::Avg {
                sum: Vec::new(),
                count: Vec::new(),
                partial: phase == AggPhase::Partial,
            },
            (AggPhase::Single, AggFunc::Median) if float => Acc::MedianFloat(Vec::new()),
            (AggPhase::Single, AggFunc::Median) => Acc::MedianInt(Vec::new()),
            (_, AggFunc::Median) => {
                return Err(format!(
                    "median `{}` cannot be split into partial and final phases",
                    m.name
                ))
            }
        })
    }

    fn grow(&mut self, groups: usize) {
        match self {
            Acc::CountRows(v) | Acc::CountValid(v) | Acc::SumCounts(v) => v.resize(groups, 0),
            Acc::SumInt(v) => v.resize(groups, None),
            Acc::SumFloat(v) => v.resize(groups, None),
            Acc::MinMaxInt { vals, .. } => vals.resize(groups, None),
            Acc::MinMaxFloat { vals, .. } => vals.resize(groups, None),
            Acc::Avg { sum, count, .. } | Acc::AvgFinal { sum, count } => {
                sum.resize(groups, 0.0);
                count.resize(groups, 0);
            }
            Acc::MedianInt(v) => v.resize_with(groups, Vec::new),
            Acc::MedianFloat(v) => v.resize_with(groups, Vec::new),
        }
    }

    /// Folds one batch; `groups[i]` is the group slot of row `i`.
    fn update(&mut self, groups: &[usize], args: &[Column]) -> Result<(), String> {
        let num = |c: &Column, i: usize| -> f64 {
            match c.data() {
                ColumnData::Int32(v) => v[i] as f64,
                ColumnData::Int64(v) => v[i] as f64,
                ColumnData::Float64(v) => v[i],
                _ => f64::NAN,
            }
        };
        let int = |c: &Column, i: usize| -> i64 {
            match c.data() {
                ColumnData::Int32(v) => v[i] as i64,
                ColumnData::Int64(v) => v[i],
                _ => 0,
            }
        };
        match self {
            Acc::CountRows(v) => groups.iter().for_each(|&g| v[g] += 1),
            Acc::CountValid(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g] += 1;
                    }
                }
            }
            Acc::SumCounts(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g] += int(c, i);
                    }
                }
            }
            Acc::SumInt(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g] = Some(v[g].unwrap_or(0).wrapping_add(int(c, i)));
                    }
                }
            }
            Acc::SumFloat(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g] = Some(v[g].unwrap_or(0.0) + num(c, i));
                    }
                }
            }
            Acc::MinMaxInt { vals, max } => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        let x = int(c, i);
                        vals[g] = Some(match vals[g] {
                            None => x,
                            Some(cur) if *max => cur.max(x),
                            Some(cur) => cur.min(x),
                        });
                    }
                }
            }
            Acc::MinMaxFloat { vals, max } => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        let x = num(c, i);
                        vals[g] = Some(match vals[g] {
                            None => x,
                            Some(cur) if (*max && x > cur) || (!*max && x < cur) => x,
                            Some(cur) => cur,
                        });
                    }
                }
            }
            Acc::Avg { sum, count, .. } => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        sum[g] += num(c, i);
                        count[g] += 1;
                    }
                }
            }
            Acc::AvgFinal { sum, count } => {
                let (s, n) = (&args[0], &args[1]);
                for (i, &g) in groups.iter().enumerate() {
                    if s.is_valid(i) {
                        sum[g] += num(s, i);
                    }
                    if n.is_valid(i) {
                        count[g] += int(n, i);
                    }
                }
            }
            Acc::MedianInt(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g].push(int(c, i));
                    }
                }
            }
            Acc::MedianFloat(v) => {
                let c = &args[0];
                for (i, &g) in groups.iter().enumerate() {
                    if c.is_valid(i) {
                        v[g].push(num(c, i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Emits the output column(s) for this measure, typed per `fields`.
    fn finish(self, types: &[DataType]) -> Vec<Column> {
        let ints = |vals: Vec<Option<i64>>, t: DataType| {
            let mut b = ColumnBuilder::with_capacity(t, vals.len());
            for v in vals {
                match (v, t) {
                    (None, _) => b.push_null(),
                    (Some(x), DataType::Int32) => b.push_i32(x as i32),
                    (Some(x), _) => b.push_i64(x),
                }
            }
            b.finish()
        };
        let floats = |vals: Vec<Option<f64>>| {
            let mut b = ColumnBuilder::with_capacity(DataType::Float64, vals.len());
            for v in vals {
                match v {
                    None => b.push_null(),
                    Some(x) => b.push_f64(x),
                }
            }
            b.finish()
        };
        match self {
            Acc::CountRows(v) | Acc::CountValid(v) | Acc::SumCounts(v) => {
                vec![Column::from_data(ColumnData::Int64(v))]
            }
            Acc::SumInt(v) => vec![ints(v, types[0])],
            Acc::SumFloat(v) => vec![floats(v)],
            Acc::MinMaxInt { vals, .. } => vec![ints(vals, types[0])],
            Acc::MinMaxFloat { vals, .. } => vec![floats(vals)],
            Acc::Avg {
                sum,
                count,
                partial: true,
            } => {
                let sums = sum.iter().zip(&count).map(|(s, n)| (*n > 0).then_some(*s)).collect();
                vec![floats(sums), Column::from_data(ColumnData::Int64(count))]
            }
            Acc::Avg { sum, count, .. } | Acc::AvgFinal { sum, count } => {
                let avgs = sum
                    .iter()
                    .zip(&count)
                    .map(|(s, n)| (*n > 0).then(|| s / *n as f64))
                    .collect();
                vec![floats(avgs)]
            }
            Acc::MedianInt(groups) => {
                let vals = groups
                    .into_iter()
                    .map(|mut g| {
                        g.sort_unstable();
                        lower_median(&g).copied()
                    })
                    .collect();
                vec![ints(vals, types[0])]
            }
            Acc::MedianFloat(groups) => {
                let vals = groups
                    .into_iter()
                    .map(|mut g| {
                        g.sort_unstable_by(f64::total_cmp);
                        lower_median(&g).copied()
                    })
                    .collect();
                vec![floats(vals)]
            }
        }
    }
}

fn lower_median<T>(sorted: &[T]) -> Option<&T> {
    if sorted.is_empty() {
        None
    } else {
        sorted.get((sorted.len() - 1) / 2)
    }
}

/// Hash aggregation over `batches`. Groups appear in first-seen order; with
/// no grouping keys exactly one row is produced, even for empty input.
pub(crate) fn aggregate(
    phase: AggPhase,
    groupings: &[String],
    measures: &[Measure],
    input: &Schema,
    output: Arc<Schema>,
    batches: &[ColumnBatch],
) -> Result<ColumnBatch, String> {
    let mut accs = measures
        .iter()
        .map(|m| Acc::new(phase, m, input))
        .collect::<Result<Vec<_>, _>>()?;
    let mut index: HashMap<Vec<KeyPart>, usize> = HashMap::new();
    let mut first_rows: Vec<Vec<Value>> = Vec::new();
    if groupings.is_empty() {
        index.insert(Vec::new(), 0);
        first_rows.push(Vec::new());
    }

    for batch in batches {
        let key_cols = groupings
            .iter()
            .map(|g| {
                batch
                    .column_by_name(g)
                    .ok_or_else(|| format!("unknown grouping column `{g}`"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut slots = Vec::with_capacity(batch.num_rows());
        for i in 0..batch.num_rows() {
            let key: Vec<KeyPart> = key_cols.iter().map(|c| key_part(c, i)).collect();
            let next = first_rows.len();
            let slot = *index.entry(key).or_insert_with(|| {
                first_rows.push(key_cols.iter().map(|c| c.value(i)).collect());
                next
            });
            slots.push(slot);
        }
        for (acc, m) in accs.iter_mut().zip(measures) {
            acc.grow(first_rows.len());
            let args = m
                .args
                .iter()
                .map(|e| eval(e, batch).map(|c| c.into_owned()))
                .collect::<Result<Vec<_>, _>>()?;
            acc.update(&slots, &args)?;
        }
    }
    let groups = first_rows.len();
    let mut columns = Vec::with_capacity(output.len());
    for (k, _) in groupings.iter().enumerate() {
        let t = output.field(k).data_type;
        let mut b = ColumnBuilder::with_capacity(t, groups);
        for row in &first_rows {
            b.push_value(&row[k]).map_err(|e| e.to_string())?;
        }
        columns.push(b.finish());
    }
    let mut field = groupings.len();
    for mut acc in accs {
        acc.grow(groups);
        let width = match &acc {
            Acc::Avg { partial: true, .. } => 2,
            _ => 1,
        };
        let types: Vec<DataType> = (field..field + width).map(|i| output.field(i).data_type).collect();
        columns.extend(acc.finish(&types));
        field += width;
    }
    ColumnBatch::try_new_with_rows(output, columns, groups).map_err(|e| e.to_string())
}
