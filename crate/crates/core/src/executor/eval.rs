use std::borrow::Cow;
use std::cmp::Ordering;

use crate::columnar::{Column, ColumnBatch, ColumnBuilder, ColumnData, DataType, Value};
use crate::planir::{ArithOp, CmpOp, Expr, ScalarFunc};

/// Borrowed numeric view over an Int32/Int64/Float64 column.
#[derive(Clone, Copy)]
enum Num<'a> {
    I32(&'a [i32]),
    I64(&'a [i64]),
    F64(&'a [f64]),
}

impl Num<'_> {
    fn of(col: &Column) -> Result<Num<'_>, String> {
        match col.data() {
            ColumnData::Int32(v) => Ok(Num::I32(v)),
            ColumnData::Int64(v) => Ok(Num::I64(v)),
            ColumnData::Float64(v) => Ok(Num::F64(v)),
            other => Err(format!("expected a numeric operand, got {}", other.data_type())),
        }
    }

    fn is_float(&self) -> bool {
        matches!(self, Num::F64(_))
    }

    #[inline]
    fn f(&self, i: usize) -> f64 {
        match self {
            Num::I32(v) => v[i] as f64,
            Num::I64(v) => v[i] as f64,
            Num::F64(v) => v[i],
        }
    }

    #[inline]
    fn i(&self, i: usize) -> i64 {
        match self {
            Num::I32(v) => v[i] as i64,
            Num::I64(v) => v[i],
            Num::F64(v) => v[i] as i64,
        }
    }
}

fn merge_validity(a: Option<&[bool]>, b: Option<&[bool]>) -> Option<Vec<bool>> {
    match (a, b) {
        (None, None) => None,
        (Some(a), None) | (None, Some(a)) => Some(a.to_vec()),
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| *x && *y).collect()),
    }
}

fn and_mask(validity: &mut Option<Vec<bool>>, extra: Vec<bool>) {
    match validity {
        Some(v) => v.iter_mut().zip(extra).for_each(|(a, b)| *a = *a && b),
        None => *validity = Some(extra),
    }
}

fn build(data: ColumnData, validity: Option<Vec<bool>>) -> Result<Column, String> {
    Column::new(data, validity).map_err(|e| e.to_string())
}

fn broadcast(v: &Value, rows: usize) -> Result<Column, String> {
    let t = crate::planir::literal_type(v);
    let mut b = ColumnBuilder::with_capacity(t, rows);
    for _ in 0..rows {
        b.push_value(v).map_err(|e| e.to_string())?;
    }
    Ok(b.finish())
}

/// Evaluates `expr` over every row of `batch`.
pub(crate) fn eval<'a>(expr: &Expr, batch: &'a ColumnBatch) -> Result<Cow<'a, Column>, String> {
    let rows = batch.num_rows();
    Ok(match expr {
        Expr::Column(name) => Cow::Borrowed(
            batch
                .column_by_name(name)
                .ok_or_else(|| format!("unknown column `{name}`"))?,
        ),
        Expr::Literal(v) => Cow::Owned(broadcast(v, rows)?),
        Expr::ArrayIndex { column, index } => {
            let col = batch
                .column_by_name(column)
                .ok_or_else(|| format!("unknown column `{column}`"))?;
            Cow::Owned(array_index(col, *index)?)
        }
        Expr::Cmp { op, lhs, rhs } => {
            let l = eval(lhs, batch)?;
            let r = eval(rhs, batch)?;
            Cow::Owned(compare(*op, &l, &r)?)
        }
        Expr::Arith { op, lhs, rhs } => {
            let l = eval(lhs, batch)?;
            let r = eval(rhs, batch)?;
            Cow::Owned(arith(*op, &l, &r)?)
        }
        Expr::Func { func, args } => {
            let [arg] = args.as_slice() else {
                return Err(format!("{} takes 1 argument", func.name()));
            };
            let a = eval(arg, batch)?;
            Cow::Owned(scalar_func(*func, &a)?)
        }
        Expr::And(items) => Cow::Owned(logical(items, batch, false)?),
        Expr::Or(items) => Cow::Owned(logical(items, batch, true)?),
        Expr::Between { expr, low, high } => {
            let e = eval(expr, batch)?;
            let lo = eval(low, batch)?;
            let hi = eval(high, batch)?;
            let ge = compare(CmpOp::GtEq, &e, &lo)?;
            let le = compare(CmpOp::LtEq, &e, &hi)?;
            Cow::Owned(combine_logical(&[ge, le], rows, false)?)
        }
        Expr::IsNotNull(e) => {
            let c = eval(e, batch)?;
            let v = (0..rows).map(|i| c.is_valid(i)).collect();
            Cow::Owned(Column::from_data(ColumnData::Boolean(v)))
        }
    })
}

fn array_index(col: &Column, index: i64) -> Result<Column, String> {
    let rows = col.len();
    let mut validity = vec![true; rows];
    let slot = |offsets: &[u32], i: usize| -> Option<usize> {
        let (start, end) = (offsets[i] as usize, offsets[i + 1] as usize);
        let k = usize::try_from(index - 1).ok()?;
        (index >= 1 && start + k < end).then_some(start + k)
    };
    let data = match col.data() {
        ColumnData::ListFloat64 { offsets, values } => ColumnData::Float64(
            (0..rows)
                .map(|i| match slot(offsets, i).filter(|_| col.is_valid(i)) {
                    Some(p) => values[p],
                    None => {
                        validity[i] = false;
                        0.0
                    }
                })
                .collect(),
        ),
        ColumnData::ListInt32 { offsets, values } => ColumnData::Int32(
            (0..rows)
                .map(|i| match slot(offsets, i).filter(|_| col.is_valid(i)) {
                    Some(p) => values[p],
                    None => {
                        validity[i] = false;
                        0
                    }
                })
                .collect(),
        ),
        other => return Err(format!("array index on {}", other.data_type())),
    };
    build(data, Some(validity))
}

fn holds_f64(op: CmpOp, a: f64, b: f64) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::NotEq => a != b,
        CmpOp::Lt => a < b,
        CmpOp::LtEq => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::GtEq => a >= b,
    }
}

fn compare(op: CmpOp, l: &Column, r: &Column) -> Result<Column, String> {
    let rows = l.len();
    let validity = merge_validity(l.validity(), r.validity());
    let out: Vec<bool> = match (l.data(), r.data()) {
        (ColumnData::Utf8(a), ColumnData::Utf8(b)) => (0..rows).map(|i| op.holds(a[i].cmp(&b[i]))).collect(),
        (ColumnData::Boolean(a), ColumnData::Boolean(b)) => (0..rows).map(|i| op.holds(a[i].cmp(&b[i]))).collect(),
        _ => {
            let (a, b) = (Num::of(l)?, Num::of(r)?);
            if a.is_float() || b.is_float() {
                (0..rows).map(|i| holds_f64(op, a.f(i), b.f(i))).collect()
            } else {
                (0..rows).map(|i| op.holds(a.i(i).cmp(&b.i(i)))).collect()
            }
        }
    };
    build(ColumnData::Boolean(out), validity)
}

fn arith(op: ArithOp, l: &Column, r: &Column) -> Result<Column, String> {
    let rows = l.len();
    let (a, b) = (Num::of(l)?, Num::of(r)?);
    let mut validity = merge_validity(l.validity(), r.validity());
    if a.is_float() || b.is_float() {
        let mut ok = vec![true; rows];
        let out = (0..rows)
            .map(|i| {
                let (x, y) = (a.f(i), b.f(i));
                match op {
                    ArithOp::Add => x + y,
                    ArithOp::Sub => x - y,
                    ArithOp::Mul => x * y,
                    ArithOp::Div | ArithOp::Mod if y == 0.0 => {
                        ok[i] = false;
                        0.0
                    }
                    ArithOp::Div => x / y,
                    ArithOp::Mod => x % y,
                }
            })
            .collect();
        if matches!(op, ArithOp::Div | ArithOp::Mod) {
            and_mask(&mut validity, ok);
        }
        build(ColumnData::Float64(out), validity)
    } else {
        let mut ok = vec![true; rows];
        let out = (0..rows)
            .map(|i| {
                let (x, y) = (a.i(i), b.i(i));
                match op {
                    ArithOp::Add => x.wrapping_add(y),
                    ArithOp::Sub => x.wrapping_sub(y),
                    ArithOp::Mul => x.wrapping_mul(y),
                    ArithOp::Div | ArithOp::Mod if y == 0 => {
                        ok[i] = false;
                        0
                    }
                    ArithOp::Div => x.wrapping_div(y),
                    ArithOp::Mod => x.wrapping_rem(y),
                }
            })
            .collect();
        if matches!(op, ArithOp::Div | ArithOp::Mod) {
            and_mask(&mut validity, ok);
        }
        build(ColumnData::Int64(out), validity)
    }
}

fn scalar_func(func: ScalarFunc, arg: &Column) -> Result<Column, String> {
    let rows = arg.len();
    let a = Num::of(arg)?;
    let mut validity = arg.validity().map(<[bool]>::to_vec);
    if func == ScalarFunc::Abs && !a.is_float() {
        let out = (0..rows).map(|i| a.i(i).wrapping_abs()).collect();
        return build(ColumnData::Int64(out), validity);
    }
    let out: Vec<f64> = (0..rows)
        .map(|i| {
            let x = a.f(i);
            match func {
                ScalarFunc::Sqrt => x.sqrt(),
                ScalarFunc::Cosh => x.cosh(),
                ScalarFunc::Cos => x.cos(),
                ScalarFunc::Abs => x.abs(),
            }
        })
        .collect();
    // Out-of-domain inputs (sqrt of a negative) yield null rather than NaN.
    if out.iter().any(|v| v.is_nan()) {
        and_mask(&mut validity, out.iter().map(|v| !v.is_nan()).collect());
    }
    build(ColumnData::Float64(out), validity)
}

fn logical(items: &[Expr], batch: &ColumnBatch, is_or: bool) -> Result<Column, String> {
    let cols = items
        .iter()
        .map(|e| eval(e, batch).map(Cow::into_owned))
        .collect::<Result<Vec<_>, _>>()?;
    combine_logical(&cols, batch.num_rows(), is_or)
}

/// Three-valued AND (`is_or == false`) or OR across boolean columns.
fn combine_logical(cols: &[Column], rows: usize, is_or: bool) -> Result<Column, String> {
    // Per row: `decided` once any operand equals the absorbing value.
    let absorbing = is_or;
    let mut decided = vec![false; rows];
    let mut unknown = vec![false; rows];
    for c in cols {
        let ColumnData::Boolean(v) = c.data() else {
            return Err(format!("logical operand is {}", c.data_type()));
        };
        for i in 0..rows {
            if !c.is_valid(i) {
                unknown[i] = true;
            } else if v[i] == absorbing {
                decided[i] = true;
            }
        }
    }
    let out: Vec<bool> = (0..rows)
        .map(|i| if decided[i] { absorbing } else { !absorbing })
        .collect();
    let validity: Vec<bool> = (0..rows).map(|i| decided[i] || !unknown[i]).collect();
    build(ColumnData::Boolean(out), Some(validity))
}

/// Row-level ordering used by sort: equal values compare equal (so -0.0 ==
/// 0.0), otherwise the total order on floats places NaN last.
pub(crate) fn cmp_cells(col: &Column, a: usize, b: usize) -> Ordering {
    match col.data() {
        ColumnData::Int32(v) => v[a].cmp(&v[b]),
        ColumnData::Int64(v) => v[a].cmp(&v[b]),
        ColumnData::Float64(v) => {
            if v[a] == v[b] {
                Ordering::Equal
            } else {
                v[a].total_cmp(&v[b])
            }
        }
        ColumnData::Utf8(v) => v[a].cmp(&v[b]),
        ColumnData::Boolean(v) => v[a].cmp(&v[b]),
        ColumnData::ListFloat64 { .. } | ColumnData::ListInt32 { .. } => Ordering::Equal,
    }
}

/// Boolean column to a keep-mask: null counts as false.
pub(crate) fn predicate_mask(col: &Column) -> Result<Vec<bool>, String> {
    let ColumnData::Boolean(v) = col.data() else {
        return Err(format!("predicate evaluated to {}", col.data_type()));
    };
    Ok((0..v.len()).map(|i| v[i] && col.is_valid(i)).collect())
}

pub(crate) fn check_type(col: &Column, expected: DataType) -> Result<(), String> {
    if col.data_type() == expected {
        Ok(())
    } else {
        Err(format!("expression produced {}, expected {expected}", col.data_type()))
    }
}
