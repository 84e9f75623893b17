//! Row-at-a-time reference interpreter and result comparison helpers.
//!
//! The interpreter shares nothing with the vectorized executor beyond the
//! plan types: every operator is evaluated one `Vec<Value>` row at a time.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use tierquery_core::cluster::{ObjectRef, ObjectStore};
use tierquery_core::columnar::{Table, Value};
use tierquery_core::planir::{AggFunc, ArithOp, CmpOp, Expr, Plan, PlanNode, ScalarFunc};

pub type Row = Vec<Value>;

/// Column names alongside the rows flowing between reference operators.
struct Rel {
    names: Vec<String>,
    rows: Vec<Row>,
}

impl Rel {
    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("reference: no column `{name}` in {:?}", self.names))
    }
}

/// Runs a single-phase plan over `table` (registered under any name).
pub fn reference_execute(plan: &Plan, table: &Table) -> Vec<Row> {
    let mut rel: Option<Rel> = None;
    for node in &plan.nodes {
        rel = Some(match (node, rel.take()) {
            (
                PlanNode::Read {
                    schema, rowid, filter, ..
                },
                None,
            ) => {
                let mut names: Vec<String> = schema.names().map(String::from).collect();
                let mut rows = table.rows();
                if *rowid {
                    names.push("rowid".into());
                    for (i, r) in rows.iter_mut().enumerate() {
                        r.push(Value::Int64(i as i64));
                    }
                }
                let mut rel = Rel { names, rows };
                if let Some(f) = filter {
                    rel = filter_rel(rel, f);
                }
                rel
            }
            (PlanNode::Filter { predicate }, Some(rel)) => filter_rel(rel, predicate),
            (PlanNode::Project { items }, Some(rel)) => Rel {
                names: items.iter().map(|(_, n)| n.clone()).collect(),
                rows: rel
                    .rows
                    .iter()
                    .map(|r| items.iter().map(|(e, _)| eval(e, r, &rel)).collect())
                    .collect(),
            },
            (
                PlanNode::Aggregate {
                    groupings, measures, ..
                },
                Some(rel),
            ) => {
                let key_idx: Vec<usize> = groupings.iter().map(|g| rel.index(g)).collect();
                let mut order: Vec<Vec<String>> = Vec::new();
                let mut groups: HashMap<Vec<String>, Vec<&Row>> = HashMap::new();
                for r in &rel.rows {
                    let key: Vec<String> = key_idx.iter().map(|&i| key_text(&r[i])).collect();
                    groups
                        .entry(key.clone())
                        .or_insert_with(|| {
                            order.push(key);
                            Vec::new()
                        })
                        .push(r);
                }
                if groupings.is_empty() && order.is_empty() {
                    order.push(Vec::new());
                    groups.insert(Vec::new(), Vec::new());
                }
                let mut names: Vec<String> = groupings.clone();
                names.extend(measures.iter().map(|m| m.name.clone()));
                let rows = order
                    .iter()
                    .map(|k| {
                        let members = &groups[k];
                        let mut out: Row = key_idx.iter().map(|&i| members[0][i].clone()).collect();
                        for m in measures {
                            let values: Vec<Value> = match m.args.first() {
                                Some(e) => members.iter().map(|r| eval(e, r, &rel)).collect(),
                                None => members.iter().map(|_| Value::Int64(1)).collect(),
                            };
                            out.push(aggregate(m.func, m.args.is_empty(), &values));
                        }
                        out
                    })
                    .collect();
                Rel { names, rows }
            }
            (PlanNode::Sort { keys }, Some(rel)) => {
                let mut keyed: Vec<(Vec<Value>, Row)> = rel
                    .rows
                    .iter()
                    .map(|r| (keys.iter().map(|k| eval(&k.expr, r, &rel)).collect(), r.clone()))
                    .collect();
                keyed.sort_by(|(a, _), (b, _)| {
                    for (k, (x, y)) in keys.iter().zip(a.iter().zip(b)) {
                        let ord = match (x.is_null(), y.is_null()) {
                            (true, true) => Ordering::Equal,
                            (true, false) => Ordering::Greater,
                            (false, true) => Ordering::Less,
                            _ if k.descending => sort_cmp(y, x),
                            _ => sort_cmp(x, y),
                        };
                        if ord != Ordering::Equal {
                            return ord;
                        }
                    }
                    Ordering::Equal
                });
                Rel {
                    names: rel.names,
                    rows: keyed.into_iter().map(|(_, r)| r).collect(),
                }
            }
            (n, _) => panic!("reference: unsupported node {}", n.kind()),
        });
    }
    rel.map(|r| r.rows).unwrap_or_default()
}

fn filter_rel(rel: Rel, predicate: &Expr) -> Rel {
    let rows = rel
        .rows
        .iter()
        .filter(|r| matches!(eval(predicate, r, &rel), Value::Boolean(true)))
        .cloned()
        .collect();
    Rel { names: rel.names, rows }
}

fn key_text(v: &Value) -> String {
    match v {
        Value::Float64(f) if *f == 0.0 => "f0".into(),
        Value::Float64(f) if f.is_nan() => "fnan".into(),
        Value::Float64(f) => format!("f{}", f.to_bits()),
        other => format!("{other:?}"),
    }
}

fn sort_cmp(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Float64(x), Value::Float64(y)) if x == y => Ordering::Equal,
        (Value::Float64(x), Value::Float64(y)) => x.total_cmp(y),
        (Value::Utf8(x), Value::Utf8(y)) => x.cmp(y),
        (Value::Boolean(x), Value::Boolean(y)) => x.cmp(y),
        _ => match (int_of(a), int_of(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => Ordering::Equal,
        },
    }
}

fn int_of(v: &Value) -> Option<i64> {
    match v {
        Value::Int32(i) => Some(*i as i64),
        Value::Int64(i) => Some(*i),
        _ => None,
    }
}

fn float_of(v: &Value) -> Option<f64> {
    match v {
        Value::Float64(f) => Some(*f),
        other => int_of(other).map(|i| i as f64),
    }
}

fn aggregate(func: AggFunc, count_star: bool, values: &[Value]) -> Value {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_null()).collect();
    match func {
        AggFunc::Count if count_star => Value::Int64(values.len() as i64),
        AggFunc::Count => Value::Int64(present.len() as i64),
        _ if present.is_empty() => Value::Null,
        AggFunc::Sum => {
            if present.iter().all(|v| int_of(v).is_some()) {
                Value::Int64(present.iter().fold(0i64, |acc, v| acc.wrapping_add(int_of(v).unwrap())))
            } else {
                Value::Float64(present.iter().map(|v| float_of(v).unwrap()).sum())
            }
        }
        AggFunc::Avg => {
            Value::Float64(present.iter().map(|v| float_of(v).unwrap()).sum::<f64>() / present.len() as f64)
        }
        AggFunc::Min | AggFunc::Max | AggFunc::Median => {
            let mut sorted: Vec<&Value> = present.clone();
            sorted.sort_by(|a, b| sort_cmp(a, b));
            match func {
                AggFunc::Min => sorted[0].clone(),
                AggFunc::Max => sorted[sorted.len() - 1].clone(),
                _ => sorted[(sorted.len() - 1) / 2].clone(),
            }
        }
    }
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Boolean(b) => Some(*b),
        _ => None,
    }
}

fn from_truth(b: Option<bool>) -> Value {
    b.map_or(Value::Null, Value::Boolean)
}

fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> Value {
    if a.is_null() || b.is_null() {
        return Value::Null;
    }
    let holds = match (a, b) {
        (Value::Utf8(x), Value::Utf8(y)) => op.holds(x.cmp(y)),
        (Value::Boolean(x), Value::Boolean(y)) => op.holds(x.cmp(y)),
        _ => match (int_of(a), int_of(b)) {
            (Some(x), Some(y)) => op.holds(x.cmp(&y)),
            _ => {
                let (x, y) = (float_of(a).unwrap(), float_of(b).unwrap());
                match op {
                    CmpOp::Eq => x == y,
                    CmpOp::NotEq => x != y,
                    CmpOp::Lt => x < y,
                    CmpOp::LtEq => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::GtEq => x >= y,
                }
            }
        },
    };
    Value::Boolean(holds)
}

fn float_result(f: f64) -> Value {
    if f.is_nan() {
        Value::Null
    } else {
        Value::Float64(f)
    }
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Value {
    if a.is_null() || b.is_null() {
        return Value::Null;
    }
    match (int_of(a), int_of(b)) {
        (Some(x), Some(y)) => match op {
            ArithOp::Add => Value::Int64(x.wrapping_add(y)),
            ArithOp::Sub => Value::Int64(x.wrapping_sub(y)),
            ArithOp::Mul => Value::Int64(x.wrapping_mul(y)),
            ArithOp::Div if y == 0 => Value::Null,
            ArithOp::Mod if y == 0 => Value::Null,
            ArithOp::Div => Value::Int64(x.wrapping_div(y)),
            ArithOp::Mod => Value::Int64(x.wrapping_rem(y)),
        },
        _ => {
            let (x, y) = (float_of(a).unwrap(), float_of(b).unwrap());
            match op {
                ArithOp::Add => Value::Float64(x + y),
                ArithOp::Sub => Value::Float64(x - y),
                ArithOp::Mul => Value::Float64(x * y),
                ArithOp::Div | ArithOp::Mod if y == 0.0 => Value::Null,
                ArithOp::Div => Value::Float64(x / y),
                ArithOp::Mod => Value::Float64(x % y),
            }
        }
    }
}

fn eval(e: &Expr, row: &Row, rel: &Rel) -> Value {
    match e {
        Expr::Column(c) => row[rel.index(c)].clone(),
        Expr::Literal(v) => v.clone(),
        Expr::ArrayIndex { column, index } => {
            let i = *index - 1;
            match &row[rel.index(column)] {
                Value::ListFloat64(l) if i >= 0 && (i as usize) < l.len() => Value::Float64(l[i as usize]),
                Value::ListInt32(l) if i >= 0 && (i as usize) < l.len() => Value::Int32(l[i as usize]),
                _ => Value::Null,
            }
        }
        Expr::Cmp { op, lhs, rhs } => compare(*op, &eval(lhs, row, rel), &eval(rhs, row, rel)),
        Expr::Arith { op, lhs, rhs } => arith(*op, &eval(lhs, row, rel), &eval(rhs, row, rel)),
        Expr::Func { func, args } => {
            let v = eval(&args[0], row, rel);
            if v.is_null() {
                return Value::Null;
            }
            match func {
                ScalarFunc::Abs => match v {
                    Value::Int32(i) => Value::Int64((i as i64).wrapping_abs()),
                    Value::Int64(i) => Value::Int64(i.wrapping_abs()),
                    other => float_result(float_of(&other).unwrap().abs()),
                },
                ScalarFunc::Sqrt => float_result(float_of(&v).unwrap().sqrt()),
                ScalarFunc::Cosh => float_result(float_of(&v).unwrap().cosh()),
                ScalarFunc::Cos => float_result(float_of(&v).unwrap().cos()),
            }
        }
        Expr::And(parts) => {
            let mut acc = Some(true);
            for p in parts {
                acc = and3(acc, truth(&eval(p, row, rel)));
            }
            from_truth(acc)
        }
        Expr::Or(parts) => {
            let mut acc = Some(false);
            for p in parts {
                acc = or3(acc, truth(&eval(p, row, rel)));
            }
            from_truth(acc)
        }
        Expr::Between { expr, low, high } => {
            let v = eval(expr, row, rel);
            let lo = truth(&compare(CmpOp::GtEq, &v, &eval(low, row, rel)));
            let hi = truth(&compare(CmpOp::LtEq, &v, &eval(high, row, rel)));
            from_truth(and3(lo, hi))
        }
        Expr::IsNotNull(inner) => Value::Boolean(!eval(inner, row, rel).is_null()),
    }
}

/// Value equality with integers compared across widths and floats within
/// `rel_tol` relative error.
pub fn values_match(a: &Value, b: &Value, rel_tol: f64) -> bool {
    let close = |x: f64, y: f64| x == y || (x - y).abs() <= rel_tol * x.abs().max(y.abs());
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Float64(x), Value::Float64(y)) => close(*x, *y),
        (Value::ListFloat64(x), Value::ListFloat64(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| close(*p, *q))
        }
        (Value::ListInt32(x), Value::ListInt32(y)) => x == y,
        (Value::Utf8(x), Value::Utf8(y)) => x == y,
        (Value::Boolean(x), Value::Boolean(y)) => x == y,
        _ => match (int_of(a), int_of(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        },
    }
}

fn row_sort_key(r: &Row) -> String {
    r.iter()
        .map(|v| match v {
            Value::Float64(f) => format!("{:.6e}", f),
            Value::Int32(i) => i.to_string(),
            other => format!("{other:?}"),
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Compares two row sets, as sequences when `ordered`, else as multisets.
pub fn rows_match(expected: &[Row], got: &[Row], ordered: bool, rel_tol: f64) -> Result<(), String> {
    if expected.len() != got.len() {
        return Err(format!("{} rows expected, {} produced", expected.len(), got.len()));
    }
    let (mut a, mut b) = (expected.to_vec(), got.to_vec());
    if !ordered {
        a.sort_by_cached_key(row_sort_key);
        b.sort_by_cached_key(row_sort_key);
    }
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        if x.len() != y.len() || !x.iter().zip(y).all(|(p, q)| values_match(p, q, rel_tol)) {
            return Err(format!("row {i} differs: expected {x:?}, got {y:?}"));
        }
    }
    Ok(())
}

pub fn is_sorted_plan(plan: &Plan) -> bool {
    matches!(plan.nodes.last(), Some(PlanNode::Sort { .. }))
}

/// A fresh store holding `table` as `sim/data` in a bucket with `shards` shards.
pub fn store_with(table: &Table, shards: usize) -> (tempfile::TempDir, ObjectStore, ObjectRef) {
    let dir = tempfile::tempdir().unwrap();
    let store = ObjectStore::open(dir.path()).unwrap();
    store.create_bucket("sim", shards).unwrap();
    store.put_object("sim", "data", table, 0.01).unwrap();
    (dir, store, ObjectRef::new("sim", "data"))
}

pub fn table_rows(t: &Arc<Table>) -> Vec<Row> {
    t.rows()
}
