//! Batch-at-a-time plan evaluation.
//!
//! Semantics follow SQL: predicates keep rows that are true (null drops the
//! row), AND/OR use three-valued logic, aggregates skip nulls and group nulls
//! together, and sort is stable with nulls last in either direction. Integer
//! `/` and `%` truncate toward zero; division by zero and out-of-domain math
//! yield null.

mod aggregate;
mod eval;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::columnar::{Column, ColumnBatch, ColumnData, Schema, Table};
use crate::planir::{AggPhase, Expr, Plan, PlanNode};

pub const DEFAULT_BATCH_ROWS: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("node {node}: {cause}")]
    Node { node: usize, cause: String },
    #[error("measure `{0}` cannot be split into partial and final phases")]
    NonDecomposableMeasure(String),
}

/// A contiguous piece of a table, with the rowid of its first row.
#[derive(Debug, Clone)]
pub struct Segment {
    pub table: Arc<Table>,
    pub rowid_base: i64,
}

/// Named inputs visible to `Read` nodes.
#[derive(Debug, Clone)]
pub struct ExecContext {
    tables: HashMap<String, Vec<Segment>>,
    pub batch_rows: usize,
}

impl Default for ExecContext {
    fn default() -> Self {
        ExecContext::new()
    }
}

impl ExecContext {
    pub fn new() -> ExecContext {
        ExecContext {
            tables: HashMap::new(),
            batch_rows: DEFAULT_BATCH_ROWS,
        }
    }

    pub fn with_batch_rows(mut self, batch_rows: usize) -> ExecContext {
        self.batch_rows = batch_rows.max(1);
        self
    }

    pub fn register(&mut self, name: impl Into<String>, table: Table) {
        self.register_segments(
            name,
            vec![Segment {
                table: Arc::new(table),
                rowid_base: 0,
            }],
        );
    }

    pub fn register_segments(&mut self, name: impl Into<String>, segments: Vec<Segment>) {
        self.tables.insert(name.into(), segments);
    }

    pub fn segments(&self, name: &str) -> Option<&[Segment]> {
        self.tables.get(name).map(Vec::as_slice)
    }
}

/// Per-node measurements from `execute_with_stats`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub kind: &'static str,
    pub rows_out: usize,
    pub bytes_out: u64,
    pub elapsed: Duration,
}

pub fn execute(plan: &Plan, ctx: &ExecContext) -> Result<Table, ExecError> {
    execute_with_stats(plan, ctx).map(|(t, _)| t)
}

pub fn execute_with_stats(plan: &Plan, ctx: &ExecContext) -> Result<(Table, Vec<NodeStats>), ExecError> {
    let diags = plan.validate();
    if !diags.is_empty() {
        let msg = diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ");
        return Err(ExecError::InvalidPlan(msg));
    }
    let schemas = plan.node_schemas().map_err(|d| ExecError::InvalidPlan(d.to_string()))?;
    let mut stats = Vec::with_capacity(plan.len());
    let mut current: Option<Table> = None;
    for (i, node) in plan.nodes.iter().enumerate() {
        let start = Instant::now();
        let out_schema = Arc::new(schemas[i].clone());
        let out = match (node, current.take()) {
            (PlanNode::Read { .. }, None) => read(node, i, ctx, out_schema)?,
            (_, Some(input)) => run_node(node, i, &input, out_schema, ctx.batch_rows)?,
            _ => return Err(ExecError::InvalidPlan("read must be the first node".into())),
        };
        stats.push(NodeStats {
            kind: node.kind(),
            rows_out: out.num_rows(),
            bytes_out: out.logical_bytes(),
            elapsed: start.elapsed(),
        });
        current = Some(out);
    }
    let mut out = current.ok_or_else(|| ExecError::InvalidPlan("empty plan".into()))?;
    if let Some(names) = &plan.root_names {
        out = out
            .with_field_names(names)
            .map_err(|e| ExecError::InvalidPlan(e.to_string()))?;
    }
    Ok((out, stats))
}

/// Applies one non-Read node to a materialized input. `index` is only used
/// to tag errors.
pub fn apply_node(node: &PlanNode, index: usize, input: &Table, batch_rows: usize) -> Result<Table, ExecError> {
    let out_schema = node
        .output_schema(Some(input.schema()))
        .map_err(|cause| ExecError::Node { node: index, cause })?;
    run_node(node, index, input, Arc::new(out_schema), batch_rows)
}

pub fn execute_partial_aggregate(node: &PlanNode, input: &Table) -> Result<Table, ExecError> {
    phase_aggregate(node, AggPhase::Partial, input)
}

pub fn execute_final_aggregate(node: &PlanNode, partials: &Table) -> Result<Table, ExecError> {
    phase_aggregate(node, AggPhase::Final, partials)
}

fn phase_aggregate(node: &PlanNode, want: AggPhase, input: &Table) -> Result<Table, ExecError> {
    let PlanNode::Aggregate { phase, measures, .. } = node else {
        return Err(ExecError::InvalidPlan(format!(
            "expected an aggregate, got {}",
            node.kind()
        )));
    };
    if let Some(m) = measures.iter().find(|m| !m.func.is_decomposable()) {
        return Err(ExecError::NonDecomposableMeasure(m.name.clone()));
    }
    if *phase != want {
        return Err(ExecError::InvalidPlan(format!(
            "expected a {want:?} aggregate, got {phase:?}"
        )));
    }
    apply_node(node, 0, input, DEFAULT_BATCH_ROWS)
}

/// Evaluates an expression over a batch.
pub fn evaluate_expr(expr: &Expr, batch: &ColumnBatch) -> Result<Column, ExecError> {
    eval::eval(expr, batch)
        .map(|c| c.into_owned())
        .map_err(|cause| ExecError::Node { node: 0, cause })
}

fn read(node: &PlanNode, index: usize, ctx: &ExecContext, out_schema: Arc<Schema>) -> Result<Table, ExecError> {
    let PlanNode::Read {
        table,
        schema,
        rowid,
        filter,
    } = node
    else {
        unreachable!()
    };
    let err = |cause: String| ExecError::Node { node: index, cause };
    let segments = ctx
        .segments(table)
        .ok_or_else(|| ExecError::UnknownTable(table.clone()))?;
    let mut batches = Vec::new();
    for seg in segments {
        let actual = seg.table.schema();
        if actual.len() != schema.len()
            || actual
                .fields()
                .iter()
                .zip(schema.fields())
                .any(|(a, b)| a.name != b.name || a.data_type != b.data_type || (a.nullable && !b.nullable))
        {
            return Err(err(format!(
                "table `{table}` has schema {actual}, plan expects {schema}"
            )));
        }
        let mut offset = 0i64;
        for b in seg.table.batches() {
            for chunk in chunks(b, ctx.batch_rows) {
                let rows = chunk.num_rows();
                let mut columns = chunk.columns().to_vec();
                if *rowid {
                    let base = seg.rowid_base + offset;
                    columns.push(Column::from_data(ColumnData::Int64(
                        (0..rows as i64).map(|r| base + r).collect(),
                    )));
                }
                offset += rows as i64;
                let batch = ColumnBatch::try_new_with_rows(out_schema.clone(), columns, rows)
                    .map_err(|e| err(e.to_string()))?;
                let batch = match filter {
                    Some(pred) => filter_batch(&batch, pred).map_err(err)?,
                    None => batch,
                };
                batches.push(batch);
            }
        }
    }
    Table::try_new(out_schema, batches).map_err(|e| err(e.to_string()))
}

fn chunks(batch: &ColumnBatch, batch_rows: usize) -> Vec<ColumnBatch> {
    let rows = batch.num_rows();
    if rows <= batch_rows {
        return vec![batch.clone()];
    }
    (0..rows)
        .step_by(batch_rows)
        .map(|start| batch.slice(start, batch_rows.min(rows - start)))
        .collect()
}

fn filter_batch(batch: &ColumnBatch, predicate: &Expr) -> Result<ColumnBatch, String> {
    let col = eval::eval(predicate, batch)?;
    let mask = eval::predicate_mask(&col)?;
    if mask.iter().all(|k| *k) {
        return Ok(batch.clone());
    }
    let keep: Vec<usize> = mask.iter().enumerate().filter_map(|(i, k)| k.then_some(i)).collect();
    Ok(batch.take(&keep))
}

fn run_node(
    node: &PlanNode,
    index: usize,
    input: &Table,
    out_schema: Arc<Schema>,
    batch_rows: usize,
) -> Result<Table, ExecError> {
    let err = |cause: String| ExecError::Node { node: index, cause };
    let batches = match node {
        PlanNode::Read { .. } => return Err(err("read must be the first node".into())),
        PlanNode::Unsupported(r) => return Err(err(format!("{} operators cannot be executed", r.name()))),
        PlanNode::Filter { predicate } => input
            .batches()
            .iter()
            .map(|b| filter_batch(b, predicate))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?,
        PlanNode::Project { items } => input
            .batches()
            .iter()
            .map(|b| project_batch(b, items, &out_schema))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?,
        PlanNode::Aggregate {
            phase,
            groupings,
            measures,
        } => {
            if *phase != AggPhase::Single {
                if let Some(m) = measures.iter().find(|m| !m.func.is_decomposable()) {
                    return Err(ExecError::NonDecomposableMeasure(m.name.clone()));
                }
            }
            let out = aggregate::aggregate(
                *phase,
                groupings,
                measures,
                input.schema(),
                out_schema.clone(),
                input.batches(),
            )
            .map_err(err)?;
            chunks(&out, batch_rows)
        }
        PlanNode::Sort { keys } => {
            let all = concat_batches(input, out_schema.clone()).map_err(err)?;
            let key_cols = keys
                .iter()
                .map(|k| eval::eval(&k.expr, &all).map(|c| (c.into_owned(), k.descending)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let mut order: Vec<usize> = (0..all.num_rows()).collect();
            order.sort_by(|&a, &b| {
                for (col, desc) in &key_cols {
                    let ord = match (col.is_valid(a), col.is_valid(b)) {
                        (true, true) => {
                            let o = eval::cmp_cells(col, a, b);
                            if *desc {
                                o.reverse()
                            } else {
                                o
                            }
                        }
                        (false, false) => std::cmp::Ordering::Equal,
                        (true, false) => std::cmp::Ordering::Less,
                        (false, true) => std::cmp::Ordering::Greater,
                    };
                    if ord.is_ne() {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            });
            let sorted = all.take(&order);
            if sorted.num_rows() == 0 {
                Vec::new()
            } else {
                chunks(&sorted, batch_rows)
            }
        }
    };
    Table::try_new(out_schema, batches).map_err(|e| err(e.to_string()))
}

fn project_batch(batch: &ColumnBatch, items: &[(Expr, String)], out: &Arc<Schema>) -> Result<ColumnBatch, String> {
    let mut columns = Vec::with_capacity(items.len());
    for (i, (e, _)) in items.iter().enumerate() {
        let c = eval::eval(e, batch)?.into_owned();
        eval::check_type(&c, out.field(i).data_type)?;
        columns.push(c);
    }
    ColumnBatch::try_new_with_rows(out.clone(), columns, batch.num_rows()).map_err(|e| e.to_string())
}

fn concat_batches(input: &Table, schema: Arc<Schema>) -> Result<ColumnBatch, String> {
    if input.batches().len() == 1 {
        return Ok(input.batches()[0].clone());
    }
    let columns = (0..schema.len()).map(|i| input.concat_column(i)).collect();
    ColumnBatch::try_new_with_rows(schema, columns, input.num_rows()).map_err(|e| e.to_string())
}
