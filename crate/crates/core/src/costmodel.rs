//! Per-operator size coefficients and chained size propagation.
//!
//! A coefficient is the ratio of output bytes to input bytes. Filters are
//! costed from histograms (conjuncts on the same column are intersected into
//! one interval first), projections by row width, and aggregates by an
//! estimate of the surviving distinct grouping keys:
//! `groups = D * (1 - (1 - r/N)^(N/D))` for `D` distinct keys over `N` base
//! rows of which `r` reach the aggregate.

use std::collections::HashMap;
use std::fmt;
use std::ops::Bound;

use thiserror::Error;

use crate::columnar::{DataType, Schema};
use crate::planir::{classify, AggPhase, CmpOp, Expr, OpClass, Plan, PlanNode};
use crate::stats::{estimate_equality_selectivity, estimate_range_selectivity, Histogram, TableStats};

/// Width assumed for a string cell when no measured size is available.
const DEFAULT_UTF8_WIDTH: f64 = 16.0;
/// Width assumed for a list cell when no measured size is available.
const DEFAULT_LIST_WIDTH: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("{0} operators cannot be costed")]
    UnclassifiableOperator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientSource {
    Fixed,
    Histogram,
    WidthRatio,
    DistinctCap,
    Unknown,
}

impl CoefficientSource {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientSource::Fixed => "fixed",
            CoefficientSource::Histogram => "histogram",
            CoefficientSource::WidthRatio => "width_ratio",
            CoefficientSource::DistinctCap => "distinct_cap",
            CoefficientSource::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    /// `None` exactly when `source` is `Unknown`.
    pub value: Option<f64>,
    pub source: CoefficientSource,
}

impl Coefficient {
    pub fn known(value: f64, source: CoefficientSource) -> Coefficient {
        Coefficient {
            value: Some(value),
            source,
        }
    }

    pub fn unknown() -> Coefficient {
        Coefficient {
            value: None,
            source: CoefficientSource::Unknown,
        }
    }

    pub fn is_known(&self) -> bool {
        self.value.is_some()
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{v:.6} ({})", self.source.name()),
            None => f.write_str("? (unknown)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSize {
    pub coefficient: Coefficient,
    pub input_bytes: Option<f64>,
    pub output_bytes: Option<f64>,
    pub output_rows: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeEstimate {
    pub read_bytes: f64,
    pub nodes: Vec<NodeSize>,
}

impl SizeEstimate {
    pub fn output_bytes(&self, index: usize) -> Option<f64> {
        self.nodes.get(index).and_then(|n| n.output_bytes)
    }

    pub fn all_known(&self) -> bool {
        self.nodes.iter().all(|n| n.coefficient.is_known())
    }
}

/// What the estimator knows about each column flowing between nodes.
#[derive(Debug, Clone)]
struct ColumnInfo {
    /// Base column whose histogram describes this column's values.
    base: Option<String>,
    width: f64,
}

#[derive(Debug, Clone)]
struct Flow {
    columns: HashMap<String, ColumnInfo>,
    schema: Schema,
    rows: f64,
}

impl Flow {
    fn row_width(&self) -> f64 {
        self.schema
            .fields()
            .iter()
            .map(|f| self.columns.get(&f.name).map_or(0.0, |c| c.width))
            .sum()
    }

    fn histogram(&self, column: &str, stats: &TableStats) -> Option<Histogram> {
        let base = self.columns.get(column)?.base.as_deref()?;
        stats.histogram(base)
    }
}

fn type_width(t: DataType) -> f64 {
    match t {
        DataType::Utf8 => DEFAULT_UTF8_WIDTH,
        t if t.is_list() => DEFAULT_LIST_WIDTH,
        t => t.fixed_width().unwrap_or(8) as f64,
    }
}

fn base_flow(schema: &Schema, stats: &TableStats) -> Flow {
    let columns = schema
        .fields()
        .iter()
        .map(|f| {
            let width = match f.data_type.fixed_width() {
                Some(w) => w as f64,
                None => stats.avg_width(&f.name).unwrap_or_else(|| type_width(f.data_type)),
            };
            (
                f.name.clone(),
                ColumnInfo {
                    base: Some(f.name.clone()),
                    width,
                },
            )
        })
        .collect();
    Flow {
        columns,
        schema: schema.clone(),
        rows: stats.total_rows as f64,
    }
}

/// Coefficient of `node` when its input has the columns of `input_schema`
/// named as in the base table and `input_rows` rows.
pub fn estimate_coefficient(
    node: &PlanNode,
    input_schema: &Schema,
    input_rows: f64,
    stats: &TableStats,
) -> Result<Coefficient, CostError> {
    let mut flow = base_flow(input_schema, stats);
    flow.rows = input_rows;
    step(node, &mut flow, stats)
}

/// Chains coefficients from the Read's `read_bytes`. The first unknown
/// coefficient makes every later size unknown.
pub fn propagate_sizes(plan: &Plan, read_bytes: f64, stats: &TableStats) -> Result<SizeEstimate, CostError> {
    let mut nodes = Vec::with_capacity(plan.len());
    let mut flow: Option<Flow> = None;
    let mut bytes = Some(read_bytes);
    for node in &plan.nodes {
        let coefficient = match (node, flow.as_mut()) {
            (PlanNode::Read { schema, rowid, .. }, None) => {
                let mut f = base_flow(schema, stats);
                if *rowid {
                    let mut fields = schema.fields().to_vec();
                    fields.push(crate::columnar::Field::new(
                        crate::planir::ROWID,
                        DataType::Int64,
                        false,
                    ));
                    f.schema = Schema::new(fields).unwrap_or_else(|_| schema.clone());
                    f.columns.insert(
                        crate::planir::ROWID.into(),
                        ColumnInfo {
                            base: Some(crate::planir::ROWID.into()),
                            width: 8.0,
                        },
                    );
                }
                let (c, rows) = read_filter(node, &f, stats);
                f.rows = rows;
                flow = Some(f);
                c
            }
            (_, Some(f)) if bytes.is_some() => step(node, f, stats)?,
            (PlanNode::Unsupported(r), _) => return Err(CostError::UnclassifiableOperator(r.name().into())),
            _ => Coefficient::unknown(),
        };
        let input_bytes = bytes;
        let output_bytes = match (input_bytes, coefficient.value) {
            (Some(b), Some(c)) => Some(b * c),
            _ => None,
        };
        bytes = output_bytes;
        nodes.push(NodeSize {
            coefficient,
            input_bytes,
            output_bytes,
            output_rows: output_bytes.and(flow.as_ref().map(|f| f.rows)),
        });
    }
    Ok(SizeEstimate { read_bytes, nodes })
}

/// A Read carrying an inline filter is costed as that filter.
fn read_filter(node: &PlanNode, flow: &Flow, stats: &TableStats) -> (Coefficient, f64) {
    match node {
        PlanNode::Read { filter: Some(pred), .. } => match filter_selectivity(pred, flow, stats) {
            Some(s) => (Coefficient::known(s, CoefficientSource::Histogram), flow.rows * s),
            None => (Coefficient::unknown(), flow.rows),
        },
        _ => (Coefficient::known(1.0, CoefficientSource::Fixed), flow.rows),
    }
}

/// Costs one node and advances `flow` to its output.
fn step(node: &PlanNode, flow: &mut Flow, stats: &TableStats) -> Result<Coefficient, CostError> {
    if matches!(classify(node), OpClass::Op3 | OpClass::Op4) {
        return Err(CostError::UnclassifiableOperator(node.kind().into()));
    }
    let unknown = Ok(Coefficient::unknown());
    match node {
        PlanNode::Read { .. } => {
            let (c, rows) = read_filter(node, flow, stats);
            flow.rows = rows;
            Ok(c)
        }
        PlanNode::Sort { .. } => Ok(Coefficient::known(1.0, CoefficientSource::Fixed)),
        PlanNode::Filter { predicate } => match filter_selectivity(predicate, flow, stats) {
            Some(s) => {
                flow.rows *= s;
                Ok(Coefficient::known(s, CoefficientSource::Histogram))
            }
            None => unknown,
        },
        PlanNode::Project { items } => {
            if items.iter().any(|(e, _)| e.contains_array_access()) {
                return unknown;
            }
            let Ok(out_schema) = node.output_schema(Some(&flow.schema)) else {
                return unknown;
            };
            let in_width = flow.row_width();
            let mut columns = HashMap::new();
            for ((e, name), f) in items.iter().zip(out_schema.fields()) {
                let info = match e {
                    Expr::Column(c) => flow.columns.get(c).cloned(),
                    _ => None,
                }
                .unwrap_or(ColumnInfo {
                    base: None,
                    width: type_width(f.data_type),
                });
                columns.insert(name.clone(), info);
            }
            flow.columns = columns;
            flow.schema = out_schema;
            let ratio = if in_width > 0.0 {
                flow.row_width() / in_width
            } else {
                1.0
            };
            Ok(Coefficient::known(ratio, CoefficientSource::WidthRatio))
        }
        PlanNode::Aggregate {
            phase,
            groupings,
            measures,
        } => {
            if measures.iter().any(|m| m.args.iter().any(Expr::contains_array_access)) {
                return unknown;
            }
            let Ok(out_schema) = node.output_schema(Some(&flow.schema)) else {
                return unknown;
            };
            let total = stats.total_rows as f64;
            let groups = if groupings.is_empty() {
                1.0
            } else if *phase == AggPhase::Final {
                // Merging partials cannot produce more groups than it receives.
                flow.rows
            } else {
                let mut distinct = 1.0f64;
                for g in groupings {
                    match flow.histogram(g, stats) {
                        Some(h) => distinct *= h.distinct_estimate.max(1.0),
                        None => return unknown,
                    }
                }
                let distinct = distinct.min(total.max(1.0));
                surviving_groups(distinct, total, flow.rows)
            };
            let in_bytes = flow.rows * flow.row_width();
            let mut columns = HashMap::new();
            for f in out_schema.fields() {
                let info = match flow.columns.get(&f.name) {
                    Some(c) if groupings.contains(&f.name) => ColumnInfo {
                        base: None,
                        width: c.width,
                    },
                    _ => ColumnInfo {
                        base: None,
                        width: type_width(f.data_type),
                    },
                };
                columns.insert(f.name.clone(), info);
            }
            flow.columns = columns;
            flow.schema = out_schema;
            flow.rows = groups;
            let out_bytes = groups * flow.row_width();
            let ratio = if in_bytes > 0.0 {
                (out_bytes / in_bytes).min(1.0)
            } else {
                1.0
            };
            Ok(Coefficient::known(ratio, CoefficientSource::DistinctCap))
        }
        PlanNode::Unsupported(r) => Err(CostError::UnclassifiableOperator(r.name().into())),
    }
}

/// Expected distinct keys among `rows` rows drawn from `total` rows holding
/// `distinct` equally frequent keys.
fn surviving_groups(distinct: f64, total: f64, rows: f64) -> f64 {
    if total <= 0.0 || rows <= 0.0 {
        return 0.0;
    }
    let frac = (rows / total).clamp(0.0, 1.0);
    let per_key = total / distinct;
    (distinct * (1.0 - (1.0 - frac).powf(per_key))).min(rows)
}

/// Per-column accumulation of conjunct constraints.
#[derive(Debug, Clone)]
struct ColumnConstraint {
    lo: Bound<f64>,
    hi: Bound<f64>,
    not_equal: Vec<f64>,
    not_null: bool,
    ranged: bool,
}

impl Default for ColumnConstraint {
    fn default() -> Self {
        ColumnConstraint {
            lo: Bound::Unbounded,
            hi: Bound::Unbounded,
            not_equal: Vec::new(),
            not_null: false,
            ranged: false,
        }
    }
}

fn bound_value(b: Bound<f64>) -> Option<f64> {
    match b {
        Bound::Included(v) | Bound::Excluded(v) => Some(v),
        Bound::Unbounded => None,
    }
}

fn tighten_lo(cur: Bound<f64>, new: Bound<f64>) -> Bound<f64> {
    match (bound_value(cur), bound_value(new)) {
        (None, _) => new,
        (_, None) => cur,
        (Some(a), Some(b)) if b > a => new,
        (Some(a), Some(b)) if b == a && matches!(new, Bound::Excluded(_)) => new,
        _ => cur,
    }
}

fn tighten_hi(cur: Bound<f64>, new: Bound<f64>) -> Bound<f64> {
    match (bound_value(cur), bound_value(new)) {
        (None, _) => new,
        (_, None) => cur,
        (Some(a), Some(b)) if b < a => new,
        (Some(a), Some(b)) if b == a && matches!(new, Bound::Excluded(_)) => new,
        _ => cur,
    }
}

fn literal_f64(e: &Expr) -> Option<f64> {
    match e {
        Expr::Literal(v) => v.as_f64(),
        _ => None,
    }
}

/// Folds one conjunct into the per-column constraints; `None` if the
/// conjunct is not a range or equality test of a column against a number.
fn add_conjunct(e: &Expr, out: &mut HashMap<String, ColumnConstraint>) -> Option<()> {
    match e {
        Expr::Cmp { op, lhs, rhs } => {
            let (col, op, v) = match (&**lhs, &**rhs) {
                (Expr::Column(c), r) => (c, *op, literal_f64(r)?),
                (l, Expr::Column(c)) => (c, op.flipped(), literal_f64(l)?),
                _ => return None,
            };
            let c = out.entry(col.clone()).or_default();
            match op {
                CmpOp::Eq => {
                    c.lo = tighten_lo(c.lo, Bound::Included(v));
                    c.hi = tighten_hi(c.hi, Bound::Included(v));
                }
                CmpOp::NotEq => {
                    c.not_equal.push(v);
                    return Some(());
                }
                CmpOp::Lt => c.hi = tighten_hi(c.hi, Bound::Excluded(v)),
                CmpOp::LtEq => c.hi = tighten_hi(c.hi, Bound::Included(v)),
                CmpOp::Gt => c.lo = tighten_lo(c.lo, Bound::Excluded(v)),
                CmpOp::GtEq => c.lo = tighten_lo(c.lo, Bound::Included(v)),
            }
            c.ranged = true;
            Some(())
        }
        Expr::Between { expr, low, high } => {
            let Expr::Column(col) = &**expr else { return None };
            let (lo, hi) = (literal_f64(low)?, literal_f64(high)?);
            let c = out.entry(col.clone()).or_default();
            c.lo = tighten_lo(c.lo, Bound::Included(lo));
            c.hi = tighten_hi(c.hi, Bound::Included(hi));
            c.ranged = true;
            Some(())
        }
        Expr::IsNotNull(inner) => {
            let Expr::Column(col) = &**inner else { return None };
            out.entry(col.clone()).or_default().not_null = true;
            Some(())
        }
        _ => None,
    }
}

/// Range constraints implied by the analyzable conjuncts of `predicate`,
/// one entry per column. Conjuncts that are not column-vs-number tests are
/// ignored, so the result is implied by the predicate but may be weaker.
pub(crate) fn range_constraints(predicate: &Expr) -> Vec<(String, Bound<f64>, Bound<f64>)> {
    let mut constraints: HashMap<String, ColumnConstraint> = HashMap::new();
    for conjunct in predicate.conjuncts() {
        if !conjunct.contains_array_access() {
            let _ = add_conjunct(conjunct, &mut constraints);
        }
    }
    let mut out: Vec<_> = constraints
        .into_iter()
        .filter(|(_, c)| c.ranged)
        .map(|(col, c)| (col, c.lo, c.hi))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn filter_selectivity(predicate: &Expr, flow: &Flow, stats: &TableStats) -> Option<f64> {
    if predicate.contains_array_access() {
        return None;
    }
    let mut constraints: HashMap<String, ColumnConstraint> = HashMap::new();
    for conjunct in predicate.conjuncts() {
        add_conjunct(conjunct, &mut constraints)?;
    }
    let mut parts = Vec::with_capacity(constraints.len());
    for (col, c) in &constraints {
        let h = flow.histogram(col, stats)?;
        let mut s = 1.0;
        if c.ranged {
            s = match (c.lo, c.hi) {
                (Bound::Included(a), Bound::Included(b)) if a == b => estimate_equality_selectivity(&h, a),
                (lo, hi) => estimate_range_selectivity(&h, lo, hi),
            };
        } else if c.not_null {
            s = 1.0 - h.null_fraction;
        }
        for v in &c.not_equal {
            if !c.ranged && !c.not_null {
                s = 1.0 - h.null_fraction;
            }
            s *= 1.0 - estimate_equality_selectivity(&h, *v) / (1.0 - h.null_fraction).max(f64::MIN_POSITIVE);
        }
        parts.push(s.clamp(0.0, 1.0));
    }
    Some(crate::stats::estimate_conjunction(&parts))
}
