//! Split-point selection between the array tier and the frontend.
//!
//! Plans without array-element expressions and with fully estimable
//! coefficients use coefficient-aware decomposition (CAD): the split is the
//! node before the first boundary whose estimated output is smallest, ties
//! going to the later node. Other plans use structure-aware placement (SAP):
//! the split is the last node touching array elements, and the orchestrator
//! may lazily extend it at runtime when the measured intermediate exceeds the
//! transfer budget.
//!
//! Boundaries are Sort nodes and aggregates with a `median` measure; they
//! always run on the frontend, even with a single array node.

use std::fmt;

use thiserror::Error;

use crate::costmodel::{propagate_sizes, CostError, SizeEstimate};
use crate::planir::{AggFunc, AggPhase, Annotations, Expr, Measure, Plan, PlanNode};
use crate::stats::TableStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SodaError {
    #[error("size estimation unavailable at node {0}; use structure-aware placement")]
    EstimationUnavailable(usize),
    #[error("measure `{0}` cannot be split into partial and final phases")]
    NonDecomposableMeasure(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("empty plan")]
    EmptyPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Cad,
    Sap,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Cad => "CAD",
            Strategy::Sap => "SAP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryReason {
    GlobalSort,
    NonDecomposableMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryInfo {
    pub index: usize,
    pub reason: BoundaryReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub strategy: Strategy,
    /// Last node executed on the array tier.
    pub split_after: usize,
    pub estimates: SizeEstimate,
    /// The aggregate at or before the split runs as partial/final.
    pub partial_agg: bool,
    /// The orchestrator may extend the split at runtime (SAP only).
    pub lazy: bool,
    pub boundary_index: Option<usize>,
}

impl SplitDecision {
    pub fn to_annotations(&self) -> Annotations {
        let mut a = vec![
            ("strategy".to_string(), self.strategy.to_string()),
            ("split_after".to_string(), self.split_after.to_string()),
            ("partial_agg".to_string(), self.partial_agg.to_string()),
            ("lazy".to_string(), self.lazy.to_string()),
        ];
        if let Some(b) = self.boundary_index {
            a.push(("boundary".to_string(), b.to_string()));
        }
        if let Some(bytes) = self.estimates.output_bytes(self.split_after) {
            a.push(("estimated_transfer_bytes".to_string(), format!("{bytes:.0}")));
        }
        a
    }
}

pub fn boundaries(plan: &Plan) -> Vec<BoundaryInfo> {
    plan.nodes
        .iter()
        .enumerate()
        .filter_map(|(index, node)| {
            let reason = match node {
                PlanNode::Sort { .. } => BoundaryReason::GlobalSort,
                n if n.has_median() => BoundaryReason::NonDecomposableMeasure,
                _ => return None,
            };
            Some(BoundaryInfo { index, reason })
        })
        .collect()
}

pub fn first_boundary(plan: &Plan) -> Option<usize> {
    boundaries(plan).first().map(|b| b.index)
}

pub fn choose_strategy(plan: &Plan, estimates: &SizeEstimate) -> Strategy {
    if plan.contains_array_access() || !estimates.all_known() {
        Strategy::Sap
    } else {
        Strategy::Cad
    }
}

/// Plans a split for `plan` over an object of `read_bytes` spread across
/// `array_nodes` nodes.
pub fn optimize(
    plan: &Plan,
    read_bytes: f64,
    stats: &TableStats,
    array_nodes: usize,
) -> Result<SplitDecision, SodaError> {
    let estimates = propagate_sizes(plan, read_bytes, stats)?;
    match choose_strategy(plan, &estimates) {
        Strategy::Cad => cad_split(plan, estimates, array_nodes),
        Strategy::Sap => Ok(sap_place(plan, estimates, array_nodes)),
    }
}

/// Split points SODA may choose: every node before the first boundary.
pub fn candidate_splits(plan: &Plan) -> std::ops::Range<usize> {
    0..first_boundary(plan).unwrap_or(plan.len()).max(1)
}

pub fn cad_split(plan: &Plan, estimates: SizeEstimate, array_nodes: usize) -> Result<SplitDecision, SodaError> {
    if plan.is_empty() {
        return Err(SodaError::EmptyPlan);
    }
    if let Some(i) = estimates.nodes.iter().position(|n| !n.coefficient.is_known()) {
        return Err(SodaError::EstimationUnavailable(i));
    }
    let mut best = 0;
    let mut best_bytes = f64::INFINITY;
    for i in candidate_splits(plan) {
        let b = estimates.output_bytes(i).unwrap_or(f64::INFINITY);
        if b <= best_bytes {
            best = i;
            best_bytes = b;
        }
    }
    Ok(SplitDecision {
        strategy: Strategy::Cad,
        split_after: best,
        partial_agg: needs_partial(plan, best, array_nodes),
        lazy: false,
        boundary_index: first_boundary(plan),
        estimates,
    })
}

pub fn sap_place(plan: &Plan, estimates: SizeEstimate, array_nodes: usize) -> SplitDecision {
    let limit = candidate_splits(plan).end - 1;
    let last_array = plan.nodes.iter().rposition(|n| n.contains_array_access()).unwrap_or(0);
    let split_after = last_array.min(limit);
    SplitDecision {
        strategy: Strategy::Sap,
        split_after,
        partial_agg: needs_partial(plan, split_after, array_nodes),
        lazy: true,
        boundary_index: first_boundary(plan),
        estimates,
    }
}

/// Whether the array side holds an aggregate that must be split in two.
pub fn needs_partial(plan: &Plan, split_after: usize, array_nodes: usize) -> bool {
    array_nodes > 1
        && plan.nodes[..=split_after.min(plan.len().saturating_sub(1))]
            .iter()
            .any(|n| matches!(n, PlanNode::Aggregate { .. }))
}

/// Whether the lazy extension may move the split one node further.
pub fn can_extend(plan: &Plan, split_after: usize, array_nodes: usize) -> bool {
    let next = split_after + 1;
    next < candidate_splits(plan).end && !(array_nodes > 1 && needs_partial(plan, split_after, array_nodes))
}

/// Splits an aggregate into the array-side partial and frontend-side final
/// aggregates. Final measures read the partial state columns by name.
pub fn rewrite_partial_aggregate(node: &PlanNode) -> Result<(PlanNode, PlanNode), SodaError> {
    let PlanNode::Aggregate {
        groupings, measures, ..
    } = node
    else {
        return Err(SodaError::NonDecomposableMeasure(node.kind().into()));
    };
    if let Some(m) = measures.iter().find(|m| !m.func.is_decomposable()) {
        return Err(SodaError::NonDecomposableMeasure(m.name.clone()));
    }
    let partial = PlanNode::Aggregate {
        phase: AggPhase::Partial,
        groupings: groupings.clone(),
        measures: measures.clone(),
    };
    let finals = measures
        .iter()
        .map(|m| {
            let args = crate::planir::partial_state_names(m)
                .into_iter()
                .map(Expr::Column)
                .collect();
            Measure {
                func: m.func,
                args,
                name: m.name.clone(),
            }
        })
        .collect();
    let fin = PlanNode::Aggregate {
        phase: AggPhase::Final,
        groupings: groupings.clone(),
        measures: finals,
    };
    Ok((partial, fin))
}

/// True if any aggregate in the plan uses `median`.
pub fn has_median(plan: &Plan) -> bool {
    plan.aggregate_functions().contains(&AggFunc::Median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{DataType, Field, Schema, Table, Value};
    use crate::sqlfe::parse;
    use crate::stats::DEFAULT_BINS;
    use std::sync::Arc;

    fn laghos(rows: usize) -> (Table, TableStats) {
        let schema = Arc::new(
            Schema::new(vec![
                Field::new("vertex_id", DataType::Int32, false),
                Field::new("x", DataType::Float64, false),
                Field::new("y", DataType::Float64, false),
                Field::new("z", DataType::Float64, false),
                Field::new("e", DataType::Float64, false),
            ])
            .unwrap(),
        );
        let data: Vec<Vec<Value>> = (0..rows)
            .map(|i| {
                let f = |k: usize| ((i * k) % 997) as f64 / 997.0 * 4.0;
                vec![
                    Value::Int32((i % 50_000) as i32),
                    Value::Float64(f(7)),
                    Value::Float64(f(13)),
                    Value::Float64(f(31)),
                    Value::Float64(i as f64),
                ]
            })
            .collect();
        let t = Table::from_rows(schema, &data, 8192).unwrap();
        let stats = TableStats::build(&t, 0.01, DEFAULT_BINS).unwrap();
        (t, stats)
    }

    const Q1: &str = "SELECT min(vertex_id) AS VID, min(x) AS X, min(y) AS Y, min(z) AS Z, avg(e) AS E FROM parquet \
        WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 AND z > 1.5 AND z < 1.6 GROUP BY vertex_id ORDER BY E;";

    #[test]
    fn q1_is_cad_split_before_sort() {
        let (t, stats) = laghos(100_000);
        let plan = parse(Q1, t.schema()).unwrap();
        let d = optimize(&plan, t.logical_bytes() as f64, &stats, 1).unwrap();
        assert_eq!(d.strategy, Strategy::Cad);
        assert_eq!(d.split_after, 3);
        assert_eq!(d.boundary_index, Some(4));
        assert!(!d.partial_agg);
        let d2 = optimize(&plan, t.logical_bytes() as f64, &stats, 2).unwrap();
        assert!(d2.partial_agg);
    }

    #[test]
    fn no_boundary_offloads_everything() {
        let (t, stats) = laghos(1000);
        let plan = parse("SELECT x, y FROM t WHERE x > 1", t.schema()).unwrap();
        let d = optimize(&plan, 1e6, &stats, 1).unwrap();
        assert_eq!(d.split_after, plan.len() - 1);
    }

    #[test]
    fn read_then_sort_splits_at_read() {
        let (t, stats) = laghos(1000);
        let plan = Plan::new(vec![
            parse("SELECT * FROM t", t.schema()).unwrap().nodes[0].clone(),
            PlanNode::Sort {
                keys: vec![crate::planir::SortKey {
                    expr: Expr::col("x"),
                    descending: false,
                }],
            },
        ]);
        let d = optimize(&plan, 1e6, &stats, 1).unwrap();
        assert_eq!((d.strategy, d.split_after), (Strategy::Cad, 0));
    }

    #[test]
    fn cad_matches_exhaustive_minimum() {
        let (t, stats) = laghos(20_000);
        for sql in [
            Q1,
            "SELECT x, y FROM t WHERE x > 3.5",
            "SELECT x * 2 + y AS a, x - y AS b, e * e AS c, sqrt(e) AS d FROM t WHERE z < 2",
            "SELECT vertex_id, max(e) AS m FROM t GROUP BY vertex_id ORDER BY m",
        ] {
            let plan = parse(sql, t.schema()).unwrap();
            let d = optimize(&plan, t.logical_bytes() as f64, &stats, 1).unwrap();
            let min = candidate_splits(&plan)
                .map(|i| d.estimates.output_bytes(i).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d.estimates.output_bytes(d.split_after).unwrap(), min, "{sql}");
        }
    }

    #[test]
    fn sap_pins_array_nodes() {
        let schema = Schema::new(vec![
            Field::new("MET_pt", DataType::Float64, false),
            Field::new("nMuon", DataType::Int32, false),
            Field::new("Muon_pt", DataType::ListFloat64, false),
        ])
        .unwrap();
        let stats = TableStats::default();
        let q4ish = parse(
            "SELECT MET_pt, Muon_pt[1] + Muon_pt[2] AS s FROM t WHERE Muon_pt[1] > 10",
            &schema,
        )
        .unwrap();
        let d = optimize(&q4ish, 1e6, &stats, 1).unwrap();
        assert_eq!((d.strategy, d.split_after, d.lazy), (Strategy::Sap, 2, true));

        let sorted = parse("SELECT MET_pt FROM t WHERE Muon_pt[1] > 10 ORDER BY MET_pt", &schema).unwrap();
        let d = optimize(&sorted, 1e6, &stats, 1).unwrap();
        assert_eq!((d.strategy, d.split_after), (Strategy::Sap, 1));
        assert!(can_extend(&sorted, 1, 1));
        assert!(!can_extend(&sorted, 2, 1));
    }

    #[test]
    fn partial_rewrite_and_median() {
        let (t, _) = laghos(10);
        let plan = parse(Q1, t.schema()).unwrap();
        let (p, f) = rewrite_partial_aggregate(&plan.nodes[2]).unwrap();
        let PlanNode::Aggregate {
            phase: AggPhase::Partial,
            ..
        } = p
        else {
            panic!()
        };
        let PlanNode::Aggregate {
            phase: AggPhase::Final,
            measures,
            ..
        } = &f
        else {
            panic!()
        };
        assert_eq!(measures[4].args, vec![Expr::col("E__sum"), Expr::col("E__count")]);
        let partial_schema = p.output_schema(Some(&plan.node_schemas().unwrap()[1])).unwrap();
        assert_eq!(
            f.output_schema(Some(&partial_schema)).unwrap(),
            plan.node_schemas().unwrap()[2]
        );

        let med = parse("SELECT vertex_id, median(e) AS m FROM t GROUP BY vertex_id", t.schema()).unwrap();
        assert_eq!(
            rewrite_partial_aggregate(&med.nodes[1]).unwrap_err(),
            SodaError::NonDecomposableMeasure("m".into())
        );
        assert_eq!(boundaries(&med)[0].reason, BoundaryReason::NonDecomposableMeasure);
        assert_eq!(candidate_splits(&med), 0..1);
    }
}
