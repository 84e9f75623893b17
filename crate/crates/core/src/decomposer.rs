//! Splits a plan into an array-side plan and a frontend plan that reads the
//! array side's result.
//!
//! The intermediate columns travel under generated names (`t_a`, `t_b`, ...)
//! and every frontend reference to them is rewritten in the same pass. The
//! frontend plan restores the original output names through `root_names`.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::columnar::Schema;
use crate::planir::{AggPhase, Annotations, Plan, PlanNode, SortKey};
use crate::soda::{rewrite_partial_aggregate, SodaError, SplitDecision};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Soda(#[from] SodaError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPlans {
    pub array_plan: Plan,
    pub fe_plan: Plan,
    pub intermediate_schema: Schema,
    /// Original intermediate column name to generated name, in column order.
    pub temp_names: Vec<(String, String)>,
    /// Table name the frontend plan reads the intermediate from.
    pub handle: String,
}

impl DecomposedPlans {
    pub fn fe_annotations(&self, source: &str) -> Annotations {
        vec![
            ("intermediate".to_string(), self.handle.clone()),
            ("source".to_string(), source.to_string()),
        ]
    }
}

pub fn intermediate_handle(table: &str) -> String {
    format!("_intermediate_{table}")
}

/// `t_a .. t_z, t_aa, t_ab, ...`: bijective base-26 suffixes.
fn temp_name(mut n: usize) -> String {
    let mut letters = Vec::new();
    loop {
        letters.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    letters.reverse();
    format!("t_{}", String::from_utf8(letters).unwrap())
}

/// Generated names for every field of `schema`, skipping names it already uses.
pub fn generate_temp_names(schema: &Schema) -> Vec<(String, String)> {
    generate_temp_names_avoiding(schema, &HashSet::new())
}

pub fn generate_temp_names_avoiding(schema: &Schema, taken: &HashSet<String>) -> Vec<(String, String)> {
    let existing: HashSet<&str> = schema.names().collect();
    let mut n = 0;
    schema
        .names()
        .map(|orig| loop {
            let candidate = temp_name(n);
            n += 1;
            if !existing.contains(candidate.as_str()) && !taken.contains(&candidate) {
                break (orig.to_string(), candidate);
            }
        })
        .collect()
}

pub fn infer_intermediate_schema(array_plan: &Plan) -> Result<Schema, DecomposeError> {
    array_plan
        .output_schema()
        .map_err(|d| DecomposeError::InvalidSplit(d.to_string()))
}

pub fn decompose(plan: &Plan, split: &SplitDecision) -> Result<DecomposedPlans, DecomposeError> {
    decompose_at(plan, split.split_after, split.partial_agg)
}

/// Every name appearing anywhere in the plan, so generated names never shadow one.
fn names_in_plan(plan: &Plan) -> HashSet<String> {
    let mut names = HashSet::new();
    if let Ok(schemas) = plan.node_schemas() {
        for s in schemas {
            names.extend(s.names().map(String::from));
        }
    }
    for node in &plan.nodes {
        for e in node.expressions() {
            names.extend(e.referenced_columns().into_iter().map(String::from));
        }
    }
    names.extend(plan.root_names.iter().flatten().cloned());
    names
}

pub fn decompose_at(plan: &Plan, split_after: usize, partial_agg: bool) -> Result<DecomposedPlans, DecomposeError> {
    if split_after >= plan.len() {
        return Err(DecomposeError::InvalidSplit(format!(
            "split after node {split_after} in a {}-node plan",
            plan.len()
        )));
    }
    let diags = plan.validate();
    if let Some(d) = diags.first() {
        return Err(DecomposeError::InvalidSplit(d.to_string()));
    }
    let table = plan.read_table().unwrap_or_default().to_string();

    let (array_nodes, fe_rest): (Vec<PlanNode>, Vec<PlanNode>) = match partial_agg
        .then(|| {
            plan.nodes[..=split_after]
                .iter()
                .position(|n| matches!(n, PlanNode::Aggregate { .. }))
        })
        .flatten()
    {
        Some(k) => {
            if !matches!(
                &plan.nodes[k],
                PlanNode::Aggregate {
                    phase: AggPhase::Single,
                    ..
                }
            ) {
                return Err(DecomposeError::InvalidSplit(format!(
                    "node {k} is already a split aggregate"
                )));
            }
            let (partial, fin) = rewrite_partial_aggregate(&plan.nodes[k])?;
            let mut array = plan.nodes[..k].to_vec();
            array.push(partial);
            let mut fe = vec![fin];
            fe.extend_from_slice(&plan.nodes[k + 1..]);
            (array, fe)
        }
        None => (
            plan.nodes[..=split_after].to_vec(),
            plan.nodes[split_after + 1..].to_vec(),
        ),
    };

    let mut array_plan = Plan::new(array_nodes);
    let intermediate_schema = infer_intermediate_schema(&array_plan)?;
    let temp_names = generate_temp_names_avoiding(&intermediate_schema, &names_in_plan(plan));
    let temps: Vec<String> = temp_names.iter().map(|(_, t)| t.clone()).collect();
    array_plan.root_names = Some(temps.clone());
    let temp_schema = intermediate_schema
        .renamed(&temps)
        .map_err(|e| DecomposeError::InvalidSplit(e.to_string()))?;

    let handle = intermediate_handle(&table);
    let mut fe_nodes = vec![PlanNode::Read {
        table: handle.clone(),
        schema: temp_schema,
        rowid: false,
        filter: None,
    }];
    let mut mapping: HashMap<String, String> = temp_names.iter().cloned().collect();
    for node in fe_rest {
        let (rewritten, next) = rename_node(&node, &mapping);
        fe_nodes.push(rewritten);
        mapping = next;
    }
    let mut fe_plan = Plan::new(fe_nodes);
    let want: Vec<String> = plan
        .output_schema()
        .map_err(|d| DecomposeError::InvalidSplit(d.to_string()))?
        .names()
        .map(String::from)
        .collect();
    let have: Vec<String> = fe_plan
        .output_schema()
        .map_err(|d| DecomposeError::InvalidSplit(d.to_string()))?
        .names()
        .map(String::from)
        .collect();
    if have != want {
        fe_plan.root_names = Some(want);
    }
    Ok(DecomposedPlans {
        array_plan,
        fe_plan,
        intermediate_schema,
        temp_names,
        handle,
    })
}

/// Rewrites column references through `mapping` and returns the mapping
/// that applies to the node's output.
fn rename_node(node: &PlanNode, mapping: &HashMap<String, String>) -> (PlanNode, HashMap<String, String>) {
    let f = |c: &str| mapping.get(c).cloned().unwrap_or_else(|| c.to_string());
    match node {
        PlanNode::Filter { predicate } => (
            PlanNode::Filter {
                predicate: predicate.rename_columns(&f),
            },
            mapping.clone(),
        ),
        PlanNode::Sort { keys } => (
            PlanNode::Sort {
                keys: keys
                    .iter()
                    .map(|k| SortKey {
                        expr: k.expr.rename_columns(&f),
                        descending: k.descending,
                    })
                    .collect(),
            },
            mapping.clone(),
        ),
        PlanNode::Project { items } => (
            PlanNode::Project {
                items: items.iter().map(|(e, n)| (e.rename_columns(&f), n.clone())).collect(),
            },
            HashMap::new(),
        ),
        PlanNode::Aggregate {
            phase,
            groupings,
            measures,
        } => {
            let measures = measures
                .iter()
                .map(|m| crate::planir::Measure {
                    func: m.func,
                    args: m.args.iter().map(|a| a.rename_columns(&f)).collect(),
                    name: m.name.clone(),
                })
                .collect();
            let next = groupings
                .iter()
                .filter_map(|g| mapping.get(g).map(|t| (g.clone(), t.clone())))
                .collect();
            (
                PlanNode::Aggregate {
                    phase: *phase,
                    groupings: groupings.iter().map(|g| f(g)).collect(),
                    measures,
                },
                next,
            )
        }
        other => (other.clone(), mapping.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{DataType, Field, Table, Value};
    use crate::executor::{execute, ExecContext};
    use crate::planir::plan_to_text;
    use crate::sqlfe::parse;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn schema_of(n: usize) -> Schema {
        Schema::new(
            (0..n)
                .map(|i| Field::new(format!("c{i}"), DataType::Int64, false))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn temp_name_sequence() {
        let names: Vec<String> = generate_temp_names(&schema_of(3)).into_iter().map(|(_, t)| t).collect();
        assert_eq!(names, ["t_a", "t_b", "t_c"]);

        let s = Schema::new(vec![
            Field::new("t_a", DataType::Int64, false),
            Field::new("x", DataType::Int64, false),
        ])
        .unwrap();
        assert_eq!(generate_temp_names(&s)[0].1, "t_b");

        // Enumeration oracle: 27 names, all distinct, the last one t_aa.
        let names: Vec<String> = generate_temp_names(&schema_of(27))
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        let distinct: HashSet<&String> = names.iter().collect();
        assert_eq!(distinct.len(), 27);
        assert_eq!(names[25], "t_z");
        assert_eq!(names[26], "t_aa");
        assert_eq!(temp_name(26 + 26 * 26), "t_aaa");
    }

    fn laghos(rows: usize, seed: u64) -> Table {
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
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<Value>> = (0..rows)
            .map(|_| {
                vec![
                    Value::Int32(rng.random_range(0..20)),
                    Value::Float64(rng.random_range(1.4..1.7)),
                    Value::Float64(rng.random_range(1.4..1.7)),
                    Value::Float64(rng.random_range(1.4..1.7)),
                    Value::Float64(rng.random_range(0.0..10.0)),
                ]
            })
            .collect();
        Table::from_rows(schema, &data, 128).unwrap()
    }

    const Q1: &str = "SELECT min(vertex_id) AS VID, min(x) AS X, min(y) AS Y, min(z) AS Z, avg(e) AS E FROM parquet \
        WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 AND z > 1.5 AND z < 1.6 GROUP BY vertex_id ORDER BY E;";

    fn run_split(plan: &Plan, t: &Table, split: usize, partial: bool) -> Table {
        let d = decompose_at(plan, split, partial).unwrap();
        assert!(d.fe_plan.validate().is_empty(), "{:?}", d.fe_plan.validate());
        let mut ctx = ExecContext::new();
        ctx.register("parquet", t.clone());
        let mid = execute(&d.array_plan, &ctx).unwrap();
        ctx.register(d.handle.clone(), mid);
        execute(&d.fe_plan, &ctx).unwrap()
    }

    #[test]
    fn q1_cfg4_shape() {
        let t = laghos(10, 1);
        let plan = parse(Q1, t.schema()).unwrap();
        let d = decompose_at(&plan, 3, false).unwrap();
        let kinds = |p: &Plan| p.nodes.iter().map(|n| n.kind()).collect::<Vec<_>>();
        assert_eq!(kinds(&d.array_plan), ["read", "filter", "aggregate", "project"]);
        assert_eq!(kinds(&d.fe_plan), ["read", "sort"]);
        assert_eq!(
            d.intermediate_schema.names().collect::<Vec<_>>(),
            ["VID", "X", "Y", "Z", "E"]
        );
        let types: Vec<DataType> = d.intermediate_schema.fields().iter().map(|f| f.data_type).collect();
        assert_eq!(
            types,
            [
                DataType::Int32,
                DataType::Float64,
                DataType::Float64,
                DataType::Float64,
                DataType::Float64
            ]
        );
        let PlanNode::Read { table, .. } = &d.fe_plan.nodes[0] else {
            panic!()
        };
        assert_eq!(table, "_intermediate_parquet");
        // Deterministic serialization.
        let again = decompose_at(&plan, 3, false).unwrap();
        assert_eq!(plan_to_text(&d.fe_plan), plan_to_text(&again.fe_plan));
        assert_eq!(plan_to_text(&d.array_plan), plan_to_text(&again.array_plan));
    }

    #[test]
    fn split_at_read() {
        let t = laghos(10, 1);
        let plan = parse(Q1, t.schema()).unwrap();
        let d = decompose_at(&plan, 0, false).unwrap();
        assert_eq!(d.array_plan.len(), 1);
        assert_eq!(d.fe_plan.len(), plan.len());
        assert_eq!(&d.intermediate_schema, t.schema().as_ref());
    }

    #[test]
    fn partial_avg_state_in_schema() {
        let t = laghos(10, 1);
        let plan = parse(Q1, t.schema()).unwrap();
        let d = decompose_at(&plan, 3, true).unwrap();
        let names: Vec<&str> = d.intermediate_schema.names().collect();
        assert_eq!(names, ["vertex_id", "VID", "X", "Y", "Z", "E__sum", "E__count"]);
        assert_eq!(
            d.fe_plan.nodes.iter().map(|n| n.kind()).collect::<Vec<_>>(),
            ["read", "aggregate", "project", "sort"]
        );
    }

    #[test]
    fn recomposition_equals_monolithic() {
        for seed in 0..3 {
            let t = laghos(1000, seed);
            for sql in [
                Q1,
                "SELECT vertex_id, x + y AS s FROM parquet WHERE e > 5",
                "SELECT count(*) AS n, sum(e) AS s, max(x) AS m FROM parquet WHERE y < 1.6",
                "SELECT vertex_id AS v, avg(e) AS a FROM parquet GROUP BY vertex_id ORDER BY a DESC",
            ] {
                let plan = parse(sql, t.schema()).unwrap();
                let mut ctx = ExecContext::new();
                ctx.register("parquet", t.clone());
                let mono = execute(&plan, &ctx).unwrap();
                for split in 0..plan.len() {
                    for partial in [false, true] {
                        let got = run_split(&plan, &t, split, partial);
                        assert_eq!(got.schema(), mono.schema());
                        let (mut a, mut b) = (got.rows(), mono.rows());
                        if !matches!(plan.nodes.last(), Some(PlanNode::Sort { .. })) {
                            let key = |r: &Vec<Value>| format!("{r:?}");
                            a.sort_by_key(key);
                            b.sort_by_key(key);
                        }
                        assert_eq!(a.len(), b.len());
                        for (x, y) in a.iter().zip(&b) {
                            for (u, v) in x.iter().zip(y) {
                                match (u, v) {
                                    (Value::Float64(p), Value::Float64(q)) => {
                                        assert!((p - q).abs() <= 1e-9 * q.abs().max(1.0), "{sql} split {split}")
                                    }
                                    _ => assert_eq!(u, v, "{sql} split {split}"),
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_split() {
        let t = laghos(1, 1);
        let plan = parse(Q1, t.schema()).unwrap();
        assert!(matches!(
            decompose_at(&plan, 9, false),
            Err(DecomposeError::InvalidSplit(_))
        ));
        let med = parse("SELECT median(e) AS m FROM parquet", t.schema()).unwrap();
        assert!(matches!(
            decompose_at(&med, 1, true),
            Err(DecomposeError::Soda(SodaError::NonDecomposableMeasure(_)))
        ));
    }
}
