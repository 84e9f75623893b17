//! Relational plan IR: a chain of operators over a single base table.

mod expr;
mod text;

use std::fmt;

use crate::columnar::{DataType, Field, Schema};

pub use expr::{arith_type, comparable, literal_type, quote_ident, ArithOp, CmpOp, Expr, ScalarFunc};
pub use text::{
    plan_to_text, plan_to_text_annotated, text_to_plan, text_to_plan_annotated, Annotations, PlanTextError,
};

pub(crate) use expr::RESERVED;

/// Virtual Int64 column holding each row's 0-based position in its object.
pub const ROWID: &str = "rowid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Min,
    Max,
    Sum,
    Count,
    Avg,
    Median,
}

impl AggFunc {
    pub const ALL: [AggFunc; 6] = [
        AggFunc::Min,
        AggFunc::Max,
        AggFunc::Sum,
        AggFunc::Count,
        AggFunc::Avg,
        AggFunc::Median,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Sum => "sum",
            AggFunc::Count => "count",
            AggFunc::Avg => "avg",
            AggFunc::Median => "median",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFunc> {
        Self::ALL.iter().copied().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn is_decomposable(self) -> bool {
        self != AggFunc::Median
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AggPhase {
    #[default]
    Single,
    /// Emits per-group mergeable state.
    Partial,
    /// Merges partial states produced by a matching `Partial` aggregate.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub func: AggFunc,
    /// Empty for `count(*)`. `Final` avg takes the (sum, count) state pair.
    pub args: Vec<Expr>,
    pub name: String,
}

impl Measure {
    pub fn new(func: AggFunc, arg: Option<Expr>, name: impl Into<String>) -> Measure {
        Measure {
            func,
            args: arg.into_iter().collect(),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Expand,
    Join,
    Set,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::Expand => "expand",
            Relation::Join => "join",
            Relation::Set => "set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    Read {
        table: String,
        schema: Schema,
        /// Materialize the virtual `rowid` column after the base fields.
        rowid: bool,
        filter: Option<Expr>,
    },
    Filter {
        predicate: Expr,
    },
    Project {
        items: Vec<(Expr, String)>,
    },
    Aggregate {
        phase: AggPhase,
        groupings: Vec<String>,
        measures: Vec<Measure>,
    },
    Sort {
        keys: Vec<SortKey>,
    },
    /// Recognized for classification only; never valid for execution.
    Unsupported(Relation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpClass {
    /// Single parent, 1:1 size ratio.
    Op1,
    /// Single parent, 1:x size ratio.
    Op2,
    /// Single parent, x:1.
    Op3,
    /// Dual parent.
    Op4,
}

pub fn classify(node: &PlanNode) -> OpClass {
    match node {
        PlanNode::Read { .. } | PlanNode::Sort { .. } => OpClass::Op1,
        PlanNode::Filter { .. } | PlanNode::Project { .. } | PlanNode::Aggregate { .. } => OpClass::Op2,
        PlanNode::Unsupported(Relation::Expand) => OpClass::Op3,
        PlanNode::Unsupported(_) => OpClass::Op4,
    }
}

/// Operator name to class, covering the rejected relations too.
pub fn classify_name(name: &str) -> Option<OpClass> {
    Some(match name.to_ascii_lowercase().as_str() {
        "read" | "sort" => OpClass::Op1,
        "filter" | "project" | "aggregate" => OpClass::Op2,
        "expand" => OpClass::Op3,
        "join" | "set" => OpClass::Op4,
        _ => return None,
    })
}

impl PlanNode {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanNode::Read { .. } => "read",
            PlanNode::Filter { .. } => "filter",
            PlanNode::Project { .. } => "project",
            PlanNode::Aggregate { .. } => "aggregate",
            PlanNode::Sort { .. } => "sort",
            PlanNode::Unsupported(r) => r.name(),
        }
    }

    pub fn expressions(&self) -> Vec<&Expr> {
        match self {
            PlanNode::Read { filter, .. } => filter.iter().collect(),
            PlanNode::Filter { predicate } => vec![predicate],
            PlanNode::Project { items } => items.iter().map(|(e, _)| e).collect(),
            PlanNode::Aggregate { measures, .. } => measures.iter().flat_map(|m| &m.args).collect(),
            PlanNode::Sort { keys } => keys.iter().map(|k| &k.expr).collect(),
            PlanNode::Unsupported(_) => vec![],
        }
    }

    pub fn contains_array_access(&self) -> bool {
        self.expressions().into_iter().any(Expr::contains_array_access)
    }

    pub fn has_median(&self) -> bool {
        matches!(self, PlanNode::Aggregate { measures, .. }
            if measures.iter().any(|m| m.func == AggFunc::Median))
    }

    /// Output schema given the input schema (`None` for a Read).
    pub fn output_schema(&self, input: Option<&Schema>) -> Result<Schema, String> {
        let mut errors = Vec::new();
        let out = self.check(input, &mut errors);
        match (out, errors.into_iter().next()) {
            (Some(s), None) => Ok(s),
            (_, Some(e)) => Err(e),
            (None, None) => Err("untypeable node".into()),
        }
    }

    /// Type-checks this node, pushing every problem found.
    fn check(&self, input: Option<&Schema>, errors: &mut Vec<String>) -> Option<Schema> {
        match (self, input) {
            (
                PlanNode::Read {
                    schema, rowid, filter, ..
                },
                None,
            ) => {
                let mut fields = schema.fields().to_vec();
                if *rowid {
                    if schema.index_of(ROWID).is_some() {
                        errors.push("base schema already has a `rowid` field".into());
                        return None;
                    }
                    fields.push(Field::new(ROWID, DataType::Int64, false));
                }
                let out = Schema::new(fields).map_err(|e| errors.push(e.to_string())).ok()?;
                if let Some(f) = filter {
                    check_predicate(f, &out, errors);
                }
                Some(out)
            }
            (PlanNode::Read { .. }, Some(_)) => {
                errors.push("read must be the first node".into());
                None
            }
            (_, None) => {
                errors.push(format!("{} needs an input", self.kind()));
                None
            }
            (PlanNode::Filter { predicate }, Some(input)) => {
                check_predicate(predicate, input, errors);
                Some(input.clone())
            }
            (PlanNode::Project { items }, Some(input)) => {
                let mut fields = Vec::with_capacity(items.len());
                for (e, name) in items {
                    if let Some(t) = e.check(input, errors) {
                        fields.push(Field::new(name.clone(), t, e.nullable(input)));
                    }
                }
                if fields.len() != items.len() {
                    return None;
                }
                Schema::new(fields).map_err(|e| errors.push(e.to_string())).ok()
            }
            (
                PlanNode::Aggregate {
                    phase,
                    groupings,
                    measures,
                },
                Some(input),
            ) => aggregate_schema(*phase, groupings, measures, input, errors),
            (PlanNode::Sort { keys }, Some(input)) => {
                for k in keys {
                    if let Some(t) = k.expr.check(input, errors) {
                        if t.is_list() {
                            errors.push(format!("cannot sort by list expression `{}`", k.expr));
                        }
                    }
                }
                Some(input.clone())
            }
            (PlanNode::Unsupported(r), Some(_)) => {
                errors.push(format!("{} operators are not supported", r.name()));
                None
            }
        }
    }
}

fn check_predicate(e: &Expr, input: &Schema, errors: &mut Vec<String>) {
    if let Some(t) = e.check(input, errors) {
        if t != DataType::Boolean {
            errors.push(format!("predicate `{e}` is {t}, not Boolean"));
        }
    }
}

/// Column names of the partial state emitted for a measure.
pub fn partial_state_names(m: &Measure) -> Vec<String> {
    match m.func {
        AggFunc::Avg => vec![format!("{}__sum", m.name), format!("{}__count", m.name)],
        _ => vec![m.name.clone()],
    }
}

fn measure_fields(phase: AggPhase, m: &Measure, input: &Schema, errors: &mut Vec<String>) -> Option<Vec<Field>> {
    let expected_args = match (phase, m.func) {
        (AggPhase::Final, AggFunc::Avg) => 2,
        (_, AggFunc::Count) => m.args.len().min(1),
        _ => 1,
    };
    if m.args.len() != expected_args {
        errors.push(format!(
            "{}(...) AS {} expects {expected_args} argument(s), got {}",
            m.func.name(),
            m.name,
            m.args.len()
        ));
        return None;
    }
    let mut types = Vec::new();
    for a in &m.args {
        types.push(a.check(input, errors)?);
    }
    let arg = types.first().copied();
    if m.func != AggFunc::Count {
        if let Some(t) = arg {
            if !t.is_numeric() {
                errors.push(format!("{} over non-numeric {t} in `{}`", m.func.name(), m.name));
                return None;
            }
        }
    }
    if phase != AggPhase::Single && !m.func.is_decomposable() {
        errors.push(format!(
            "{} cannot be split into partial and final phases",
            m.func.name()
        ));
        return None;
    }
    let sum_type = |t: DataType| {
        if t.is_integer() {
            DataType::Int64
        } else {
            DataType::Float64
        }
    };
    let field = |name: String, t: DataType, nullable: bool| Field::new(name, t, nullable);
    Some(match (phase, m.func) {
        (AggPhase::Partial, AggFunc::Avg) => {
            let names = partial_state_names(m);
            vec![
                field(names[0].clone(), DataType::Float64, true),
                field(names[1].clone(), DataType::Int64, false),
            ]
        }
        (AggPhase::Final, AggFunc::Count) => {
            if !arg.is_some_and(DataType::is_integer) {
                errors.push(format!("final count over non-integer state in `{}`", m.name));
                return None;
            }
            vec![field(m.name.clone(), DataType::Int64, false)]
        }
        (_, AggFunc::Count) => vec![field(m.name.clone(), DataType::Int64, false)],
        (_, AggFunc::Avg) => vec![field(m.name.clone(), DataType::Float64, true)],
        (_, AggFunc::Sum) => vec![field(m.name.clone(), sum_type(arg.unwrap()), true)],
        (_, AggFunc::Min | AggFunc::Max | AggFunc::Median) => {
            vec![field(m.name.clone(), arg.unwrap(), true)]
        }
    })
}

fn aggregate_schema(
    phase: AggPhase,
    groupings: &[String],
    measures: &[Measure],
    input: &Schema,
    errors: &mut Vec<String>,
) -> Option<Schema> {
    let before = errors.len();
    let mut fields = Vec::new();
    for g in groupings {
        match input.field_by_name(g) {
            Some(f) if f.data_type.is_list() => errors.push(format!("cannot group by list column `{g}`")),
            Some(f) => fields.push(f.clone()),
            None => errors.push(format!("unknown grouping column `{g}`")),
        }
    }
    for m in measures {
        if let Some(fs) = measure_fields(phase, m, input, errors) {
            fields.extend(fs);
        }
    }
    if errors.len() != before {
        return None;
    }
    Schema::new(fields).map_err(|e| errors.push(e.to_string())).ok()
}

/// A validated-on-demand operator chain; `nodes[0]` is the Read.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
    /// Final renaming of the last node's output columns.
    pub root_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(i) => write!(f, "node {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Plan {
    pub fn new(nodes: Vec<PlanNode>) -> Plan {
        Plan {
            nodes,
            root_names: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn read_table(&self) -> Option<&str> {
        match self.nodes.first() {
            Some(PlanNode::Read { table, .. }) => Some(table),
            _ => None,
        }
    }

    /// Input schema of each node plus the final output, as far as checking
    /// succeeds: `schemas[i]` is the output of node `i`.
    pub fn node_schemas(&self) -> Result<Vec<Schema>, Diagnostic> {
        let mut out: Vec<Schema> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let s = node
                .output_schema(out.last())
                .map_err(|message| Diagnostic { node: Some(i), message })?;
            out.push(s);
        }
        Ok(out)
    }

    /// Output schema after `root_names` renaming.
    pub fn output_schema(&self) -> Result<Schema, Diagnostic> {
        let schemas = self.node_schemas()?;
        let last = schemas.last().ok_or_else(|| Diagnostic {
            node: None,
            message: "empty plan".into(),
        })?;
        match &self.root_names {
            None => Ok(last.clone()),
            Some(names) => last.renamed(names).map_err(|e| Diagnostic {
                node: None,
                message: format!("root names: {e}"),
            }),
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(self)
    }

    pub fn contains_array_access(&self) -> bool {
        contains_array_access(self)
    }

    pub fn scalar_functions(&self) -> Vec<ScalarFunc> {
        let mut out = Vec::new();
        for n in &self.nodes {
            for e in n.expressions() {
                e.scalar_functions(&mut out);
            }
        }
        out
    }

    pub fn aggregate_functions(&self) -> Vec<AggFunc> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let PlanNode::Aggregate { measures, .. } = n {
                for m in measures {
                    if !out.contains(&m.func) {
                        out.push(m.func);
                    }
                }
            }
        }
        out
    }
}

pub fn validate(plan: &Plan) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if plan.nodes.is_empty() {
        diags.push(Diagnostic {
            node: None,
            message: "empty plan".into(),
        });
        return diags;
    }
    if !matches!(plan.nodes[0], PlanNode::Read { .. }) {
        diags.push(Diagnostic {
            node: Some(0),
            message: "plan must start with read".into(),
        });
        return diags;
    }
    let mut input: Option<Schema> = None;
    for (i, node) in plan.nodes.iter().enumerate() {
        let mut errors = Vec::new();
        let out = node.check(input.as_ref(), &mut errors);
        errors.dedup();
        if !errors.is_empty() {
            diags.extend(errors.into_iter().map(|message| Diagnostic { node: Some(i), message }));
            return diags;
        }
        input = out;
    }
    if let (Some(names), Some(schema)) = (&plan.root_names, &input) {
        if let Err(e) = schema.renamed(names) {
            diags.push(Diagnostic {
                node: None,
                message: format!("root names: {e}"),
            });
        }
    }
    diags
}

pub fn contains_array_access(plan: &Plan) -> bool {
    plan.nodes.iter().any(PlanNode::contains_array_access)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xe() -> Schema {
        Schema::new(vec![
            Field::new("x", DataType::Float64, false),
            Field::new("e", DataType::Float64, false),
        ])
        .unwrap()
    }

    fn read(schema: Schema) -> PlanNode {
        PlanNode::Read {
            table: "t".into(),
            schema,
            rowid: false,
            filter: None,
        }
    }

    #[test]
    fn well_formed_plan_validates() {
        let plan = Plan::new(vec![
            read(xe()),
            PlanNode::Filter {
                predicate: Expr::cmp(CmpOp::Gt, Expr::col("x"), Expr::lit_f64(1.5)),
            },
            PlanNode::Sort {
                keys: vec![SortKey {
                    expr: Expr::col("e"),
                    descending: false,
                }],
            },
        ]);
        assert_eq!(validate(&plan), vec![]);
    }

    #[test]
    fn missing_column_gives_one_diagnostic() {
        let plan = Plan::new(vec![
            read(xe()),
            PlanNode::Filter {
                predicate: Expr::cmp(CmpOp::Gt, Expr::col("q"), Expr::lit_f64(1.5)),
            },
        ]);
        let d = validate(&plan);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].node, Some(1));
        assert!(d[0].message.contains("q"));
    }

    #[test]
    fn array_index_on_scalar_gives_one_diagnostic() {
        let plan = Plan::new(vec![
            read(xe()),
            PlanNode::Filter {
                predicate: Expr::cmp(
                    CmpOp::Gt,
                    Expr::ArrayIndex {
                        column: "x".into(),
                        index: 1,
                    },
                    Expr::lit_f64(0.0),
                ),
            },
        ]);
        assert_eq!(validate(&plan).len(), 1);
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&PlanNode::Sort { keys: vec![] }), OpClass::Op1);
        assert_eq!(classify(&read(xe())), OpClass::Op1);
        assert_eq!(
            classify(&PlanNode::Aggregate {
                phase: AggPhase::Single,
                groupings: vec![],
                measures: vec![]
            }),
            OpClass::Op2
        );
        assert_eq!(classify(&PlanNode::Unsupported(Relation::Expand)), OpClass::Op3);
        assert_eq!(classify(&PlanNode::Unsupported(Relation::Join)), OpClass::Op4);
        assert_eq!(classify_name("SET"), Some(OpClass::Op4));
    }

    #[test]
    fn aggregate_phases_schema() {
        let m = Measure::new(AggFunc::Avg, Some(Expr::col("e")), "E");
        let partial = PlanNode::Aggregate {
            phase: AggPhase::Partial,
            groupings: vec!["x".into()],
            measures: vec![m.clone()],
        };
        let s = partial.output_schema(Some(&xe())).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), ["x", "E__sum", "E__count"]);
        let fin = PlanNode::Aggregate {
            phase: AggPhase::Final,
            groupings: vec!["x".into()],
            measures: vec![Measure {
                func: AggFunc::Avg,
                args: vec![Expr::col("E__sum"), Expr::col("E__count")],
                name: "E".into(),
            }],
        };
        let s2 = fin.output_schema(Some(&s)).unwrap();
        assert_eq!(s2.field(1).data_type, DataType::Float64);
        let median = PlanNode::Aggregate {
            phase: AggPhase::Partial,
            groupings: vec![],
            measures: vec![Measure::new(AggFunc::Median, Some(Expr::col("e")), "m")],
        };
        assert!(median.output_schema(Some(&xe())).is_err());
    }

    #[test]
    fn rowid_is_appended() {
        let plan = Plan::new(vec![PlanNode::Read {
            table: "t".into(),
            schema: xe(),
            rowid: true,
            filter: None,
        }]);
        let s = plan.output_schema().unwrap();
        assert_eq!(s.field(2).name, ROWID);
        assert_eq!(s.field(2).data_type, DataType::Int64);
    }
}
