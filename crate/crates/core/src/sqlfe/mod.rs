//! SQL subset frontend.
//!
//! ```text
//! query    := SELECT item {, item} FROM table [WHERE expr]
//!             [GROUP BY ident {, ident}] [ORDER BY key {, key}] [;]
//! item     := * | expr [[AS] ident]
//! key      := expr [ASC | DESC]
//! expr     := and {OR and}
//! and      := pred {AND pred}
//! pred     := sum [cmp sum | BETWEEN sum AND sum | IS NOT NULL]
//! cmp      := = | != | <> | < | <= | > | >=
//! sum      := product {(+ | -) product}
//! product  := unary {(* | / | %) unary}
//! unary    := - unary | + unary | primary
//! primary  := number | 'string' | TRUE | FALSE | NULL | ( expr )
//!           | ident ( [* | expr {, expr}] ) | ident [ integer ] | ident
//! ident    := word | "quoted"
//! ```
//!
//! Keywords are case-insensitive. Column names match exactly first and fall
//! back to a unique case-insensitive match.

mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::columnar::{Schema, Value};
use crate::planir::{AggFunc, AggPhase, ArithOp, Expr, Measure, Plan, PlanNode, ScalarFunc, SortKey, ROWID};

pub(crate) use lexer::Tok;
pub(crate) use parser::Parser;
pub use parser::{Ast, OrderItem, Pos, SelectItem, SqlQuery};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" or "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at {0}")]
    Syntax(SyntaxError),
    #[error("unsupported feature {feature} at {line}:{column}")]
    UnsupportedFeature {
        feature: String,
        line: usize,
        column: usize,
    },
    #[error("unknown column `{name}` at {line}:{column}")]
    UnknownColumn { name: String, line: usize, column: usize },
    #[error("unknown function `{name}` at {line}:{column}")]
    UnknownFunction { name: String, line: usize, column: usize },
    #[error("{0}")]
    Semantic(String),
}

impl From<SyntaxError> for SqlError {
    fn from(e: SyntaxError) -> Self {
        SqlError::Syntax(e)
    }
}

/// Parses the statement without binding it to a schema.
pub fn parse_statement(sql: &str) -> Result<SqlQuery, SqlError> {
    let mut errors = Vec::new();
    match parse_collect(sql, &mut errors) {
        Some(q) => Ok(q),
        None => Err(errors.into_iter().next().expect("failed parse records an error")),
    }
}

fn parse_collect(sql: &str, errors: &mut Vec<SqlError>) -> Option<SqlQuery> {
    let mut p = match Parser::new(sql, 1) {
        Ok(p) => p,
        Err(e) => {
            errors.push(e.into());
            return None;
        }
    };
    p.query(errors)
}

/// Every recoverable syntax or unsupported-feature diagnostic in `sql`.
pub fn parse_errors(sql: &str) -> Vec<SqlError> {
    let mut errors = Vec::new();
    parse_collect(sql, &mut errors);
    errors
}

/// Parses and binds `sql` against the schema of its FROM table, producing a
/// validated chain Read, [Filter], [Aggregate], Project, [Sort].
pub fn parse(sql: &str, schema: &Schema) -> Result<Plan, SqlError> {
    let q = parse_statement(sql)?;
    bind(&q, schema)
}

struct Scope<'a> {
    schema: &'a Schema,
    allow_rowid: bool,
    used_rowid: bool,
}

impl Scope<'_> {
    fn resolve(&mut self, name: &str, quoted: bool, pos: Pos) -> Result<String, SqlError> {
        if self.schema.index_of(name).is_some() {
            return Ok(name.to_string());
        }
        if self.allow_rowid && name.eq_ignore_ascii_case(ROWID) && !quoted {
            self.used_rowid = true;
            return Ok(ROWID.to_string());
        }
        if !quoted {
            let mut hits = self.schema.names().filter(|n| n.eq_ignore_ascii_case(name));
            if let (Some(hit), None) = (hits.next(), hits.next()) {
                return Ok(hit.to_string());
            }
        }
        Err(SqlError::UnknownColumn {
            name: name.to_string(),
            line: pos.line,
            column: pos.column,
        })
    }

    fn bind(&mut self, ast: &Ast, aggs: &mut Option<&mut AggBinder>) -> Result<Expr, SqlError> {
        Ok(match ast {
            Ast::Column { name, quoted, pos } => {
                let resolved = self.resolve(name, *quoted, *pos)?;
                if let Some(a) = aggs.as_deref() {
                    if !a.groupings.contains(&resolved) {
                        return Err(SqlError::Semantic(format!(
                            "column `{resolved}` at {}:{} must appear in GROUP BY or inside an aggregate",
                            pos.line, pos.column
                        )));
                    }
                }
                Expr::Column(resolved)
            }
            Ast::Literal(v) => Expr::Literal(v.clone()),
            Ast::Index {
                column,
                quoted,
                index,
                pos,
            } => {
                if aggs.is_some() {
                    return Err(SqlError::Semantic(format!(
                        "array element `{column}[{index}]` at {}:{} must be inside an aggregate",
                        pos.line, pos.column
                    )));
                }
                Expr::ArrayIndex {
                    column: self.resolve(column, *quoted, *pos)?,
                    index: *index,
                }
            }
            Ast::Cmp(op, a, b) => Expr::cmp(*op, self.bind(a, aggs)?, self.bind(b, aggs)?),
            Ast::Arith(op, a, b) => Expr::arith(*op, self.bind(a, aggs)?, self.bind(b, aggs)?),
            Ast::Neg(a) => Expr::arith(ArithOp::Sub, Expr::Literal(Value::Int64(0)), self.bind(a, aggs)?),
            Ast::And(xs) => Expr::And(xs.iter().map(|x| self.bind(x, aggs)).collect::<Result<_, _>>()?),
            Ast::Or(xs) => Expr::Or(xs.iter().map(|x| self.bind(x, aggs)).collect::<Result<_, _>>()?),
            Ast::Between(a, b, c) => Expr::Between {
                expr: Box::new(self.bind(a, aggs)?),
                low: Box::new(self.bind(b, aggs)?),
                high: Box::new(self.bind(c, aggs)?),
            },
            Ast::IsNotNull(a) => Expr::IsNotNull(Box::new(self.bind(a, aggs)?)),
            Ast::Call { name, args, star, pos } => {
                if let Some(func) = AggFunc::from_name(name) {
                    let Some(binder) = aggs.as_deref_mut() else {
                        return Err(SqlError::Semantic(format!(
                            "aggregate {name} at {}:{} is not allowed here",
                            pos.line, pos.column
                        )));
                    };
                    if args.iter().any(|a| a.any_call(&|n| AggFunc::from_name(n).is_some())) {
                        return Err(SqlError::Semantic(format!(
                            "nested aggregate at {}:{}",
                            pos.line, pos.column
                        )));
                    }
                    if *star && func != AggFunc::Count {
                        return Err(SqlError::Semantic(format!("{name}(*) at {}:{}", pos.line, pos.column)));
                    }
                    let mut bound = Vec::with_capacity(args.len());
                    for a in args {
                        bound.push(self.bind(a, &mut None)?);
                    }
                    return Ok(Expr::Column(binder.measure(func, bound)));
                }
                let Some(func) = ScalarFunc::from_name(name) else {
                    return Err(SqlError::UnknownFunction {
                        name: name.clone(),
                        line: pos.line,
                        column: pos.column,
                    });
                };
                if *star {
                    return Err(SqlError::Semantic(format!("{name}(*) at {}:{}", pos.line, pos.column)));
                }
                Expr::Func {
                    func,
                    args: args.iter().map(|a| self.bind(a, aggs)).collect::<Result<_, _>>()?,
                }
            }
        })
    }
}

struct AggBinder {
    groupings: Vec<String>,
    measures: Vec<Measure>,
    /// Name for the next measure, set when a select item is a bare aliased
    /// aggregate.
    next_name: Option<String>,
}

impl AggBinder {
    fn measure(&mut self, func: AggFunc, args: Vec<Expr>) -> String {
        if let Some(m) = self.measures.iter().find(|m| m.func == func && m.args == args) {
            return m.name.clone();
        }
        let taken = |n: &str, s: &Self| s.groupings.iter().any(|g| g == n) || s.measures.iter().any(|m| m.name == n);
        let name = match self.next_name.take() {
            Some(n) if !taken(&n, self) => n,
            _ => {
                let mut k = self.measures.len();
                loop {
                    let n = format!("__agg{k}");
                    if !taken(&n, self) {
                        break n;
                    }
                    k += 1;
                }
            }
        };
        self.measures.push(Measure {
            func,
            args,
            name: name.clone(),
        });
        name
    }
}

fn is_aggregate_call(ast: &Ast) -> bool {
    matches!(ast, Ast::Call { name, .. } if AggFunc::from_name(name).is_some())
}

/// Binds a parsed statement against the FROM table's schema.
pub fn bind(q: &SqlQuery, schema: &Schema) -> Result<Plan, SqlError> {
    let is_agg_name = |n: &str| AggFunc::from_name(n).is_some();
    let mut scope = Scope {
        schema,
        allow_rowid: schema.index_of(ROWID).is_none(),
        used_rowid: false,
    };

    let filter = match &q.where_clause {
        Some(w) => {
            if w.any_call(&is_agg_name) {
                return Err(SqlError::Semantic(
                    "aggregate functions are not allowed in WHERE".into(),
                ));
            }
            Some(scope.bind(w, &mut None)?)
        }
        None => None,
    };

    let aggregating = !q.group_by.is_empty()
        || q.select
            .iter()
            .any(|s| s.expr.as_ref().is_some_and(|e| e.any_call(&is_agg_name)));

    let mut groupings = Vec::new();
    for (name, quoted, pos) in &q.group_by {
        let g = scope.resolve(name, *quoted, *pos)?;
        if groupings.contains(&g) {
            return Err(SqlError::Semantic(format!("duplicate GROUP BY column `{g}`")));
        }
        groupings.push(g);
    }
    let mut binder = AggBinder {
        groupings,
        measures: vec![],
        next_name: None,
    };

    let mut items: Vec<(Expr, String)> = Vec::new();
    for item in &q.select {
        let Some(ast) = &item.expr else {
            if aggregating {
                return Err(SqlError::Semantic(
                    "SELECT * cannot be combined with aggregation".into(),
                ));
            }
            for n in schema.names() {
                items.push((Expr::col(n), n.to_string()));
            }
            continue;
        };
        let bare_agg = is_aggregate_call(ast);
        let expr = if aggregating {
            if bare_agg {
                binder.next_name = Some(item.alias.clone().unwrap_or_else(|| ast.to_string()));
            }
            let e = scope.bind(ast, &mut Some(&mut binder));
            binder.next_name = None;
            e?
        } else {
            scope.bind(ast, &mut None)?
        };
        let name = match (&item.alias, ast, &expr) {
            (Some(a), _, _) => a.clone(),
            (None, Ast::Column { .. }, Expr::Column(resolved)) => resolved.clone(),
            (None, _, Expr::Column(m)) if bare_agg => m.clone(),
            (None, ast, _) => ast.to_string(),
        };
        items.push((expr, name));
    }

    let mut nodes = vec![PlanNode::Read {
        table: q.from.clone(),
        schema: schema.clone(),
        rowid: scope.used_rowid,
        filter: None,
    }];
    if let Some(predicate) = filter {
        nodes.push(PlanNode::Filter { predicate });
    }
    if aggregating {
        nodes.push(PlanNode::Aggregate {
            phase: AggPhase::Single,
            groupings: binder.groupings,
            measures: binder.measures,
        });
    }
    nodes.push(PlanNode::Project { items });

    if !q.order_by.is_empty() {
        let out = Plan::new(nodes.clone())
            .output_schema()
            .map_err(|d| SqlError::Semantic(d.to_string()))?;
        let mut order_scope = Scope {
            schema: &out,
            allow_rowid: false,
            used_rowid: false,
        };
        let mut keys = Vec::new();
        for o in &q.order_by {
            if o.expr.any_call(&is_agg_name) {
                return Err(SqlError::Semantic(
                    "ORDER BY must reference output columns, not aggregates".into(),
                ));
            }
            let expr = order_scope.bind(&o.expr, &mut None).map_err(|e| match e {
                SqlError::UnknownColumn { name, line, column } => SqlError::Semantic(format!(
                    "ORDER BY column `{name}` at {line}:{column} is not in the select list"
                )),
                other => other,
            })?;
            keys.push(SortKey {
                expr,
                descending: o.descending,
            });
        }
        nodes.push(PlanNode::Sort { keys });
    }

    let plan = Plan::new(nodes);
    let diags = plan.validate();
    if !diags.is_empty() {
        return Err(SqlError::Semantic(
            diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(plan)
}

/// Prints a canonical plan back to SQL; used to check parse round-trips.
#[cfg(test)]
pub(crate) fn emit_sql(plan: &Plan) -> String {
    use crate::planir::quote_ident;
    let mut read_table = "";
    let mut filter = None;
    let mut agg: Option<(&Vec<String>, &Vec<Measure>)> = None;
    let mut items = None;
    let mut sort = None;
    for n in &plan.nodes {
        match n {
            PlanNode::Read { table, .. } => read_table = table,
            PlanNode::Filter { predicate } => filter = Some(predicate),
            PlanNode::Aggregate {
                groupings, measures, ..
            } => agg = Some((groupings, measures)),
            PlanNode::Project { items: i } => items = Some(i),
            PlanNode::Sort { keys } => sort = Some(keys),
            PlanNode::Unsupported(_) => panic!("not expressible in SQL"),
        }
    }
    let call_text = |m: &Measure| {
        let args: Vec<String> = m.args.iter().map(|a| a.to_string()).collect();
        if args.is_empty() {
            format!("{}(*)", m.func.name())
        } else {
            format!("{}({})", m.func.name(), args.join(", "))
        }
    };
    let render = |e: &Expr| -> String {
        let Some((_, measures)) = agg else { return e.to_string() };
        let marked = e.rename_columns(&|c| match measures.iter().position(|m| m.name == c) {
            Some(i) => format!("\u{1}{i}\u{1}"),
            None => c.to_string(),
        });
        let mut s = marked.to_string();
        for (i, m) in measures.iter().enumerate() {
            s = s.replace(&format!("\"\u{1}{i}\u{1}\""), &call_text(m));
        }
        s
    };
    let select: Vec<String> = items
        .expect("canonical plan has a project")
        .iter()
        .map(|(e, n)| format!("{} AS {}", render(e), quote_ident(n)))
        .collect();
    let mut sql = format!("SELECT {} FROM {}", select.join(", "), quote_ident(read_table));
    if let Some(p) = filter {
        sql.push_str(&format!(" WHERE {p}"));
    }
    if let Some((g, _)) = agg {
        if !g.is_empty() {
            let g: Vec<String> = g.iter().map(|s| quote_ident(s)).collect();
            sql.push_str(&format!(" GROUP BY {}", g.join(", ")));
        }
    }
    if let Some(keys) = sort {
        let k: Vec<String> = keys
            .iter()
            .map(|k| format!("{} {}", k.expr, if k.descending { "DESC" } else { "ASC" }))
            .collect();
        sql.push_str(&format!(" ORDER BY {}", k.join(", ")));
    }
    sql
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{DataType, Field};

    pub(crate) fn laghos_schema() -> Schema {
        Schema::new(vec![
            Field::new("vertex_id", DataType::Int32, false),
            Field::new("x", DataType::Float64, false),
            Field::new("y", DataType::Float64, false),
            Field::new("z", DataType::Float64, false),
            Field::new("e", DataType::Float64, false),
        ])
        .unwrap()
    }

    pub(crate) const Q1: &str =
        "SELECT min(vertex_id) AS VID, min(x) AS X, min(y) AS Y, min(z) AS Z, avg(e) AS E FROM parquet \
        WHERE x > 1.5 AND x < 1.6 AND y > 1.5 AND y < 1.6 AND z > 1.5 AND z < 1.6 GROUP BY vertex_id ORDER BY E;";

    fn kinds(p: &Plan) -> Vec<&'static str> {
        p.nodes.iter().map(|n| n.kind()).collect()
    }

    #[test]
    fn q1_chain() {
        let p = parse(Q1, &laghos_schema()).unwrap();
        assert_eq!(kinds(&p), ["read", "filter", "aggregate", "project", "sort"]);
        let PlanNode::Aggregate {
            groupings, measures, ..
        } = &p.nodes[2]
        else {
            panic!()
        };
        assert_eq!(groupings, &["vertex_id"]);
        let fns: Vec<_> = measures.iter().map(|m| m.func).collect();
        assert_eq!(
            fns,
            [AggFunc::Min, AggFunc::Min, AggFunc::Min, AggFunc::Min, AggFunc::Avg]
        );
        assert_eq!(
            p.output_schema().unwrap().names().collect::<Vec<_>>(),
            ["VID", "X", "Y", "Z", "E"]
        );
    }

    #[test]
    fn simple_select() {
        let s = Schema::new(vec![Field::new("x", DataType::Float64, true)]).unwrap();
        let p = parse("SELECT x FROM t", &s).unwrap();
        assert_eq!(kinds(&p), ["read", "project"]);
    }

    #[test]
    fn rowid_and_case_fallback() {
        let s = Schema::new(vec![
            Field::new("timestep", DataType::Int32, false),
            Field::new("v02", DataType::Float64, false),
        ])
        .unwrap();
        let p = parse(
            "SELECT MAX((rowid % (500 * 500)) / 500) AS height, TIMESTEP FROM parquet WHERE v02 > 0.1 GROUP BY timestep;",
            &s,
        )
        .unwrap();
        assert!(matches!(p.nodes[0], PlanNode::Read { rowid: true, .. }));
        assert_eq!(
            p.output_schema().unwrap().names().collect::<Vec<_>>(),
            ["height", "timestep"]
        );
    }

    #[test]
    fn q4_filter_has_array_access() {
        let s = Schema::new(vec![
            Field::new("MET_pt", DataType::Float64, false),
            Field::new("nMuon", DataType::Int32, false),
            Field::new("Muon_pt", DataType::ListFloat64, false),
            Field::new("Muon_eta", DataType::ListFloat64, false),
            Field::new("Muon_phi", DataType::ListFloat64, false),
            Field::new("Muon_charge", DataType::ListInt32, false),
        ])
        .unwrap();
        let sql = "SELECT MET_pt, sqrt( 2 * Muon_pt[1] * Muon_pt[2] * (cosh(Muon_eta[1] - Muon_eta[2]) - cos(Muon_phi[1] - Muon_phi[2]))) \
            AS Dimuon_mass FROM parquet WHERE nMuon = 2 AND Muon_charge[1] != Muon_charge[2] \
            AND sqrt( 2 * Muon_pt[1] * Muon_pt[2] * (cosh(Muon_eta[1] - Muon_eta[2]) - cos(Muon_phi[1] - Muon_phi[2])) ) BETWEEN 60 AND 120;";
        let p = parse(sql, &s).unwrap();
        assert_eq!(kinds(&p), ["read", "filter", "project"]);
        assert!(p.nodes[1].contains_array_access());
        let PlanNode::Filter { predicate } = &p.nodes[1] else {
            panic!()
        };
        assert!(predicate.conjuncts().iter().any(|c| matches!(c, Expr::Between { .. })));
        let mut fns = vec![];
        predicate.scalar_functions(&mut fns);
        assert_eq!(fns.len(), 3);
    }

    #[test]
    fn diagnostics() {
        let e = parse_errors("SELECT FROM t");
        assert_eq!(e.len(), 1);
        assert!(matches!(&e[0], SqlError::Syntax(s) if s.column == 8), "{e:?}");
        let e = parse_errors("SELECT a FROM t JOIN u ON t.a = u.a");
        assert!(matches!(&e[0], SqlError::UnsupportedFeature { feature, .. } if feature == "JOIN"));
        assert!(parse_errors("SELECT rowid, v03 FROM parquet WHERE v03 > 0.001 AND v03 < 0.999;").is_empty());
        let e = parse_errors("SELECT a FROM t WHERE a > ORDER BY a LIMIT 3");
        assert_eq!(e.len(), 2, "{e:?}");
    }

    #[test]
    fn semantic_errors() {
        let s = laghos_schema();
        assert!(matches!(
            parse("SELECT q FROM t", &s),
            Err(SqlError::UnknownColumn { .. })
        ));
        assert!(matches!(
            parse("SELECT foo(x) FROM t", &s),
            Err(SqlError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse("SELECT x, min(y) FROM t", &s),
            Err(SqlError::Semantic(_))
        ));
        assert!(matches!(
            parse("SELECT x FROM t ORDER BY y", &s),
            Err(SqlError::Semantic(_))
        ));
    }

    #[test]
    fn nested_aggregate_expression() {
        let p = parse(
            "SELECT sum(x) / count(*) AS m, vertex_id FROM t GROUP BY vertex_id",
            &laghos_schema(),
        )
        .unwrap();
        let PlanNode::Aggregate { measures, .. } = &p.nodes[1] else {
            panic!()
        };
        assert_eq!(measures.len(), 2);
        assert_eq!(measures[1].args.len(), 0);
        let PlanNode::Project { items } = &p.nodes[2] else {
            panic!()
        };
        assert_eq!(
            items[0].0,
            Expr::arith(ArithOp::Div, Expr::col("__agg0"), Expr::col("__agg1"))
        );
    }

    #[test]
    fn emit_round_trip_q1() {
        let p = parse(Q1, &laghos_schema()).unwrap();
        let again = parse(&emit_sql(&p), &laghos_schema()).unwrap();
        assert_eq!(p, again);
    }
}
