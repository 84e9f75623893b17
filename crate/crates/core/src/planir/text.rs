//! Line-oriented plan text.
//!
//! ```text
//! tierplan 1
//! registry
//!   scalar sqrt
//!   aggregate min
//! schema parquet
//!   x Float64
//!   e Float64 nullable
//! nodes
//!   read parquet [rowid] [where <expr>]
//!   filter <expr>
//!   project <expr> AS <name>, ...
//!   aggregate single|partial|final [by <col>, ...] [measures <fn>(<args>|*) AS <name>, ...]
//!   sort <expr> ASC|DESC, ...
//! root
//!   <name>, ...
//! annotations
//!   <key> <value>
//! ```
//!
//! Nodes are listed child first. Comparison and boolean operators are built
//! in; every named scalar or aggregate function must appear in `registry`.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use thiserror::Error;

use super::{quote_ident, AggFunc, AggPhase, Expr, Measure, Plan, PlanNode, Relation, ScalarFunc, SortKey};
use crate::columnar::{DataType, Field, Schema};
use crate::sqlfe::{Ast, Parser, SqlError};

/// Ordered key/value lines attached to a plan.
pub type Annotations = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanTextError {
    #[error("plan text {line}:{column}: {message}")]
    GrammarError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

fn grammar(line: usize, column: usize, message: impl Into<String>) -> PlanTextError {
    PlanTextError::GrammarError {
        line,
        column,
        message: message.into(),
    }
}

impl From<crate::sqlfe::SyntaxError> for PlanTextError {
    fn from(e: crate::sqlfe::SyntaxError) -> Self {
        SqlError::Syntax(e).into()
    }
}

impl From<SqlError> for PlanTextError {
    fn from(e: SqlError) -> Self {
        match e {
            SqlError::Syntax(s) => grammar(s.line, s.column, s.to_string()),
            SqlError::UnsupportedFeature { feature, line, column } => {
                grammar(line, column, format!("{feature} is not part of the plan grammar"))
            }
            SqlError::UnknownFunction { name, .. } => PlanTextError::UnknownFunction(name),
            SqlError::UnknownColumn { name, line, column } => grammar(line, column, format!("unknown column `{name}`")),
            SqlError::Semantic(m) => grammar(0, 0, m),
        }
    }
}

pub fn plan_to_text(plan: &Plan) -> String {
    plan_to_text_annotated(plan, &[])
}

pub fn plan_to_text_annotated(plan: &Plan, annotations: &[(String, String)]) -> String {
    let mut s = String::from("tierplan 1\nregistry\n");
    for f in plan.scalar_functions() {
        let _ = writeln!(s, "  scalar {}", f.name());
    }
    for f in plan.aggregate_functions() {
        let _ = writeln!(s, "  aggregate {}", f.name());
    }
    if let Some(PlanNode::Read { table, schema, .. }) = plan.nodes.first() {
        let _ = writeln!(s, "schema {}", quote_ident(table));
        for f in schema.fields() {
            let _ = writeln!(
                s,
                "  {} {}{}",
                quote_ident(&f.name),
                f.data_type,
                if f.nullable { " nullable" } else { "" }
            );
        }
    }
    s.push_str("nodes\n");
    for n in &plan.nodes {
        let _ = writeln!(s, "  {}", node_line(n));
    }
    if let Some(names) = &plan.root_names {
        let names: Vec<String> = names.iter().map(|n| quote_ident(n)).collect();
        let _ = writeln!(s, "root\n  {}", names.join(", "));
    }
    if !annotations.is_empty() {
        s.push_str("annotations\n");
        for (k, v) in annotations {
            let _ = writeln!(s, "  {k} {v}");
        }
    }
    s
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn node_line(n: &PlanNode) -> String {
    match n {
        PlanNode::Read {
            table, rowid, filter, ..
        } => {
            let mut s = format!("read {}", quote_ident(table));
            if *rowid {
                s.push_str(" rowid");
            }
            if let Some(f) = filter {
                let _ = write!(s, " where {f}");
            }
            s
        }
        PlanNode::Filter { predicate } => format!("filter {predicate}"),
        PlanNode::Project { items } => {
            format!("project {}", join(items, |(e, n)| format!("{e} AS {}", quote_ident(n))))
        }
        PlanNode::Aggregate {
            phase,
            groupings,
            measures,
        } => {
            let mut s = format!(
                "aggregate {}",
                match phase {
                    AggPhase::Single => "single",
                    AggPhase::Partial => "partial",
                    AggPhase::Final => "final",
                }
            );
            if !groupings.is_empty() {
                let _ = write!(s, " by {}", join(groupings, |g| quote_ident(g)));
            }
            if !measures.is_empty() {
                let _ = write!(
                    s,
                    " measures {}",
                    join(measures, |m| {
                        let args = if m.args.is_empty() {
                            "*".to_string()
                        } else {
                            join(&m.args, |a| a.to_string())
                        };
                        format!("{}({args}) AS {}", m.func.name(), quote_ident(&m.name))
                    })
                );
            }
            s
        }
        PlanNode::Sort { keys } => format!(
            "sort {}",
            join(keys, |k| format!(
                "{} {}",
                k.expr,
                if k.descending { "DESC" } else { "ASC" }
            ))
        ),
        PlanNode::Unsupported(r) => r.name().to_string(),
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Registry,
    Schema,
    Nodes,
    Root,
    Annotations,
}

struct Registry {
    scalars: Vec<ScalarFunc>,
    aggregates: Vec<AggFunc>,
}

pub fn text_to_plan(text: &str) -> Result<Plan, PlanTextError> {
    text_to_plan_annotated(text).map(|(p, _)| p)
}

pub fn text_to_plan_annotated(text: &str) -> Result<(Plan, Annotations), PlanTextError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == "tierplan 1" => {}
        Some((n, l)) if l.trim().starts_with("tierplan") => {
            return Err(grammar(n, 1, format!("unsupported plan text version `{}`", l.trim())))
        }
        Some((n, _)) => return Err(grammar(n, 1, "expected `tierplan 1` header")),
        None => return Err(grammar(1, 1, "empty plan text")),
    }

    let mut registry = Registry {
        scalars: vec![],
        aggregates: vec![],
    };
    let mut schema_table: Option<String> = None;
    let mut fields: Vec<Field> = Vec::new();
    let mut node_lines: Vec<(usize, usize, String)> = Vec::new();
    let mut root: Option<Vec<String>> = None;
    let mut annotations = Annotations::new();
    let mut section: Option<Section> = None;

    for (n, raw) in lines {
        let indent = raw.len() - raw.trim_start().len();
        let line = raw.trim();
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        if indent == 0 {
            section = Some(match head {
                "registry" => Section::Registry,
                "schema" => {
                    if schema_table.is_some() {
                        return Err(grammar(n, 1, "duplicate schema section"));
                    }
                    let mut p = Parser::new(rest, n)?;
                    let (t, _) = p.ident()?;
                    expect_end(&p)?;
                    schema_table = Some(t);
                    Section::Schema
                }
                "nodes" => Section::Nodes,
                "root" => Section::Root,
                "annotations" => Section::Annotations,
                other => return Err(grammar(n, 1, format!("unknown section `{other}`"))),
            });
            if section != Some(Section::Schema) && !rest.trim().is_empty() {
                return Err(grammar(n, head.len() + 2, "unexpected text after section name"));
            }
            continue;
        }
        let col = indent + 1;
        match section {
            None => return Err(grammar(n, col, "entry outside any section")),
            Some(Section::Registry) => {
                let name = rest.trim();
                match head {
                    "scalar" => registry
                        .scalars
                        .push(ScalarFunc::from_name(name).ok_or_else(|| PlanTextError::UnknownFunction(name.into()))?),
                    "aggregate" => registry
                        .aggregates
                        .push(AggFunc::from_name(name).ok_or_else(|| PlanTextError::UnknownFunction(name.into()))?),
                    other => return Err(grammar(n, col, format!("unknown registry kind `{other}`"))),
                }
            }
            Some(Section::Schema) => fields.push(parse_field(raw, n)?),
            Some(Section::Nodes) => node_lines.push((n, indent, raw.to_string())),
            Some(Section::Root) => {
                if root.is_some() {
                    return Err(grammar(n, col, "root names given twice"));
                }
                let mut p = Parser::new(raw, n)?;
                let mut names = vec![p.ident()?.0];
                while p.eat_sym(",") {
                    names.push(p.ident()?.0);
                }
                expect_end(&p)?;
                root = Some(names);
            }
            Some(Section::Annotations) => annotations.push((head.to_string(), rest.trim().to_string())),
        }
    }

    let schema = Schema::new(fields).map_err(|e| grammar(0, 0, e.to_string()))?;
    let mut nodes = Vec::with_capacity(node_lines.len());
    for (n, _, raw) in &node_lines {
        nodes.push(parse_node(raw, *n, &schema, schema_table.as_deref(), &registry)?);
    }
    if nodes.is_empty() {
        return Err(grammar(0, 0, "plan has no nodes"));
    }
    Ok((
        Plan {
            nodes,
            root_names: root,
        },
        annotations,
    ))
}

fn expect_end(p: &Parser) -> Result<(), PlanTextError> {
    if p.at_eof() {
        Ok(())
    } else {
        Err(p
            .error_here(format!("unexpected {}", p.peek().describe()), &["end of line"])
            .into())
    }
}

fn parse_field(raw: &str, n: usize) -> Result<Field, PlanTextError> {
    let mut p = Parser::new(raw, n)?;
    let (name, _) = p.ident()?;
    let t = p.next();
    let ty = match &t.tok {
        crate::sqlfe::Tok::Word(w) => DataType::from_name(w),
        _ => None,
    }
    .ok_or_else(|| grammar(n, t.column, format!("unknown type {}", t.describe())))?;
    let nullable = p.eat_keyword("nullable");
    expect_end(&p)?;
    Ok(Field::new(name, ty, nullable))
}

fn parse_node(
    raw: &str,
    n: usize,
    schema: &Schema,
    schema_table: Option<&str>,
    reg: &Registry,
) -> Result<PlanNode, PlanTextError> {
    let mut p = Parser::new(raw, n)?;
    let head = p.next();
    let kind = match &head.tok {
        crate::sqlfe::Tok::Word(w) => w.to_ascii_lowercase(),
        _ => return Err(grammar(n, head.column, "expected node kind")),
    };
    let node = match kind.as_str() {
        "read" => {
            let at = p.peek().column;
            let (table, _) = p.ident()?;
            if schema_table != Some(table.as_str()) {
                return Err(grammar(
                    n,
                    at,
                    format!("read of `{table}` has no matching schema section"),
                ));
            }
            let rowid = if matches!(&p.peek().tok, crate::sqlfe::Tok::Word(w) if w == "rowid") {
                p.next();
                true
            } else {
                false
            };
            let filter = if p.eat_keyword("where") {
                Some(expr(&mut p, reg)?)
            } else {
                None
            };
            PlanNode::Read {
                table,
                schema: schema.clone(),
                rowid,
                filter,
            }
        }
        "filter" => PlanNode::Filter {
            predicate: expr(&mut p, reg)?,
        },
        "project" => {
            let mut items = Vec::new();
            loop {
                let e = expr(&mut p, reg)?;
                p.expect_keyword("as")?;
                items.push((e, p.ident()?.0));
                if !p.eat_sym(",") {
                    break;
                }
            }
            PlanNode::Project { items }
        }
        "aggregate" => {
            let phase = if p.eat_keyword("single") {
                AggPhase::Single
            } else if p.eat_keyword("partial") {
                AggPhase::Partial
            } else if p.eat_keyword("final") {
                AggPhase::Final
            } else {
                return Err(p
                    .error_here("expected aggregate phase", &["single", "partial", "final"])
                    .into());
            };
            let mut groupings = Vec::new();
            if p.eat_keyword("by") {
                loop {
                    groupings.push(p.ident()?.0);
                    if !p.eat_sym(",") {
                        break;
                    }
                }
            }
            let mut measures = Vec::new();
            if p.eat_keyword("measures") {
                loop {
                    measures.push(measure(&mut p, reg)?);
                    if !p.eat_sym(",") {
                        break;
                    }
                }
            }
            PlanNode::Aggregate {
                phase,
                groupings,
                measures,
            }
        }
        "sort" => {
            let mut keys = Vec::new();
            loop {
                let e = expr(&mut p, reg)?;
                let descending = if p.eat_keyword("desc") {
                    true
                } else {
                    p.expect_keyword("asc")?;
                    false
                };
                keys.push(SortKey { expr: e, descending });
                if !p.eat_sym(",") {
                    break;
                }
            }
            PlanNode::Sort { keys }
        }
        "expand" => PlanNode::Unsupported(Relation::Expand),
        "join" => PlanNode::Unsupported(Relation::Join),
        "set" => PlanNode::Unsupported(Relation::Set),
        other => return Err(grammar(n, head.column, format!("unknown node kind `{other}`"))),
    };
    expect_end(&p)?;
    Ok(node)
}

fn measure(p: &mut Parser, reg: &Registry) -> Result<Measure, PlanTextError> {
    let t = p.next();
    let name = match &t.tok {
        crate::sqlfe::Tok::Word(w) => w.clone(),
        _ => return Err(grammar(t.line, t.column, "expected aggregate function")),
    };
    let func = AggFunc::from_name(&name).ok_or_else(|| PlanTextError::UnknownFunction(name.clone()))?;
    if !reg.aggregates.contains(&func) {
        return Err(PlanTextError::UnknownFunction(name));
    }
    p.expect_sym("(")?;
    let mut args = Vec::new();
    if !p.eat_sym("*") {
        loop {
            args.push(expr(p, reg)?);
            if !p.eat_sym(",") {
                break;
            }
        }
    }
    p.expect_sym(")")?;
    p.expect_keyword("as")?;
    Ok(Measure {
        func,
        args,
        name: p.ident()?.0,
    })
}

fn expr(p: &mut Parser, reg: &Registry) -> Result<Expr, PlanTextError> {
    let ast = p.expr()?;
    lower(&ast, reg)
}

/// Converts parsed text to IR without any name resolution.
fn lower(ast: &Ast, reg: &Registry) -> Result<Expr, PlanTextError> {
    let l = |a: &Ast| lower(a, reg);
    Ok(match ast {
        Ast::Column { name, .. } => Expr::Column(name.clone()),
        Ast::Literal(v) => Expr::Literal(v.clone()),
        Ast::Index { column, index, .. } => Expr::ArrayIndex {
            column: column.clone(),
            index: *index,
        },
        Ast::Cmp(op, a, b) => Expr::cmp(*op, l(a)?, l(b)?),
        Ast::Arith(op, a, b) => Expr::arith(*op, l(a)?, l(b)?),
        Ast::Neg(a) => Expr::arith(
            super::ArithOp::Sub,
            Expr::Literal(crate::columnar::Value::Int64(0)),
            l(a)?,
        ),
        Ast::And(xs) => Expr::And(xs.iter().map(l).collect::<Result<_, _>>()?),
        Ast::Or(xs) => Expr::Or(xs.iter().map(l).collect::<Result<_, _>>()?),
        Ast::Between(a, b, c) => Expr::Between {
            expr: Box::new(l(a)?),
            low: Box::new(l(b)?),
            high: Box::new(l(c)?),
        },
        Ast::IsNotNull(a) => Expr::IsNotNull(Box::new(l(a)?)),
        Ast::Call { name, args, pos, .. } => {
            let func = ScalarFunc::from_name(name)
                .filter(|f| reg.scalars.contains(f))
                .ok_or_else(|| PlanTextError::UnknownFunction(name.clone()))?;
            let _ = pos;
            Expr::Func {
                func,
                args: args.iter().map(l).collect::<Result<_, _>>()?,
            }
        }
    })
}
