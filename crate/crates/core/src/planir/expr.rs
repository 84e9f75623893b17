use std::fmt;

use crate::columnar::{DataType, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtEq => ">=",
        }
    }

    /// The operator with operands swapped (`a < b` == `b > a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::LtEq => CmpOp::GtEq,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::GtEq => CmpOp::LtEq,
            other => other,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::NotEq => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::LtEq => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::GtEq => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> char {
        match self {
            ArithOp::Add => '+',
            ArithOp::Sub => '-',
            ArithOp::Mul => '*',
            ArithOp::Div => '/',
            ArithOp::Mod => '%',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 4,
            ArithOp::Mul | ArithOp::Div | ArithOp::Mod => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarFunc {
    Sqrt,
    Cosh,
    Cos,
    Abs,
}

impl ScalarFunc {
    pub const ALL: [ScalarFunc; 4] = [ScalarFunc::Sqrt, ScalarFunc::Cosh, ScalarFunc::Cos, ScalarFunc::Abs];

    pub fn name(self) -> &'static str {
        match self {
            ScalarFunc::Sqrt => "sqrt",
            ScalarFunc::Cosh => "cosh",
            ScalarFunc::Cos => "cos",
            ScalarFunc::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<ScalarFunc> {
        Self::ALL.iter().copied().find(|f| f.name().eq_ignore_ascii_case(name))
    }
}

/// Scalar and array-element expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    Literal(Value),
    /// `column[index]`, 1-based.
    ArrayIndex {
        column: String,
        index: i64,
    },
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Arith {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Func {
        func: ScalarFunc,
        args: Vec<Expr>,
    },
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    IsNotNull(Box<Expr>),
}

impl Expr {
    pub fn col(name: impl Into<String>) -> Expr {
        Expr::Column(name.into())
    }

    pub fn lit_f64(v: f64) -> Expr {
        Expr::Literal(Value::Float64(v))
    }

    pub fn lit_i64(v: i64) -> Expr {
        Expr::Literal(Value::Int64(v))
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn arith(op: ArithOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Arith {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::ArrayIndex { .. } => vec![],
            Expr::Cmp { lhs, rhs, .. } | Expr::Arith { lhs, rhs, .. } => vec![lhs, rhs],
            Expr::Func { args, .. } => args.iter().collect(),
            Expr::And(items) | Expr::Or(items) => items.iter().collect(),
            Expr::Between { expr, low, high } => vec![expr, low, high],
            Expr::IsNotNull(e) => vec![e],
        }
    }

    pub fn contains_array_access(&self) -> bool {
        matches!(self, Expr::ArrayIndex { .. }) || self.children().into_iter().any(Expr::contains_array_access)
    }

    /// Column names referenced anywhere in the tree (array columns included), in
    /// first-seen order.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(c) | Expr::ArrayIndex { column: c, .. } => {
                if !out.contains(&c.as_str()) {
                    out.push(c);
                }
            }
            _ => {
                for child in self.children() {
                    child.collect_columns(out);
                }
            }
        }
    }

    pub fn scalar_functions(&self, out: &mut Vec<ScalarFunc>) {
        if let Expr::Func { func, .. } = self {
            if !out.contains(func) {
                out.push(*func);
            }
        }
        for c in self.children() {
            c.scalar_functions(out);
        }
    }

    /// Rewrites every column reference through `f`.
    pub fn rename_columns(&self, f: &dyn Fn(&str) -> String) -> Expr {
        match self {
            Expr::Column(c) => Expr::Column(f(c)),
            Expr::Literal(v) => Expr::Literal(v.clone()),
            Expr::ArrayIndex { column, index } => Expr::ArrayIndex {
                column: f(column),
                index: *index,
            },
            Expr::Cmp { op, lhs, rhs } => Expr::cmp(*op, lhs.rename_columns(f), rhs.rename_columns(f)),
            Expr::Arith { op, lhs, rhs } => Expr::arith(*op, lhs.rename_columns(f), rhs.rename_columns(f)),
            Expr::Func { func, args } => Expr::Func {
                func: *func,
                args: args.iter().map(|a| a.rename_columns(f)).collect(),
            },
            Expr::And(items) => Expr::And(items.iter().map(|a| a.rename_columns(f)).collect()),
            Expr::Or(items) => Expr::Or(items.iter().map(|a| a.rename_columns(f)).collect()),
            Expr::Between { expr, low, high } => Expr::Between {
                expr: Box::new(expr.rename_columns(f)),
                low: Box::new(low.rename_columns(f)),
                high: Box::new(high.rename_columns(f)),
            },
            Expr::IsNotNull(e) => Expr::IsNotNull(Box::new(e.rename_columns(f))),
        }
    }

    /// Top-level conjuncts (`And` flattened one level deep, recursively).
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::And(items) => items.iter().flat_map(|e| e.conjuncts()).collect(),
            other => vec![other],
        }
    }

    /// Result type against `input`, or a message describing the first type error.
    pub fn data_type(&self, input: &Schema) -> Result<DataType, String> {
        let mut errors = Vec::new();
        match self.check(input, &mut errors) {
            Some(t) if errors.is_empty() => Ok(t),
            _ => Err(errors
                .into_iter()
                .next()
                .unwrap_or_else(|| "untypeable expression".into())),
        }
    }

    /// Type-checks the whole tree, pushing one message per problem found.
    /// Returns `None` when the type cannot be determined.
    pub fn check(&self, input: &Schema, errors: &mut Vec<String>) -> Option<DataType> {
        match self {
            Expr::Column(name) => match input.field_by_name(name) {
                Some(f) => Some(f.data_type),
                None => {
                    errors.push(format!("unknown column `{name}`"));
                    None
                }
            },
            Expr::Literal(v) => Some(literal_type(v)),
            Expr::ArrayIndex { column, index } => {
                let f = match input.field_by_name(column) {
                    Some(f) => f,
                    None => {
                        errors.push(format!("unknown column `{column}`"));
                        return None;
                    }
                };
                if *index < 1 {
                    errors.push(format!("array index {index} on `{column}` must be >= 1"));
                }
                match f.data_type.element_type() {
                    Some(t) => Some(t),
                    None => {
                        errors.push(format!(
                            "array index on non-list column `{column}` of type {}",
                            f.data_type
                        ));
                        None
                    }
                }
            }
            Expr::Cmp { op, lhs, rhs } => {
                let l = lhs.check(input, errors);
                let r = rhs.check(input, errors);
                if let (Some(l), Some(r)) = (l, r) {
                    if !comparable(l, r) {
                        errors.push(format!("cannot compare {l} {} {r}", op.symbol()));
                    }
                }
                Some(DataType::Boolean)
            }
            Expr::Arith { op, lhs, rhs } => {
                let l = lhs.check(input, errors);
                let r = rhs.check(input, errors);
                let (l, r) = (l?, r?);
                if !l.is_numeric() || !r.is_numeric() {
                    errors.push(format!("arithmetic {l} {} {r} needs numeric operands", op.symbol()));
                    return None;
                }
                Some(arith_type(l, r))
            }
            Expr::Func { func, args } => {
                if args.len() != 1 {
                    errors.push(format!("{} takes 1 argument, got {}", func.name(), args.len()));
                    return None;
                }
                let t = args[0].check(input, errors)?;
                if !t.is_numeric() {
                    errors.push(format!("{} needs a numeric argument, got {t}", func.name()));
                    return None;
                }
                Some(match (func, t) {
                    (ScalarFunc::Abs, t) if t.is_integer() => DataType::Int64,
                    _ => DataType::Float64,
                })
            }
            Expr::And(items) | Expr::Or(items) => {
                if items.is_empty() {
                    errors.push("empty AND/OR".into());
                }
                for item in items {
                    if let Some(t) = item.check(input, errors) {
                        if t != DataType::Boolean {
                            errors.push(format!("AND/OR operand `{item}` is {t}, not Boolean"));
                        }
                    }
                }
                Some(DataType::Boolean)
            }
            Expr::Between { expr, low, high } => {
                let e = expr.check(input, errors);
                let lo = low.check(input, errors);
                let hi = high.check(input, errors);
                if let (Some(e), Some(lo), Some(hi)) = (e, lo, hi) {
                    if !comparable(e, lo) || !comparable(e, hi) {
                        errors.push(format!("BETWEEN operands {e}, {lo}, {hi} are not comparable"));
                    }
                }
                Some(DataType::Boolean)
            }
            Expr::IsNotNull(e) => {
                e.check(input, errors);
                Some(DataType::Boolean)
            }
        }
    }

    /// Conservative nullability: false only when nulls are impossible.
    pub fn nullable(&self, input: &Schema) -> bool {
        match self {
            Expr::Column(name) => input.field_by_name(name).is_none_or(|f| f.nullable),
            Expr::Literal(v) => v.is_null(),
            Expr::ArrayIndex { .. } | Expr::Func { .. } => true,
            Expr::Arith { op, lhs, rhs } => {
                matches!(op, ArithOp::Div | ArithOp::Mod) || lhs.nullable(input) || rhs.nullable(input)
            }
            Expr::IsNotNull(_) => false,
            other => other.children().iter().any(|c| c.nullable(input)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(_) => 1,
            Expr::And(_) => 2,
            Expr::Cmp { .. } | Expr::Between { .. } | Expr::IsNotNull(_) => 3,
            Expr::Arith { op, .. } => op.precedence(),
            _ => 6,
        }
    }
}

pub fn literal_type(v: &Value) -> DataType {
    match v {
        Value::Null | Value::Int64(_) => DataType::Int64,
        Value::Int32(_) => DataType::Int32,
        Value::Float64(_) => DataType::Float64,
        Value::Utf8(_) => DataType::Utf8,
        Value::Boolean(_) => DataType::Boolean,
        Value::ListFloat64(_) => DataType::ListFloat64,
        Value::ListInt32(_) => DataType::ListInt32,
    }
}

pub fn comparable(a: DataType, b: DataType) -> bool {
    (a.is_numeric() && b.is_numeric()) || (a == b && !a.is_list())
}

pub fn arith_type(a: DataType, b: DataType) -> DataType {
    if a == DataType::Float64 || b == DataType::Float64 {
        DataType::Float64
    } else {
        DataType::Int64
    }
}

/// SQL keywords plus the contextual words of the plan text grammar; identifiers
/// spelled like these are printed quoted.
pub(crate) const RESERVED: &[&str] = &[
    "select",
    "from",
    "where",
    "group",
    "by",
    "order",
    "asc",
    "desc",
    "and",
    "or",
    "not",
    "between",
    "is",
    "null",
    "true",
    "false",
    "as",
    "join",
    "having",
    "limit",
    "distinct",
    "union",
    "on",
    "measures",
    "partial",
    "final",
    "emit",
    "in",
    "like",
    "case",
    "inner",
    "left",
    "right",
    "outer",
    "cross",
    "full",
    "intersect",
    "except",
    "offset",
    "over",
];

pub fn quote_ident(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.iter().any(|k| k.eq_ignore_ascii_case(name));
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn fmt_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Null => f.write_str("NULL"),
        Value::Int32(x) => write!(f, "{x}"),
        Value::Int64(x) => write!(f, "{x}"),
        Value::Float64(x) => write!(f, "{x:?}"),
        Value::Utf8(s) => write!(f, "'{}'", s.replace('\'', "''")),
        Value::Boolean(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
        other => write!(f, "'{other}'"),
    }
}

struct Prec<'a>(&'a Expr, u8);

impl fmt::Display for Prec<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => f.write_str(&quote_ident(c)),
            Expr::Literal(v) => fmt_literal(f, v),
            Expr::ArrayIndex { column, index } => write!(f, "{}[{index}]", quote_ident(column)),
            // Comparisons are non-associative: operands bind tighter.
            Expr::Cmp { op, lhs, rhs } => {
                write!(f, "{} {} {}", Prec(lhs, 4), op.symbol(), Prec(rhs, 4))
            }
            Expr::Arith { op, lhs, rhs } => {
                let p = op.precedence();
                write!(f, "{} {} {}", Prec(lhs, p), op.symbol(), Prec(rhs, p + 1))
            }
            Expr::Func { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::And(items) | Expr::Or(items) => {
                let (kw, p) = if matches!(self, Expr::And(_)) {
                    ("AND", 3)
                } else {
                    ("OR", 2)
                };
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {kw} ")?;
                    }
                    write!(f, "{}", Prec(item, p))?;
                }
                Ok(())
            }
            Expr::Between { expr, low, high } => {
                write!(f, "{} BETWEEN {} AND {}", Prec(expr, 4), Prec(low, 4), Prec(high, 4))
            }
            Expr::IsNotNull(e) => write!(f, "{} IS NOT NULL", Prec(e, 4)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Field;

    fn schema() -> Schema {
        Schema::new(vec![
            Field::new("x", DataType::Float64, false),
            Field::new("n", DataType::Int32, false),
            Field::new("m", DataType::ListFloat64, true),
        ])
        .unwrap()
    }

    #[test]
    fn display_respects_precedence() {
        let e = Expr::arith(
            ArithOp::Mul,
            Expr::arith(ArithOp::Add, Expr::col("a"), Expr::col("b")),
            Expr::col("c"),
        );
        assert_eq!(e.to_string(), "(a + b) * c");
        let e = Expr::arith(
            ArithOp::Sub,
            Expr::col("a"),
            Expr::arith(ArithOp::Sub, Expr::col("b"), Expr::col("c")),
        );
        assert_eq!(e.to_string(), "a - (b - c)");
        let nested = Expr::And(vec![Expr::And(vec![Expr::col("p"), Expr::col("q")]), Expr::col("r")]);
        assert_eq!(nested.to_string(), "(p AND q) AND r");
        assert_eq!(Expr::col("select").to_string(), "\"select\"");
        assert_eq!(Expr::lit_f64(1.0).to_string(), "1.0");
    }

    #[test]
    fn typing() {
        let s = schema();
        assert_eq!(
            Expr::arith(ArithOp::Add, Expr::col("n"), Expr::lit_i64(1)).data_type(&s),
            Ok(DataType::Int64)
        );
        assert_eq!(
            Expr::arith(ArithOp::Div, Expr::col("n"), Expr::col("x")).data_type(&s),
            Ok(DataType::Float64)
        );
        assert_eq!(
            Expr::ArrayIndex {
                column: "m".into(),
                index: 1
            }
            .data_type(&s),
            Ok(DataType::Float64)
        );
        assert!(Expr::ArrayIndex {
            column: "x".into(),
            index: 1
        }
        .data_type(&s)
        .is_err());
        assert!(Expr::col("q").data_type(&s).unwrap_err().contains("`q`"));
    }

    #[test]
    fn array_access_detection() {
        let e = Expr::Func {
            func: ScalarFunc::Cosh,
            args: vec![Expr::arith(
                ArithOp::Sub,
                Expr::ArrayIndex {
                    column: "eta".into(),
                    index: 1,
                },
                Expr::ArrayIndex {
                    column: "eta".into(),
                    index: 2,
                },
            )],
        };
        assert!(e.contains_array_access());
        assert!(!Expr::cmp(CmpOp::Gt, Expr::col("x"), Expr::lit_f64(1.5)).contains_array_access());
    }
}
