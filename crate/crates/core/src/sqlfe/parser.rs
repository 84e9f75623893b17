use std::fmt;

use super::lexer::{tokenize, Tok, Token};
use super::{SqlError, SyntaxError};
use crate::columnar::Value;
use crate::planir::{quote_ident, ArithOp, CmpOp, RESERVED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

/// Unbound expression as written.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Column {
        name: String,
        quoted: bool,
        pos: Pos,
    },
    Literal(Value),
    Index {
        column: String,
        quoted: bool,
        index: i64,
        pos: Pos,
    },
    Cmp(CmpOp, Box<Ast>, Box<Ast>),
    Arith(ArithOp, Box<Ast>, Box<Ast>),
    Neg(Box<Ast>),
    /// `star` marks `f(*)`.
    Call {
        name: String,
        args: Vec<Ast>,
        star: bool,
        pos: Pos,
    },
    And(Vec<Ast>),
    Or(Vec<Ast>),
    Between(Box<Ast>, Box<Ast>, Box<Ast>),
    IsNotNull(Box<Ast>),
}

impl Ast {
    fn precedence(&self) -> u8 {
        match self {
            Ast::Or(_) => 1,
            Ast::And(_) => 2,
            Ast::Cmp(..) | Ast::Between(..) | Ast::IsNotNull(_) => 3,
            Ast::Arith(ArithOp::Add | ArithOp::Sub, ..) => 4,
            Ast::Arith(..) => 5,
            _ => 6,
        }
    }

    /// Calls anywhere in the tree whose name satisfies `pred`.
    pub fn any_call(&self, pred: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Ast::Call { name, args, .. } => pred(name) || args.iter().any(|a| a.any_call(pred)),
            Ast::Column { .. } | Ast::Literal(_) | Ast::Index { .. } => false,
            Ast::Cmp(_, a, b) | Ast::Arith(_, a, b) => a.any_call(pred) || b.any_call(pred),
            Ast::Neg(a) | Ast::IsNotNull(a) => a.any_call(pred),
            Ast::And(xs) | Ast::Or(xs) => xs.iter().any(|a| a.any_call(pred)),
            Ast::Between(a, b, c) => a.any_call(pred) || b.any_call(pred) || c.any_call(pred),
        }
    }
}

struct P<'a>(&'a Ast, u8);

impl fmt::Display for P<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Column { name, .. } => f.write_str(&quote_ident(name)),
            Ast::Literal(v) => write!(f, "{}", crate::planir::Expr::Literal(v.clone())),
            Ast::Index { column, index, .. } => write!(f, "{}[{index}]", quote_ident(column)),
            Ast::Cmp(op, a, b) => write!(f, "{} {} {}", P(a, 4), op.symbol(), P(b, 4)),
            Ast::Arith(op, a, b) => {
                let p = self.precedence();
                write!(f, "{} {} {}", P(a, p), op.symbol(), P(b, p + 1))
            }
            Ast::Neg(a) => write!(f, "-{}", P(a, 6)),
            Ast::Call { name, args, star, .. } => {
                write!(f, "{name}(")?;
                if *star {
                    f.write_str("*")?;
                }
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Ast::And(xs) | Ast::Or(xs) => {
                let (kw, p) = if matches!(self, Ast::And(_)) {
                    ("AND", 3)
                } else {
                    ("OR", 2)
                };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {kw} ")?;
                    }
                    write!(f, "{}", P(x, p))?;
                }
                Ok(())
            }
            Ast::Between(a, b, c) => write!(f, "{} BETWEEN {} AND {}", P(a, 4), P(b, 4), P(c, 4)),
            Ast::IsNotNull(a) => write!(f, "{} IS NOT NULL", P(a, 4)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    /// `None` for `*`.
    pub expr: Option<Ast>,
    pub alias: Option<String>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Ast,
    pub descending: bool,
}

/// Parsed (unbound) SELECT statement.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlQuery {
    pub select: Vec<SelectItem>,
    pub from: String,
    pub where_clause: Option<Ast>,
    pub group_by: Vec<(String, bool, Pos)>,
    pub order_by: Vec<OrderItem>,
}

const CLAUSE_KEYWORDS: &[&str] = &[
    "select",
    "from",
    "where",
    "group",
    "order",
    "having",
    "limit",
    "offset",
    "join",
    "union",
    "intersect",
    "except",
];

const JOIN_WORDS: &[&str] = &["join", "inner", "left", "right", "full", "cross", "outer", "natural"];

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SqlError>;

impl Parser {
    pub fn new(src: &str, first_line: usize) -> Result<Parser, SyntaxError> {
        Ok(Parser {
            toks: tokenize(src, first_line)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Token {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)]
    }

    pub fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.peek().is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn error_here(&self, message: impl Into<String>, expected: &[&str]) -> SqlError {
        let t = self.peek();
        SqlError::Syntax(SyntaxError {
            line: t.line,
            column: t.column,
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn unexpected(&self, expected: &[&str]) -> SqlError {
        self.error_here(format!("unexpected {}", self.peek().describe()), expected)
    }

    fn unsupported(&self, feature: &str) -> SqlError {
        let t = self.peek();
        SqlError::UnsupportedFeature {
            feature: feature.to_string(),
            line: t.line,
            column: t.column,
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&[&kw.to_ascii_uppercase()]))
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&[s]))
        }
    }

    /// Identifier: a non-reserved bare word or a quoted name. Returns
    /// `(name, quoted)`.
    pub fn ident(&mut self) -> PResult<(String, bool)> {
        match &self.peek().tok {
            Tok::Word(w) if !is_reserved(w) => {
                let w = w.clone();
                self.next();
                Ok((w, false))
            }
            Tok::Quoted(w) => {
                let w = w.clone();
                self.next();
                Ok((w, true))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn here(&self) -> Pos {
        Pos {
            line: self.peek().line,
            column: self.peek().column,
        }
    }

    pub fn expr(&mut self) -> PResult<Ast> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Ast> {
        let mut items = vec![self.and_expr()?];
        while self.eat_keyword("or") {
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Ast::Or(items)
        })
    }

    fn and_expr(&mut self) -> PResult<Ast> {
        let mut items = vec![self.predicate()?];
        while self.eat_keyword("and") {
            items.push(self.predicate()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Ast::And(items)
        })
    }

    fn predicate(&mut self) -> PResult<Ast> {
        if self.peek().is_keyword("not") {
            return Err(self.unsupported("NOT"));
        }
        let lhs = self.additive()?;
        let op = match &self.peek().tok {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("!=") | Tok::Sym("<>") => Some(CmpOp::NotEq),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::LtEq),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let rhs = self.additive()?;
            return Ok(Ast::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        if self.peek().is_keyword("not") {
            return Err(self.unsupported("NOT"));
        }
        if self.eat_keyword("between") {
            let lo = self.additive()?;
            self.expect_keyword("and")?;
            let hi = self.additive()?;
            return Ok(Ast::Between(Box::new(lhs), Box::new(lo), Box::new(hi)));
        }
        if self.peek().is_keyword("is") {
            if self.peek_at(1).is_keyword("not") && self.peek_at(2).is_keyword("null") {
                self.next();
                self.next();
                self.next();
                return Ok(Ast::IsNotNull(Box::new(lhs)));
            }
            return Err(self.unsupported("IS NULL"));
        }
        for kw in ["in", "like"] {
            if self.peek().is_keyword(kw) {
                return Err(self.unsupported(&kw.to_ascii_uppercase()));
            }
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> PResult<Ast> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym("+") => ArithOp::Add,
                Tok::Sym("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.multiplicative()?;
            lhs = Ast::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> PResult<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym("*") => ArithOp::Mul,
                Tok::Sym("/") => ArithOp::Div,
                Tok::Sym("%") => ArithOp::Mod,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Ast::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Ast> {
        if self.peek().is_sym("-") {
            // Negative numeric literals fold directly so the full i64 range parses.
            match &self.peek_at(1).tok {
                Tok::Int(text) | Tok::Float(text) => {
                    let text = format!("-{text}");
                    self.next();
                    return self.number(&text);
                }
                _ => {
                    self.next();
                    return Ok(Ast::Neg(Box::new(self.unary()?)));
                }
            }
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn number(&mut self, text: &str) -> PResult<Ast> {
        let is_float = matches!(self.peek().tok, Tok::Float(_));
        let v = if is_float {
            text.parse::<f64>().ok().map(Value::Float64)
        } else {
            text.parse::<i64>().ok().map(Value::Int64)
        };
        match v {
            Some(v) => {
                self.next();
                Ok(Ast::Literal(v))
            }
            None => Err(self.error_here(format!("numeric literal {text} out of range"), &[])),
        }
    }

    fn primary(&mut self) -> PResult<Ast> {
        let pos = self.here();
        match self.peek().tok.clone() {
            Tok::Int(text) | Tok::Float(text) => self.number(&text),
            Tok::Str(s) => {
                self.next();
                Ok(Ast::Literal(Value::Utf8(s)))
            }
            Tok::Sym("(") => {
                self.next();
                if self.peek().is_keyword("select") {
                    return Err(self.unsupported("subquery"));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                self.next();
                Ok(Ast::Literal(Value::Boolean(w.eq_ignore_ascii_case("true"))))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("null") => {
                self.next();
                Ok(Ast::Literal(Value::Null))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("case") => Err(self.unsupported("CASE")),
            Tok::Word(w) if w.eq_ignore_ascii_case("not") => Err(self.unsupported("NOT")),
            Tok::Word(w) if w.eq_ignore_ascii_case("exists") => Err(self.unsupported("subquery")),
            Tok::Word(_) | Tok::Quoted(_) => {
                let (name, quoted) = self.ident()?;
                if !quoted && self.peek().is_sym("(") {
                    self.next();
                    return self.call_rest(name, pos);
                }
                if self.eat_sym("[") {
                    let index = match self.peek().tok.clone() {
                        Tok::Int(t) => t.parse::<i64>().ok(),
                        _ => None,
                    };
                    let index = index.ok_or_else(|| self.unexpected(&["array index"]))?;
                    self.next();
                    self.expect_sym("]")?;
                    return Ok(Ast::Index {
                        column: name,
                        quoted,
                        index,
                        pos,
                    });
                }
                if self.peek().is_sym(".") {
                    return Err(self.unsupported("qualified column reference"));
                }
                Ok(Ast::Column { name, quoted, pos })
            }
            _ => Err(self.unexpected(&["expression"])),
        }
    }

    fn call_rest(&mut self, name: String, pos: Pos) -> PResult<Ast> {
        if self.peek().is_keyword("distinct") {
            return Err(self.unsupported("DISTINCT"));
        }
        if self.eat_sym("*") {
            self.expect_sym(")")?;
            return Ok(Ast::Call {
                name,
                args: vec![],
                star: true,
                pos,
            });
        }
        let mut args = Vec::new();
        if !self.eat_sym(")") {
            loop {
                args.push(self.expr()?);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        if self.peek().is_keyword("over") {
            return Err(self.unsupported("window function"));
        }
        Ok(Ast::Call {
            name,
            args,
            star: false,
            pos,
        })
    }

    /// Skips to the next clause keyword at parenthesis depth zero.
    fn sync(&mut self) {
        let mut depth = 0i32;
        while !self.at_eof() {
            let t = self.peek();
            if t.is_sym("(") {
                depth += 1;
            } else if t.is_sym(")") {
                depth -= 1;
            } else if depth <= 0 && (CLAUSE_KEYWORDS.iter().any(|k| t.is_keyword(k)) || t.is_sym(";")) {
                return;
            }
            self.next();
        }
    }

    fn at_clause_start(&self) -> bool {
        let t = self.peek();
        t.tok == Tok::Eof || t.is_sym(";") || CLAUSE_KEYWORDS.iter().any(|k| t.is_keyword(k))
    }

    /// Parses one SELECT statement, recording every recoverable error.
    pub fn query(&mut self, errors: &mut Vec<SqlError>) -> Option<SqlQuery> {
        let before = errors.len();
        let mut q = SqlQuery {
            select: vec![],
            from: String::new(),
            where_clause: None,
            group_by: vec![],
            order_by: vec![],
        };
        if !self.eat_keyword("select") {
            errors.push(self.unexpected(&["SELECT"]));
            return None;
        }
        if self.peek().is_keyword("distinct") {
            errors.push(self.unsupported("DISTINCT"));
            self.next();
        }
        if let Err(e) = self.select_list(&mut q.select) {
            errors.push(e);
            self.sync();
        }
        if !self.eat_keyword("from") {
            errors.push(self.unexpected(&["FROM"]));
            self.sync();
        } else {
            match self.parse_from() {
                Ok(t) => q.from = t,
                Err(e) => {
                    errors.push(e);
                    self.sync();
                }
            }
        }
        while self.peek().is_keyword("join") {
            errors.push(self.unsupported("JOIN"));
            self.next();
            self.sync();
        }
        if self.eat_keyword("where") {
            match self.clause_expr() {
                Ok(e) => q.where_clause = Some(e),
                Err(e) => {
                    errors.push(e);
                    self.sync();
                }
            }
        }
        if self.peek().is_keyword("group") {
            self.next();
            let r = self.expect_keyword("by").and_then(|_| self.group_list(&mut q.group_by));
            if let Err(e) = r {
                errors.push(e);
                self.sync();
            }
        }
        if self.peek().is_keyword("having") {
            errors.push(self.unsupported("HAVING"));
            self.next();
            self.sync();
        }
        if self.peek().is_keyword("order") {
            self.next();
            let r = self.expect_keyword("by").and_then(|_| self.order_list(&mut q.order_by));
            if let Err(e) = r {
                errors.push(e);
                self.sync();
            }
        }
        loop {
            let t = self.peek();
            let feature = if t.is_keyword("limit") || t.is_keyword("offset") {
                "LIMIT"
            } else if ["union", "intersect", "except"].iter().any(|k| t.is_keyword(k)) {
                "set operation"
            } else if t.is_keyword("having") {
                "HAVING"
            } else if t.is_keyword("join") {
                "JOIN"
            } else {
                break;
            };
            errors.push(self.unsupported(feature));
            self.next();
            self.sync();
        }
        self.eat_sym(";");
        if !self.at_eof() {
            errors.push(self.unexpected(&["end of input"]));
        }
        (errors.len() == before).then_some(q)
    }

    fn clause_expr(&mut self) -> PResult<Ast> {
        let e = self.expr()?;
        if !self.at_clause_start() {
            return Err(self.unexpected(&["operator", "clause keyword"]));
        }
        Ok(e)
    }

    fn select_list(&mut self, out: &mut Vec<SelectItem>) -> PResult<()> {
        if self.at_clause_start() {
            return Err(self.error_here("missing select list", &["select item"]));
        }
        loop {
            let pos = self.here();
            if self.eat_sym("*") {
                out.push(SelectItem {
                    expr: None,
                    alias: None,
                    pos,
                });
            } else {
                let expr = self.expr()?;
                let alias = if self.eat_keyword("as")
                    || matches!(self.peek().tok, Tok::Quoted(_))
                    || matches!(&self.peek().tok, Tok::Word(w) if !is_reserved(w))
                {
                    Some(self.ident()?.0)
                } else {
                    None
                };
                out.push(SelectItem {
                    expr: Some(expr),
                    alias,
                    pos,
                });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        if !self.at_clause_start() {
            return Err(self.unexpected(&[",", "FROM"]));
        }
        Ok(())
    }

    fn parse_from(&mut self) -> PResult<String> {
        if self.peek().is_sym("(") {
            return Err(self.unsupported("subquery"));
        }
        let (table, _) = self.ident()?;
        let t = self.peek();
        if t.is_sym(",") || JOIN_WORDS.iter().any(|k| t.is_keyword(k)) {
            return Err(self.unsupported("JOIN"));
        }
        if t.is_sym(".") {
            return Err(self.unsupported("qualified table name"));
        }
        if t.is_keyword("as") || matches!(&t.tok, Tok::Word(w) if !is_reserved(w)) {
            return Err(self.unsupported("table alias"));
        }
        if !self.at_clause_start() {
            return Err(self.unexpected(&["WHERE", "GROUP BY", "ORDER BY"]));
        }
        Ok(table)
    }

    fn group_list(&mut self, out: &mut Vec<(String, bool, Pos)>) -> PResult<()> {
        loop {
            let pos = self.here();
            let (name, quoted) = self.ident()?;
            if self.peek().is_sym("(") || self.peek().is_sym("[") {
                return Err(self.unsupported("GROUP BY expression"));
            }
            out.push((name, quoted, pos));
            if !self.eat_sym(",") {
                break;
            }
        }
        if !self.at_clause_start() {
            return Err(self.unexpected(&[",", "ORDER BY"]));
        }
        Ok(())
    }

    fn order_list(&mut self, out: &mut Vec<OrderItem>) -> PResult<()> {
        loop {
            let expr = self.expr()?;
            let descending = if self.eat_keyword("desc") {
                true
            } else {
                self.eat_keyword("asc");
                false
            };
            if self.peek().is_keyword("nulls") {
                return Err(self.unsupported("NULLS FIRST/LAST"));
            }
            out.push(OrderItem { expr, descending });
            if !self.eat_sym(",") {
                break;
            }
        }
        if !self.at_clause_start() {
            return Err(self.unexpected(&[",", "ASC", "DESC"]));
        }
        Ok(())
    }
}

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_expr(s: &str) -> Ast {
        let mut p = Parser::new(s, 1).unwrap();
        let e = p.expr().unwrap();
        assert!(p.at_eof(), "trailing tokens in {s}");
        e
    }

    #[test]
    fn precedence_and_flattening() {
        assert_eq!(parse_expr("a + b * c").to_string(), "a + b * c");
        assert_eq!(parse_expr("(a + b) * c").to_string(), "(a + b) * c");
        match parse_expr("a = 1 AND b = 2 AND c = 3") {
            Ast::And(xs) => assert_eq!(xs.len(), 3),
            other => panic!("{other:?}"),
        }
        match parse_expr("(a = 1 AND b = 2) AND c = 3") {
            Ast::And(xs) => assert_eq!(xs.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_literals() {
        assert_eq!(parse_expr("-9223372036854775808"), Ast::Literal(Value::Int64(i64::MIN)));
        assert_eq!(parse_expr("-0.0"), Ast::Literal(Value::Float64(-0.0)));
        assert!(matches!(parse_expr("-x"), Ast::Neg(_)));
    }

    #[test]
    fn array_and_calls() {
        let e = parse_expr("cosh(Muon_eta[1] - Muon_eta[2])");
        assert!(matches!(e, Ast::Call { ref name, .. } if name == "cosh"));
        assert!(matches!(parse_expr("count(*)"), Ast::Call { star: true, .. }));
    }

    #[test]
    fn unsupported_constructs() {
        let mut p = Parser::new("NOT a", 1).unwrap();
        assert!(matches!(p.expr(), Err(SqlError::UnsupportedFeature { .. })));
        let mut p = Parser::new("x IN (1)", 1).unwrap();
        assert!(matches!(p.expr(), Err(SqlError::UnsupportedFeature { .. })));
    }
}
