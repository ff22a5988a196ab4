//! Infix expression language used by template conditions and answers.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! or      := and ("or" and)*
//! and     := not ("and" not)*
//! not     := "not" not | cmp
//! cmp     := sum (("==" | "=" | "!=" | "<" | "<=" | ">" | ">=") sum)?
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/" | "%") unary)*
//! unary   := "-" unary | atom
//! atom    := number | ident | "abs(" or ")" | "divides(" or "," or ")" | "(" or ")"
//! ```
//!
//! Numbers are exact rationals. `divides(a, b)` holds when `a` is an integer
//! multiple of `b`, matching the GSM-Symbolic condition `divides(total, n1)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::rational::parse_rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at offset {offset} in `{source_text}`")]
    UnexpectedChar {
        ch: char,
        offset: usize,
        source_text: String,
    },
    #[error("invalid number literal `{0}`")]
    BadNumber(String),
    #[error("unexpected {found} in `{source_text}`, expected {expected}")]
    Syntax {
        found: String,
        expected: &'static str,
        source_text: String,
    },
    #[error("expression `{source_text}` must be {expected}")]
    Type {
        expected: &'static str,
        source_text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound identifier `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(String),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Divides(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Number,
    Boolean,
}

impl Expr {
    /// Parses an expression that must produce a number.
    pub fn parse_numeric(src: &str) -> Result<Expr, ExprError> {
        let expr = Parser::new(src)?.parse_all()?;
        if expr.kind() != Kind::Number {
            return Err(ExprError::Type {
                expected: "numeric",
                source_text: src.to_string(),
            });
        }
        expr.check_operands(src)?;
        Ok(expr)
    }

    /// Parses an expression that must produce a truth value.
    pub fn parse_condition(src: &str) -> Result<Expr, ExprError> {
        let expr = Parser::new(src)?.parse_all()?;
        if expr.kind() != Kind::Boolean {
            return Err(ExprError::Type {
                expected: "a condition (comparison, divides, and/or/not)",
                source_text: src.to_string(),
            });
        }
        expr.check_operands(src)?;
        Ok(expr)
    }

    fn kind(&self) -> Kind {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Neg(_) | Expr::Abs(_) | Expr::Arith(..) => {
                Kind::Number
            }
            Expr::Cmp(..) | Expr::Divides(..) | Expr::And(..) | Expr::Or(..) | Expr::Not(_) => {
                Kind::Boolean
            }
        }
    }

    fn check_operands(&self, src: &str) -> Result<(), ExprError> {
        let want = |e: &Expr, k: Kind| -> Result<(), ExprError> {
            if e.kind() != k {
                return Err(ExprError::Type {
                    expected: if k == Kind::Number {
                        "numeric in arithmetic position"
                    } else {
                        "boolean in logical position"
                    },
                    source_text: src.to_string(),
                });
            }
            e.check_operands(src)
        };
        match self {
            Expr::Num(_) | Expr::Var(_) => Ok(()),
            Expr::Neg(a) | Expr::Abs(a) => want(a, Kind::Number),
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::Divides(a, b) => {
                want(a, Kind::Number)?;
                want(b, Kind::Number)
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                want(a, Kind::Boolean)?;
                want(b, Kind::Boolean)
            }
            Expr::Not(a) => want(a, Kind::Boolean),
        }
    }

    /// Every identifier referenced by the expression.
    pub fn identifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Not(a) => a.collect_idents(out),
            Expr::Arith(_, a, b)
            | Expr::Cmp(_, a, b)
            | Expr::Divides(a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b) => {
                a.collect_idents(out);
                b.collect_idents(out);
            }
        }
    }

    pub fn eval_number(&self, env: &BTreeMap<String, BigRational>) -> Result<BigRational, EvalError> {
        match self {
            Expr::Num(n) => Ok(n.clone()),
            Expr::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(a) => Ok(-a.eval_number(env)?),
            Expr::Abs(a) => Ok(a.eval_number(env)?.abs()),
            Expr::Arith(op, a, b) => {
                let x = a.eval_number(env)?;
                let y = b.eval_number(env)?;
                match op {
                    ArithOp::Add => Ok(x + y),
                    ArithOp::Sub => Ok(x - y),
                    ArithOp::Mul => Ok(x * y),
                    ArithOp::Div => {
                        if y.is_zero() {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(x / y)
                        }
                    }
                    ArithOp::Mod => {
                        if y.is_zero() {
                            return Err(EvalError::DivisionByZero);
                        }
                        let q = (&x / &y).floor();
                        Ok(x - y * q)
                    }
                }
            }
            _ => unreachable!("boolean expression evaluated as number"),
        }
    }

    pub fn eval_bool(&self, env: &BTreeMap<String, BigRational>) -> Result<bool, EvalError> {
        match self {
            Expr::Cmp(op, a, b) => {
                let x = a.eval_number(env)?;
                let y = b.eval_number(env)?;
                Ok(match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                })
            }
            Expr::Divides(a, b) => {
                let x = a.eval_number(env)?;
                let y = b.eval_number(env)?;
                if y.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                let q = x / y;
                Ok(q.is_integer())
            }
            Expr::And(a, b) => Ok(a.eval_bool(env)? && b.eval_bool(env)?),
            Expr::Or(a, b) => Ok(a.eval_bool(env)? || b.eval_bool(env)?),
            Expr::Not(a) => Ok(!a.eval_bool(env)?),
            _ => unreachable!("numeric expression evaluated as condition"),
        }
    }
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Op(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Tok>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|(_, d)| d.is_ascii_digit())) {
            let start = offset;
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_ascii_digit() || chars[j].1 == '.') {
                j += 1;
            }
            // optional exponent
            if j < chars.len() && (chars[j].1 == 'e' || chars[j].1 == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k].1 == '+' || chars[k].1 == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let end = chars.get(j).map_or(src.len(), |(o, _)| *o);
            let text = &src[start..end];
            let value = parse_rational(text).ok_or_else(|| ExprError::BadNumber(text.to_string()))?;
            toks.push(Tok::Num(value));
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = offset;
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '_') {
                j += 1;
            }
            let end = chars.get(j).map_or(src.len(), |(o, _)| *o);
            toks.push(Tok::Ident(src[start..end].to_string()));
            i = j;
            continue;
        }
        let next = chars.get(i + 1).map(|(_, c)| *c);
        let (tok, width) = match (c, next) {
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            ('=', Some('=')) => (Tok::Op("=="), 2),
            ('=', _) => (Tok::Op("=="), 1),
            ('!', Some('=')) => (Tok::Op("!="), 2),
            ('<', Some('=')) => (Tok::Op("<="), 2),
            ('>', Some('=')) => (Tok::Op(">="), 2),
            ('&', Some('&')) => (Tok::Op("and"), 2),
            ('|', Some('|')) => (Tok::Op("or"), 2),
            ('<', _) => (Tok::Op("<"), 1),
            ('>', _) => (Tok::Op(">"), 1),
            ('!', _) => (Tok::Op("not"), 1),
            ('+', _) => (Tok::Op("+"), 1),
            ('-' | '−', _) => (Tok::Op("-"), 1),
            ('*' | '×', _) => (Tok::Op("*"), 1),
            ('/' | '÷', _) => (Tok::Op("/"), 1),
            ('%', _) => (Tok::Op("%"), 1),
            ('≠', _) => (Tok::Op("!="), 1),
            ('≤', _) => (Tok::Op("<="), 1),
            ('≥', _) => (Tok::Op(">="), 1),
            _ => {
                return Err(ExprError::UnexpectedChar {
                    ch: c,
                    offset,
                    source_text: src.to_string(),
                })
            }
        };
        toks.push(tok);
        i += width;
    }
    toks.push(Tok::End);
    Ok(toks)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Tok>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ExprError> {
        Ok(Parser {
            src,
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &'static str) -> ExprError {
        ExprError::Syntax {
            found: self.peek().to_string(),
            expected,
            source_text: self.src.to_string(),
        }
    }

    fn is_word(&self, word: &str) -> bool {
        match self.peek() {
            Tok::Ident(s) => s == word,
            Tok::Op(s) => *s == word,
            _ => false,
        }
    }

    fn parse_all(mut self) -> Result<Expr, ExprError> {
        let e = self.parse_or()?;
        if *self.peek() != Tok::End {
            return Err(self.err("end of expression"));
        }
        Ok(e)
    }

    fn parse_or(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_and()?;
        while self.is_word("or") {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_not()?;
        while self.is_word("and") {
            self.bump();
            let rhs = self.parse_not()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr, ExprError> {
        if self.is_word("not") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.parse_not()?)));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.parse_sum()?;
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.parse_sum()?;
        Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn parse_sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_product()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => ArithOp::Add,
                Tok::Op("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_product()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => ArithOp::Mul,
                Tok::Op("/") => ArithOp::Div,
                Tok::Op("%") => ArithOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op("-") => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.parse_unary()?)))
            }
            Tok::Op("+") => {
                self.bump();
                self.parse_unary()
            }
            _ => self.parse_atom(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ExprError> {
        match self.bump() {
            Tok::Num(n) => Ok(Expr::Num(n)),
            Tok::LParen => {
                let e = self.parse_or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "abs" && *self.peek() == Tok::LParen => {
                self.bump();
                let e = self.parse_or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Abs(Box::new(e)))
            }
            Tok::Ident(name) if name == "divides" && *self.peek() == Tok::LParen => {
                self.bump();
                let a = self.parse_or()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.parse_or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Divides(Box::new(a), Box::new(b)))
            }
            Tok::Ident(name) if !matches!(name.as_str(), "and" | "or" | "not") => Ok(Expr::Var(name)),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("a number, identifier, or `(`"))
            }
        }
    }
}
