//! Scalar expression trees over named variables.
//!
//! Expressions define Hamiltonians, sections, transition maps and cocycles.
//! The grammar is a plain infix calculator grammar:
//!
//! * binary operators `+ - * / ^` with precedence `^` > unary `-` > `* /` > `+ -`,
//!   left-associative except `^` which is right-associative;
//! * functions `sin cos exp ln sqrt abs`, always written with parentheses;
//! * variables are identifiers `letter (letter | digit | _)*`. Multi-letter
//!   names are ordinary variables — `pi` is *not* the constant π, models bind
//!   numeric parameters explicitly;
//! * no implicit multiplication.
//!
//! Evaluation is pure and deterministic; domain violations (division by zero,
//! `ln` of a non-positive value, fractional powers of negative bases, …) are
//! reported as errors rather than silently producing NaN.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Variable bindings used by [`Expr::evaluate`].
pub type Env = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        if c < 0.0 {
            // keep constants non-negative so the canonical serialization
            // stays inside the grammar (unary minus is an operator)
            Expr::Unary(UnaryOp::Neg, Box::new(Expr::Const(-c)))
        } else {
            Expr::Const(c)
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b))
    }

    /// Variable names occurring in the tree.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.collect_vars(&mut vars);
        vars
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluate at the given bindings. Every free variable must be bound.
    pub fn evaluate(&self, env: &Env) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => env
                .get(v)
                .copied()
                .ok_or_else(|| Error::UnboundVariable(v.clone())),
            Expr::Unary(op, e) => {
                let u = e.evaluate(env)?;
                apply_unary(*op, u)
            }
            Expr::Binary(op, a, b) => {
                let x = a.evaluate(env)?;
                let y = b.evaluate(env)?;
                apply_binary(*op, x, y)
            }
        }
    }

    /// Canonical serialization: fully parenthesized infix text.
    ///
    /// Re-parsing the output reproduces a structurally identical tree.
    pub fn canonical(&self) -> String {
        format!("{self}")
    }
}

pub(crate) fn apply_unary(op: UnaryOp, u: f64) -> Result<f64> {
    let v = match op {
        UnaryOp::Neg => -u,
        UnaryOp::Sin => u.sin(),
        UnaryOp::Cos => u.cos(),
        UnaryOp::Exp => u.exp(),
        UnaryOp::Ln => {
            if u <= 0.0 {
                return Err(Error::Domain(format!("ln of non-positive value {u}")));
            }
            u.ln()
        }
        UnaryOp::Sqrt => {
            if u < 0.0 {
                return Err(Error::Domain(format!("sqrt of negative value {u}")));
            }
            u.sqrt()
        }
        UnaryOp::Abs => u.abs(),
    };
    finite(v, op.name())
}

pub(crate) fn apply_binary(op: BinaryOp, x: f64, y: f64) -> Result<f64> {
    let v = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            x / y
        }
        BinaryOp::Pow => return pow_checked(x, y),
    };
    finite(v, op.symbol())
}

/// Real-valued power with deterministic domain rules: a negative base admits
/// only integer exponents, a zero base only non-negative ones.
pub(crate) fn pow_checked(base: f64, exp: f64) -> Result<f64> {
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(Error::Domain(format!(
            "non-integer power {exp} of negative base {base}"
        )));
    }
    if base == 0.0 && exp < 0.0 {
        return Err(Error::Domain(format!("zero raised to negative power {exp}")));
    }
    finite(base.powf(exp), "^")
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite result in '{what}'")))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            Expr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Lexer / parser. Offsets are 1-based character positions.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let offset = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, offset));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, offset));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, offset));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, offset));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, offset));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, offset));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, offset));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    if i >= chars.len() || !chars[i].is_ascii_digit() {
                        return Err(Error::Parse {
                            offset: i + 1,
                            message: "expected digit after decimal point".into(),
                        });
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // exponent part only when it is unambiguously numeric
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| Error::Parse {
                    offset: start + 1,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push((Tok::Num(value), start + 1));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                out.push((Tok::Ident(name), start + 1));
            }
            other => {
                return Err(Error::Parse {
                    offset,
                    message: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    end_offset: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(_, o)| *o)
            .unwrap_or(self.end_offset)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    // expr := term (('+'|'-') term)*
    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::add(lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::mul(lhs, rhs);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::div(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn parse_unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Expr::neg(inner));
        }
        self.parse_power()
    }

    // power := atom ('^' unary)?   (right-associative, binds tighter than unary '-')
    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            let exp = self.parse_unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    let func = function_for(&name).ok_or(Error::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    self.bump(); // '('
                    let arg = self.parse_expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::Unary(func, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(other) => Err(Error::Parse {
                offset,
                message: format!("unexpected token '{}'", tok_text(&other)),
            }),
            None => Err(Error::Parse {
                offset,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

fn function_for(name: &str) -> Option<UnaryOp> {
    match name {
        "sin" => Some(UnaryOp::Sin),
        "cos" => Some(UnaryOp::Cos),
        "exp" => Some(UnaryOp::Exp),
        "ln" => Some(UnaryOp::Ln),
        "sqrt" => Some(UnaryOp::Sqrt),
        "abs" => Some(UnaryOp::Abs),
        _ => None,
    }
}

fn tok_text(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("{v}"),
        Tok::Ident(s) => s.clone(),
        Tok::Plus => "+".into(),
        Tok::Minus => "-".into(),
        Tok::Star => "*".into(),
        Tok::Slash => "/".into(),
        Tok::Caret => "^".into(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
    }
}

/// Parse an expression from source text.
pub fn parse(src: &str) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::Parse {
            offset: 1,
            message: "empty expression".into(),
        });
    }
    let end_offset = src.chars().count() + 1;
    let tokens = lex(src)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end_offset,
    };
    let expr = parser.parse_expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::Parse {
            offset: parser.offset(),
            message: format!(
                "unexpected token '{}'",
                tok_text(&parser.tokens[parser.pos].0)
            ),
        });
    }
    Ok(expr)
}

/// Convenience: identifier check used by chart/parameter validation.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> Env {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn precedence_forces_fourteen() {
        let e = parse("2+3*4").unwrap();
        assert_eq!(e.evaluate(&Env::new()).unwrap(), 14.0);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = parse("-2^2").unwrap();
        assert_eq!(e.evaluate(&Env::new()).unwrap(), -4.0);
        let e = parse("(-2)^2").unwrap();
        assert_eq!(e.evaluate(&Env::new()).unwrap(), 4.0);
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.evaluate(&Env::new()).unwrap(), 512.0);
    }

    #[test]
    fn subtraction_is_left_associative() {
        let e = parse("10-3-2").unwrap();
        assert_eq!(e.evaluate(&Env::new()).unwrap(), 5.0);
    }

    #[test]
    fn free_variables_of_hamiltonian() {
        let e = parse("cos(x/2)*(p^2 - z^2)/2").unwrap();
        let vars: Vec<_> = e.free_variables().into_iter().collect();
        assert_eq!(vars, vec!["p".to_string(), "x".to_string(), "z".to_string()]);
    }

    #[test]
    fn syntax_error_carries_offset() {
        match parse("sin(q@") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_function_is_reported() {
        match parse("foo(x)") {
            Err(Error::UnknownFunction { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 1);
            }
            other => panic!("expected unknown function, got {other:?}"),
        }
    }

    #[test]
    fn gluing_hamiltonian_vanishes_at_half_turn() {
        // cos(x/2) and z both vanish at (x, z) = (pi, 0); "pi" is a plain
        // variable bound to 1 here
        let e = parse("cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z").unwrap();
        let v = e
            .evaluate(&env(&[
                ("x", std::f64::consts::PI),
                ("pi", 1.0),
                ("z", 0.0),
                ("f", 1.0),
            ]))
            .unwrap();
        assert!(v.abs() < 1e-15, "got {v}");
    }

    #[test]
    fn identity_evaluation() {
        let e = parse("z").unwrap();
        assert_eq!(e.evaluate(&env(&[("z", 5.0)])).unwrap(), 5.0);
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let e = parse("1/q").unwrap();
        assert!(matches!(
            e.evaluate(&env(&[("q", 0.0)])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ln_and_sqrt_domain_errors() {
        assert!(matches!(
            parse("ln(x)").unwrap().evaluate(&env(&[("x", -1.0)])),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            parse("sqrt(x)").unwrap().evaluate(&env(&[("x", -1.0)])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fractional_power_of_negative_base_rejected() {
        let e = parse("x^0.5").unwrap();
        assert!(matches!(
            e.evaluate(&env(&[("x", -2.0)])),
            Err(Error::Domain(_))
        ));
        // integer exponents of negative bases are fine
        let e = parse("x^3").unwrap();
        assert_eq!(e.evaluate(&env(&[("x", -2.0)])).unwrap(), -8.0);
    }

    #[test]
    fn unbound_variable_names_the_culprit() {
        let e = parse("p*q + z").unwrap();
        match e.evaluate(&env(&[("p", 1.0), ("q", 1.0)])) {
            Err(Error::UnboundVariable(name)) => assert_eq!(name, "z"),
            other => panic!("expected unbound variable, got {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip_is_structural() {
        for src in [
            "2+3*4",
            "cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z",
            "-q1^2/2",
            "sqrt(abs(x)) - ln(exp(y))",
            "2^3^2",
            "a - b - c",
        ] {
            let e = parse(src).unwrap();
            let round = parse(&e.canonical()).unwrap();
            assert_eq!(e, round, "round-trip failed for {src}");
        }
    }

    #[test]
    fn empty_source_rejected() {
        assert!(matches!(parse("   "), Err(Error::Parse { offset: 1, .. })));
    }
}
