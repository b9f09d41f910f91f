//! Small expression language for structural functions.
//!
//! Booleans are the rationals 0 and 1; any nonzero value counts as true.
//! Binding, tightest first: `not`, scaling `c*e`, `xor`, `and`, `or`, `==`.
//! `if c then a else b` is an atom and must be parenthesised to nest inside
//! an operator.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Zero};

use super::{parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(Rational),
    Var(String),
    Not(Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Scale(Rational, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expression error at byte {pos}: {message}")]
pub struct ExprError {
    pub pos: usize,
    pub message: String,
}

fn truth(b: bool) -> Rational {
    if b {
        Rational::one()
    } else {
        Rational::zero()
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            at: 0,
            len: src.len(),
        };
        let e = p.expr()?;
        if p.at < p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluate under an assignment; unknown variables are reported by name.
    pub fn eval(&self, env: &BTreeMap<&str, &Rational>) -> Result<Rational, String> {
        let b = |e: &Expr| -> Result<bool, String> { Ok(!e.eval(env)?.is_zero()) };
        Ok(match self {
            Expr::Const(c) => c.clone(),
            Expr::Var(v) => (*env
                .get(v.as_str())
                .ok_or_else(|| format!("unbound variable `{v}`"))?)
            .clone(),
            Expr::Not(e) => truth(!b(e)?),
            Expr::Xor(l, r) => truth(b(l)? != b(r)?),
            Expr::And(l, r) => truth(b(l)? && b(r)?),
            Expr::Or(l, r) => truth(b(l)? || b(r)?),
            Expr::Eq(l, r) => truth(l.eval(env)? == r.eval(env)?),
            Expr::Ite(c, t, e) => {
                if b(c)? {
                    t.eval(env)?
                } else {
                    e.eval(env)?
                }
            }
            Expr::Scale(c, e) => c * e.eval(env)?,
        })
    }

    pub fn variables(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            Expr::Not(e) | Expr::Scale(_, e) => e.variables(out),
            Expr::Xor(l, r) | Expr::And(l, r) | Expr::Or(l, r) | Expr::Eq(l, r) => {
                l.variables(out);
                r.variables(out);
            }
            Expr::Ite(c, t, e) => {
                c.variables(out);
                t.variables(out);
                e.variables(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Not(e) => write!(f, "not {}", Wrapped(e)),
            Expr::Xor(l, r) => write!(f, "{} xor {}", Wrapped(l), Wrapped(r)),
            Expr::And(l, r) => write!(f, "{} and {}", Wrapped(l), Wrapped(r)),
            Expr::Or(l, r) => write!(f, "{} or {}", Wrapped(l), Wrapped(r)),
            Expr::Eq(l, r) => write!(f, "{} == {}", Wrapped(l), Wrapped(r)),
            Expr::Ite(c, t, e) => write!(f, "if {c} then {t} else {e}"),
            Expr::Scale(c, e) => write!(f, "{c}*{}", Wrapped(e)),
        }
    }
}

/// Parenthesises anything that is not an atom so printing never depends on
/// precedence.
struct Wrapped<'a>(&'a Expr);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Var(_) => write!(f, "{}", self.0),
            Expr::Const(c) if *c >= Rational::zero() => write!(f, "{c}"),
            e => write!(f, "({e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Not,
    Xor,
    And,
    Or,
    Eq,
    Star,
    LParen,
    RParen,
    If,
    Then,
    Else,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '!' | '¬' | '~' => Some(Tok::Not),
            '^' | '⊕' => Some(Tok::Xor),
            '&' | '∧' => Some(Tok::And),
            '|' | '∨' => Some(Tok::Or),
            '*' => Some(Tok::Star),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push((pos, t));
            i += 1;
            continue;
        }
        if c == '=' {
            i += 1;
            if i < chars.len() && chars[i].1 == '=' {
                i += 1;
            }
            out.push((pos, Tok::Eq));
            continue;
        }
        if c.is_ascii_digit() || c == '-' || c == '.' {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].1.is_ascii_digit() || matches!(chars[i].1, '.' | '/'))
            {
                i += 1;
            }
            let end = chars.get(i).map_or(src.len(), |p| p.0);
            let text = &src[pos..end];
            let n = parse_rational(text).ok_or(ExprError {
                pos: chars[start].0,
                message: format!("bad number `{text}`"),
            })?;
            out.push((pos, Tok::Num(n)));
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            i += 1;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = chars.get(i).map_or(src.len(), |p| p.0);
            let word = &src[pos..end];
            let tok = match word {
                "not" => Tok::Not,
                "xor" => Tok::Xor,
                "and" => Tok::And,
                "or" => Tok::Or,
                "if" => Tok::If,
                "then" => Tok::Then,
                "else" => Tok::Else,
                _ => Tok::Ident(word.to_string()),
            };
            out.push((pos, tok));
            continue;
        }
        return Err(ExprError {
            pos,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            pos: self.tokens.get(self.at).map_or(self.len, |t| t.0),
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.1)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), ExprError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.or()?;
        while self.eat(&Tok::Eq) {
            let r = self.or()?;
            l = Expr::Eq(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn or(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.and()?;
        while self.eat(&Tok::Or) {
            let r = self.and()?;
            l = Expr::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.xor()?;
        while self.eat(&Tok::And) {
            let r = self.xor()?;
            l = Expr::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn xor(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.unary()?;
        while self.eat(&Tok::Xor) {
            let r = self.unary()?;
            l = Expr::Xor(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(&Tok::Not) {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if let Some(Tok::Num(n)) = self.peek().cloned() {
            if self.tokens.get(self.at + 1).map(|t| &t.1) == Some(&Tok::Star) {
                self.at += 2;
                return Ok(Expr::Scale(n, Box::new(self.unary()?)));
            }
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        self.at += 1;
        match tok {
            Tok::Num(n) => Ok(Expr::Const(n)),
            Tok::Ident(v) => Ok(Expr::Var(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::If => {
                let c = self.expr()?;
                self.expect(&Tok::Then, "`then`")?;
                let t = self.expr()?;
                self.expect(&Tok::Else, "`else`")?;
                let e = self.expr()?;
                Ok(Expr::Ite(Box::new(c), Box::new(t), Box::new(e)))
            }
            _ => {
                self.at -= 1;
                Err(self.error("expected a value"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn eval(src: &str, vars: &[(&str, &str)]) -> Rational {
        let values: Vec<(String, Rational)> =
            vars.iter().map(|(k, v)| (k.to_string(), r(v))).collect();
        let env: BTreeMap<&str, &Rational> = values.iter().map(|(k, v)| (k.as_str(), v)).collect();
        Expr::parse(src).unwrap().eval(&env).unwrap()
    }

    #[test]
    fn not_binds_tighter_than_xor_and_xor_tighter_than_and() {
        // (¬H ⊕ X2) ∧ Z with H=0, X2=1, Z=1 is 0; ¬(H ⊕ (X2 ∧ Z)) would be 0 too,
        // so pick H=1, X2=1, Z=1: (0 ⊕ 1) ∧ 1 = 1.
        assert_eq!(
            eval("¬H ⊕ X2 ∧ Z", &[("H", "1"), ("X2", "1"), ("Z", "1")]),
            r("1")
        );
        assert_eq!(
            eval("not H xor X2 and Z", &[("H", "1"), ("X2", "1"), ("Z", "0")]),
            r("0")
        );
        let parsed = Expr::parse("¬H ⊕ X2 ∧ Z").unwrap();
        let explicit = Expr::parse("((not H) xor X2) and Z").unwrap();
        assert_eq!(parsed, explicit);
    }

    #[test]
    fn scaling_and_decimals() {
        assert_eq!(eval("0.5*(H xor X1)", &[("H", "1"), ("X1", "0")]), r("1/2"));
        assert_eq!(eval("-0.1", &[]), r("-1/10"));
        assert_eq!(eval("if A == 2 then 10 else -10", &[("A", "2")]), r("10"));
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "¬H ⊕ X2 ∧ Z",
            "0.5*(H xor X1)",
            "not X1 xor U",
            "if A == 1 then -1/10 else 3 or B",
        ] {
            let e = Expr::parse(src).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
    }

    #[test]
    fn errors_carry_positions() {
        let err = Expr::parse("A and").unwrap_err();
        assert_eq!(err.pos, 5);
        assert!(Expr::parse("A $ B").is_err());
        assert!(Expr::parse("(A").is_err());
    }
}
