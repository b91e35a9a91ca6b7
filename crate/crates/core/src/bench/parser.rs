//! Recursive-descent parser for benchmark target strings.
//!
//! Grammar (loosest-binding first): `+ -`, `* /`, unary `-`, `^`
//! (right-associative), atoms. Atoms are numbers, variables `x1..xm`,
//! `pi`, function calls `sin cos exp sqrt log ln abs`, and parenthesized
//! expressions.

use thiserror::Error;

use crate::expr::{BinOp, Expr, UnOp};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("unexpected character {0:?} at byte {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdent(String),
    #[error("malformed number {0:?}")]
    BadNumber(String),
    #[error("trailing input at token {0:?}")]
    TrailingInput(String),
}

#[derive(Clone, Debug, PartialEq)]
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

fn lex(s: &str) -> Result<Vec<Tok>, ParseError> {
    let b: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' | '−' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' | '·' | '×' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' | '÷' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == '.') {
                    i += 1;
                }
                // exponent part
                if i < b.len() && (b[i] == 'e' || b[i] == 'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == '+' || b[j] == '-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = b[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| ParseError::BadNumber(text.clone()))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(b[start..i].iter().collect()));
            }
            other => return Err(ParseError::UnexpectedChar(other, i)),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ParseError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        let got = self.next()?;
        if got == t {
            Ok(())
        } else {
            Err(ParseError::UnexpectedToken(format!("{got:?}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Bin(BinOp::Mul, Box::new(Expr::Lit(-1.0)), Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            // right-associative; exponent may itself be a unary minus chain
            let exp = self.unary_power()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    // exponent position: allows -2, 0.5, (x+1), sin(x)^2 etc.
    fn unary_power(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            let inner = self.unary_power()?;
            return Ok(Expr::Bin(BinOp::Mul, Box::new(Expr::Lit(-1.0)), Box::new(inner)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.next()? {
            Tok::Num(v) => Ok(Expr::Lit(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(&name),
            other => Err(ParseError::UnexpectedToken(format!("{other:?}"))),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr, ParseError> {
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 {
                    return Ok(Expr::Var(k - 1));
                }
            }
        }
        if name == "pi" {
            return Ok(Expr::Lit(std::f64::consts::PI));
        }
        if name == "e" {
            return Ok(Expr::Lit(std::f64::consts::E));
        }
        let op = match name {
            "sin" => UnOp::Sin,
            "cos" => UnOp::Cos,
            "exp" => UnOp::Exp,
            "sqrt" => UnOp::Sqrt,
            "log" | "ln" => UnOp::Log,
            "abs" => UnOp::Abs,
            _ => return Err(ParseError::UnknownIdent(name.to_string())),
        };
        self.expect(Tok::LParen)?;
        let arg = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(Expr::Un(op, Box::new(arg)))
    }
}

/// Parses an infix target string into a fully bound expression tree
/// (no constant placeholders).
pub fn parse_infix(s: &str) -> Result<Expr, ParseError> {
    let toks = lex(s)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::TrailingInput(format!("{t:?}")));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate;

    fn eval1(s: &str, x: f64) -> f64 {
        let e = parse_infix(s).unwrap();
        evaluate(&e, &[vec![x]], &[]).unwrap().unwrap()[0]
    }

    fn eval2(s: &str, x1: f64, x2: f64) -> f64 {
        let e = parse_infix(s).unwrap();
        evaluate(&e, &[vec![x1, x2]], &[]).unwrap().unwrap()[0]
    }

    #[test]
    fn polynomial() {
        let v = eval1("x1^3 + x1^2 + x1", 2.0);
        assert!((v - 14.0).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert!((eval1("-x1^2", 3.0) + 9.0).abs() < 1e-12); // -(x^2)
        assert!((eval1("2 - -3 * x1", 1.0) - 5.0).abs() < 1e-12);
        assert!((eval1("2^-1", 0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn right_assoc_pow() {
        // 2^(3^2) = 512, not (2^3)^2 = 64
        assert!((eval1("2^3^2", 0.0) - 512.0).abs() < 1e-9);
    }

    #[test]
    fn functions_and_pi() {
        let v = eval1("sin(pi * x1)", 0.5);
        assert!((v - 1.0).abs() < 1e-12);
        let v = eval1("log(x1) + sqrt(x1)", 4.0);
        assert!((v - (4f64.ln() + 2.0)).abs() < 1e-12);
        let v = eval1("abs(-x1)", 3.5);
        assert!((v - 3.5).abs() < 1e-12);
    }

    #[test]
    fn two_variables() {
        let v = eval2("x1 * x2 + sin((x1 - 1) * (x2 - 1))", 1.0, 2.0);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(parse_infix("x1 +").is_err());
        assert!(parse_infix("foo(x1)").is_err());
        assert!(parse_infix("x1 x2").is_err());
        assert!(parse_infix("(x1").is_err());
    }
}
