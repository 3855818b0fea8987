//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := NUMBER | SYMBOL | IDENT "(" expr ")" | IDENT | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and is right
//! associative. Exponents must fold to constants; anything else is rewritten
//! as `exp(y * log(x))`.

use super::{simplify, Expr, ExprError, Func, JetSymbol, Node, Number};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(Number),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, offset: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let mut real = false;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                real = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                real = true;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                let digits = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if digits == i {
                    return Err(syntax(start, "exponent without digits in number"));
                }
            }
            let literal = &text[start..i];
            let number = if real {
                Number::Real(literal.parse().map_err(|_| syntax(start, "bad number"))?)
            } else {
                match literal.parse::<i64>() {
                    Ok(k) => Number::int(k),
                    Err(_) => Number::Real(literal.parse().map_err(|_| syntax(start, "bad number"))?),
                }
            };
            out.push(Token {
                tok: Tok::Number(number),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let ch = text[start..].chars().next().unwrap();
        return Err(syntax(start, format!("unexpected character `{ch}`")));
    }
    out.push(Token {
        tok: Tok::Eof,
        offset: text.len(),
    });
    Ok(out)
}

fn parse_index(digits: &str, offset: usize, token: &str) -> Result<u32, ExprError> {
    digits.parse().map_err(|_| ExprError::MalformedSymbol {
        offset,
        token: token.to_string(),
        reason: "index out of range",
    })
}

/// Classifies an identifier token: jet symbol, parameter, or an error for
/// tokens that look like jet symbols but are malformed.
fn classify(name: &str, offset: usize) -> Result<JetSymbol, ExprError> {
    let malformed = |reason| ExprError::MalformedSymbol {
        offset,
        token: name.to_string(),
        reason,
    };
    if name == "t" {
        return Ok(JetSymbol::Time);
    }
    let bytes = name.as_bytes();
    let looks_indexed = bytes.len() > 1 && bytes[1].is_ascii_digit();
    match bytes[0] {
        b'q' | b'p' if looks_indexed => {
            let rest = &name[1..];
            let (index, order) = rest
                .split_once('_')
                .ok_or_else(|| malformed("expected `<index>_<order>`"))?;
            if index.is_empty()
                || order.is_empty()
                || !index.bytes().all(|b| b.is_ascii_digit())
                || !order.bytes().all(|b| b.is_ascii_digit())
            {
                return Err(malformed("expected `<index>_<order>` with decimal digits"));
            }
            let index = parse_index(index, offset, name)?;
            let order = parse_index(order, offset, name)?;
            if index == 0 {
                return Err(malformed("indices are 1-based"));
            }
            Ok(if bytes[0] == b'q' {
                JetSymbol::Coordinate { index, order }
            } else {
                JetSymbol::Momentum { index, order }
            })
        }
        b'z' if looks_indexed => {
            let rest = &name[1..];
            if !rest.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed("expected `z<index>` with decimal digits"));
            }
            let index = parse_index(rest, offset, name)?;
            if index == 0 {
                return Err(malformed("indices are 1-based"));
            }
            Ok(JetSymbol::Control(index))
        }
        _ => Ok(JetSymbol::Parameter(name.to_string())),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(Expr::raw(Node::Negate(t)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::raw(Node::Sum(terms))
        })
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        // Consecutive `*` collect into one product; `/` closes it.
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    factors.push(self.unary()?);
                }
                Tok::Slash => {
                    let slash = self.bump();
                    let den = self.unary()?;
                    if den.is_zero() {
                        return Err(syntax(slash.offset, "division by constant zero"));
                    }
                    let num = close_product(std::mem::take(&mut factors));
                    factors.push(Expr::raw(Node::Quotient(num, den)));
                }
                _ => break,
            }
        }
        Ok(close_product(factors))
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::raw(Node::Negate(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let exponent = self.unary()?;
        let folded = simplify(&exponent);
        Ok(match folded.as_constant() {
            Some(k) => Expr::raw(Node::Power(base, k)),
            None => Expr::raw(Node::Apply(
                Func::Exp,
                Expr::raw(Node::Product(vec![exponent, Expr::raw(Node::Apply(Func::Log, base))])),
            )),
        })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let token = self.bump();
        match token.tok {
            Tok::Number(n) => Ok(Expr::raw(Node::Constant(n))),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        offset: token.offset,
                        name: name.clone(),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr::raw(Node::Apply(func, arg)));
                }
                Ok(Expr::raw(Node::Symbol(classify(&name, token.offset)?)))
            }
            Tok::Eof => Err(syntax(token.offset, "unexpected end of input")),
            other => Err(syntax(token.offset, format!("unexpected token {}", describe(&other)))),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let token = self.bump();
        match token.tok {
            Tok::RParen => Ok(()),
            other => Err(syntax(token.offset, format!("expected `)`, found {}", describe(&other)))),
        }
    }
}

fn close_product(mut factors: Vec<Expr>) -> Expr {
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::raw(Node::Product(factors))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Number(n) => format!("number `{n}`"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses `text` into an expression tree, structurally as written.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let e = parser.expr()?;
    let rest = parser.peek();
    if rest.tok != Tok::Eof {
        return Err(syntax(rest.offset, format!("unexpected token {}", describe(&rest.tok))));
    }
    Ok(e)
}
