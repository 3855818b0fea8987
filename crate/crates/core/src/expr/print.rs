//! Canonical printer. Output re-parses to the same tree for every tree the
//! parser can produce; simplified trees re-parse to an equal-valued tree.

use std::fmt::{self, Write};

use super::{Expr, Node, Number};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 5;

fn number_level(n: Number) -> u8 {
    match n {
        Number::Rational(r) if !r.is_integer() => PRODUCT,
        _ if n.is_negative() => UNARY,
        _ => ATOM,
    }
}

fn level(e: &Expr) -> u8 {
    match e.node() {
        Node::Constant(c) => number_level(*c),
        Node::Symbol(_) | Node::Apply(..) => ATOM,
        Node::Sum(_) => SUM,
        Node::Product(_) | Node::Quotient(..) => PRODUCT,
        Node::Negate(_) => UNARY,
        Node::Power(..) => 4,
    }
}

fn write_at(out: &mut String, e: &Expr, min_level: u8) {
    if level(e) < min_level {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

/// Splits a term into (is_negative, magnitude) for sign-aware sum printing.
fn split_sign(e: &Expr) -> Option<Expr> {
    match e.node() {
        Node::Negate(inner) => Some(inner.clone()),
        Node::Constant(c) if c.is_negative() => Some(Expr::constant(c.neg())),
        Node::Product(fs) => match fs[0].as_constant() {
            Some(c) if c.is_negative() => {
                let magnitude = c.neg();
                let mut rest: Vec<Expr> = fs[1..].to_vec();
                if !magnitude.is_one() {
                    rest.insert(0, Expr::constant(magnitude));
                }
                Some(if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::raw(Node::Product(rest))
                })
            }
            _ => None,
        },
        _ => None,
    }
}

fn write_exponent(out: &mut String, k: Number) {
    let magnitude = k.abs();
    if k.is_negative() {
        out.push('-');
    }
    match magnitude {
        Number::Rational(r) if !r.is_integer() => {
            let _ = write!(out, "({magnitude})");
        }
        _ => {
            let _ = write!(out, "{magnitude}");
        }
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e.node() {
        Node::Constant(c) => {
            let _ = write!(out, "{c}");
        }
        Node::Symbol(s) => {
            let _ = write!(out, "{s}");
        }
        Node::Sum(terms) => {
            for (k, term) in terms.iter().enumerate() {
                if k == 0 {
                    match term.node() {
                        Node::Negate(inner) => {
                            out.push('-');
                            write_at(out, inner, UNARY);
                        }
                        _ => write_at(out, term, PRODUCT),
                    }
                    continue;
                }
                match split_sign(term) {
                    Some(magnitude) => {
                        out.push_str(" - ");
                        write_at(out, &magnitude, PRODUCT);
                    }
                    None => {
                        out.push_str(" + ");
                        write_at(out, term, PRODUCT);
                    }
                }
            }
        }
        Node::Product(factors) => {
            let mut rest = &factors[..];
            if let Some(c) = factors[0].as_constant() {
                if c == Number::int(-1) {
                    out.push('-');
                    rest = &factors[1..];
                    write_at(out, &rest[0], UNARY);
                    rest = &rest[1..];
                    for f in rest {
                        out.push_str(" * ");
                        write_at(out, f, UNARY);
                    }
                    return;
                }
            }
            // A leading quotient may stay bare: `a / b * c` re-parses as written.
            let first = &rest[0];
            match first.node() {
                Node::Quotient(..) => write_expr(out, first),
                Node::Constant(c) if number_level(*c) == PRODUCT => write_expr(out, first),
                _ => write_at(out, first, UNARY),
            }
            for f in &rest[1..] {
                out.push_str(" * ");
                write_at(out, f, UNARY);
            }
        }
        Node::Quotient(num, den) => {
            match num.node() {
                Node::Sum(_) => write_at(out, num, PRODUCT + 1),
                _ => write_at(out, num, PRODUCT),
            }
            out.push_str(" / ");
            write_at(out, den, UNARY);
        }
        Node::Power(base, k) => {
            write_at(out, base, ATOM);
            out.push('^');
            write_exponent(out, *k);
        }
        Node::Apply(func, arg) => {
            out.push_str(func.name());
            out.push('(');
            write_expr(out, arg);
            out.push(')');
        }
        Node::Negate(inner) => {
            out.push('-');
            write_at(out, inner, UNARY);
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(&mut out, self);
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, simplify};

    fn roundtrip(text: &str) {
        let a = parse(text).unwrap();
        let printed = a.to_string();
        let b = parse(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(a, b, "{text} -> {printed}");
    }

    #[test]
    fn printed_form_reparses_identically() {
        for text in [
            "q1_2^2 / 2",
            "a*b/c*d",
            "a/(b*c)",
            "(a*b)*c",
            "a*(b/c)",
            "-(a + b)",
            "a - (b - c)",
            "a - -b",
            "-x^2",
            "(-x)^2",
            "x^-2",
            "x^(1/2)",
            "x^-(1/2)",
            "2^3^2",
            "(2^3)^2",
            "sin(t)/t",
            "exp(-q1_0^2) * cos(t)",
            "a - b*c + d/e",
            "(a + b)/(c - d)",
            "1.5e-7 * z1",
            "p1_1*z1 - z1^2/2",
            "-a*b",
            "-(a*b)",
            "a / -b",
            "a / b / c",
            "a/(b/c)",
            "q1_0^w",
        ] {
            roundtrip(text);
        }
    }

    #[test]
    fn simplified_trees_print_readably() {
        let e = simplify(&parse("0 - 3*x + (-1)*y").unwrap());
        assert_eq!(e.to_string(), "-3 * x - y");
        let e = simplify(&parse("q1_2^2/2").unwrap());
        assert_eq!(e.to_string(), "1/2 * q1_2^2");
    }

    #[test]
    fn simplified_print_preserves_value() {
        use crate::expr::{evaluate, Binding, JetSymbol};
        let e = simplify(&parse("x*(1/3) - y*(-2/5) - (1/2)").unwrap());
        let again = parse(&e.to_string()).unwrap();
        let b = Binding::from_iter([
            (JetSymbol::parameter("x"), 0.7),
            (JetSymbol::parameter("y"), -1.3),
        ]);
        let (u, v) = (evaluate(&e, &b).unwrap(), evaluate(&again, &b).unwrap());
        assert!((u - v).abs() < 1e-15);
    }
}
