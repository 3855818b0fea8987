//! Symbolic expressions over jet-bundle coordinates.
//!
//! An [`Expr`] is an immutable, reference-counted tree. The smart constructors
//! (`add_all`, `mul_all`, the operator impls, ...) perform the local
//! identities of [`simplify`] as they build, so derivative results never carry
//! `x + 0` or `1 * x` debris. The parser builds trees verbatim instead, so the
//! printed form of a parsed expression re-parses to the same tree.

mod diff;
mod eval;
mod number;
mod parse;
mod print;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

pub use diff::{partial, total_time_derivative};
pub(crate) use diff::total_time_derivative_n;
pub use eval::{evaluate, Binding, Compiled, SymbolTable};
pub use number::Number;
pub use parse::parse;

/// A coordinate of the jet bundle, the contact bundle, or a named constant.
///
/// Indices are 1-based as in the text syntax; derivative orders start at 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JetSymbol {
    Time,
    /// `q<index>_<order>`: the `order`-th time derivative of configuration `index`.
    Coordinate { index: u32, order: u32 },
    /// `z<index>`: a control (velocity-like) coordinate of a constraint submanifold.
    Control(u32),
    /// `p<index>_<order>`: momentum conjugate to `q<index>_<order>`.
    Momentum { index: u32, order: u32 },
    Parameter(String),
}

impl JetSymbol {
    pub fn coordinate(index: u32, order: u32) -> Self {
        assert!(index >= 1, "coordinate indices are 1-based");
        JetSymbol::Coordinate { index, order }
    }

    pub fn control(index: u32) -> Self {
        assert!(index >= 1, "control indices are 1-based");
        JetSymbol::Control(index)
    }

    pub fn momentum(index: u32, order: u32) -> Self {
        assert!(index >= 1, "momentum indices are 1-based");
        JetSymbol::Momentum { index, order }
    }

    pub fn parameter(name: impl Into<String>) -> Self {
        JetSymbol::Parameter(name.into())
    }
}

impl fmt::Display for JetSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JetSymbol::Time => f.write_str("t"),
            JetSymbol::Coordinate { index, order } => write!(f, "q{index}_{order}"),
            JetSymbol::Control(index) => write!(f, "z{index}"),
            JetSymbol::Momentum { index, order } => write!(f, "p{index}_{order}"),
            JetSymbol::Parameter(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(Number),
    Symbol(JetSymbol),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Expr, Number),
    Quotient(Expr, Expr),
    Apply(Func, Expr),
    Negate(Expr),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("malformed symbol `{token}` at byte {offset}: {reason}")]
    MalformedSymbol {
        offset: usize,
        token: String,
        reason: &'static str,
    },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("{0} needs at least two operands")]
    TooFewOperands(&'static str),
    #[error("quotient with a constant zero denominator")]
    ZeroDenominator,
    #[error("no value bound for symbol `{0}`")]
    MissingSymbol(JetSymbol),
    #[error("domain error ({reason}) in `{subexpression}`")]
    Domain {
        reason: &'static str,
        subexpression: String,
    },
    #[error("`{0}` is not a jet coordinate; total time derivative undefined")]
    NotJetCoordinate(JetSymbol),
}

/// Immutable symbolic expression. Cloning is a reference-count bump.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    /// Wraps a node after checking the structural invariants: n-ary nodes have
    /// at least two operands and no quotient has a constant-zero denominator.
    pub fn from_node(node: Node) -> Result<Self, ExprError> {
        match &node {
            Node::Sum(terms) if terms.len() < 2 => return Err(ExprError::TooFewOperands("sum")),
            Node::Product(factors) if factors.len() < 2 => {
                return Err(ExprError::TooFewOperands("product"))
            }
            Node::Quotient(_, den) if den.as_constant().is_some_and(Number::is_zero) => {
                return Err(ExprError::ZeroDenominator)
            }
            _ => {}
        }
        Ok(Expr(Arc::new(node)))
    }

    pub(crate) fn raw(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: impl Into<Number>) -> Self {
        Expr::raw(Node::Constant(value.into()))
    }

    pub fn zero() -> Self {
        Expr::constant(Number::ZERO)
    }

    pub fn one() -> Self {
        Expr::constant(Number::ONE)
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Expr::constant(Number::ratio(num, den))
    }

    pub fn symbol(symbol: JetSymbol) -> Self {
        Expr::raw(Node::Symbol(symbol))
    }

    pub fn time() -> Self {
        Expr::symbol(JetSymbol::Time)
    }

    pub fn coord(index: u32, order: u32) -> Self {
        Expr::symbol(JetSymbol::coordinate(index, order))
    }

    pub fn control(index: u32) -> Self {
        Expr::symbol(JetSymbol::control(index))
    }

    pub fn momentum(index: u32, order: u32) -> Self {
        Expr::symbol(JetSymbol::momentum(index, order))
    }

    pub fn param(name: impl Into<String>) -> Self {
        Expr::symbol(JetSymbol::parameter(name))
    }

    pub fn as_constant(&self) -> Option<Number> {
        match self.node() {
            Node::Constant(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(Number::is_one)
    }

    /// Sum with constant folding, flattening and removal of zero terms.
    pub fn add_all<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        fn push(out: &mut Vec<Expr>, constant: &mut Number, term: Expr) {
            match term.node() {
                Node::Constant(c) => *constant = constant.add(*c),
                Node::Sum(inner) => {
                    for t in inner {
                        push(out, constant, t.clone());
                    }
                }
                _ => out.push(term),
            }
        }
        let mut out = Vec::new();
        let mut constant = Number::ZERO;
        for term in terms {
            push(&mut out, &mut constant, term);
        }
        if !constant.is_zero() {
            out.push(Expr::constant(constant));
        }
        match out.len() {
            0 => Expr::constant(constant),
            1 => out.pop().unwrap(),
            _ => Expr::raw(Node::Sum(out)),
        }
    }

    /// Product with constant folding, flattening, `x*1 -> x` and `x*0 -> 0`.
    /// Negations are pulled into the constant factor.
    pub fn mul_all<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        fn push(out: &mut Vec<Expr>, constant: &mut Number, factor: Expr) {
            match factor.node() {
                Node::Constant(c) => *constant = constant.mul(*c),
                Node::Product(inner) => {
                    for f in inner {
                        push(out, constant, f.clone());
                    }
                }
                Node::Negate(inner) => {
                    *constant = constant.neg();
                    push(out, constant, inner.clone());
                }
                _ => out.push(factor),
            }
        }
        let mut out = Vec::new();
        let mut constant = Number::ONE;
        for factor in factors {
            push(&mut out, &mut constant, factor);
        }
        if constant.is_zero() {
            return Expr::zero();
        }
        if out.is_empty() {
            return Expr::constant(constant);
        }
        if constant.is_one() {
            return if out.len() == 1 {
                out.pop().unwrap()
            } else {
                Expr::raw(Node::Product(out))
            };
        }
        if out.len() == 1 && constant == Number::int(-1) {
            return Expr::raw(Node::Negate(out.pop().unwrap()));
        }
        out.insert(0, Expr::constant(constant));
        Expr::raw(Node::Product(out))
    }

    pub fn pow(&self, exponent: impl Into<Number>) -> Expr {
        let exponent = exponent.into();
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return self.clone();
        }
        if let Some(base) = self.as_constant() {
            if let Some(value) = base.pow(exponent) {
                return Expr::constant(value);
            }
        }
        Expr::raw(Node::Power(self.clone(), exponent))
    }

    /// Quotient. Fails only for a constant zero denominator.
    pub fn checked_div(&self, den: &Expr) -> Result<Expr, ExprError> {
        if let Some(d) = den.as_constant() {
            if d.is_zero() {
                return Err(ExprError::ZeroDenominator);
            }
            if d.is_one() {
                return Ok(self.clone());
            }
            if let Some(n) = self.as_constant() {
                if let (Number::Rational(_), Number::Rational(_)) = (n, d) {
                    return Ok(Expr::constant(n.mul(d.recip().unwrap())));
                }
                return Ok(Expr::constant(Number::Real(n.to_f64() / d.to_f64())));
            }
            if let Number::Rational(_) = d {
                return Ok(Expr::mul_all([Expr::constant(d.recip().unwrap()), self.clone()]));
            }
        }
        if self.is_zero() {
            return Ok(Expr::zero());
        }
        Ok(Expr::raw(Node::Quotient(self.clone(), den.clone())))
    }

    pub fn apply(func: Func, arg: Expr) -> Expr {
        if let Some(c) = arg.as_constant() {
            if let Some(folded) = fold_func(func, c) {
                return Expr::constant(folded);
            }
        }
        Expr::raw(Node::Apply(func, arg))
    }

    pub fn sin(&self) -> Expr {
        Expr::apply(Func::Sin, self.clone())
    }

    pub fn cos(&self) -> Expr {
        Expr::apply(Func::Cos, self.clone())
    }

    pub fn exp(&self) -> Expr {
        Expr::apply(Func::Exp, self.clone())
    }

    pub fn log(&self) -> Expr {
        Expr::apply(Func::Log, self.clone())
    }

    pub fn sqrt(&self) -> Expr {
        Expr::apply(Func::Sqrt, self.clone())
    }

    /// Replaces symbols by expressions, rebuilding through the smart constructors.
    pub fn substitute(&self, map: &HashMap<JetSymbol, Expr>) -> Expr {
        match self.node() {
            Node::Symbol(s) => map.get(s).cloned().unwrap_or_else(|| self.clone()),
            _ => self.rebuild(&mut |e| e.substitute(map)),
        }
    }

    /// Rebuilds this node from transformed children using the smart
    /// constructors. Leaves are returned unchanged.
    fn rebuild(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Expr {
        match self.node() {
            Node::Constant(_) | Node::Symbol(_) => self.clone(),
            Node::Sum(terms) => Expr::add_all(terms.iter().map(|t| f(t))),
            Node::Product(factors) => Expr::mul_all(factors.iter().map(|x| f(x))),
            Node::Power(base, k) => f(base).pow(*k),
            Node::Quotient(num, den) => {
                let den_new = f(den);
                let num_new = f(num);
                // A denominator that folds to zero keeps its original form so
                // the quotient still reports a domain error on evaluation.
                num_new
                    .checked_div(&den_new)
                    .unwrap_or_else(|_| Expr::raw(Node::Quotient(num_new, den.clone())))
            }
            Node::Apply(func, arg) => Expr::apply(*func, f(arg)),
            Node::Negate(arg) => -f(arg),
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<JetSymbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<JetSymbol>) {
        match self.node() {
            Node::Constant(_) => {}
            Node::Symbol(s) => {
                out.insert(s.clone());
            }
            Node::Sum(xs) | Node::Product(xs) => xs.iter().for_each(|x| x.collect_symbols(out)),
            Node::Power(b, _) => b.collect_symbols(out),
            Node::Quotient(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
            Node::Apply(_, a) | Node::Negate(a) => a.collect_symbols(out),
        }
    }

    pub fn contains(&self, symbol: &JetSymbol) -> bool {
        match self.node() {
            Node::Constant(_) => false,
            Node::Symbol(s) => s == symbol,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().any(|x| x.contains(symbol)),
            Node::Power(b, _) => b.contains(symbol),
            Node::Quotient(a, b) => a.contains(symbol) || b.contains(symbol),
            Node::Apply(_, a) | Node::Negate(a) => a.contains(symbol),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Constant(_) | Node::Symbol(_) => 0,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().map(Expr::size).sum(),
            Node::Power(b, _) => b.size(),
            Node::Quotient(a, b) => a.size() + b.size(),
            Node::Apply(_, a) | Node::Negate(a) => a.size(),
        }
    }
}

fn fold_func(func: Func, c: Number) -> Option<Number> {
    if c.is_zero() {
        match func {
            Func::Sin | Func::Sqrt => return Some(Number::ZERO),
            Func::Cos | Func::Exp => return Some(Number::ONE),
            Func::Log => return None,
        }
    }
    if c.is_one() {
        match func {
            Func::Log => return Some(Number::ZERO),
            Func::Sqrt => return Some(Number::ONE),
            _ => {}
        }
    }
    let value = eval::func_value(func, c.to_f64()).ok()?;
    value.is_finite().then_some(Number::Real(value))
}

/// Bottom-up constant folding and identity elimination
/// (`x+0 -> x`, `x*1 -> x`, `x*0 -> 0`, `x^1 -> x`), with flattening of nested
/// sums and products. No algebraic rewriting beyond that.
pub fn simplify(e: &Expr) -> Expr {
    e.rebuild(&mut simplify)
}

/// Determinant by cofactor expansion along the first row.
pub fn determinant(matrix: &[Vec<Expr>]) -> Expr {
    let n = matrix.len();
    match n {
        0 => return Expr::one(),
        1 => return matrix[0][0].clone(),
        _ => {}
    }
    let mut terms = Vec::with_capacity(n);
    for col in 0..n {
        if matrix[0][col].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Expr>> = matrix[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != col)
                    .map(|(_, x)| x.clone())
                    .collect()
            })
            .collect();
        let term = Expr::mul_all([matrix[0][col].clone(), determinant(&minor)]);
        terms.push(if col % 2 == 1 { -term } else { term });
    }
    Expr::add_all(terms)
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add_all([self, rhs])
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::add_all([self, -rhs])
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul_all([self, rhs])
    }
}

/// Panics on a constant zero denominator; use [`Expr::checked_div`] for input
/// that is not known to be safe.
impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        self.checked_div(&rhs).expect("division by constant zero")
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul_all([Expr::constant(Number::int(-1)), self])
    }
}

macro_rules! ref_ops {
    ($($trait:ident $method:ident),*) => {$(
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                ops::$trait::$method(self.clone(), rhs.clone())
            }
        }
    )*};
}
ref_ops!(Add add, Sub sub, Mul mul, Div div);

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

impl From<JetSymbol> for Expr {
    fn from(symbol: JetSymbol) -> Self {
        Expr::symbol(symbol)
    }
}
