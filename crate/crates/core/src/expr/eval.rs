use std::collections::HashMap;

use super::{Expr, ExprError, Func, JetSymbol, Node, Number};

/// Values for the free symbols of an expression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    values: HashMap<JetSymbol, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, symbol: JetSymbol, value: f64) -> &mut Self {
        self.values.insert(symbol, value);
        self
    }

    pub fn with(mut self, symbol: JetSymbol, value: f64) -> Self {
        self.values.insert(symbol, value);
        self
    }

    pub fn get(&self, symbol: &JetSymbol) -> Option<f64> {
        self.values.get(symbol).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&JetSymbol, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }
}

impl FromIterator<(JetSymbol, f64)> for Binding {
    fn from_iter<I: IntoIterator<Item = (JetSymbol, f64)>>(iter: I) -> Self {
        Binding {
            values: iter.into_iter().collect(),
        }
    }
}

pub(crate) fn func_value(func: Func, x: f64) -> Result<f64, &'static str> {
    Ok(match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Log if x <= 0.0 => return Err("log of non-positive value"),
        Func::Log => x.ln(),
        Func::Sqrt if x < 0.0 => return Err("sqrt of negative value"),
        Func::Sqrt => x.sqrt(),
    })
}

pub(crate) fn pow_value(base: f64, exponent: Number) -> Result<f64, &'static str> {
    if base == 0.0 && exponent.is_negative() {
        return Err("division by zero");
    }
    match exponent.to_i32() {
        Some(k) => Ok(base.powi(k)),
        None => {
            if base < 0.0 {
                Err("negative base with fractional exponent")
            } else {
                Ok(base.powf(exponent.to_f64()))
            }
        }
    }
}

fn domain(reason: &'static str, e: &Expr) -> ExprError {
    ExprError::Domain {
        reason,
        subexpression: e.to_string(),
    }
}

/// Evaluates `e` with IEEE double arithmetic.
pub fn evaluate(e: &Expr, binding: &Binding) -> Result<f64, ExprError> {
    Ok(match e.node() {
        Node::Constant(c) => c.to_f64(),
        Node::Symbol(s) => binding
            .get(s)
            .ok_or_else(|| ExprError::MissingSymbol(s.clone()))?,
        Node::Sum(terms) => {
            let mut acc = 0.0;
            for t in terms {
                acc += evaluate(t, binding)?;
            }
            acc
        }
        Node::Product(factors) => {
            let mut acc = 1.0;
            for f in factors {
                acc *= evaluate(f, binding)?;
            }
            acc
        }
        Node::Power(base, k) => {
            pow_value(evaluate(base, binding)?, *k).map_err(|r| domain(r, e))?
        }
        Node::Quotient(num, den) => {
            let n = evaluate(num, binding)?;
            let d = evaluate(den, binding)?;
            if d == 0.0 {
                return Err(domain("division by zero", e));
            }
            n / d
        }
        Node::Apply(func, arg) => {
            func_value(*func, evaluate(arg, binding)?).map_err(|r| domain(r, e))?
        }
        Node::Negate(arg) => -evaluate(arg, binding)?,
    })
}

/// Assignment of symbols to slots of a dense value vector.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    index: HashMap<JetSymbol, usize>,
    symbols: Vec<JetSymbol>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the slot of `symbol`, allocating one if needed.
    pub fn insert(&mut self, symbol: JetSymbol) -> usize {
        if let Some(&slot) = self.index.get(&symbol) {
            return slot;
        }
        let slot = self.symbols.len();
        self.index.insert(symbol.clone(), slot);
        self.symbols.push(symbol);
        slot
    }

    pub fn slot(&self, symbol: &JetSymbol) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[JetSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Slot(usize),
    Sum(Vec<Op>),
    Product(Vec<Op>),
    Power(Box<Op>, Number, Expr),
    Quotient(Box<Op>, Box<Op>, Expr),
    Apply(Func, Box<Op>, Expr),
    Negate(Box<Op>),
}

/// An expression with symbols resolved to slots, for inner-loop evaluation.
/// Produces exactly the same values and errors as [`evaluate`].
#[derive(Debug, Clone)]
pub struct Compiled {
    root: Op,
}

impl Compiled {
    pub fn new(e: &Expr, table: &SymbolTable) -> Result<Self, ExprError> {
        Ok(Compiled {
            root: compile(e, table)?,
        })
    }

    pub fn eval(&self, slots: &[f64]) -> Result<f64, ExprError> {
        run(&self.root, slots)
    }
}

fn compile(e: &Expr, table: &SymbolTable) -> Result<Op, ExprError> {
    Ok(match e.node() {
        Node::Constant(c) => Op::Const(c.to_f64()),
        Node::Symbol(s) => Op::Slot(
            table
                .slot(s)
                .ok_or_else(|| ExprError::MissingSymbol(s.clone()))?,
        ),
        Node::Sum(xs) => Op::Sum(xs.iter().map(|x| compile(x, table)).collect::<Result<_, _>>()?),
        Node::Product(xs) => {
            Op::Product(xs.iter().map(|x| compile(x, table)).collect::<Result<_, _>>()?)
        }
        Node::Power(b, k) => Op::Power(Box::new(compile(b, table)?), *k, e.clone()),
        Node::Quotient(a, b) => Op::Quotient(
            Box::new(compile(a, table)?),
            Box::new(compile(b, table)?),
            e.clone(),
        ),
        Node::Apply(f, a) => Op::Apply(*f, Box::new(compile(a, table)?), e.clone()),
        Node::Negate(a) => Op::Negate(Box::new(compile(a, table)?)),
    })
}

fn run(op: &Op, slots: &[f64]) -> Result<f64, ExprError> {
    Ok(match op {
        Op::Const(c) => *c,
        Op::Slot(i) => slots[*i],
        Op::Sum(xs) => {
            let mut acc = 0.0;
            for x in xs {
                acc += run(x, slots)?;
            }
            acc
        }
        Op::Product(xs) => {
            let mut acc = 1.0;
            for x in xs {
                acc *= run(x, slots)?;
            }
            acc
        }
        Op::Power(b, k, e) => pow_value(run(b, slots)?, *k).map_err(|r| domain(r, e))?,
        Op::Quotient(a, b, e) => {
            let n = run(a, slots)?;
            let d = run(b, slots)?;
            if d == 0.0 {
                return Err(domain("division by zero", e));
            }
            n / d
        }
        Op::Apply(f, a, e) => func_value(*f, run(a, slots)?).map_err(|r| domain(r, e))?,
        Op::Negate(a) => -run(a, slots)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn evaluates_worked_examples() {
        let e = parse("q1_2^2 / 2").unwrap();
        let b = Binding::new().with(JetSymbol::coordinate(1, 2), 3.0);
        assert_eq!(evaluate(&e, &b).unwrap(), 4.5);

        let t = parse("t").unwrap();
        assert_eq!(evaluate(&t, &Binding::new().with(JetSymbol::Time, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero_names_the_subexpression() {
        let e = parse("sin(t)/t").unwrap();
        let err = evaluate(&e, &Binding::new().with(JetSymbol::Time, 0.0)).unwrap_err();
        assert_eq!(
            err,
            ExprError::Domain {
                reason: "division by zero",
                subexpression: "sin(t) / t".into()
            }
        );
    }

    #[test]
    fn missing_symbol_is_named() {
        let e = parse("q1_0 + w").unwrap();
        let b = Binding::new().with(JetSymbol::coordinate(1, 0), 1.0);
        assert_eq!(
            evaluate(&e, &b),
            Err(ExprError::MissingSymbol(JetSymbol::parameter("w")))
        );
    }

    #[test]
    fn log_and_sqrt_domains() {
        let b = Binding::new().with(JetSymbol::Time, -1.0);
        assert!(matches!(
            evaluate(&parse("log(t)").unwrap(), &b),
            Err(ExprError::Domain { reason: "log of non-positive value", .. })
        ));
        assert!(matches!(
            evaluate(&parse("sqrt(t)").unwrap(), &b),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            evaluate(&parse("t^(1/2)").unwrap(), &b),
            Err(ExprError::Domain { .. })
        ));
    }

    #[test]
    fn compiled_matches_tree_walk() {
        let e = parse("exp(-q1_0^2) * cos(t) / (1 + q1_1^2) - sqrt(w)").unwrap();
        let mut table = SymbolTable::new();
        for s in e.free_symbols() {
            table.insert(s);
        }
        let compiled = Compiled::new(&e, &table).unwrap();
        let values = [0.3, -1.2, 0.7, 2.0];
        let mut binding = Binding::new();
        let mut slots = vec![0.0; table.len()];
        for (k, s) in table.symbols().iter().enumerate() {
            slots[k] = values[k];
            binding.set(s.clone(), values[k]);
        }
        assert_eq!(compiled.eval(&slots).unwrap(), evaluate(&e, &binding).unwrap());
    }

    #[test]
    fn compile_reports_unknown_symbol() {
        let e = parse("q1_0").unwrap();
        assert!(matches!(
            Compiled::new(&e, &SymbolTable::new()),
            Err(ExprError::MissingSymbol(_))
        ));
    }
}
