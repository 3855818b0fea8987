use super::{Expr, ExprError, Func, JetSymbol, Node, Number};

/// Partial derivative with respect to `s`, every other symbol held fixed.
pub fn partial(e: &Expr, s: &JetSymbol) -> Expr {
    if !e.contains(s) {
        return Expr::zero();
    }
    match e.node() {
        Node::Constant(_) => Expr::zero(),
        Node::Symbol(x) => {
            if x == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Sum(terms) => Expr::add_all(terms.iter().map(|t| partial(t, s))),
        Node::Product(factors) => {
            let mut terms = Vec::new();
            for (k, f) in factors.iter().enumerate() {
                let df = partial(f, s);
                if df.is_zero() {
                    continue;
                }
                let mut fs = factors.clone();
                fs[k] = df;
                terms.push(Expr::mul_all(fs));
            }
            Expr::add_all(terms)
        }
        Node::Power(base, k) => Expr::mul_all([
            Expr::constant(*k),
            base.pow(k.sub(Number::ONE)),
            partial(base, s),
        ]),
        Node::Quotient(num, den) => {
            let dn = partial(num, s);
            let dd = partial(den, s);
            if dd.is_zero() {
                return &dn / den;
            }
            let top = &dn * den - num * &dd;
            &top / &den.pow(2)
        }
        Node::Apply(func, arg) => {
            let outer = match func {
                Func::Sin => arg.cos(),
                Func::Cos => -arg.sin(),
                Func::Exp => arg.exp(),
                Func::Log => Expr::one() / arg.clone(),
                Func::Sqrt => Expr::rational(1, 2) * (Expr::one() / arg.sqrt()),
            };
            outer * partial(arg, s)
        }
        Node::Negate(arg) => -partial(arg, s),
    }
}

/// Total time derivative along prolonged curves:
/// `D_t e = de/dt + sum over q<i>_<a> in e of q<i>_<a+1> * de/dq<i>_<a>`.
///
/// Defined only on jet coordinates; momenta and controls are rejected.
pub fn total_time_derivative(e: &Expr) -> Result<Expr, ExprError> {
    let symbols = e.free_symbols();
    let mut terms = vec![partial(e, &JetSymbol::Time)];
    for symbol in &symbols {
        match symbol {
            JetSymbol::Coordinate { index, order } => {
                let d = partial(e, symbol);
                terms.push(Expr::coord(*index, order + 1) * d);
            }
            JetSymbol::Momentum { .. } | JetSymbol::Control(_) => {
                return Err(ExprError::NotJetCoordinate(symbol.clone()))
            }
            JetSymbol::Time | JetSymbol::Parameter(_) => {}
        }
    }
    Ok(Expr::add_all(terms))
}

/// `D_t` applied `times` times.
pub(crate) fn total_time_derivative_n(e: &Expr, times: usize) -> Result<Expr, ExprError> {
    let mut out = e.clone();
    for _ in 0..times {
        out = total_time_derivative(&out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, Binding};

    fn p(text: &str) -> Expr {
        parse(text).unwrap()
    }

    #[test]
    fn power_rule() {
        let d = partial(&p("q1_2^2/2"), &JetSymbol::coordinate(1, 2));
        assert_eq!(d, Expr::coord(1, 2));
    }

    #[test]
    fn jet_symbols_are_independent() {
        let d = partial(&p("p1_0*q1_1"), &JetSymbol::coordinate(1, 0));
        assert!(d.is_zero());
    }

    #[test]
    fn pontryagin_stationarity_of_top_control() {
        let d = partial(&p("p1_1*z1 - z1^2/2"), &JetSymbol::control(1));
        let b = Binding::from_iter([(JetSymbol::momentum(1, 1), 3.0), (JetSymbol::control(1), 1.25)]);
        assert_eq!(evaluate(&d, &b).unwrap(), 3.0 - 1.25);
        assert_eq!(d.to_string(), "p1_1 - z1");
    }

    #[test]
    fn prolongation() {
        assert_eq!(total_time_derivative(&p("q1_2")).unwrap(), Expr::coord(1, 3));
        let dl = partial(&p("q1_2^2/2"), &JetSymbol::coordinate(1, 2));
        assert_eq!(total_time_derivative(&dl).unwrap(), Expr::coord(1, 3));
    }

    #[test]
    fn product_rule_with_time() {
        let d = total_time_derivative(&p("t*q1_0")).unwrap();
        let b = Binding::from_iter([
            (JetSymbol::Time, 2.0),
            (JetSymbol::coordinate(1, 0), 3.0),
            (JetSymbol::coordinate(1, 1), 5.0),
        ]);
        assert_eq!(evaluate(&d, &b).unwrap(), 3.0 + 2.0 * 5.0);
    }

    #[test]
    fn rejects_non_jet_symbols() {
        assert_eq!(
            total_time_derivative(&p("p1_0 * q1_1")),
            Err(ExprError::NotJetCoordinate(JetSymbol::momentum(1, 0)))
        );
        assert!(total_time_derivative(&p("z1")).is_err());
    }

    #[test]
    fn parameters_are_constant_in_time() {
        let d = total_time_derivative(&p("w^2 * q1_0")).unwrap();
        assert_eq!(d.free_symbols().len(), 2);
        assert!(d.contains(&JetSymbol::coordinate(1, 1)));
    }

    #[test]
    fn function_derivatives() {
        let x = JetSymbol::parameter("x");
        let b = Binding::from_iter([(x.clone(), 0.7)]);
        let cases = [
            ("sin(x)", 0.7f64.cos()),
            ("cos(x)", -0.7f64.sin()),
            ("exp(2*x)", 2.0 * 1.4f64.exp()),
            ("log(x)", 1.0 / 0.7),
            ("sqrt(x)", 0.5 / 0.7f64.sqrt()),
            ("1/x", -1.0 / 0.49),
            ("x^(3/2)", 1.5 * 0.7f64.sqrt()),
        ];
        for (text, expected) in cases {
            let d = partial(&p(text), &x);
            let v = evaluate(&d, &b).unwrap();
            assert!((v - expected).abs() < 1e-14, "{text}: {v} vs {expected}");
        }
    }

    #[test]
    fn dt_raises_order_by_one() {
        let d = total_time_derivative_n(&p("q1_1^3"), 2).unwrap();
        let max_order = d
            .free_symbols()
            .into_iter()
            .filter_map(|s| match s {
                JetSymbol::Coordinate { order, .. } => Some(order),
                _ => None,
            })
            .max();
        assert_eq!(max_order, Some(3));
    }
}
