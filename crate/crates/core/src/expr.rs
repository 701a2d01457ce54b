//! Small symbolic expression language for coefficients.
//!
//! Coefficients are closed-form functions of `(t, x, y, z)`; keeping them
//! symbolic gives exact partial derivatives for the flow and PDE code.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X(usize),
    Y,
    Z(usize),
}

impl Var {
    pub fn parse(name: &str) -> Option<Var> {
        let idx = |s: &str| -> Option<usize> {
            if s.is_empty() {
                Some(0)
            } else {
                s.parse().ok()
            }
        };
        match name {
            "t" => Some(Var::T),
            "y" => Some(Var::Y),
            _ if name.starts_with('x') => idx(&name[1..]).map(Var::X),
            _ if name.starts_with('z') => idx(&name[1..]).map(Var::Z),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Var::T => "t".into(),
            Var::Y => "y".into(),
            Var::X(i) => format!("x{i}"),
            Var::Z(i) => format!("z{i}"),
        }
    }
}

/// Evaluation point.
#[derive(Clone, Copy, Debug)]
pub struct Args<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
}

impl<'a> Args<'a> {
    pub fn new(t: f64, x: &'a [f64], y: f64, z: &'a [f64]) -> Self {
        Args { t, x, y, z }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Scale(f64, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(terms.len());
        let mut c = 0.0;
        for t in terms {
            match t {
                Expr::Const(v) => c += v,
                Expr::Sum(inner) => {
                    for e in inner {
                        match e {
                            Expr::Const(v) => c += v,
                            e => out.push(e),
                        }
                    }
                }
                e => out.push(e),
            }
        }
        if c != 0.0 {
            out.push(Expr::Const(c));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::Sum(out),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(factors.len());
        let mut c = 1.0;
        for f in factors {
            match f {
                Expr::Const(v) => c *= v,
                Expr::Scale(s, e) => {
                    c *= s;
                    out.push(*e);
                }
                e => out.push(e),
            }
        }
        if c == 0.0 {
            return Expr::zero();
        }
        let e = match out.len() {
            0 => return Expr::Const(c),
            1 => out.pop().unwrap(),
            _ => Expr::Product(out),
        };
        Expr::scale(c, e)
    }

    pub fn scale(c: f64, e: Expr) -> Expr {
        if c == 0.0 || e.is_zero() {
            return Expr::zero();
        }
        if c == 1.0 {
            return e;
        }
        match e {
            Expr::Const(v) => Expr::Const(c * v),
            Expr::Scale(s, inner) => Expr::scale(c * s, *inner),
            e => Expr::Scale(c, Box::new(e)),
        }
    }

    pub fn sin(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.sin()),
            e => Expr::Sin(Box::new(e)),
        }
    }

    pub fn cos(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.cos()),
            e => Expr::Cos(Box::new(e)),
        }
    }

    pub fn exp(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.exp()),
            e => Expr::Exp(Box::new(e)),
        }
    }

    /// `sum_v coeff_v * v + constant`
    pub fn affine(constant: f64, terms: &[(Var, f64)]) -> Expr {
        let mut parts: Vec<Expr> = terms
            .iter()
            .map(|&(v, c)| Expr::scale(c, Expr::Var(v)))
            .collect();
        parts.push(Expr::Const(constant));
        Expr::sum(parts)
    }

    pub fn eval(&self, a: &Args) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match *v {
                Var::T => a.t,
                Var::Y => a.y,
                Var::X(i) => a.x.get(i).copied().unwrap_or(f64::NAN),
                Var::Z(i) => a.z.get(i).copied().unwrap_or(f64::NAN),
            },
            Expr::Sum(ts) => ts.iter().map(|e| e.eval(a)).sum(),
            Expr::Product(fs) => fs.iter().map(|e| e.eval(a)).product(),
            Expr::Scale(c, e) => c * e.eval(a),
            Expr::Sin(e) => e.eval(a).sin(),
            Expr::Cos(e) => e.eval(a).cos(),
            Expr::Exp(e) => e.eval(a).exp(),
        }
    }

    /// Symbolic partial derivative.
    pub fn partial(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(w) => Expr::Const(if *w == v { 1.0 } else { 0.0 }),
            Expr::Sum(ts) => Expr::sum(ts.iter().map(|e| e.partial(v)).collect()),
            Expr::Product(fs) => {
                let mut terms = Vec::new();
                for i in 0..fs.len() {
                    let d = fs[i].partial(v);
                    if d.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = fs
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, e)| e.clone())
                        .collect();
                    factors.push(d);
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Expr::Scale(c, e) => Expr::scale(*c, e.partial(v)),
            Expr::Sin(e) => Expr::product(vec![Expr::cos((**e).clone()), e.partial(v)]),
            Expr::Cos(e) => Expr::scale(
                -1.0,
                Expr::product(vec![Expr::sin((**e).clone()), e.partial(v)]),
            ),
            Expr::Exp(e) => Expr::product(vec![self.clone(), e.partial(v)]),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        let mut found = false;
        self.visit_vars(&mut |w| found |= w == v);
        found
    }

    /// True if any `X(_)` (resp. `Z(_)`) appears.
    pub fn depends_on_x(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |w| found |= matches!(w, Var::X(_)));
        found
    }

    pub fn depends_on_z(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |w| found |= matches!(w, Var::Z(_)));
        found
    }

    pub fn visit_vars(&self, f: &mut dyn FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Sum(es) | Expr::Product(es) => es.iter().for_each(|e| e.visit_vars(f)),
            Expr::Scale(_, e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) => e.visit_vars(f),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, es: &[Expr], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, e) in es.iter().enumerate() {
                if i > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Sum(es) => join(f, es, " + "),
            Expr::Product(es) => join(f, es, " * "),
            Expr::Scale(c, e) => write!(f, "{c}*{e}"),
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_matches_central_difference() {
        // y * sin(x0) * exp(0.3 t) + 2 z0
        let e = Expr::sum(vec![
            Expr::product(vec![
                Expr::var(Var::Y),
                Expr::sin(Expr::var(Var::X(0))),
                Expr::exp(Expr::scale(0.3, Expr::var(Var::T))),
            ]),
            Expr::scale(2.0, Expr::var(Var::Z(0))),
        ]);
        let (t, x, y, z) = (0.4, 0.7, -1.3, 0.2);
        let h = 1e-6;
        for v in [Var::T, Var::X(0), Var::Y, Var::Z(0)] {
            let d = e.partial(v);
            let bump = |s: f64| {
                let (mut tt, mut xx, mut yy, mut zz) = (t, x, y, z);
                match v {
                    Var::T => tt += s,
                    Var::X(_) => xx += s,
                    Var::Y => yy += s,
                    Var::Z(_) => zz += s,
                }
                e.eval(&Args::new(tt, &[xx], yy, &[zz]))
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let exact = d.eval(&Args::new(t, &[x], y, &[z]));
            assert!((fd - exact).abs() < 1e-8, "{v:?}: {fd} vs {exact}");
        }
    }

    #[test]
    fn simplification_drops_zeros() {
        assert!(Expr::product(vec![Expr::zero(), Expr::var(Var::Y)]).is_zero());
        assert_eq!(Expr::sum(vec![Expr::Const(1.0), Expr::Const(2.0)]), Expr::Const(3.0));
        assert!(Expr::var(Var::T).partial(Var::Y).is_zero());
        assert_eq!(Var::parse("x"), Some(Var::X(0)));
        assert_eq!(Var::parse("z1"), Some(Var::Z(1)));
        assert_eq!(Var::parse("w"), None);
    }
}
