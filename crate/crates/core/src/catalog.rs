//! Named coefficient building blocks selectable from a config file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::expr::{Expr, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrigFn {
    Sin,
    Cos,
}

/// A coefficient expressed through the built-in catalog.
///
/// In TOML every entry is an inline table with a `kind` key, e.g.
/// `{ kind = "affine", constant = 0.5, terms = { y = -1.0 } }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table", into = "Table")]
pub enum CoefSpec {
    Zero,
    Const { value: f64 },
    Linear { terms: BTreeMap<String, f64> },
    Affine { constant: f64, terms: BTreeMap<String, f64> },
    Trig { func: TrigFn, var: String, freq: f64, phase: f64, amp: f64 },
    Exp { var: String, rate: f64, amp: f64 },
    Sum { terms: Vec<CoefSpec> },
    Scale { factor: f64, term: Box<CoefSpec> },
    Product { factors: Vec<CoefSpec> },
}

pub const CATALOG: &[&str] = &[
    "zero", "const", "linear", "affine", "trig", "exp", "sum", "scale", "product",
];

impl CoefSpec {
    pub fn to_expr(&self) -> Result<Expr, String> {
        let var = |name: &str| Var::parse(name).ok_or_else(|| format!("unknown variable `{name}`"));
        let lin = |terms: &BTreeMap<String, f64>| -> Result<Vec<(Var, f64)>, String> {
            terms.iter().map(|(k, c)| Ok((var(k)?, *c))).collect()
        };
        Ok(match self {
            CoefSpec::Zero => Expr::zero(),
            CoefSpec::Const { value } => Expr::constant(*value),
            CoefSpec::Linear { terms } => Expr::affine(0.0, &lin(terms)?),
            CoefSpec::Affine { constant, terms } => Expr::affine(*constant, &lin(terms)?),
            CoefSpec::Trig { func, var: v, freq, phase, amp } => {
                let arg = Expr::sum(vec![Expr::scale(*freq, Expr::var(var(v)?)), Expr::constant(*phase)]);
                let e = match func {
                    TrigFn::Sin => Expr::sin(arg),
                    TrigFn::Cos => Expr::cos(arg),
                };
                Expr::scale(*amp, e)
            }
            CoefSpec::Exp { var: v, rate, amp } => {
                Expr::scale(*amp, Expr::exp(Expr::scale(*rate, Expr::var(var(v)?))))
            }
            CoefSpec::Sum { terms } => {
                Expr::sum(terms.iter().map(|t| t.to_expr()).collect::<Result<_, _>>()?)
            }
            CoefSpec::Scale { factor, term } => Expr::scale(*factor, term.to_expr()?),
            CoefSpec::Product { factors } => {
                Expr::product(factors.iter().map(|t| t.to_expr()).collect::<Result<_, _>>()?)
            }
        })
    }

    pub fn constant(value: f64) -> Self {
        CoefSpec::Const { value }
    }

    pub fn affine(constant: f64, terms: &[(&str, f64)]) -> Self {
        CoefSpec::Affine {
            constant,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

fn num(t: &Table, key: &str, default: Option<f64>) -> Result<f64, String> {
    match t.get(key) {
        Some(Value::Float(v)) => Ok(*v),
        Some(Value::Integer(v)) => Ok(*v as f64),
        Some(other) => Err(format!("`{key}` must be a number, got {other}")),
        None => default.ok_or_else(|| format!("missing `{key}`")),
    }
}

fn string(t: &Table, key: &str) -> Result<String, String> {
    match t.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(format!("missing string `{key}`")),
    }
}

fn terms(t: &Table) -> Result<BTreeMap<String, f64>, String> {
    match t.get("terms") {
        None => Ok(BTreeMap::new()),
        Some(Value::Table(inner)) => inner
            .keys()
            .map(|k| Ok((k.clone(), num(inner, k, None)?)))
            .collect(),
        Some(_) => Err("`terms` must be a table of variable = coefficient".into()),
    }
}

fn sub(v: &Value) -> Result<CoefSpec, String> {
    match v {
        Value::Table(t) => CoefSpec::try_from(t.clone()),
        _ => Err("nested coefficient must be a table".into()),
    }
}

fn list(t: &Table, key: &str) -> Result<Vec<CoefSpec>, String> {
    match t.get(key) {
        Some(Value::Array(items)) => items.iter().map(sub).collect(),
        _ => Err(format!("missing array `{key}`")),
    }
}

impl TryFrom<Table> for CoefSpec {
    type Error = String;

    fn try_from(t: Table) -> Result<Self, String> {
        let kind = string(&t, "kind")?;
        Ok(match kind.as_str() {
            "zero" => CoefSpec::Zero,
            "const" => CoefSpec::Const { value: num(&t, "value", None)? },
            "linear" => CoefSpec::Linear { terms: terms(&t)? },
            "affine" => CoefSpec::Affine {
                constant: num(&t, "constant", Some(0.0))?,
                terms: terms(&t)?,
            },
            "trig" => CoefSpec::Trig {
                func: match string(&t, "func")?.as_str() {
                    "sin" => TrigFn::Sin,
                    "cos" => TrigFn::Cos,
                    other => return Err(format!("unknown trig function `{other}`")),
                },
                var: string(&t, "var")?,
                freq: num(&t, "freq", Some(1.0))?,
                phase: num(&t, "phase", Some(0.0))?,
                amp: num(&t, "amp", Some(1.0))?,
            },
            "exp" => CoefSpec::Exp {
                var: string(&t, "var")?,
                rate: num(&t, "rate", Some(1.0))?,
                amp: num(&t, "amp", Some(1.0))?,
            },
            "sum" => CoefSpec::Sum { terms: list(&t, "terms")? },
            "scale" => CoefSpec::Scale {
                factor: num(&t, "factor", None)?,
                term: Box::new(sub(t.get("term").ok_or("missing `term`")?)?),
            },
            "product" => CoefSpec::Product { factors: list(&t, "factors")? },
            other => return Err(format!("unknown catalog entry `{other}`")),
        })
    }
}

impl From<CoefSpec> for Table {
    fn from(c: CoefSpec) -> Table {
        let mut t = Table::new();
        let mut put = |k: &str, v: Value| {
            t.insert(k.to_string(), v);
        };
        let terms_value = |m: BTreeMap<String, f64>| {
            Value::Table(m.into_iter().map(|(k, v)| (k, Value::Float(v))).collect())
        };
        let array = |v: Vec<CoefSpec>| Value::Array(v.into_iter().map(|c| Value::Table(c.into())).collect());
        match c {
            CoefSpec::Zero => put("kind", "zero".into()),
            CoefSpec::Const { value } => {
                put("kind", "const".into());
                put("value", value.into());
            }
            CoefSpec::Linear { terms } => {
                put("kind", "linear".into());
                put("terms", terms_value(terms));
            }
            CoefSpec::Affine { constant, terms } => {
                put("kind", "affine".into());
                put("constant", constant.into());
                put("terms", terms_value(terms));
            }
            CoefSpec::Trig { func, var, freq, phase, amp } => {
                put("kind", "trig".into());
                put("func", if func == TrigFn::Sin { "sin" } else { "cos" }.into());
                put("var", var.into());
                put("freq", freq.into());
                put("phase", phase.into());
                put("amp", amp.into());
            }
            CoefSpec::Exp { var, rate, amp } => {
                put("kind", "exp".into());
                put("var", var.into());
                put("rate", rate.into());
                put("amp", amp.into());
            }
            CoefSpec::Sum { terms } => {
                put("kind", "sum".into());
                put("terms", array(terms));
            }
            CoefSpec::Scale { factor, term } => {
                put("kind", "scale".into());
                put("factor", factor.into());
                put("term", Value::Table((*term).into()));
            }
            CoefSpec::Product { factors } => {
                put("kind", "product".into());
                put("factors", array(factors));
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Args;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        f: CoefSpec,
    }

    #[test]
    fn parses_nested_entries() {
        let h: Holder = toml::from_str(
            r#"f = { kind = "sum", terms = [ { kind = "affine", constant = 1, terms = { y = -2.0 } },
                                           { kind = "trig", func = "cos", var = "x", freq = 3.0 } ] }"#,
        )
        .unwrap();
        let e = h.f.to_expr().unwrap();
        let v = e.eval(&Args::new(0.0, &[0.2], 0.5, &[]));
        assert!((v - (1.0 - 1.0 + (0.6f64).cos())).abs() < 1e-15);
        let back: Holder = toml::from_str(&toml::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn unknown_kind_is_named() {
        let err = toml::from_str::<Holder>(r#"f = { kind = "bessel" }"#).unwrap_err();
        assert!(err.to_string().contains("unknown catalog entry `bessel`"), "{err}");
    }
}
