//! Real-valued observables on the state space, as serializable expression trees.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use super::QuantError;
use crate::linalg::{CMat, DensityMatrix};

/// A real function of a state `omega`.
///
/// Leaves are constants and the real or imaginary part of `omega(E_rs)`
/// (1-based `r`, `s`); inner nodes are sums, products and nonnegative integer
/// powers. `omega(E_rs) = tr(E_rs omega)` is the `(s, r)` entry of the density.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFunction {
    Const(f64),
    Re(usize, usize),
    Im(usize, usize),
    Sum(Vec<StateFunction>),
    Prod(Vec<StateFunction>),
    Pow(Box<StateFunction>, u32),
}

impl StateFunction {
    pub fn constant(c: f64) -> Self {
        Self::Const(c)
    }

    pub fn re(r: usize, s: usize) -> Self {
        Self::Re(r, s)
    }

    pub fn im(r: usize, s: usize) -> Self {
        Self::Im(r, s)
    }

    pub fn plus(self, other: StateFunction) -> Self {
        Self::Sum(vec![self, other])
    }

    pub fn times(self, other: StateFunction) -> Self {
        Self::Prod(vec![self, other])
    }

    pub fn pow(self, k: u32) -> Self {
        Self::Pow(Box::new(self), k)
    }

    /// Evaluates on a density of a dimension accepted by [`Self::check_dim`].
    pub fn eval(&self, state: &CMat) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Re(r, s) => state[(s - 1, r - 1)].re,
            Self::Im(r, s) => state[(s - 1, r - 1)].im,
            Self::Sum(terms) => terms.iter().map(|t| t.eval(state)).sum(),
            Self::Prod(terms) => terms.iter().map(|t| t.eval(state)).product(),
            Self::Pow(base, k) => base.eval(state).powi(*k as i32),
        }
    }

    /// Largest matrix-unit index referenced, 0 for constant trees.
    pub fn max_index(&self) -> usize {
        match self {
            Self::Const(_) => 0,
            Self::Re(r, s) | Self::Im(r, s) => (*r).max(*s),
            Self::Sum(t) | Self::Prod(t) => t.iter().map(Self::max_index).max().unwrap_or(0),
            Self::Pow(b, _) => b.max_index(),
        }
    }

    fn min_index(&self) -> usize {
        match self {
            Self::Const(_) => usize::MAX,
            Self::Re(r, s) | Self::Im(r, s) => (*r).min(*s),
            Self::Sum(t) | Self::Prod(t) => {
                t.iter().map(Self::min_index).min().unwrap_or(usize::MAX)
            }
            Self::Pow(b, _) => b.min_index(),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<(), QuantError> {
        if self.max_index() > n || self.min_index() == 0 {
            return Err(QuantError::IndexOutOfRange {
                index: self.max_index().max(self.min_index()),
                dim: n,
            });
        }
        Ok(())
    }

    pub fn eval_state(&self, state: &DensityMatrix) -> Result<f64, QuantError> {
        self.check_dim(state.dim())?;
        Ok(self.eval(state))
    }

    pub fn to_json(&self) -> Value {
        match self {
            Self::Const(c) => json!({ "const": c }),
            Self::Re(r, s) => json!({ "re": [r, s] }),
            Self::Im(r, s) => json!({ "im": [r, s] }),
            Self::Sum(t) => json!({ "sum": t.iter().map(Self::to_json).collect::<Vec<_>>() }),
            Self::Prod(t) => json!({ "prod": t.iter().map(Self::to_json).collect::<Vec<_>>() }),
            Self::Pow(b, k) => json!({ "pow": [b.to_json(), k] }),
        }
    }

    /// Parses the JSON grammar
    /// `{"const":c} | {"re":[r,s]} | {"im":[r,s]} | {"sum":[...]} | {"prod":[...]} | {"pow":[expr,k]}`.
    pub fn from_json(value: &Value) -> Result<Self, QuantError> {
        parse(value, "$")
    }
}

fn parse_err(path: &str, msg: impl fmt::Display) -> QuantError {
    QuantError::Parse(format!("{path}: {msg}"))
}

fn parse_index_pair(v: &Value, path: &str) -> Result<(usize, usize), QuantError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| parse_err(path, "expected [r, s]"))?;
    let idx = |x: &Value| {
        x.as_u64()
            .filter(|&i| i >= 1)
            .map(|i| i as usize)
            .ok_or_else(|| parse_err(path, "indices are integers >= 1"))
    };
    Ok((idx(&arr[0])?, idx(&arr[1])?))
}

fn parse(value: &Value, path: &str) -> Result<StateFunction, QuantError> {
    let obj = value
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| parse_err(path, "expected an object with exactly one key"))?;
    let (key, body) = obj.iter().next().expect("one entry");
    let path = format!("{path}.{key}");
    let children = |body: &Value| -> Result<Vec<StateFunction>, QuantError> {
        let items = body
            .as_array()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| parse_err(&path, "expected a nonempty array"))?;
        items
            .iter()
            .enumerate()
            .map(|(i, v)| parse(v, &format!("{path}[{i}]")))
            .collect()
    };
    match key.as_str() {
        "const" => body
            .as_f64()
            .filter(|c| c.is_finite())
            .map(StateFunction::Const)
            .ok_or_else(|| parse_err(&path, "expected a finite number")),
        "re" => parse_index_pair(body, &path).map(|(r, s)| StateFunction::Re(r, s)),
        "im" => parse_index_pair(body, &path).map(|(r, s)| StateFunction::Im(r, s)),
        "sum" => Ok(StateFunction::Sum(children(body)?)),
        "prod" => Ok(StateFunction::Prod(children(body)?)),
        "pow" => {
            let arr = body
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| parse_err(&path, "expected [expr, k]"))?;
            let k = arr[1]
                .as_u64()
                .and_then(|k| u32::try_from(k).ok())
                .ok_or_else(|| parse_err(&path, "exponent is a nonnegative integer"))?;
            Ok(StateFunction::Pow(
                Box::new(parse(&arr[0], &format!("{path}[0]"))?),
                k,
            ))
        }
        other => Err(parse_err(&path, format!("unknown node {other:?}"))),
    }
}

impl Serialize for StateFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        StateFunction::from_json(&v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for StateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

fn coefficient<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.1..=2.0)
}

/// Random expression tree of depth at most `depth` over `n x n` states, with
/// coefficients in `[0.1, 2]`.
pub fn random_function<R: Rng + ?Sized>(n: usize, depth: u32, rng: &mut R) -> StateFunction {
    if depth == 0 || rng.random_bool(0.3) {
        return match rng.random_range(0..3) {
            0 => StateFunction::Const(coefficient(rng)),
            kind => {
                let r = rng.random_range(1..=n);
                let s = rng.random_range(1..=n);
                let leaf = if kind == 1 {
                    StateFunction::Re(r, s)
                } else {
                    StateFunction::Im(r, s)
                };
                StateFunction::Const(coefficient(rng)).times(leaf)
            }
        };
    }
    match rng.random_range(0..3) {
        0 => {
            let arity = rng.random_range(2..=3);
            StateFunction::Sum(
                (0..arity)
                    .map(|_| random_function(n, depth - 1, rng))
                    .collect(),
            )
        }
        1 => StateFunction::Prod(vec![
            random_function(n, depth - 1, rng),
            random_function(n, depth - 1, rng),
        ]),
        _ => random_function(n, depth - 1, rng).pow(rng.random_range(2..=3)),
    }
}

/// Adds a constant so that `f >= margin` on every given state.
pub fn shift_positive(f: StateFunction, states: &[&CMat], margin: f64) -> StateFunction {
    let min = states
        .iter()
        .map(|s| f.eval(s))
        .fold(f64::INFINITY, f64::min);
    if min >= margin {
        return f;
    }
    f.plus(StateFunction::Const(margin - min))
}
