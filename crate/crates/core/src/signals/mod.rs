//! Arithmetic expressions for scenario signals: references `r(t)`, parameter
//! trajectories `θ_i(t)` and disturbances `σ(t, x)`.
//!
//! Expressions use `t`, the state variables `x1..xn`, the constant `pi`, the
//! operators `+ - * /` (with unary minus) and the functions `sin`, `cos`,
//! `exp`, `abs`. Angles are in radians.

mod parser;

use std::fmt;

use thiserror::Error;

/// Maximum nesting depth of a parsed expression tree.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier {name:?} at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("{name:?} at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("expression nests deeper than {MAX_DEPTH} levels (at byte {offset})")]
    TooDeep { offset: usize },
    #[error("expression evaluated to a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("state vector has {found} entries, expression expects {expected}")]
    StateDimension { expected: usize, found: usize },
}

impl SignalError {
    /// Byte offset into the source text, for parse errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            SignalError::Syntax { offset, .. }
            | SignalError::UnknownIdentifier { offset, .. }
            | SignalError::Arity { offset, .. }
            | SignalError::TooDeep { offset } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Pi,
    /// Zero-based state index.
    State(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time | Expr::Pi | Expr::State(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Bin(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn any(&self, pred: &impl Fn(&Expr) -> bool) -> bool {
        pred(self)
            || match self {
                Expr::Neg(e) | Expr::Call(_, e) => e.any(pred),
                Expr::Bin(_, l, r) => l.any(pred) || r.any(pred),
                _ => false,
            }
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<f64, SignalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Pi => std::f64::consts::PI,
            Expr::State(k) => x[*k],
            Expr::Neg(e) => -e.eval(t, x)?,
            Expr::Call(f, e) => f.apply(e.eval(t, x)?),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(t, x)?, r.eval(t, x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SignalError::NonFinite { t })
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::Pi => write!(f, "pi"),
            Expr::State(k) => write!(f, "x{}", k + 1),
            Expr::Neg(e) => {
                write!(f, "-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let p = self.precedence();
                wrap(f, l, l.precedence() < p)?;
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => " * ",
                    BinOp::Div => " / ",
                };
                write!(f, "{sym}")?;
                wrap(f, r, r.precedence() <= p)
            }
        }
    }
}

/// A parsed expression bound to a state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalExpr {
    root: Expr,
    n_states: usize,
}

impl SignalExpr {
    pub fn parse(text: &str, n_states: usize) -> Result<Self, SignalError> {
        Ok(SignalExpr {
            root: parser::Parser::parse(text, n_states)?,
            n_states,
        })
    }

    pub fn constant(v: f64, n_states: usize) -> Self {
        SignalExpr {
            root: Expr::Num(v),
            n_states,
        }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn depends_on_state(&self) -> bool {
        self.root.any(&|e| matches!(e, Expr::State(_)))
    }

    pub fn depends_on_time(&self) -> bool {
        self.root.any(&|e| matches!(e, Expr::Time))
    }

    /// Evaluates at time `t` and state `x` (which must have `n_states` entries).
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, SignalError> {
        if x.len() != self.n_states {
            return Err(SignalError::StateDimension {
                expected: self.n_states,
                found: x.len(),
            });
        }
        self.root.eval(t, x)
    }

    /// Evaluates with a zero state vector.
    pub fn eval_at(&self, t: f64) -> Result<f64, SignalError> {
        if self.depends_on_state() {
            let zeros = vec![0.0; self.n_states];
            self.root.eval(t, &zeros)
        } else {
            self.root.eval(t, &[])
        }
    }

    /// Evaluation on the hot path; `x` is trusted to have the right length.
    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64, x: &[f64]) -> Result<f64, SignalError> {
        self.root.eval(t, x)
    }
}

impl fmt::Display for SignalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// An expression with its declared sup-norm and rate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub expr: SignalExpr,
    pub declared_bound: f64,
    pub declared_rate_bound: f64,
}

/// Relative slack allowed when sampled values are compared to declared bounds.
pub const BOUND_SLACK: f64 = 0.01;

const DIFF_STEP: f64 = 1e-6;

/// Samples the expression and its central-difference time derivative on a
/// uniform grid over `[0, horizon]` with a zero state, and reports whether
/// both stay within their declared bounds (plus 1%).
pub fn verify_declared_bounds(
    spec: &SignalSpec,
    horizon: f64,
    samples: usize,
) -> Result<bool, SignalError> {
    assert!(horizon > 0.0, "horizon must be positive");
    let samples = samples.max(2);
    let h = DIFF_STEP * horizon.max(1.0);
    for k in 0..samples {
        let t = horizon * k as f64 / (samples - 1) as f64;
        let v = spec.expr.eval_at(t)?;
        let rate = (spec.expr.eval_at(t + h)? - spec.expr.eval_at(t - h)?) / (2.0 * h);
        if exceeds(v, spec.declared_bound) || exceeds(rate, spec.declared_rate_bound) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Like [`verify_declared_bounds`] but along a recorded state trajectory; the
/// rate is the total derivative estimated from neighbouring samples.
pub fn verify_declared_bounds_along(
    spec: &SignalSpec,
    times: &[f64],
    states: &[Vec<f64>],
) -> Result<bool, SignalError> {
    let values = times
        .iter()
        .zip(states)
        .map(|(&t, x)| spec.expr.eval(t, x))
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|&v| exceeds(v, spec.declared_bound)) {
        return Ok(false);
    }
    for k in 1..values.len().saturating_sub(1) {
        let rate = (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1]);
        if exceeds(rate, spec.declared_rate_bound) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn exceeds(v: f64, bound: f64) -> bool {
    v.abs() > bound * (1.0 + BOUND_SLACK)
}
