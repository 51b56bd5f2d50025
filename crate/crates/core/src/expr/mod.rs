//! Expression trees for enhancement factors.
//!
//! Trees are plain data (serde round-trippable). Evaluation goes either
//! through [`ExprNode::eval`], a direct recursive walk, or through a
//! [`Tape`] compiled once per form, which also carries sparse
//! forward-mode derivatives with respect to trainable parameters.

mod tape;

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorName, DescriptorPoint};
use crate::error::{Result, XcError};

pub use tape::{Tape, TapeWorkspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ExprNode {
    Const { value: f64 },
    Param { index: usize },
    Descriptor { name: DescriptorName },
    Add { args: Vec<ExprNode> },
    Mul { args: Vec<ExprNode> },
    Div { num: Box<ExprNode>, den: Box<ExprNode> },
    IntPow { arg: Box<ExprNode>, exponent: i32 },
    Tanh { arg: Box<ExprNode> },
    Sigmoid { arg: Box<ExprNode> },
    Softplus { arg: Box<ExprNode> },
    Clamp { arg: Box<ExprNode>, lo: f64, hi: f64 },
}

/// Raw denominator coefficient whose softplus is ~2e-16: the neutral
/// value for freshly added rational-denominator terms.
pub const SOFTPLUS_OFF: f64 = -36.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl ExprNode {
    pub fn constant(value: f64) -> Self {
        ExprNode::Const { value }
    }

    pub fn param(index: usize) -> Self {
        ExprNode::Param { index }
    }

    pub fn desc(name: DescriptorName) -> Self {
        ExprNode::Descriptor { name }
    }

    pub fn sum(args: Vec<ExprNode>) -> Self {
        match args.len() {
            0 => ExprNode::constant(0.0),
            1 => args.into_iter().next().unwrap(),
            _ => ExprNode::Add { args },
        }
    }

    pub fn product(args: Vec<ExprNode>) -> Self {
        match args.len() {
            0 => ExprNode::constant(1.0),
            1 => args.into_iter().next().unwrap(),
            _ => ExprNode::Mul { args },
        }
    }

    pub fn div(num: ExprNode, den: ExprNode) -> Self {
        ExprNode::Div {
            num: Box::new(num),
            den: Box::new(den),
        }
    }

    pub fn powi(self, exponent: i32) -> Self {
        match exponent {
            0 => ExprNode::constant(1.0),
            1 => self,
            _ => ExprNode::IntPow {
                arg: Box::new(self),
                exponent,
            },
        }
    }

    pub fn tanh(self) -> Self {
        ExprNode::Tanh { arg: Box::new(self) }
    }

    pub fn sigmoid(self) -> Self {
        ExprNode::Sigmoid { arg: Box::new(self) }
    }

    pub fn softplus(self) -> Self {
        ExprNode::Softplus { arg: Box::new(self) }
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        ExprNode::Clamp {
            arg: Box::new(self),
            lo,
            hi,
        }
    }

    pub fn children(&self) -> Vec<&ExprNode> {
        match self {
            ExprNode::Const { .. } | ExprNode::Param { .. } | ExprNode::Descriptor { .. } => vec![],
            ExprNode::Add { args } | ExprNode::Mul { args } => args.iter().collect(),
            ExprNode::Div { num, den } => vec![num, den],
            ExprNode::IntPow { arg, .. }
            | ExprNode::Tanh { arg }
            | ExprNode::Sigmoid { arg }
            | ExprNode::Softplus { arg }
            | ExprNode::Clamp { arg, .. } => vec![arg],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut ExprNode> {
        match self {
            ExprNode::Const { .. } | ExprNode::Param { .. } | ExprNode::Descriptor { .. } => vec![],
            ExprNode::Add { args } | ExprNode::Mul { args } => args.iter_mut().collect(),
            ExprNode::Div { num, den } => vec![num, den],
            ExprNode::IntPow { arg, .. }
            | ExprNode::Tanh { arg }
            | ExprNode::Sigmoid { arg }
            | ExprNode::Softplus { arg }
            | ExprNode::Clamp { arg, .. } => vec![arg],
        }
    }

    /// Path segment naming child `i` of this node.
    fn child_label(&self, i: usize) -> String {
        match self {
            ExprNode::Add { .. } => format!("add[{i}]"),
            ExprNode::Mul { .. } => format!("mul[{i}]"),
            ExprNode::Div { .. } => if i == 0 { "div.num" } else { "div.den" }.to_string(),
            ExprNode::IntPow { .. } => "pow".into(),
            ExprNode::Tanh { .. } => "tanh".into(),
            ExprNode::Sigmoid { .. } => "sigmoid".into(),
            ExprNode::Softplus { .. } => "softplus".into(),
            ExprNode::Clamp { .. } => "clamp".into(),
            _ => String::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Parameter indices referenced anywhere in the tree, sorted and unique.
    pub fn param_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let ExprNode::Param { index } = n {
                out.push(*index);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn descriptors(&self) -> Vec<DescriptorName> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let ExprNode::Descriptor { name } = n {
                out.push(*name);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&ExprNode)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Adds `offset` to every parameter index at or above `from`.
    pub fn shift_params(&mut self, from: usize, offset: usize) {
        if let ExprNode::Param { index } = self {
            if *index >= from {
                *index += offset;
            }
        }
        for c in self.children_mut() {
            c.shift_params(from, offset);
        }
    }

    /// Rewrites parameter indices through `map`.
    pub fn remap_params(&mut self, map: &impl Fn(usize) -> usize) {
        if let ExprNode::Param { index } = self {
            *index = map(*index);
        }
        for c in self.children_mut() {
            c.remap_params(map);
        }
    }

    /// Structural checks against a parameter vector of length `n_params`.
    pub fn validate(&self, n_params: usize, path: &str) -> Result<()> {
        match self {
            ExprNode::Const { value } if !value.is_finite() => {
                return Err(eval_err(path, "non-finite constant"))
            }
            ExprNode::Param { index } if *index >= n_params => {
                return Err(eval_err(
                    path,
                    format!("parameter index {index} out of bounds for {n_params} parameters"),
                ))
            }
            ExprNode::Add { args } | ExprNode::Mul { args } if args.is_empty() => {
                return Err(eval_err(path, "empty argument list"))
            }
            ExprNode::Clamp { lo, hi, .. } if !(lo <= hi) => {
                return Err(eval_err(path, format!("clamp bounds {lo} > {hi}")))
            }
            _ => {}
        }
        for (i, c) in self.children().into_iter().enumerate() {
            c.validate(n_params, &format!("{path}/{}", self.child_label(i)))?;
        }
        Ok(())
    }

    /// Direct recursive evaluation. Per-spin descriptors resolve against `spin`.
    pub fn eval(&self, dp: &DescriptorPoint, spin: usize, params: &[f64]) -> Result<f64> {
        self.eval_at(dp, spin, params, "root")
    }

    fn eval_at(&self, dp: &DescriptorPoint, spin: usize, params: &[f64], path: &str) -> Result<f64> {
        let child = |i: usize, n: &ExprNode| -> Result<f64> {
            n.eval_at(dp, spin, params, &format!("{path}/{}", self.child_label(i)))
        };
        let v = match self {
            ExprNode::Const { value } => *value,
            ExprNode::Param { index } => *params
                .get(*index)
                .ok_or_else(|| eval_err(path, format!("parameter index {index} out of bounds")))?,
            ExprNode::Descriptor { name } => dp.get(*name, spin),
            ExprNode::Add { args } => {
                let mut acc = 0.0;
                for (i, a) in args.iter().enumerate() {
                    acc += child(i, a)?;
                }
                acc
            }
            ExprNode::Mul { args } => {
                let mut acc = 1.0;
                for (i, a) in args.iter().enumerate() {
                    acc *= child(i, a)?;
                }
                acc
            }
            ExprNode::Div { num, den } => child(0, num)? / child(1, den)?,
            ExprNode::IntPow { arg, exponent } => child(0, arg)?.powi(*exponent),
            ExprNode::Tanh { arg } => child(0, arg)?.tanh(),
            ExprNode::Sigmoid { arg } => sigmoid(child(0, arg)?),
            ExprNode::Softplus { arg } => softplus(child(0, arg)?),
            ExprNode::Clamp { arg, lo, hi } => child(0, arg)?.clamp(*lo, *hi),
        };
        if !v.is_finite() {
            return Err(eval_err(path, format!("non-finite value {v}")));
        }
        Ok(v)
    }

    /// Interval enclosing every value the tree can take when descriptors
    /// stay inside their documented ranges and parameters are arbitrary.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ExprNode::Const { value } => (*value, *value),
            ExprNode::Param { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ExprNode::Descriptor { name } => name.range().unwrap_or((f64::NEG_INFINITY, f64::INFINITY)),
            ExprNode::Add { args } => args.iter().fold((0.0, 0.0), |acc, a| {
                let b = a.bounds();
                (acc.0 + b.0, acc.1 + b.1)
            }),
            ExprNode::Mul { args } => args
                .iter()
                .fold((1.0, 1.0), |acc, a| interval_mul(acc, a.bounds())),
            ExprNode::Div { num, den } => {
                let d = den.bounds();
                if d.0 > 0.0 {
                    interval_mul(num.bounds(), (1.0 / d.1, 1.0 / d.0))
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
            ExprNode::IntPow { arg, exponent } => interval_powi(arg.bounds(), *exponent),
            ExprNode::Tanh { arg } => {
                let b = arg.bounds();
                (b.0.tanh(), b.1.tanh())
            }
            ExprNode::Sigmoid { arg } => {
                let b = arg.bounds();
                (sigmoid(b.0), sigmoid(b.1))
            }
            ExprNode::Softplus { arg } => {
                let b = arg.bounds();
                (softplus(b.0), softplus(b.1))
            }
            ExprNode::Clamp { arg, lo, hi } => {
                let b = arg.bounds();
                (b.0.clamp(*lo, *hi), b.1.clamp(*lo, *hi))
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.bounds().0 >= 0.0
    }

    /// Every division in the tree has a denominator bounded below by 1.
    pub fn denominators_at_least_one(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |n| {
            if let ExprNode::Div { den, .. } = n {
                ok &= den.bounds().0 >= 1.0;
            }
        });
        ok
    }
}

fn eval_err(path: &str, message: impl Into<String>) -> XcError {
    XcError::Eval {
        path: path.to_string(),
        message: message.into(),
    }
}

fn mul_ext(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn interval_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let c = [
        mul_ext(a.0, b.0),
        mul_ext(a.0, b.1),
        mul_ext(a.1, b.0),
        mul_ext(a.1, b.1),
    ];
    (
        c.iter().cloned().fold(f64::INFINITY, f64::min),
        c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn interval_powi(b: (f64, f64), n: i32) -> (f64, f64) {
    if n == 0 {
        return (1.0, 1.0);
    }
    if n < 0 {
        if b.0 > 0.0 || b.1 < 0.0 {
            let p = (b.0.powi(n), b.1.powi(n));
            return (p.0.min(p.1), p.0.max(p.1));
        }
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let (lo, hi) = (b.0.powi(n), b.1.powi(n));
    if n % 2 == 1 || b.0 >= 0.0 {
        (lo, hi)
    } else if b.1 <= 0.0 {
        (hi, lo)
    } else {
        (0.0, lo.max(hi))
    }
}

/// Product of descriptor powers; `Const(1)` when every power is zero.
pub fn monomial(factors: &[(DescriptorName, u32)]) -> ExprNode {
    ExprNode::product(
        factors
            .iter()
            .filter(|(_, p)| *p > 0)
            .map(|(d, p)| ExprNode::desc(*d).powi(*p as i32))
            .collect(),
    )
}

/// Σ_k p_{first+k} · m_k.
pub fn linear_combination(first_param: usize, basis: &[ExprNode]) -> ExprNode {
    ExprNode::sum(
        basis
            .iter()
            .enumerate()
            .map(|(k, m)| coefficient_times(first_param + k, m.clone()))
            .collect(),
    )
}

fn coefficient_times(index: usize, term: ExprNode) -> ExprNode {
    match term {
        ExprNode::Const { value } if value == 1.0 => ExprNode::param(index),
        other => ExprNode::product(vec![ExprNode::param(index), other]),
    }
}

/// A basis term that is non-negative for every admissible input: the
/// term itself when its bounds allow, its square otherwise.
pub fn nonnegative_basis(term: ExprNode) -> ExprNode {
    if term.is_nonnegative() {
        term
    } else {
        term.powi(2)
    }
}

/// N / (1 + Σ softplus(d_i) φ_i) with d_i = params[first_param + i].
/// The φ_i are made non-negative, so the denominator is ≥ 1 for any
/// parameter vector.
pub fn rational_wrap(numerator: ExprNode, basis: &[ExprNode], first_param: usize) -> ExprNode {
    let mut terms = vec![ExprNode::constant(1.0)];
    for (i, phi) in basis.iter().enumerate() {
        let coeff = ExprNode::param(first_param + i).softplus();
        let phi = nonnegative_basis(phi.clone());
        terms.push(match phi {
            ExprNode::Const { value } if value == 1.0 => coeff,
            p => ExprNode::product(vec![coeff, p]),
        });
    }
    ExprNode::div(numerator, ExprNode::sum(terms))
}
