//! Flattened, hash-consed evaluation tape with sparse forward-mode duals.
//!
//! Each tape slot carries the sorted list of trainable parameters it
//! depends on. Derivatives are stored only for those, so a monomial
//! coefficient costs one multiply-add per point instead of one per
//! trainable parameter.

use std::collections::HashMap;

use super::{sigmoid, softplus, ExprNode};
use crate::descriptors::{DescriptorPoint, Slot};
use crate::error::{Result, XcError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Param(usize),
    Spin(usize),
    Shared(usize),
    Add(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Tanh(u32),
    Sigmoid(u32),
    Softplus(u32),
    Clamp(u32, f64, f64),
}

impl Op {
    fn key(&self) -> (u8, u64, u64, u64) {
        match *self {
            Op::Const(v) => (0, v.to_bits(), 0, 0),
            Op::Param(i) => (1, i as u64, 0, 0),
            Op::Spin(i) => (2, i as u64, 0, 0),
            Op::Shared(i) => (3, i as u64, 0, 0),
            Op::Add(a, b) => (4, a as u64, b as u64, 0),
            Op::Mul(a, b) => (5, a as u64, b as u64, 0),
            Op::Div(a, b) => (6, a as u64, b as u64, 0),
            Op::Pow(a, n) => (7, a as u64, n as i64 as u64, 0),
            Op::Tanh(a) => (8, a as u64, 0, 0),
            Op::Sigmoid(a) => (9, a as u64, 0, 0),
            Op::Softplus(a) => (10, a as u64, 0, 0),
            Op::Clamp(a, lo, hi) => (11, a as u64, lo.to_bits(), hi.to_bits()),
        }
    }

    fn children(&self) -> [Option<u32>; 2] {
        match *self {
            Op::Const(_) | Op::Param(_) | Op::Spin(_) | Op::Shared(_) => [None, None],
            Op::Add(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(a), Some(b)],
            Op::Pow(a, _) | Op::Tanh(a) | Op::Sigmoid(a) | Op::Softplus(a) | Op::Clamp(a, _, _) => {
                [Some(a), None]
            }
        }
    }
}

/// Compiled form of one expression tree.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    paths: Vec<String>,
    root: u32,
    dep_start: Vec<u32>,
    deps: Vec<u32>,
    map_start: Vec<[u32; 2]>,
    maps: Vec<u32>,
    n_trainable: usize,
}

/// Scratch buffers reused across points.
#[derive(Debug, Clone, Default)]
pub struct TapeWorkspace {
    values: Vec<f64>,
    grads: Vec<f64>,
}

struct Builder {
    ops: Vec<Op>,
    paths: Vec<String>,
    seen: HashMap<(u8, u64, u64, u64), u32>,
}

impl Builder {
    fn push(&mut self, op: Op, path: &str) -> u32 {
        let key = op.key();
        if let Some(&id) = self.seen.get(&key) {
            return id;
        }
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.paths.push(path.to_string());
        self.seen.insert(key, id);
        id
    }

    fn lower(&mut self, node: &ExprNode, path: &str) -> u32 {
        let sub = |i: usize| format!("{path}/{}", node.child_label(i));
        match node {
            ExprNode::Const { value } => self.push(Op::Const(*value), path),
            ExprNode::Param { index } => self.push(Op::Param(*index), path),
            ExprNode::Descriptor { name } => match name.slot() {
                Slot::Spin(i) => self.push(Op::Spin(i), path),
                Slot::Shared(i) => self.push(Op::Shared(i), path),
            },
            ExprNode::Add { args } | ExprNode::Mul { args } => {
                let is_add = matches!(node, ExprNode::Add { .. });
                let mut acc = self.lower(&args[0], &sub(0));
                for (i, a) in args.iter().enumerate().skip(1) {
                    let b = self.lower(a, &sub(i));
                    let op = if is_add { Op::Add(acc, b) } else { Op::Mul(acc, b) };
                    acc = self.push(op, path);
                }
                acc
            }
            ExprNode::Div { num, den } => {
                let a = self.lower(num, &sub(0));
                let b = self.lower(den, &sub(1));
                self.push(Op::Div(a, b), path)
            }
            ExprNode::IntPow { arg, exponent } => {
                let a = self.lower(arg, &sub(0));
                self.push(Op::Pow(a, *exponent), path)
            }
            ExprNode::Tanh { arg } => {
                let a = self.lower(arg, &sub(0));
                self.push(Op::Tanh(a), path)
            }
            ExprNode::Sigmoid { arg } => {
                let a = self.lower(arg, &sub(0));
                self.push(Op::Sigmoid(a), path)
            }
            ExprNode::Softplus { arg } => {
                let a = self.lower(arg, &sub(0));
                self.push(Op::Softplus(a), path)
            }
            ExprNode::Clamp { arg, lo, hi } => {
                let a = self.lower(arg, &sub(0));
                self.push(Op::Clamp(a, *lo, *hi), path)
            }
        }
    }
}

impl Tape {
    /// Compiles `node`; parameters with `trainable[i] == false` are
    /// treated as constants for differentiation.
    pub fn compile(node: &ExprNode, trainable: &[bool], label: &str) -> Result<Tape> {
        node.validate(trainable.len(), label)?;
        let mut b = Builder {
            ops: Vec::new(),
            paths: Vec::new(),
            seen: HashMap::new(),
        };
        let root = b.lower(node, label);

        let mut position = vec![u32::MAX; trainable.len()];
        let mut n_trainable = 0;
        for (i, t) in trainable.iter().enumerate() {
            if *t {
                position[i] = n_trainable as u32;
                n_trainable += 1;
            }
        }

        let n = b.ops.len();
        let mut dep_start = Vec::with_capacity(n + 1);
        let mut deps: Vec<u32> = Vec::new();
        let mut map_start = Vec::with_capacity(n);
        let mut maps: Vec<u32> = Vec::new();
        dep_start.push(0);
        for op in &b.ops {
            let mut mine: Vec<u32> = match *op {
                Op::Param(i) if position[i] != u32::MAX => vec![position[i]],
                _ => Vec::new(),
            };
            let children = op.children();
            for c in children.iter().flatten() {
                let (s, e) = (dep_start[*c as usize] as usize, dep_start[*c as usize + 1] as usize);
                mine.extend_from_slice(&deps[s..e]);
            }
            mine.sort_unstable();
            mine.dedup();
            let mut starts = [0u32; 2];
            for (k, c) in children.iter().enumerate() {
                starts[k] = maps.len() as u32;
                if let Some(c) = c {
                    let (s, e) = (dep_start[*c as usize] as usize, dep_start[*c as usize + 1] as usize);
                    for d in &deps[s..e] {
                        maps.push(mine.binary_search(d).unwrap() as u32);
                    }
                }
            }
            map_start.push(starts);
            deps.extend_from_slice(&mine);
            dep_start.push(deps.len() as u32);
        }

        Ok(Tape {
            ops: b.ops,
            paths: b.paths,
            root,
            dep_start,
            deps,
            map_start,
            maps,
            n_trainable,
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_trainable(&self) -> usize {
        self.n_trainable
    }

    /// Trainable positions the root value depends on.
    pub fn root_deps(&self) -> &[u32] {
        let r = self.root as usize;
        &self.deps[self.dep_start[r] as usize..self.dep_start[r + 1] as usize]
    }

    fn prepare(&self, ws: &mut TapeWorkspace, with_grads: bool) {
        if ws.values.len() != self.ops.len() {
            ws.values.resize(self.ops.len(), 0.0);
        }
        if with_grads && ws.grads.len() != self.deps.len() {
            ws.grads.resize(self.deps.len(), 0.0);
        }
    }

    fn forward(&self, dp: &DescriptorPoint, spin: usize, params: &[f64], v: &mut [f64]) {
        for (k, op) in self.ops.iter().enumerate() {
            v[k] = match *op {
                Op::Const(c) => c,
                Op::Param(i) => params[i],
                Op::Spin(i) => dp.spin[spin][i],
                Op::Shared(i) => dp.shared[i],
                Op::Add(a, b) => v[a as usize] + v[b as usize],
                Op::Mul(a, b) => v[a as usize] * v[b as usize],
                Op::Div(a, b) => v[a as usize] / v[b as usize],
                Op::Pow(a, n) => v[a as usize].powi(n),
                Op::Tanh(a) => v[a as usize].tanh(),
                Op::Sigmoid(a) => sigmoid(v[a as usize]),
                Op::Softplus(a) => softplus(v[a as usize]),
                Op::Clamp(a, lo, hi) => v[a as usize].clamp(lo, hi),
            };
        }
    }

    fn first_nonfinite(&self, ws: &TapeWorkspace) -> XcError {
        let k = ws.values.iter().position(|x| !x.is_finite()).unwrap_or(self.root as usize);
        XcError::Eval {
            path: self.paths[k].clone(),
            message: format!("non-finite value {}", ws.values[k]),
        }
    }

    /// Value only; errors carry the path of the first non-finite slot.
    pub fn eval(&self, dp: &DescriptorPoint, spin: usize, params: &[f64], ws: &mut TapeWorkspace) -> Result<f64> {
        self.prepare(ws, false);
        self.forward(dp, spin, params, &mut ws.values);
        let out = ws.values[self.root as usize];
        if !out.is_finite() {
            return Err(self.first_nonfinite(ws));
        }
        Ok(out)
    }

    /// Value plus derivatives; read them back with [`Tape::accumulate_grad`].
    pub fn eval_dual(
        &self,
        dp: &DescriptorPoint,
        spin: usize,
        params: &[f64],
        ws: &mut TapeWorkspace,
    ) -> Result<f64> {
        self.prepare(ws, true);
        let TapeWorkspace { values: v, grads: g } = ws;
        self.forward(dp, spin, params, v);
        for (k, op) in self.ops.iter().enumerate() {
            let s = self.dep_start[k] as usize;
            let e = self.dep_start[k + 1] as usize;
            if s == e {
                continue;
            }
            let (ca, cb) = match *op {
                Op::Param(_) => {
                    g[s] = 1.0;
                    continue;
                }
                Op::Add(..) => (1.0, 1.0),
                Op::Mul(a, b) => (v[b as usize], v[a as usize]),
                Op::Div(_, b) => {
                    let d = v[b as usize];
                    (1.0 / d, -v[k] / d)
                }
                Op::Pow(a, n) => (n as f64 * v[a as usize].powi(n - 1), 0.0),
                Op::Tanh(_) => (1.0 - v[k] * v[k], 0.0),
                Op::Sigmoid(_) => (v[k] * (1.0 - v[k]), 0.0),
                Op::Softplus(a) => (sigmoid(v[a as usize]), 0.0),
                Op::Clamp(a, lo, hi) => {
                    let x = v[a as usize];
                    (if x > lo && x < hi { 1.0 } else { 0.0 }, 0.0)
                }
                Op::Const(_) | Op::Spin(_) | Op::Shared(_) => (0.0, 0.0),
            };
            g[s..e].iter_mut().for_each(|x| *x = 0.0);
            let children = op.children();
            for (slot, (c, coef)) in children.iter().zip([ca, cb]).enumerate() {
                let Some(c) = c else { continue };
                let cs = self.dep_start[*c as usize] as usize;
                let ce = self.dep_start[*c as usize + 1] as usize;
                let m0 = self.map_start[k][slot] as usize;
                for j in 0..(ce - cs) {
                    let dst = s + self.maps[m0 + j] as usize;
                    g[dst] += coef * g[cs + j];
                }
            }
        }
        let out = v[self.root as usize];
        if !out.is_finite() {
            return Err(self.first_nonfinite(ws));
        }
        let r = self.root as usize;
        let (s, e) = (self.dep_start[r] as usize, self.dep_start[r + 1] as usize);
        if let Some(j) = ws.grads[s..e].iter().position(|x| !x.is_finite()) {
            return Err(XcError::Eval {
                path: self.paths[r].clone(),
                message: format!("non-finite derivative for trainable parameter {}", self.deps[s + j]),
            });
        }
        Ok(out)
    }

    /// out[p] += scale · ∂root/∂θ_p over the root's trainable dependencies.
    pub fn accumulate_grad(&self, ws: &TapeWorkspace, scale: f64, out: &mut [f64]) {
        let r = self.root as usize;
        let (s, e) = (self.dep_start[r] as usize, self.dep_start[r + 1] as usize);
        for (d, g) in self.deps[s..e].iter().zip(&ws.grads[s..e]) {
            out[*d as usize] += scale * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{DescriptorConstants, DescriptorName as D};
    use crate::expr::rational_wrap;
    use crate::grid::SpinDensityPoint;

    fn point() -> DescriptorPoint {
        let s = SpinDensityPoint {
            rho: [0.2, 0.05],
            grad: [[0.08, 0.0, 0.03], [0.01, 0.02, 0.0]],
            tau: [0.3, 0.05],
        };
        DescriptorPoint::compute(&s, &DescriptorConstants::default())
    }

    fn sample_tree() -> ExprNode {
        let num = ExprNode::sum(vec![
            ExprNode::param(0),
            ExprNode::product(vec![ExprNode::param(1), ExprNode::desc(D::W)]),
            ExprNode::product(vec![ExprNode::param(2), ExprNode::desc(D::ZSs)])
                .tanh(),
            ExprNode::product(vec![ExprNode::param(3), ExprNode::desc(D::UX).sigmoid()]),
        ]);
        rational_wrap(
            num,
            &[ExprNode::desc(D::W), ExprNode::desc(D::VSt).powi(2)],
            4,
        )
    }

    #[test]
    fn tape_matches_recursive_eval() {
        let t = sample_tree();
        let params = [0.4, -1.2, 0.7, 0.3, 0.1, -0.5];
        let tape = Tape::compile(&t, &[true; 6], "g").unwrap();
        let mut ws = TapeWorkspace::default();
        let dp = point();
        for spin in 0..2 {
            let a = tape.eval(&dp, spin, &params, &mut ws).unwrap();
            let b = t.eval(&dp, spin, &params).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hash_consing_shares_repeated_subtrees() {
        let w = ExprNode::desc(D::W);
        let t = ExprNode::sum(vec![w.clone().powi(2), w.clone().powi(2), w]);
        let tape = Tape::compile(&t, &[], "g").unwrap();
        assert_eq!(tape.len(), 4);
    }

    #[test]
    fn dual_matches_central_differences() {
        let t = sample_tree();
        let params = vec![0.4, -1.2, 0.7, 0.3, 0.1, -0.5];
        let mask = [true, true, false, true, true, true];
        let tape = Tape::compile(&t, &mask, "g").unwrap();
        let dp = point();
        let mut ws = TapeWorkspace::default();
        tape.eval_dual(&dp, 0, &params, &mut ws).unwrap();
        let mut grad = vec![0.0; tape.n_trainable()];
        tape.accumulate_grad(&ws, 1.0, &mut grad);
        let trainable: Vec<usize> = (0..6).filter(|i| mask[*i]).collect();
        let h = 1e-6;
        for (pos, &i) in trainable.iter().enumerate() {
            let mut p = params.clone();
            p[i] += h;
            let up = t.eval(&dp, 0, &p).unwrap();
            p[i] -= 2.0 * h;
            let dn = t.eval(&dp, 0, &p).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[pos]).abs() < 1e-8 * fd.abs().max(1.0), "param {i}: {fd} vs {}", grad[pos]);
        }
    }

    #[test]
    fn frozen_parameters_have_no_dependencies() {
        let t = ExprNode::product(vec![ExprNode::param(0), ExprNode::param(1)]);
        let tape = Tape::compile(&t, &[false, true], "g").unwrap();
        assert_eq!(tape.root_deps(), &[0]);
        assert_eq!(tape.n_trainable(), 1);
    }

    #[test]
    fn nonfinite_error_names_offending_slot() {
        let t = ExprNode::sum(vec![
            ExprNode::constant(1.0),
            ExprNode::div(ExprNode::constant(1.0), ExprNode::param(0)),
        ]);
        let tape = Tape::compile(&t, &[true], "gx").unwrap();
        let mut ws = TapeWorkspace::default();
        match tape.eval(&point(), 0, &[0.0], &mut ws) {
            Err(XcError::Eval { path, .. }) => assert_eq!(path, "gx/add[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
