//! Scalar reverse-mode tape.
//!
//! Every node stores its operation and its primal value. Operands always
//! refer to earlier nodes, so a single reverse sweep over the node vector
//! produces all adjoints. Wide reductions (`dot`, `abs_dot`, `affine`) are
//! stored as one node over an operand run instead of a chain of binary
//! nodes; this keeps matrix products at scalar granularity without
//! inflating the node count.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Operation kinds accepted by [`Tape::apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Relu,
    Sigmoid,
    Abs,
    Clamp01,
    Log,
    Sqrt,
    Detach,
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Min | OpKind::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Min(u32, u32),
    Max(u32, u32),
    Relu(u32),
    Sigmoid(u32),
    Abs(u32),
    Clamp01(u32),
    Log(u32),
    Sqrt(u32),
    Detach,
    /// Σ w_i·x_i over `pairs[start..start+len]`.
    Dot { start: u32, len: u32 },
    /// Σ |w_i|·x_i over `pairs[start..start+len]`.
    AbsDot { start: u32, len: u32 },
    /// bias + Σ c_i·x_i over `coeffs[start..start+len]`, constant c_i.
    Affine { start: u32, len: u32 },
}

#[derive(Clone, Copy, Debug)]
struct Node<T> {
    op: Op,
    value: T,
}

/// Append-only computation record.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    pairs: Vec<(u32, u32)>,
    coeffs: Vec<(T, u32)>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            pairs: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node but keeps the allocations for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.pairs.clear();
        self.coeffs.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    fn push(&mut self, op: Op, value: T) -> Var {
        let idx = self.nodes.len();
        debug_assert!(idx < u32::MAX as usize);
        self.nodes.push(Node { op, value });
        Var(idx as u32)
    }

    #[inline]
    fn check(&self, v: Var) {
        debug_assert!(v.index() < self.nodes.len(), "foreign or stale Var");
    }

    /// New differentiable input.
    pub fn leaf(&mut self, value: T) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: T) -> Var {
        self.push(Op::Const, value)
    }

    #[inline]
    pub fn value(&self, v: Var) -> T {
        self.check(v);
        self.nodes[v.index()].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.value(b);
        if d == T::zero() {
            return Err(Error::Domain("division by zero".into()));
        }
        let v = self.value(a) / d;
        Ok(self.push(Op::Div(a.0, b.0), v))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(Op::Neg(a.0), v)
    }

    /// Ties pick the first operand.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).min(self.value(b));
        self.push(Op::Min(a.0, b.0), v)
    }

    /// Ties pick the first operand.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).max(self.value(b));
        self.push(Op::Max(a.0, b.0), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).max(T::zero());
        self.push(Op::Relu(a.0), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = sigmoid(self.value(a));
        self.push(Op::Sigmoid(a.0), v)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).abs();
        self.push(Op::Abs(a.0), v)
    }

    pub fn clamp01(&mut self, a: Var) -> Var {
        let v = self.value(a).max(T::zero()).min(T::one());
        self.push(Op::Clamp01(a.0), v)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x <= T::zero() {
            return Err(Error::Domain(format!("log of non-positive value {x}")));
        }
        Ok(self.push(Op::Log(a.0), x.ln()))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x < T::zero() {
            return Err(Error::Domain(format!("sqrt of negative value {x}")));
        }
        Ok(self.push(Op::Sqrt(a.0), x.sqrt()))
    }

    /// Copies the primal; contributes no gradient to `a`.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.value(a);
        self.push(Op::Detach, v)
    }

    pub fn dot(&mut self, w: &[Var], x: &[Var]) -> Var {
        assert_eq!(w.len(), x.len(), "dot operand lengths differ");
        let start = self.pairs.len() as u32;
        let mut acc = T::zero();
        for (&wi, &xi) in w.iter().zip(x) {
            acc = acc + self.value(wi) * self.value(xi);
            self.pairs.push((wi.0, xi.0));
        }
        self.push(
            Op::Dot {
                start,
                len: w.len() as u32,
            },
            acc,
        )
    }

    pub fn abs_dot(&mut self, w: &[Var], x: &[Var]) -> Var {
        assert_eq!(w.len(), x.len(), "abs_dot operand lengths differ");
        let start = self.pairs.len() as u32;
        let mut acc = T::zero();
        for (&wi, &xi) in w.iter().zip(x) {
            acc = acc + self.value(wi).abs() * self.value(xi);
            self.pairs.push((wi.0, xi.0));
        }
        self.push(
            Op::AbsDot {
                start,
                len: w.len() as u32,
            },
            acc,
        )
    }

    pub fn affine(&mut self, terms: &[(T, Var)], bias: T) -> Var {
        if terms.is_empty() {
            return self.constant(bias);
        }
        let start = self.coeffs.len() as u32;
        let mut acc = bias;
        for &(c, x) in terms {
            acc = acc + c * self.value(x);
            self.coeffs.push((c, x.0));
        }
        self.push(
            Op::Affine {
                start,
                len: terms.len() as u32,
            },
            acc,
        )
    }

    /// Generic dispatch over [`OpKind`].
    pub fn apply(&mut self, kind: OpKind, operands: &[Var]) -> Result<Var> {
        if operands.len() != kind.arity() {
            return Err(Error::Arity(format!(
                "{kind:?} expects {} operands, got {}",
                kind.arity(),
                operands.len()
            )));
        }
        let a = operands[0];
        let b = operands.get(1).copied().unwrap_or(a);
        Ok(match kind {
            OpKind::Add => self.add(a, b),
            OpKind::Sub => self.sub(a, b),
            OpKind::Mul => self.mul(a, b),
            OpKind::Div => self.div(a, b)?,
            OpKind::Neg => self.neg(a),
            OpKind::Min => self.min(a, b),
            OpKind::Max => self.max(a, b),
            OpKind::Relu => self.relu(a),
            OpKind::Sigmoid => self.sigmoid(a),
            OpKind::Abs => self.abs(a),
            OpKind::Clamp01 => self.clamp01(a),
            OpKind::Log => self.log(a)?,
            OpKind::Sqrt => self.sqrt(a)?,
            OpKind::Detach => self.detach(a),
        })
    }

    /// Adjoints of `output` with respect to every node on the tape.
    pub fn adjoints(&self, output: Var) -> Vec<T> {
        self.check(output);
        let n = output.index() + 1;
        let mut adj = vec![T::zero(); n];
        adj[output.index()] = T::one();
        let zero = T::zero();
        for i in (0..n).rev() {
            let g = adj[i];
            if g == zero {
                continue;
            }
            let node = self.nodes[i];
            match node.op {
                Op::Leaf | Op::Const | Op::Detach => {}
                Op::Add(a, b) => {
                    adj[a as usize] = adj[a as usize] + g;
                    adj[b as usize] = adj[b as usize] + g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] = adj[a as usize] + g;
                    adj[b as usize] = adj[b as usize] - g;
                }
                Op::Mul(a, b) => {
                    let va = self.nodes[a as usize].value;
                    let vb = self.nodes[b as usize].value;
                    adj[a as usize] = adj[a as usize] + g * vb;
                    adj[b as usize] = adj[b as usize] + g * va;
                }
                Op::Div(a, b) => {
                    let vb = self.nodes[b as usize].value;
                    adj[a as usize] = adj[a as usize] + g / vb;
                    adj[b as usize] = adj[b as usize] - g * node.value / vb;
                }
                Op::Neg(a) => adj[a as usize] = adj[a as usize] - g,
                Op::Min(a, b) => {
                    let pick = if self.nodes[a as usize].value <= self.nodes[b as usize].value {
                        a
                    } else {
                        b
                    };
                    adj[pick as usize] = adj[pick as usize] + g;
                }
                Op::Max(a, b) => {
                    let pick = if self.nodes[a as usize].value >= self.nodes[b as usize].value {
                        a
                    } else {
                        b
                    };
                    adj[pick as usize] = adj[pick as usize] + g;
                }
                Op::Relu(a) => {
                    if self.nodes[a as usize].value > zero {
                        adj[a as usize] = adj[a as usize] + g;
                    }
                }
                Op::Sigmoid(a) => {
                    let s = node.value;
                    adj[a as usize] = adj[a as usize] + g * s * (T::one() - s);
                }
                Op::Abs(a) => {
                    let x = self.nodes[a as usize].value;
                    if x > zero {
                        adj[a as usize] = adj[a as usize] + g;
                    } else if x < zero {
                        adj[a as usize] = adj[a as usize] - g;
                    }
                }
                Op::Clamp01(a) => {
                    let x = self.nodes[a as usize].value;
                    if x > zero && x < T::one() {
                        adj[a as usize] = adj[a as usize] + g;
                    }
                }
                Op::Log(a) => {
                    let x = self.nodes[a as usize].value;
                    adj[a as usize] = adj[a as usize] + g / x;
                }
                Op::Sqrt(a) => {
                    if node.value > zero {
                        let two = T::one() + T::one();
                        adj[a as usize] = adj[a as usize] + g / (two * node.value);
                    }
                }
                Op::Dot { start, len } => {
                    let run = &self.pairs[start as usize..(start + len) as usize];
                    for &(w, x) in run {
                        let vw = self.nodes[w as usize].value;
                        let vx = self.nodes[x as usize].value;
                        adj[w as usize] = adj[w as usize] + g * vx;
                        adj[x as usize] = adj[x as usize] + g * vw;
                    }
                }
                Op::AbsDot { start, len } => {
                    let run = &self.pairs[start as usize..(start + len) as usize];
                    for &(w, x) in run {
                        let vw = self.nodes[w as usize].value;
                        let vx = self.nodes[x as usize].value;
                        if vw > zero {
                            adj[w as usize] = adj[w as usize] + g * vx;
                        } else if vw < zero {
                            adj[w as usize] = adj[w as usize] - g * vx;
                        }
                        adj[x as usize] = adj[x as usize] + g * vw.abs();
                    }
                }
                Op::Affine { start, len } => {
                    let run = &self.coeffs[start as usize..(start + len) as usize];
                    for &(c, x) in run {
                        adj[x as usize] = adj[x as usize] + g * c;
                    }
                }
            }
        }
        adj
    }

    /// ∂output/∂leaf for each requested leaf, in order.
    pub fn grad(&self, output: Var, leaves: &[Var]) -> Vec<T> {
        let adj = self.adjoints(output);
        leaves
            .iter()
            .map(|l| adj.get(l.index()).copied().unwrap_or_else(T::zero))
            .collect()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_sigmoid_primals() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(-3.0);
        let r = t.relu(x);
        assert_eq!(t.value(r), 0.0);
        let z = t.leaf(0.0);
        let s = t.sigmoid(z);
        assert_eq!(t.value(s), 0.5);
        assert_eq!(t.grad(s, &[z]), vec![0.25]);
    }

    #[test]
    fn relu_gradient_and_kink() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(2.0);
        let r = t.relu(x);
        assert_eq!(t.grad(r, &[x]), vec![1.0]);
        let z = t.leaf(0.0);
        let r0 = t.relu(z);
        assert_eq!(t.grad(r0, &[z]), vec![0.0]);
    }

    #[test]
    fn clamp01_saturates_with_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(1.7);
        let c = t.clamp01(x);
        assert_eq!(t.value(c), 1.0);
        assert_eq!(t.grad(c, &[x]), vec![0.0]);
        // finite differences agree: the function is flat around 1.7
        let h = 1e-5;
        let fd = ((1.7f64 + h).clamp(0.0, 1.0) - (1.7f64 - h).clamp(0.0, 1.0)) / (2.0 * h);
        assert_eq!(fd, 0.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(3.0);
        let d = t.detach(x);
        let y = t.mul(d, x);
        assert_eq!(t.value(d), 3.0);
        assert_eq!(t.grad(d, &[x]), vec![0.0]);
        assert_eq!(t.grad(y, &[x]), vec![3.0]);
    }

    #[test]
    fn domain_errors() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(1.0);
        let z = t.constant(0.0);
        assert!(matches!(t.div(a, z), Err(Error::Domain(_))));
        assert!(matches!(t.log(z), Err(Error::Domain(_))));
        let n = t.constant(-1.0);
        assert!(matches!(t.log(n), Err(Error::Domain(_))));
    }

    #[test]
    fn apply_checks_arity() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(1.0);
        assert!(matches!(t.apply(OpKind::Add, &[a]), Err(Error::Arity(_))));
        let s = t.apply(OpKind::Add, &[a, a]).unwrap();
        assert_eq!(t.value(s), 2.0);
    }

    #[test]
    fn operands_precede_nodes() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(1.0);
        let b = t.leaf(2.0);
        let c = t.dot(&[a, b], &[b, a]);
        assert!(a.index() < c.index() && b.index() < c.index());
        assert_eq!(t.value(c), 4.0);
        assert_eq!(t.grad(c, &[a, b]), vec![4.0, 2.0]);
    }

    #[test]
    fn abs_dot_gradient_sign() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(-2.0);
        let e = t.leaf(0.5);
        let y = t.abs_dot(&[w], &[e]);
        assert_eq!(t.value(y), 1.0);
        assert_eq!(t.grad(y, &[w, e]), vec![-0.5, 2.0]);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::autodiff::{Backend, Eval};
    use proptest::prelude::*;

    /// Applies `ops` (opcode, operand, operand) to a growing node list and
    /// sums the last few nodes. Also returns the closest approach of any
    /// nonsmooth op to its kink.
    fn composite<B: Backend<f64>>(b: &mut B, leaves: &[B::V], ops: &[(u8, usize, usize)]) -> (B::V, f64) {
        let mut nodes = leaves.to_vec();
        let mut kink = f64::INFINITY;
        for &(op, i, j) in ops {
            let (x, y) = (nodes[i % nodes.len()], nodes[j % nodes.len()]);
            let (xv, yv) = (b.value(x), b.value(y));
            let out = match op % 12 {
                0 => b.add(x, y),
                1 => b.sub(x, y),
                2 => b.mul(x, y),
                3 => b.neg(x),
                4 => b.sigmoid(x),
                5 => {
                    kink = kink.min(xv.abs());
                    b.relu(x)
                }
                6 => {
                    kink = kink.min(xv.abs());
                    b.abs(x)
                }
                7 => {
                    kink = kink.min((xv - yv).abs());
                    b.min(x, y)
                }
                8 => {
                    kink = kink.min((xv - yv).abs());
                    b.max(x, y)
                }
                9 => {
                    kink = kink.min(xv.abs()).min((xv - 1.0).abs());
                    b.clamp01(x)
                }
                10 => {
                    // x / (1 + y²)
                    let y2 = b.square(y);
                    let d = b.add_const(y2, 1.0);
                    b.div(x, d).unwrap()
                }
                _ => {
                    // log(1 + x²) + sqrt(1 + y²)
                    let x2 = b.square(x);
                    let x2 = b.add_const(x2, 1.0);
                    let l = b.log(x2).unwrap();
                    let y2 = b.square(y);
                    let y2 = b.add_const(y2, 1.0);
                    let s = b.sqrt(y2).unwrap();
                    b.add(l, s)
                }
            };
            nodes.push(out);
        }
        let tail = &nodes[nodes.len().saturating_sub(3)..];
        (b.sum(tail), kink)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn gradients_match_finite_differences(
            xs in prop::collection::vec(-2.0..2.0f64, 20),
            ops in prop::collection::vec((0..12u8, 0..64usize, 0..64usize), 1..16),
        ) {
            let (_, kink) = composite(&mut Eval, &xs, &ops);
            prop_assume!(kink > 1e-3);
            let mut t = Tape::new();
            let leaves: Vec<Var> = xs.iter().map(|&x| t.leaf(x)).collect();
            let (y, _) = composite(&mut t, &leaves, &ops);
            let g = t.grad(y, &leaves);
            let h = 1e-5;
            for k in 0..xs.len() {
                let mut p = xs.clone();
                let mut m = xs.clone();
                p[k] += h;
                m[k] -= h;
                let (fp, kp) = composite(&mut Eval, &p, &ops);
                let (fm, km) = composite(&mut Eval, &m, &ops);
                // a perturbation that crosses a kink invalidates the difference quotient
                prop_assume!(kp > 1e-4 && km > 1e-4);
                let fd = (fp - fm) / (2.0 * h);
                prop_assert!((g[k] - fd).abs() <= 1e-4 * g[k].abs().max(fd.abs()) + 1e-7, "leaf {k}: {} vs {fd}", g[k]);
            }
        }

        #[test]
        fn detach_blocks_gradient_and_keeps_primal(x in -10.0..10.0f64) {
            let mut t = Tape::new();
            let a = t.leaf(x);
            let s = t.sigmoid(a);
            let d = t.detach(s);
            let y = t.mul(d, a);
            prop_assert_eq!(t.value(d), t.value(s));
            prop_assert_eq!(t.grad(d, &[a]), vec![0.0]);
            prop_assert_eq!(t.grad(y, &[a]), vec![t.value(s)]);
        }
    }
}
