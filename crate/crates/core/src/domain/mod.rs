//! Box abstract domain over backend values.
//!
//! A box is a center vector and a non-negative deviation vector; dimension
//! `i` concretizes to `[cᵢ − eᵢ, cᵢ + eᵢ]`. All transformers build their
//! outputs from the input nodes, so on a tape they are differentiable in
//! whatever the center and deviation depend on.

use serde::{Deserialize, Serialize};

use crate::autodiff::mlp::{layer_views, Activation};
use crate::autodiff::{Backend, Lifted, MlpSpec};
use crate::error::{Error, Result};
use crate::ir::Nonlinearity;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        assert!(lo <= hi, "interval lower bound {lo} exceeds upper bound {hi}");
        Self { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn center(&self) -> T {
        (self.lo + self.hi) * T::half()
    }

    /// `n` equal pieces, in ascending order.
    pub fn split(&self, n: usize) -> Vec<Interval<T>> {
        let n = n.max(1);
        let w = self.width() / T::lit(n as f64);
        (0..n)
            .map(|k| {
                let lo = if k == 0 { self.lo } else { self.lo + w * T::lit(k as f64) };
                let hi = if k + 1 == n {
                    self.hi
                } else {
                    self.lo + w * T::lit((k + 1) as f64)
                };
                Interval { lo, hi }
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Interval<U> {
        Interval {
            lo: U::lit(self.lo.as_f64()),
            hi: U::lit(self.hi.as_f64()),
        }
    }
}

/// Length of `v ∩ a`. A point `v` is measured by counting: 1 inside `a`,
/// 0 outside.
pub fn interval_overlap_volume<T: Scalar>(v: Interval<T>, a: Interval<T>) -> T {
    if v.is_point() {
        return if a.contains(v.lo) { T::one() } else { T::zero() };
    }
    (v.hi.min(a.hi) - v.lo.max(a.lo)).max(T::zero())
}

/// Axis-aligned box ⟨center, deviation⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffBox<V> {
    pub center: Vec<V>,
    pub dev: Vec<V>,
}

impl<V: Copy + PartialEq> DiffBox<V> {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn from_intervals<T: Scalar, B: Backend<T, V = V>>(b: &mut B, ivs: &[Interval<T>]) -> Self {
        let mut center = Vec::with_capacity(ivs.len());
        let mut dev = Vec::with_capacity(ivs.len());
        for iv in ivs {
            center.push(b.constant(iv.center()));
            dev.push(b.constant((iv.hi - iv.lo) * T::half()));
        }
        Self { center, dev }
    }

    pub fn from_point<T: Scalar, B: Backend<T, V = V>>(b: &mut B, x: &[T]) -> Self {
        let zero = b.constant(T::zero());
        Self {
            center: x.iter().map(|&v| b.constant(v)).collect(),
            dev: vec![zero; x.len()],
        }
    }

    pub fn interval_of<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, i: usize) -> Interval<T> {
        let c = b.value(self.center[i]);
        let e = b.value(self.dev[i]);
        Interval { lo: c - e, hi: c + e }
    }

    pub fn intervals<T: Scalar, B: Backend<T, V = V>>(&self, b: &B) -> Vec<Interval<T>> {
        (0..self.dim()).map(|i| self.interval_of(b, i)).collect()
    }

    pub fn set(&mut self, i: usize, center: V, dev: V) {
        self.center[i] = center;
        self.dev[i] = dev;
    }

    /// Sub-box over the given dimensions, in order.
    pub fn select(&self, dims: &[usize]) -> Self {
        Self {
            center: dims.iter().map(|&d| self.center[d]).collect(),
            dev: dims.iter().map(|&d| self.dev[d]).collect(),
        }
    }

    /// Appends one dimension.
    pub fn push(&mut self, center: V, dev: V) {
        self.center.push(center);
        self.dev.push(dev);
    }
}

/// Lower and upper endpoint nodes of dimension `(c, e)`.
pub fn endpoints<T: Scalar, B: Backend<T>>(b: &mut B, c: B::V, e: B::V) -> (B::V, B::V) {
    let lo = b.affine(&[(T::one(), c), (-T::one(), e)], T::zero());
    let hi = b.affine(&[(T::one(), c), (T::one(), e)], T::zero());
    (lo, hi)
}

/// Center/deviation nodes of the interval `[lo, hi]`.
pub fn from_endpoints<T: Scalar, B: Backend<T>>(b: &mut B, lo: B::V, hi: B::V) -> (B::V, B::V) {
    let h = T::half();
    let c = b.affine(&[(h, lo), (h, hi)], T::zero());
    let e = b.affine(&[(h, hi), (-h, lo)], T::zero());
    (c, e)
}

/// ⟨M·c + bias, |M|·e⟩. `matrix` is m'×m, row-major by rows.
pub fn abstract_affine<T: Scalar, B: Backend<T>>(
    b: &mut B,
    bx: &DiffBox<B::V>,
    matrix: &[Vec<T>],
    bias: &[T],
) -> Result<DiffBox<B::V>>
where
    B::V: PartialEq,
{
    if matrix.len() != bias.len() {
        return Err(Error::Shape(format!(
            "{} matrix rows but {} bias entries",
            matrix.len(),
            bias.len()
        )));
    }
    let mut out = DiffBox {
        center: Vec::with_capacity(matrix.len()),
        dev: Vec::with_capacity(matrix.len()),
    };
    for (row, &beta) in matrix.iter().zip(bias) {
        if row.len() != bx.dim() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, box has dimension {}",
                row.len(),
                bx.dim()
            )));
        }
        let terms: Vec<(T, usize)> = row.iter().copied().enumerate().map(|(j, w)| (w, j)).collect();
        let (c, e) = affine_row(b, bx, &terms, beta);
        out.push(c, e);
    }
    Ok(out)
}

/// One output of an affine map given as `(coefficient, dimension)` terms.
pub fn affine_row<T: Scalar, B: Backend<T>>(
    b: &mut B,
    bx: &DiffBox<B::V>,
    terms: &[(T, usize)],
    bias: T,
) -> (B::V, B::V) {
    let ct: Vec<(T, B::V)> = terms.iter().map(|&(w, j)| (w, bx.center[j])).collect();
    let et: Vec<(T, B::V)> = terms
        .iter()
        .filter(|(w, _)| *w != T::zero())
        .map(|&(w, j)| (w.abs(), bx.dev[j]))
        .collect();
    let c = b.affine(&ct, bias);
    let e = b.affine(&et, T::zero());
    (c, e)
}

/// Image of `[c−e, c+e]` under a monotone non-decreasing map applied to
/// both endpoints.
fn monotone<T: Scalar, B: Backend<T>>(
    b: &mut B,
    c: B::V,
    e: B::V,
    f: impl Fn(&mut B, B::V) -> B::V,
) -> (B::V, B::V) {
    let (lo, hi) = endpoints(b, c, e);
    let flo = f(b, lo);
    let fhi = f(b, hi);
    from_endpoints(b, flo, fhi)
}

pub fn relu_dim<T: Scalar, B: Backend<T>>(b: &mut B, c: B::V, e: B::V) -> (B::V, B::V) {
    monotone(b, c, e, |b, x| b.relu(x))
}

pub fn sigmoid_dim<T: Scalar, B: Backend<T>>(b: &mut B, c: B::V, e: B::V) -> (B::V, B::V) {
    monotone(b, c, e, |b, x| b.sigmoid(x))
}

pub fn abstract_relu<T: Scalar, B: Backend<T>>(b: &mut B, bx: &DiffBox<B::V>) -> DiffBox<B::V>
where
    B::V: PartialEq,
{
    let mut out = bx.clone();
    for i in 0..bx.dim() {
        let (c, e) = relu_dim(b, bx.center[i], bx.dev[i]);
        out.set(i, c, e);
    }
    out
}

pub fn abstract_sigmoid<T: Scalar, B: Backend<T>>(b: &mut B, bx: &DiffBox<B::V>) -> DiffBox<B::V>
where
    B::V: PartialEq,
{
    let mut out = bx.clone();
    for i in 0..bx.dim() {
        let (c, e) = sigmoid_dim(b, bx.center[i], bx.dev[i]);
        out.set(i, c, e);
    }
    out
}

/// Elementwise nonlinearity on one dimension.
pub fn nonlinear_dim<T: Scalar, B: Backend<T>>(
    b: &mut B,
    c: B::V,
    e: B::V,
    nl: Nonlinearity,
) -> (B::V, B::V) {
    match nl {
        Nonlinearity::Relu => relu_dim(b, c, e),
        Nonlinearity::Sigmoid => sigmoid_dim(b, c, e),
        Nonlinearity::MinConst(k) => {
            let k = b.constant(T::lit(k));
            monotone(b, c, e, |b, x| b.min(x, k))
        }
        Nonlinearity::MaxConst(k) => {
            let k = b.constant(T::lit(k));
            monotone(b, c, e, |b, x| b.max(x, k))
        }
        Nonlinearity::Abs | Nonlinearity::Square => {
            let (lo, hi) = endpoints(b, c, e);
            // distance of the interval to 0: lo when lo ≥ 0, −hi when hi ≤ 0, else 0
            let pos = b.relu(lo);
            let nhi = b.neg(hi);
            let neg = b.relu(nhi);
            let near = b.add(pos, neg);
            let alo = b.abs(lo);
            let ahi = b.abs(hi);
            let far = b.max(alo, ahi);
            if nl == Nonlinearity::Abs {
                from_endpoints(b, near, far)
            } else {
                let near2 = b.square(near);
                let far2 = b.square(far);
                from_endpoints(b, near2, far2)
            }
        }
    }
}

/// Interval forward pass of an MLP on ⟨center, dev⟩ input vectors.
pub fn abstract_mlp<T: Scalar, B: Backend<T>>(
    b: &mut B,
    spec: &MlpSpec,
    params: &Lifted<B::V>,
    module: &str,
    center: &[B::V],
    dev: &[B::V],
) -> Result<(Vec<B::V>, Vec<B::V>)> {
    if center.len() != spec.input_width() || dev.len() != center.len() {
        return Err(Error::Shape(format!(
            "{module} expects {} inputs, got {}",
            spec.input_width(),
            center.len()
        )));
    }
    let layers = layer_views(spec, params, module)?;
    let mut c: Vec<B::V> = center.to_vec();
    let mut e: Vec<B::V> = dev.to_vec();
    for layer in &layers {
        let mut nc = Vec::with_capacity(layer.fan_out);
        let mut ne = Vec::with_capacity(layer.fan_out);
        for j in 0..layer.fan_out {
            let row = layer.row(j);
            let zc = b.dot(row, &c);
            let zc = b.add(zc, layer.bias[j]);
            let ze = b.abs_dot(row, &e);
            let (oc, oe) = match layer.activation {
                Activation::None => (zc, ze),
                Activation::Relu => relu_dim(b, zc, ze),
                Activation::Sigmoid => sigmoid_dim(b, zc, ze),
            };
            nc.push(oc);
            ne.push(oe);
        }
        c = nc;
        e = ne;
    }
    Ok((c, e))
}

/// Result of splitting a box on `axis ≤ threshold`.
#[derive(Clone, Debug)]
pub struct GuardSplit<V> {
    pub prob_true: V,
    pub box_true: Option<DiffBox<V>>,
    pub box_false: Option<DiffBox<V>>,
}

/// Splits `bx` on `x_axis ≤ threshold`. The probability of the true branch
/// is the fraction of the axis interval at or below the threshold; a
/// degenerate axis goes entirely to one side with a constant probability.
pub fn guard_split<T: Scalar, B: Backend<T>>(
    b: &mut B,
    bx: &DiffBox<B::V>,
    axis: usize,
    threshold: T,
) -> Result<GuardSplit<B::V>>
where
    B::V: PartialEq,
{
    if axis >= bx.dim() {
        return Err(Error::Shape(format!(
            "guard axis {axis} out of range for dimension {}",
            bx.dim()
        )));
    }
    let c = bx.center[axis];
    let e = bx.dev[axis];
    let (cv, ev) = (b.value(c), b.value(e));
    if ev == T::zero() {
        let inside = cv <= threshold;
        let p = b.constant(if inside { T::one() } else { T::zero() });
        return Ok(if inside {
            GuardSplit {
                prob_true: p,
                box_true: Some(bx.clone()),
                box_false: None,
            }
        } else {
            GuardSplit {
                prob_true: p,
                box_true: None,
                box_false: Some(bx.clone()),
            }
        });
    }
    // (t − lo) / (hi − lo) = (t − c + e) / 2e
    let num = b.affine(&[(-T::one(), c), (T::one(), e)], threshold);
    let den = b.scale(e, T::one() + T::one());
    let ratio = b.div(num, den)?;
    let p = b.clamp01(ratio);
    let pv = b.value(p);
    let tnode = b.constant(threshold);
    let box_true = if pv == T::zero() {
        None
    } else if pv == T::one() {
        Some(bx.clone())
    } else {
        let (lo, hi) = endpoints(b, c, e);
        let top = b.min(hi, tnode);
        let (nc, ne) = from_endpoints(b, lo, top);
        let mut nb = bx.clone();
        nb.set(axis, nc, ne);
        Some(nb)
    };
    let box_false = if pv == T::one() {
        None
    } else if pv == T::zero() {
        Some(bx.clone())
    } else {
        let (lo, hi) = endpoints(b, c, e);
        let bottom = b.max(lo, tnode);
        let (nc, ne) = from_endpoints(b, bottom, hi);
        let mut nb = bx.clone();
        nb.set(axis, nc, ne);
        Some(nb)
    };
    Ok(GuardSplit {
        prob_true: p,
        box_true,
        box_false,
    })
}

/// Per-axis interval hull.
pub fn box_join<T: Scalar, B: Backend<T>>(
    b: &mut B,
    x: &DiffBox<B::V>,
    y: &DiffBox<B::V>,
) -> Result<DiffBox<B::V>>
where
    B::V: PartialEq,
{
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "cannot join boxes of dimension {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let mut out = x.clone();
    for i in 0..x.dim() {
        if x.center[i] == y.center[i] && x.dev[i] == y.dev[i] {
            continue;
        }
        let (xl, xh) = endpoints(b, x.center[i], x.dev[i]);
        let (yl, yh) = endpoints(b, y.center[i], y.dev[i]);
        let lo = b.min(xl, yl);
        let hi = b.max(xh, yh);
        let (c, e) = from_endpoints(b, lo, hi);
        out.set(i, c, e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Eval, Tape};

    fn bx(b: &mut Eval, c: &[f64], e: &[f64]) -> DiffBox<f64> {
        let _ = b;
        DiffBox {
            center: c.to_vec(),
            dev: e.to_vec(),
        }
    }

    #[test]
    fn affine_examples() {
        let mut b = Eval;
        let x = bx(&mut b, &[1.0, 2.0], &[0.5, 0.0]);
        let out = abstract_affine(&mut b, &x, &[vec![1.0, 1.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(out.center, vec![3.0, 2.0]);
        assert_eq!(out.dev, vec![0.5, 0.0]);

        let id = abstract_affine(&mut b, &x, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(id, x);

        let y = bx(&mut b, &[1.0], &[0.5]);
        let neg = abstract_affine(&mut b, &y, &[vec![-2.0]], &[0.0]).unwrap();
        assert_eq!((neg.center[0], neg.dev[0]), (-2.0, 1.0));

        assert!(matches!(
            abstract_affine(&mut b, &y, &[vec![1.0, 1.0]], &[0.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn relu_examples() {
        let mut b = Eval;
        let x = bx(&mut b, &[0.0, 3.0, -3.0], &[2.0, 1.0, 1.0]);
        let out = abstract_relu(&mut b, &x);
        assert_eq!(out.center, vec![1.0, 3.0, 0.0]);
        assert_eq!(out.dev, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn sigmoid_examples() {
        let mut b = Eval;
        let x = bx(&mut b, &[0.0, 0.0], &[0.0, 1.0]);
        let out = abstract_sigmoid(&mut b, &x);
        assert_eq!((out.center[0], out.dev[0]), (0.5, 0.0));
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let sm1 = 1.0 / (1.0 + 1.0f64.exp());
        assert!((out.center[1] - 0.5).abs() < 1e-12);
        assert!((out.dev[1] - (s1 - sm1) / 2.0).abs() < 1e-12);
        assert!((out.dev[1] - 0.2311).abs() < 1e-4);
        let iv = out.interval_of(&b, 1);
        assert!(iv.lo > 0.0 && iv.hi < 1.0);
    }

    #[test]
    fn interval_of_examples() {
        let mut b = Eval;
        let x = bx(&mut b, &[1.0, 1.0], &[0.5, 0.0]);
        assert_eq!(x.interval_of(&b, 0), Interval::new(0.5, 1.5));
        assert!(x.interval_of(&b, 1).is_point());
        let scaled = abstract_affine(&mut b, &x.select(&[0]), &[vec![2.0]], &[0.0]).unwrap();
        assert_eq!(scaled.interval_of(&b, 0), Interval::new(1.0, 3.0));
    }

    #[test]
    fn guard_split_examples() {
        let mut b = Eval;
        let x = bx(&mut b, &[1.0], &[2.0]);
        let s = guard_split(&mut b, &x, 0, 1.0).unwrap();
        assert_eq!(s.prob_true, 0.5);
        assert_eq!(s.box_true.unwrap().interval_of(&b, 0), Interval::new(-1.0, 1.0));
        assert_eq!(s.box_false.unwrap().interval_of(&b, 0), Interval::new(1.0, 3.0));

        let pt = bx(&mut b, &[2.0], &[0.0]);
        let s = guard_split(&mut b, &pt, 0, 1.0).unwrap();
        assert_eq!(s.prob_true, 0.0);
        assert!(s.box_true.is_none() && s.box_false.is_some());

        let below = bx(&mut b, &[-1.0], &[1.0]);
        let s = guard_split(&mut b, &below, 0, 1.0).unwrap();
        assert_eq!(s.prob_true, 1.0);
        assert!(s.box_false.is_none());
    }

    #[test]
    fn point_split_has_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let c = t.leaf(0.5);
        let e = t.constant(0.0);
        let x = DiffBox { center: vec![c], dev: vec![e] };
        let s = guard_split(&mut t, &x, 0, 1.0).unwrap();
        assert_eq!(t.value(s.prob_true), 1.0);
        assert_eq!(t.grad(s.prob_true, &[c]), vec![0.0]);
    }

    #[test]
    fn join_examples() {
        let mut b = Eval;
        let a = bx(&mut b, &[0.5], &[0.5]);
        let c = bx(&mut b, &[4.0], &[1.0]);
        let j = box_join(&mut b, &a, &c).unwrap();
        assert_eq!((j.center[0], j.dev[0]), (2.5, 2.5));
        assert_eq!(box_join(&mut b, &a, &a).unwrap(), a);
        let inner = bx(&mut b, &[0.5], &[0.3]);
        let j = box_join(&mut b, &a, &inner).unwrap();
        assert_eq!(j.interval_of(&b, 0), Interval::new(0.0, 1.0));
        let wide = bx(&mut b, &[0.0, 0.0], &[0.0, 0.0]);
        assert!(box_join(&mut b, &a, &wide).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(interval_overlap_volume(Interval::new(80.0, 90.0), Interval::new(55.0, 83.0)), 3.0);
        assert_eq!(interval_overlap_volume(Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)), 0.0);
        assert_eq!(interval_overlap_volume(Interval::point(60.0), Interval::new(55.0, 83.0)), 1.0);
        assert_eq!(interval_overlap_volume(Interval::point(50.0), Interval::new(55.0, 83.0)), 0.0);
    }

    #[test]
    fn abs_and_square_bounds() {
        let mut b = Eval;
        let (c, e) = nonlinear_dim(&mut b, 0.5f64, 1.5, Nonlinearity::Abs);
        assert_eq!((c - e, c + e), (0.0, 2.0));
        let (c, e) = nonlinear_dim(&mut b, -2.0f64, 1.0, Nonlinearity::Square);
        assert_eq!((c - e, c + e), (1.0, 9.0));
        let (c, e) = nonlinear_dim(&mut b, 0.0f64, 1.0, Nonlinearity::MinConst(0.5));
        assert_eq!((c - e, c + e), (-1.0, 0.5));
    }
}
