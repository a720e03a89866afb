//! Arithmetic backends.
//!
//! The abstract transformers, loss functions and executors are written once
//! against [`Backend`]. Training runs them on a [`Tape`] to get gradients;
//! verification runs them on [`Eval`], which only computes primals.

use std::fmt::Debug;

use super::tape::{sigmoid, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub trait Backend<T: Scalar> {
    type V: Copy + Debug + PartialEq;

    fn constant(&mut self, x: T) -> Self::V;
    fn value(&self, v: Self::V) -> T;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Result<Self::V>;
    fn neg(&mut self, a: Self::V) -> Self::V;
    fn min(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn max(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn relu(&mut self, a: Self::V) -> Self::V;
    fn sigmoid(&mut self, a: Self::V) -> Self::V;
    fn abs(&mut self, a: Self::V) -> Self::V;
    fn clamp01(&mut self, a: Self::V) -> Self::V;
    fn log(&mut self, a: Self::V) -> Result<Self::V>;
    fn sqrt(&mut self, a: Self::V) -> Result<Self::V>;
    fn detach(&mut self, a: Self::V) -> Self::V;

    /// bias + Σ cᵢ·xᵢ with constant coefficients.
    fn affine(&mut self, terms: &[(T, Self::V)], bias: T) -> Self::V;
    /// Σ wᵢ·xᵢ.
    fn dot(&mut self, w: &[Self::V], x: &[Self::V]) -> Self::V;
    /// Σ |wᵢ|·xᵢ.
    fn abs_dot(&mut self, w: &[Self::V], x: &[Self::V]) -> Self::V;

    fn square(&mut self, a: Self::V) -> Self::V {
        self.mul(a, a)
    }

    fn add_const(&mut self, a: Self::V, c: T) -> Self::V {
        self.affine(&[(T::one(), a)], c)
    }

    fn scale(&mut self, a: Self::V, c: T) -> Self::V {
        self.affine(&[(c, a)], T::zero())
    }

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        let terms: Vec<(T, Self::V)> = xs.iter().map(|&x| (T::one(), x)).collect();
        self.affine(&terms, T::zero())
    }
}

impl<T: Scalar> Backend<T> for Tape<T> {
    type V = Var;

    fn constant(&mut self, x: T) -> Var {
        Tape::constant(self, x)
    }
    fn value(&self, v: Var) -> T {
        Tape::value(self, v)
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        Tape::add(self, a, b)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        Tape::sub(self, a, b)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        Tape::mul(self, a, b)
    }
    fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        Tape::div(self, a, b)
    }
    fn neg(&mut self, a: Var) -> Var {
        Tape::neg(self, a)
    }
    fn min(&mut self, a: Var, b: Var) -> Var {
        Tape::min(self, a, b)
    }
    fn max(&mut self, a: Var, b: Var) -> Var {
        Tape::max(self, a, b)
    }
    fn relu(&mut self, a: Var) -> Var {
        Tape::relu(self, a)
    }
    fn sigmoid(&mut self, a: Var) -> Var {
        Tape::sigmoid(self, a)
    }
    fn abs(&mut self, a: Var) -> Var {
        Tape::abs(self, a)
    }
    fn clamp01(&mut self, a: Var) -> Var {
        Tape::clamp01(self, a)
    }
    fn log(&mut self, a: Var) -> Result<Var> {
        Tape::log(self, a)
    }
    fn sqrt(&mut self, a: Var) -> Result<Var> {
        Tape::sqrt(self, a)
    }
    fn detach(&mut self, a: Var) -> Var {
        Tape::detach(self, a)
    }
    fn affine(&mut self, terms: &[(T, Var)], bias: T) -> Var {
        Tape::affine(self, terms, bias)
    }
    fn dot(&mut self, w: &[Var], x: &[Var]) -> Var {
        Tape::dot(self, w, x)
    }
    fn abs_dot(&mut self, w: &[Var], x: &[Var]) -> Var {
        Tape::abs_dot(self, w, x)
    }
}

/// Primal-only backend: values are plain scalars, nothing is recorded.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eval;

impl<T: Scalar> Backend<T> for Eval {
    type V = T;

    fn constant(&mut self, x: T) -> T {
        x
    }
    fn value(&self, v: T) -> T {
        v
    }
    fn add(&mut self, a: T, b: T) -> T {
        a + b
    }
    fn sub(&mut self, a: T, b: T) -> T {
        a - b
    }
    fn mul(&mut self, a: T, b: T) -> T {
        a * b
    }
    fn div(&mut self, a: T, b: T) -> Result<T> {
        if b == T::zero() {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(a / b)
    }
    fn neg(&mut self, a: T) -> T {
        -a
    }
    fn min(&mut self, a: T, b: T) -> T {
        a.min(b)
    }
    fn max(&mut self, a: T, b: T) -> T {
        a.max(b)
    }
    fn relu(&mut self, a: T) -> T {
        a.max(T::zero())
    }
    fn sigmoid(&mut self, a: T) -> T {
        sigmoid(a)
    }
    fn abs(&mut self, a: T) -> T {
        a.abs()
    }
    fn clamp01(&mut self, a: T) -> T {
        a.max(T::zero()).min(T::one())
    }
    fn log(&mut self, a: T) -> Result<T> {
        if a <= T::zero() {
            return Err(Error::Domain(format!("log of non-positive value {a}")));
        }
        Ok(a.ln())
    }
    fn sqrt(&mut self, a: T) -> Result<T> {
        if a < T::zero() {
            return Err(Error::Domain(format!("sqrt of negative value {a}")));
        }
        Ok(a.sqrt())
    }
    fn detach(&mut self, a: T) -> T {
        a
    }
    fn affine(&mut self, terms: &[(T, T)], bias: T) -> T {
        terms.iter().fold(bias, |acc, &(c, x)| acc + c * x)
    }
    fn dot(&mut self, w: &[T], x: &[T]) -> T {
        w.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }
    fn abs_dot(&mut self, w: &[T], x: &[T]) -> T {
        w.iter()
            .zip(x)
            .fold(T::zero(), |acc, (&a, &b)| acc + a.abs() * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // The same expression must give bit-identical primals on both backends.
    fn expr<B: Backend<f64>>(b: &mut B, x: B::V, y: B::V) -> B::V {
        let s = b.sigmoid(x);
        let r = b.relu(y);
        let m = b.mul(s, r);
        let a = b.affine(&[(2.0, m), (-0.5, x)], 1.0);
        let d = b.dot(&[a, x], &[y, y]);
        b.abs_dot(&[d], &[s])
    }

    #[test]
    fn tape_and_eval_agree() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(0.3);
        let y = tape.leaf(-1.2);
        let out = expr(&mut tape, x, y);
        let ev = expr(&mut Eval, 0.3f64, -1.2f64);
        assert_eq!(tape.value(out).to_bits(), ev.to_bits());
    }
}
