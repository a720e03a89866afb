//! Program representation for neurosymbolic programs.

pub mod benchmarks;
pub mod ground_truth;
pub mod lower;
pub mod wellformed;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::backend::Backend;
use crate::autodiff::MlpSpec;
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use benchmarks::{build_benchmark, Benchmark, BenchmarkConfig, BENCHMARKS};
pub use ground_truth::{Controller, GroundTruthProgram, NoiseSpec};
pub use lower::{is_normalized, lower_argmax, normalize_guards};
pub use wellformed::{well_formed, Diagnostic};

pub type VarId = usize;

/// Elementwise function applied after the affine part of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    Sigmoid,
    Abs,
    Square,
    MinConst(f64),
    MaxConst(f64),
}

impl Nonlinearity {
    pub fn apply<T: Scalar, B: Backend<T>>(self, b: &mut B, x: B::V) -> B::V {
        match self {
            Nonlinearity::Relu => b.relu(x),
            Nonlinearity::Sigmoid => b.sigmoid(x),
            Nonlinearity::Abs => b.abs(x),
            Nonlinearity::Square => b.square(x),
            Nonlinearity::MinConst(k) => {
                let k = b.constant(T::lit(k));
                b.min(x, k)
            }
            Nonlinearity::MaxConst(k) => {
                let k = b.constant(T::lit(k));
                b.max(x, k)
            }
        }
    }
}

/// `nl(Σ cᵢ·xᵢ + constant)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Nonlinearity>,
}

impl Expr {
    pub fn var(v: VarId) -> Self {
        Self::linear(vec![(v, 1.0)], 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::linear(vec![], c)
    }

    pub fn linear(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        Self {
            terms,
            constant,
            nonlinearity: None,
        }
    }

    /// `a − b`.
    pub fn diff(a: VarId, b: VarId) -> Self {
        Self::linear(vec![(a, 1.0), (b, -1.0)], 0.0)
    }

    /// `v + c`.
    pub fn offset(v: VarId, c: f64) -> Self {
        Self::linear(vec![(v, 1.0)], c)
    }

    pub fn then(mut self, nl: Nonlinearity) -> Self {
        assert!(self.nonlinearity.is_none(), "expression already has a nonlinearity");
        self.nonlinearity = Some(nl);
        self
    }

    /// The variable when the expression is exactly `x`.
    pub fn as_var(&self) -> Option<VarId> {
        match (self.terms.as_slice(), self.nonlinearity) {
            ([(v, c)], None) if *c == 1.0 && self.constant == 0.0 => Some(*v),
            _ => None,
        }
    }

    pub fn reads(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().map(|&(v, _)| v)
    }

    /// Evaluates on any backend with variables bound to `env`.
    pub fn eval<T: Scalar, B: Backend<T>>(&self, b: &mut B, env: &[B::V]) -> B::V {
        let terms: Vec<(T, B::V)> = self.terms.iter().map(|&(v, c)| (T::lit(c), env[v])).collect();
        let z = b.affine(&terms, T::lit(self.constant));
        match self.nonlinearity {
            Some(nl) => nl.apply(b, z),
            None => z,
        }
    }
}

/// One axis of a safe box; `None` means unbounded on that side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeInterval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl SafeInterval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn at_most(hi: f64) -> Self {
        Self { lo: None, hi: Some(hi) }
    }

    pub fn at_least(lo: f64) -> Self {
        Self { lo: Some(lo), hi: None }
    }

    pub fn unbounded() -> Self {
        Self { lo: None, hi: None }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|l| x >= l) && self.hi.is_none_or(|h| x <= h)
    }

    /// Distance from `x` to the interval.
    pub fn gap(&self, x: f64) -> f64 {
        match (self.lo, self.hi) {
            (Some(l), _) if x < l => l - x,
            (_, Some(h)) if x > h => x - h,
            _ => 0.0,
        }
    }
}

/// Union of pairwise-disjoint boxes over the asserted variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeSet {
    pub boxes: Vec<Vec<SafeInterval>>,
}

impl SafeSet {
    pub fn new(boxes: Vec<Vec<SafeInterval>>) -> Result<Self> {
        let s = Self { boxes };
        s.validate()?;
        Ok(s)
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            boxes: vec![vec![SafeInterval::closed(lo, hi)]],
        }
    }

    pub fn single(axes: Vec<SafeInterval>) -> Self {
        Self { boxes: vec![axes] }
    }

    pub fn dim(&self) -> usize {
        self.boxes.first().map_or(0, |b| b.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::IllFormed("safe set has no boxes".into()));
        }
        let d = self.dim();
        for b in &self.boxes {
            if b.len() != d || d == 0 {
                return Err(Error::IllFormed("safe boxes must share a positive dimension".into()));
            }
            for ax in b {
                if let (Some(l), Some(h)) = (ax.lo, ax.hi) {
                    if l > h || !l.is_finite() || !h.is_finite() {
                        return Err(Error::IllFormed(format!("bad safe interval [{l}, {h}]")));
                    }
                }
            }
        }
        for i in 0..self.boxes.len() {
            for j in i + 1..self.boxes.len() {
                if !boxes_disjoint(&self.boxes[i], &self.boxes[j]) {
                    return Err(Error::IllFormed(format!("safe boxes {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes
            .iter()
            .any(|b| b.iter().zip(x).all(|(ax, &v)| ax.contains(v)))
    }
}

/// Positive-measure intersection is empty: some axis overlaps in at most a
/// point (1e-12 slack).
fn boxes_disjoint(a: &[SafeInterval], b: &[SafeInterval]) -> bool {
    a.iter().zip(b).any(|(x, y)| {
        let lo = match (x.lo, y.lo) {
            (Some(p), Some(q)) => Some(p.max(q)),
            (p, q) => p.or(q),
        };
        let hi = match (x.hi, y.hi) {
            (Some(p), Some(q)) => Some(p.min(q)),
            (p, q) => p.or(q),
        };
        matches!((lo, hi), (Some(l), Some(h)) if h - l <= 1e-12)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stmt", rename_all = "snake_case")]
pub enum Stmt {
    Seq {
        body: Vec<Stmt>,
    },
    Assign {
        target: VarId,
        expr: Expr,
    },
    NeuralCall {
        module: String,
        inputs: Vec<VarId>,
        outputs: Vec<VarId>,
    },
    IfLeq {
        guard: Expr,
        threshold: f64,
        then: Box<Stmt>,
        #[serde(rename = "else")]
        otherwise: Box<Stmt>,
    },
    Repeat {
        count: usize,
        body: Box<Stmt>,
    },
    Assert {
        vars: Vec<VarId>,
        safe: SafeSet,
    },
}

impl Stmt {
    pub fn seq(body: Vec<Stmt>) -> Self {
        Stmt::Seq { body }
    }

    pub fn skip() -> Self {
        Stmt::Seq { body: vec![] }
    }

    pub fn assign(target: VarId, expr: Expr) -> Self {
        Stmt::Assign { target, expr }
    }

    pub fn call(module: &str, inputs: Vec<VarId>, outputs: Vec<VarId>) -> Self {
        Stmt::NeuralCall {
            module: module.to_string(),
            inputs,
            outputs,
        }
    }

    pub fn if_leq(guard: Expr, threshold: f64, then: Stmt, otherwise: Stmt) -> Self {
        Stmt::IfLeq {
            guard,
            threshold,
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        }
    }

    pub fn repeat(count: usize, body: Stmt) -> Self {
        Stmt::Repeat {
            count,
            body: Box::new(body),
        }
    }

    pub fn assert(vars: Vec<VarId>, safe: SafeSet) -> Self {
        Stmt::Assert { vars, safe }
    }

    /// Static count of statements matching `pred`; loop bodies count once.
    pub fn count_nodes(&self, pred: &dyn Fn(&Stmt) -> bool) -> usize {
        let own = usize::from(pred(self));
        own + match self {
            Stmt::Seq { body } => body.iter().map(|s| s.count_nodes(pred)).sum(),
            Stmt::IfLeq { then, otherwise, .. } => then.count_nodes(pred) + otherwise.count_nodes(pred),
            Stmt::Repeat { body, .. } => body.count_nodes(pred),
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub var: VarId,
    pub interval: Interval<f64>,
}

/// A neurosymbolic program. Variables not listed in `inputs` start at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub variables: Vec<String>,
    pub modules: BTreeMap<String, MlpSpec>,
    pub inputs: Vec<InputSpec>,
    pub body: Stmt,
}

impl Program {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            variables: vec![],
            modules: BTreeMap::new(),
            inputs: vec![],
            body: Stmt::skip(),
        }
    }

    /// Index of `name`, declaring it if needed.
    pub fn var(&mut self, name: &str) -> VarId {
        if let Some(i) = self.var_index(name) {
            return i;
        }
        self.variables.push(name.to_string());
        self.variables.len() - 1
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v == name)
    }

    /// Declares a variable with a name not used so far.
    pub fn fresh_var(&mut self, prefix: &str) -> VarId {
        let mut k = self.variables.len();
        loop {
            let name = format!("{prefix}#{k}");
            if self.var_index(&name).is_none() {
                return self.var(&name);
            }
            k += 1;
        }
    }

    pub fn add_input(&mut self, var: VarId, lo: f64, hi: f64) {
        self.inputs.push(InputSpec {
            var,
            interval: Interval::new(lo, hi),
        });
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_intervals(&self) -> Vec<Interval<f64>> {
        self.inputs.iter().map(|i| i.interval).collect()
    }

    /// Full initial environment for a concrete input vector.
    pub fn initial_env<T: Scalar>(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "{} expects {} inputs, got {}",
                self.name,
                self.inputs.len(),
                input.len()
            )));
        }
        let mut env = vec![T::zero(); self.variables.len()];
        for (spec, &x) in self.inputs.iter().zip(input) {
            env[spec.var] = x;
        }
        Ok(env)
    }

    /// Full initial interval environment for a box of the input space.
    pub fn initial_intervals(&self, input: &[Interval<f64>]) -> Result<Vec<Interval<f64>>> {
        if input.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "{} expects {} input intervals, got {}",
                self.name,
                self.inputs.len(),
                input.len()
            )));
        }
        let mut env = vec![Interval::point(0.0); self.variables.len()];
        for (spec, iv) in self.inputs.iter().zip(input) {
            env[spec.var] = *iv;
        }
        Ok(env)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eval;

    #[test]
    fn expr_eval_and_alias() {
        let e = Expr::linear(vec![(0, 2.0), (1, -1.0)], 0.5).then(Nonlinearity::Relu);
        assert_eq!(e.eval(&mut Eval, &[1.0f64, 3.0]), 0.0);
        assert_eq!(e.eval(&mut Eval, &[3.0f64, 1.0]), 5.5);
        assert_eq!(Expr::var(4).as_var(), Some(4));
        assert_eq!(Expr::offset(4, 1.0).as_var(), None);
    }

    #[test]
    fn safe_set_disjointness() {
        assert!(SafeSet::new(vec![vec![SafeInterval::closed(0.0, 1.0)], vec![SafeInterval::closed(3.0, 4.0)]]).is_ok());
        assert!(SafeSet::new(vec![vec![SafeInterval::closed(0.0, 2.0)], vec![SafeInterval::closed(1.0, 4.0)]]).is_err());
        assert!(SafeSet::new(vec![vec![SafeInterval::at_most(-1.0)], vec![SafeInterval::at_least(1.0)]]).is_ok());
        assert!(SafeSet::new(vec![]).is_err());
        let s = SafeSet::interval(55.0, 83.0);
        assert!(s.contains(&[60.0]) && !s.contains(&[85.0]));
    }

    #[test]
    fn program_json_round_trip() {
        let mut p = Program::new("t");
        let x = p.var("x");
        let z = p.var("z");
        p.add_input(x, -1.0, 1.0);
        p.body = Stmt::seq(vec![
            Stmt::if_leq(Expr::var(x), 0.0, Stmt::assign(z, Expr::constant(1.0)), Stmt::assign(z, Expr::constant(2.0))),
            Stmt::assert(vec![z], SafeSet::single(vec![SafeInterval::at_most(1.0)])),
        ]);
        let text = p.to_json().unwrap();
        assert!(text.contains("\"stmt\": \"if_leq\""));
        assert_eq!(Program::from_json(&text).unwrap(), p);
    }
}
