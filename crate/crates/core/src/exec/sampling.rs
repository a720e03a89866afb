//! Sampled symbolic execution with volume-proportional branch choice.
//!
//! Trajectories drawn from the same start box are executed as bundles: all
//! members that have made the same choices so far share one box, and a bundle
//! splits only at a conditional where its members disagree. Each member owns
//! its random stream, so the result does not depend on the bundling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{abstract_call, abstract_expr, check_box, guard_axis, require_normalized, start_box, BoxDump};
use crate::autodiff::{Backend, Lifted};
use crate::domain::{guard_split, DiffBox};
use crate::error::{Error, Result};
use crate::ir::{Program, Stmt};
use crate::rng::stream;
use crate::safety::{trajectory_unsafe, unsafe_box};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Trajectories per start box.
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            trajectories: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord<V> {
    /// Boxes over the asserted variables at each assert.
    pub states: Vec<DiffBox<V>>,
    /// `log p` of the chosen side at each non-degenerate split.
    pub logprob_terms: Vec<V>,
    pub unsafety_terms: Vec<V>,
    /// Every branch taken, forced or drawn (`true` = then-branch).
    pub branch_choices: Vec<bool>,
    pub weight: f64,
}

impl<V: Copy> TrajectoryRecord<V> {
    fn empty(weight: f64) -> Self {
        Self {
            states: vec![],
            logprob_terms: vec![],
            unsafety_terms: vec![],
            branch_choices: vec![],
            weight,
        }
    }

    /// One JSON object for the trajectory dump.
    pub fn dump<T: Scalar, B: Backend<T, V = V>>(&self, b: &B) -> serde_json::Value {
        let boxes: Vec<BoxDump> = self.states.iter().map(|s| BoxDump::of(b, s)).collect();
        serde_json::json!({
            "weight": self.weight,
            "branch_choices": self.branch_choices,
            "assert_losses": self.unsafety_terms.iter().map(|&u| b.value(u).as_f64()).collect::<Vec<_>>(),
            "boxes": boxes,
        })
    }
}

struct Group<V> {
    bx: DiffBox<V>,
    members: Vec<usize>,
}

struct Sampler<'a, V, R> {
    p: &'a Program,
    params: &'a Lifted<V>,
    records: Vec<TrajectoryRecord<V>>,
    rngs: Vec<R>,
}

impl<V: Copy + PartialEq + std::fmt::Debug, R: Rng> Sampler<'_, V, R> {
    fn run<T: Scalar, B: Backend<T, V = V>>(&mut self, b: &mut B, s: &Stmt, groups: Vec<Group<V>>) -> Result<Vec<Group<V>>> {
        match s {
            Stmt::Seq { body } => {
                let mut gs = groups;
                for st in body {
                    gs = self.run(b, st, gs)?;
                }
                Ok(gs)
            }
            Stmt::Repeat { count, body } => {
                let mut gs = groups;
                for _ in 0..*count {
                    gs = self.run(b, body, gs)?;
                }
                Ok(gs)
            }
            Stmt::IfLeq {
                guard,
                threshold,
                then,
                otherwise,
            } => {
                let axis = guard_axis(guard)?;
                let mut out = Vec::new();
                for g in groups {
                    let split = guard_split(b, &g.bx, axis, T::lit(*threshold))?;
                    match (split.box_true, split.box_false) {
                        (Some(t), Some(f)) => {
                            let p = b.value(split.prob_true).as_f64();
                            let (mut yes, mut no) = (vec![], vec![]);
                            for &m in &g.members {
                                if self.rngs[m].gen::<f64>() < p {
                                    yes.push(m);
                                } else {
                                    no.push(m);
                                }
                            }
                            if !yes.is_empty() {
                                let lp = b.log(split.prob_true)?;
                                for &m in &yes {
                                    self.records[m].logprob_terms.push(lp);
                                    self.records[m].branch_choices.push(true);
                                }
                                out.extend(self.run(b, then, vec![Group { bx: t, members: yes }])?);
                            }
                            if !no.is_empty() {
                                let q = b.affine(&[(-T::one(), split.prob_true)], T::one());
                                let lq = b.log(q)?;
                                for &m in &no {
                                    self.records[m].logprob_terms.push(lq);
                                    self.records[m].branch_choices.push(false);
                                }
                                out.extend(self.run(b, otherwise, vec![Group { bx: f, members: no }])?);
                            }
                        }
                        (Some(t), None) => {
                            for &m in &g.members {
                                self.records[m].branch_choices.push(true);
                            }
                            out.extend(self.run(b, then, vec![Group { bx: t, members: g.members }])?);
                        }
                        (None, Some(f)) => {
                            for &m in &g.members {
                                self.records[m].branch_choices.push(false);
                            }
                            out.extend(self.run(b, otherwise, vec![Group { bx: f, members: g.members }])?);
                        }
                        (None, None) => unreachable!("a split keeps at least one side"),
                    }
                }
                Ok(out)
            }
            _ => {
                let mut gs = groups;
                for g in &mut gs {
                    self.simple(b, s, g)?;
                }
                Ok(gs)
            }
        }
    }

    fn simple<T: Scalar, B: Backend<T, V = V>>(&mut self, b: &mut B, s: &Stmt, g: &mut Group<V>) -> Result<()> {
        match s {
            Stmt::Assign { target, expr } => {
                let (c, e) = abstract_expr(b, &g.bx, expr);
                g.bx.set(*target, c, e);
                check_box(b, &g.bx, "assignment")
            }
            Stmt::NeuralCall {
                module,
                inputs,
                outputs,
            } => {
                abstract_call(b, self.p, self.params, &mut g.bx, module, inputs, outputs)?;
                check_box(b, &g.bx, "neural call")
            }
            Stmt::Assert { vars, safe } => {
                let sub = g.bx.select(vars);
                let u = unsafe_box(b, &sub, safe)?;
                for &m in &g.members {
                    self.records[m].unsafety_terms.push(u);
                    self.records[m].states.push(sub.clone());
                }
                Ok(())
            }
            _ => unreachable!("compound statements are handled by run"),
        }
    }
}

/// Samples one trajectory per random stream from `start`, sharing work
/// between trajectories while their paths coincide.
pub fn sample_bundle<T: Scalar, B: Backend<T>, R: Rng>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    start: &DiffBox<B::V>,
    rngs: Vec<R>,
    weight: f64,
) -> Result<Vec<TrajectoryRecord<B::V>>> {
    require_normalized(p)?;
    if start.dim() != p.variables.len() {
        return Err(Error::Shape(format!(
            "start box has dimension {}, program has {} variables",
            start.dim(),
            p.variables.len()
        )));
    }
    let k = rngs.len();
    let mut s = Sampler {
        p,
        params,
        records: (0..k).map(|_| TrajectoryRecord::empty(weight)).collect(),
        rngs,
    };
    s.run(
        b,
        &p.body,
        vec![Group {
            bx: start.clone(),
            members: (0..k).collect(),
        }],
    )?;
    Ok(s.records)
}

pub fn sample_trajectory<T: Scalar, B: Backend<T>, R: Rng>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    start: &DiffBox<B::V>,
    rng: R,
) -> Result<TrajectoryRecord<B::V>> {
    Ok(sample_bundle(b, p, params, start, vec![rng], 1.0)?.remove(0))
}

pub struct DseEstimate<V> {
    /// `(1/K)·Σ C(τ)`.
    pub estimate: V,
    /// `(1/K)·Σ [C(τ) + detach(C(τ))·Σ log p(τ)]`; its gradient is the
    /// score-function plus pathwise estimate of the gradient of `estimate`.
    pub surrogate: V,
    pub records: Vec<TrajectoryRecord<V>>,
}

/// K trajectories from the box covering the whole input set, trajectory `i`
/// drawing from stream `(cfg.seed, i)`.
pub fn dse_safety_estimate<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    cfg: &SampleConfig,
) -> Result<DseEstimate<B::V>> {
    if cfg.trajectories == 0 {
        return Err(Error::Config("trajectories per start box must be at least 1".into()));
    }
    let input: Vec<_> = p.input_intervals().iter().map(|iv| iv.cast::<T>()).collect();
    let start = start_box(b, p, &input)?;
    let rngs: Vec<ChaCha8Rng> = (0..cfg.trajectories as u64).map(|i| stream(cfg.seed, i)).collect();
    let records = sample_bundle(b, p, params, &start, rngs, 1.0)?;
    let (estimate, surrogate) = surrogate_of(b, &records);
    Ok(DseEstimate {
        estimate,
        surrogate,
        records,
    })
}

fn surrogate_of<T: Scalar, B: Backend<T>>(b: &mut B, records: &[TrajectoryRecord<B::V>]) -> (B::V, B::V) {
    let inv = T::one() / T::lit(records.len() as f64);
    let mut losses = Vec::with_capacity(records.len());
    let mut terms = Vec::with_capacity(records.len());
    for r in records {
        let c = trajectory_unsafe(b, &r.unsafety_terms);
        losses.push(c);
        if r.logprob_terms.is_empty() {
            terms.push(c);
        } else {
            let lp = b.sum(&r.logprob_terms);
            let dc = b.detach(c);
            let score = b.mul(dc, lp);
            terms.push(b.add(c, score));
        }
    }
    let est = b.sum(&losses);
    let est = b.scale(est, inv);
    let sur = b.sum(&terms);
    let sur = b.scale(sur, inv);
    (est, sur)
}

/// One complete path with its probability and loss.
#[derive(Clone, Debug)]
pub struct PathOutcome<V> {
    pub prob: V,
    pub loss: V,
    pub branch_choices: Vec<bool>,
}

/// Every feasible path from `start`; `Σ prob·loss` is the exact expected loss.
/// Exponential in the number of non-degenerate splits.
pub fn enumerate_paths<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    start: &DiffBox<B::V>,
) -> Result<Vec<PathOutcome<B::V>>> {
    require_normalized(p)?;
    let one = b.constant(T::one());
    let mut out = Vec::new();
    let init = Partial {
        bx: start.clone(),
        prob: one,
        terms: vec![],
        choices: vec![],
    };
    for fin in explore(b, p, params, &p.body, vec![init])? {
        let loss = trajectory_unsafe(b, &fin.terms);
        out.push(PathOutcome {
            prob: fin.prob,
            loss,
            branch_choices: fin.choices,
        });
    }
    Ok(out)
}

#[derive(Clone)]
struct Partial<V> {
    bx: DiffBox<V>,
    prob: V,
    terms: Vec<V>,
    choices: Vec<bool>,
}

fn explore<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    s: &Stmt,
    states: Vec<Partial<B::V>>,
) -> Result<Vec<Partial<B::V>>> {
    let mut out = Vec::new();
    match s {
        Stmt::Seq { body } => {
            let mut cur = states;
            for st in body {
                cur = explore(b, p, params, st, cur)?;
            }
            return Ok(cur);
        }
        Stmt::Repeat { count, body } => {
            let mut cur = states;
            for _ in 0..*count {
                cur = explore(b, p, params, body, cur)?;
            }
            return Ok(cur);
        }
        Stmt::IfLeq {
            guard,
            threshold,
            then,
            otherwise,
        } => {
            let axis = guard_axis(guard)?;
            for st in states {
                let split = guard_split(b, &st.bx, axis, T::lit(*threshold))?;
                let both = split.box_true.is_some() && split.box_false.is_some();
                if let Some(t) = split.box_true {
                    let prob = if both { b.mul(st.prob, split.prob_true) } else { st.prob };
                    let mut choices = st.choices.clone();
                    choices.push(true);
                    let next = Partial {
                        bx: t,
                        prob,
                        terms: st.terms.clone(),
                        choices,
                    };
                    out.extend(explore(b, p, params, then, vec![next])?);
                }
                if let Some(f) = split.box_false {
                    let prob = if both {
                        let q = b.affine(&[(-T::one(), split.prob_true)], T::one());
                        b.mul(st.prob, q)
                    } else {
                        st.prob
                    };
                    let mut choices = st.choices;
                    choices.push(false);
                    let next = Partial {
                        bx: f,
                        prob,
                        terms: st.terms,
                        choices,
                    };
                    out.extend(explore(b, p, params, otherwise, vec![next])?);
                }
            }
        }
        Stmt::Assign { target, expr } => {
            for mut st in states {
                let (c, e) = abstract_expr(b, &st.bx, expr);
                st.bx.set(*target, c, e);
                out.push(st);
            }
        }
        Stmt::NeuralCall {
            module,
            inputs,
            outputs,
        } => {
            for mut st in states {
                abstract_call(b, p, params, &mut st.bx, module, inputs, outputs)?;
                out.push(st);
            }
        }
        Stmt::Assert { vars, safe } => {
            for mut st in states {
                let sub = st.bx.select(vars);
                st.terms.push(unsafe_box(b, &sub, safe)?);
                out.push(st);
            }
        }
    }
    Ok(out)
}
