//! Sound symbolic execution: both feasible branches, joined afterwards.

use serde::{Deserialize, Serialize};

use super::{abstract_call, abstract_expr, check_box, even_counts, grid_cells, guard_axis, require_normalized, start_box};
use crate::autodiff::{Backend, Lifted};
use crate::domain::{box_join, guard_split, DiffBox, Interval};
use crate::error::{Error, Result};
use crate::ir::{Program, Stmt, VarId};
use crate::safety::{trajectory_unsafe, unsafe_box};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoundConfig {
    /// Number of even sub-boxes of the input set.
    pub splits: usize,
}

impl Default for SoundConfig {
    fn default() -> Self {
        Self { splits: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct AssertState<V> {
    pub vars: Vec<VarId>,
    pub bx: DiffBox<V>,
}

#[derive(Clone, Debug)]
pub struct SoundTrajectory<V> {
    pub final_box: DiffBox<V>,
    pub asserts: Vec<AssertState<V>>,
    pub unsafety_terms: Vec<V>,
    pub loss: V,
}

/// Propagates one input box through the program.
pub fn sound_box<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    input: &[Interval<T>],
) -> Result<SoundTrajectory<B::V>> {
    require_normalized(p)?;
    let mut bx = start_box(b, p, input)?;
    let mut run = Runner {
        p,
        params,
        asserts: vec![],
        terms: vec![],
    };
    run.stmt(b, &p.body, &mut bx)?;
    let loss = trajectory_unsafe(b, &run.terms);
    Ok(SoundTrajectory {
        final_box: bx,
        asserts: run.asserts,
        unsafety_terms: run.terms,
        loss,
    })
}

/// Splits the input set into `cfg.splits` even sub-boxes, propagates each,
/// and returns the trajectories with their mean loss.
pub fn exec_sound<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    cfg: &SoundConfig,
) -> Result<(Vec<SoundTrajectory<B::V>>, B::V)> {
    if cfg.splits == 0 {
        return Err(Error::Config("sound splits must be at least 1".into()));
    }
    let input: Vec<Interval<T>> = p.input_intervals().iter().map(|iv| iv.cast()).collect();
    let cells = grid_cells(&input, &even_counts(input.len(), cfg.splits));
    let mut trajs = Vec::with_capacity(cells.len());
    for cell in &cells {
        trajs.push(sound_box(b, p, params, cell)?);
    }
    let losses: Vec<B::V> = trajs.iter().map(|t| t.loss).collect();
    let total = b.sum(&losses);
    let mean = b.scale(total, T::one() / T::lit(losses.len() as f64));
    Ok((trajs, mean))
}

struct Runner<'a, V> {
    p: &'a Program,
    params: &'a Lifted<V>,
    asserts: Vec<AssertState<V>>,
    terms: Vec<V>,
}

impl<V: Copy + PartialEq + std::fmt::Debug> Runner<'_, V> {
    fn stmt<T: Scalar, B: Backend<T, V = V>>(&mut self, b: &mut B, s: &Stmt, bx: &mut DiffBox<V>) -> Result<()> {
        match s {
            Stmt::Seq { body } => {
                for st in body {
                    self.stmt(b, st, bx)?;
                }
            }
            Stmt::Assign { target, expr } => {
                let (c, e) = abstract_expr(b, bx, expr);
                bx.set(*target, c, e);
                check_box(b, bx, "assignment")?;
            }
            Stmt::NeuralCall {
                module,
                inputs,
                outputs,
            } => {
                abstract_call(b, self.p, self.params, bx, module, inputs, outputs)?;
                check_box(b, bx, "neural call")?;
            }
            Stmt::IfLeq {
                guard,
                threshold,
                then,
                otherwise,
            } => {
                let axis = guard_axis(guard)?;
                let split = guard_split(b, bx, axis, T::lit(*threshold))?;
                *bx = match (split.box_true, split.box_false) {
                    (Some(mut t), Some(mut f)) => {
                        self.stmt(b, then, &mut t)?;
                        self.stmt(b, otherwise, &mut f)?;
                        box_join(b, &t, &f)?
                    }
                    (Some(mut t), None) => {
                        self.stmt(b, then, &mut t)?;
                        t
                    }
                    (None, Some(mut f)) => {
                        self.stmt(b, otherwise, &mut f)?;
                        f
                    }
                    (None, None) => unreachable!("a split keeps at least one side"),
                };
            }
            Stmt::Repeat { count, body } => {
                for _ in 0..*count {
                    self.stmt(b, body, bx)?;
                }
            }
            Stmt::Assert { vars, safe } => {
                let sub = bx.select(vars);
                self.terms.push(unsafe_box(b, &sub, safe)?);
                self.asserts.push(AssertState {
                    vars: vars.clone(),
                    bx: sub,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Eval, ParameterStore};
    use crate::ir::{Expr, SafeSet};

    fn join_program(lo: f64, hi: f64) -> Program {
        let mut p = Program::new("join");
        let x = p.var("x");
        let g = p.var("g");
        let z = p.var("z");
        p.add_input(x, lo, hi);
        p.body = Stmt::seq(vec![
            Stmt::assign(g, Expr::var(x)),
            Stmt::if_leq(Expr::var(g), 0.0, Stmt::assign(z, Expr::constant(1.0)), Stmt::assign(z, Expr::constant(2.0))),
            Stmt::assert(vec![z], SafeSet::interval(0.0, 5.0)),
        ]);
        p
    }

    #[test]
    fn join_of_point_branches() {
        let p = join_program(-1.0, 1.0);
        let params = ParameterStore::<f64>::new().lift_values(&mut Eval);
        let t = sound_box(&mut Eval, &p, &params, &[Interval::new(-1.0, 1.0)]).unwrap();
        assert_eq!(t.final_box.center[2], 1.5);
        assert_eq!(t.final_box.dev[2], 0.5);
        assert_eq!(t.loss, 0.0);

        let p = join_program(-2.0, -1.0);
        let t = sound_box(&mut Eval, &p, &params, &[Interval::new(-2.0, -1.0)]).unwrap();
        assert_eq!((t.final_box.center[2], t.final_box.dev[2]), (1.0, 0.0));
    }

    #[test]
    fn requires_normalized_guards() {
        let mut p = join_program(-1.0, 1.0);
        let Stmt::Seq { body } = &mut p.body else { panic!() };
        body.remove(0);
        let Stmt::IfLeq { guard, .. } = &mut body[0] else { panic!() };
        *guard = Expr::var(0);
        let params = ParameterStore::<f64>::new().lift_values(&mut Eval);
        assert!(matches!(
            exec_sound(&mut Eval, &p, &params, &SoundConfig::default()),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn splits_average() {
        let p = join_program(-1.0, 1.0);
        let params = ParameterStore::<f64>::new().lift_values(&mut Eval);
        let (trajs, mean) = exec_sound(&mut Eval, &p, &params, &SoundConfig { splits: 4 }).unwrap();
        assert_eq!(trajs.len(), 4);
        assert_eq!(mean, 0.0);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::autodiff::Eval;
    use crate::exec::exec_concrete;
    use crate::ir::{build_benchmark, normalize_guards, BenchmarkConfig};
    use crate::trainer::init_params;
    use proptest::prelude::*;

    const PROGRAMS: [&str; 6] = ["pattern1", "pattern2", "pattern3", "pattern4", "pattern5", "thermostat"];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn sound_box_covers_concrete_runs(
            which in 0..PROGRAMS.len(),
            seed in 0..10_000u64,
            a in 0.0..=1.0f64,
            b in 0.0..=1.0f64,
            t in 0.0..=1.0f64,
        ) {
            let cfg = BenchmarkConfig { hidden: vec![4], loop_length: Some(5), ..BenchmarkConfig::default() };
            let p = build_benchmark(PROGRAMS[which], &cfg).unwrap().program;
            let theta = init_params::<f64>(&p, seed);
            let full = p.input_intervals()[0];
            let (lo, hi) = (full.lo + a.min(b) * full.width(), full.lo + a.max(b) * full.width());
            let x = lo + t * (hi - lo);
            let run = exec_concrete(&p, &theta, &[x]).unwrap();

            let np = normalize_guards(&p);
            let params = theta.lift_values(&mut Eval);
            let s = sound_box(&mut Eval, &np, &params, &[Interval::new(lo, hi)]).unwrap();
            for (i, v) in run.env.iter().enumerate() {
                let (c, e) = (s.final_box.center[i], s.final_box.dev[i]);
                let slack = 1e-9 * (1.0 + v.abs());
                prop_assert!(c - e - slack <= *v && *v <= c + e + slack, "{} = {v} outside ⟨{c}, {e}⟩", p.variables[i]);
            }
            if s.unsafety_terms.iter().all(|&u| u == 0.0) {
                prop_assert!(run.is_safe());
            }
        }
    }
}
