//! argmax lowering and guard normalization.

use std::collections::HashMap;

use super::{Expr, Program, Stmt, VarId};
use crate::error::{Error, Result};

/// Nested conditionals selecting the body of the largest candidate.
///
/// The tree is a sequential tournament: the running winner `b` is compared
/// with the next candidate `j` through a fresh guard `d := p_j − p_b`, and
/// `d ≤ 0` keeps `b`. Ties therefore go to the lower index.
pub fn lower_argmax(p: &mut Program, candidates: &[VarId], bodies: Vec<Stmt>) -> Result<Stmt> {
    if candidates.len() < 2 {
        return Err(Error::Arity(format!(
            "argmax needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    if bodies.len() != candidates.len() {
        return Err(Error::Arity(format!(
            "{} candidates but {} bodies",
            candidates.len(),
            bodies.len()
        )));
    }
    Ok(tournament(p, candidates, &bodies, 0, 1))
}

fn tournament(p: &mut Program, cands: &[VarId], bodies: &[Stmt], best: usize, j: usize) -> Stmt {
    if j == cands.len() {
        return bodies[best].clone();
    }
    let d = p.fresh_var("argmax_d");
    let keep = tournament(p, cands, bodies, best, j + 1);
    let take = tournament(p, cands, bodies, j, j + 1);
    Stmt::seq(vec![
        Stmt::assign(d, Expr::diff(cands[j], cands[best])),
        Stmt::if_leq(Expr::var(d), 0.0, keep, take),
    ])
}

#[derive(Default)]
struct Usage {
    reads: HashMap<VarId, usize>,
    writes: HashMap<VarId, usize>,
}

impl Usage {
    fn of(s: &Stmt) -> Self {
        let mut u = Usage::default();
        u.walk(s);
        u
    }

    fn read(&mut self, v: VarId) {
        *self.reads.entry(v).or_default() += 1;
    }

    fn write(&mut self, v: VarId) {
        *self.writes.entry(v).or_default() += 1;
    }

    fn walk(&mut self, s: &Stmt) {
        match s {
            Stmt::Seq { body } => body.iter().for_each(|s| self.walk(s)),
            Stmt::Assign { target, expr } => {
                expr.reads().for_each(|v| self.read(v));
                self.write(*target);
            }
            Stmt::NeuralCall { inputs, outputs, .. } => {
                inputs.iter().for_each(|&v| self.read(v));
                outputs.iter().for_each(|&v| self.write(v));
            }
            Stmt::IfLeq {
                guard,
                then,
                otherwise,
                ..
            } => {
                guard.reads().for_each(|v| self.read(v));
                self.walk(then);
                self.walk(otherwise);
            }
            Stmt::Repeat { body, .. } => self.walk(body),
            Stmt::Assert { vars, .. } => vars.iter().for_each(|&v| self.read(v)),
        }
    }

    /// `prev` is the unique assignment of the guard variable, and the guard
    /// is its only reader.
    fn fresh_guard(&self, prev: Option<&Stmt>, guard: &Expr) -> bool {
        let Some(g) = guard.as_var() else { return false };
        matches!(prev, Some(Stmt::Assign { target, .. }) if *target == g)
            && self.writes.get(&g) == Some(&1)
            && self.reads.get(&g) == Some(&1)
    }
}

/// True when every conditional tests a fresh guard variable assigned by the
/// statement right before it.
pub fn is_normalized(p: &Program) -> bool {
    let usage = Usage::of(&p.body);
    check(&p.body, None, &usage)
}

fn check(s: &Stmt, prev: Option<&Stmt>, u: &Usage) -> bool {
    match s {
        Stmt::Seq { body } => body
            .iter()
            .enumerate()
            .all(|(i, st)| check(st, i.checked_sub(1).map(|k| &body[k]), u)),
        Stmt::IfLeq {
            guard,
            then,
            otherwise,
            ..
        } => u.fresh_guard(prev, guard) && check(then, None, u) && check(otherwise, None, u),
        Stmt::Repeat { body, .. } => check(body, None, u),
        _ => true,
    }
}

/// Rewrites `if f(x) ≤ M` into `g := f(x); if g ≤ M` with a fresh `g`.
/// Guards that are already normalized are kept, so the pass is idempotent.
pub fn normalize_guards(p: &Program) -> Program {
    let mut out = p.clone();
    let usage = Usage::of(&p.body);
    let body = std::mem::replace(&mut out.body, Stmt::skip());
    out.body = rewrite(&mut out, body, &usage);
    out
}

fn rewrite(p: &mut Program, s: Stmt, u: &Usage) -> Stmt {
    match s {
        Stmt::Seq { body } => {
            let mut out: Vec<Stmt> = Vec::with_capacity(body.len());
            for st in body {
                if let Stmt::IfLeq { guard, .. } = &st {
                    if u.fresh_guard(out.last(), guard) {
                        let st = rewrite_children(p, st, u);
                        out.push(st);
                    } else {
                        let st = rewrite_children(p, st, u);
                        out.extend(alias(p, st));
                    }
                } else {
                    out.push(rewrite(p, st, u));
                }
            }
            Stmt::Seq { body: out }
        }
        st @ Stmt::IfLeq { .. } => {
            let st = rewrite_children(p, st, u);
            Stmt::seq(alias(p, st))
        }
        Stmt::Repeat { count, body } => Stmt::Repeat {
            count,
            body: Box::new(rewrite(p, *body, u)),
        },
        other => other,
    }
}

fn rewrite_children(p: &mut Program, s: Stmt, u: &Usage) -> Stmt {
    match s {
        Stmt::IfLeq {
            guard,
            threshold,
            then,
            otherwise,
        } => Stmt::IfLeq {
            guard,
            threshold,
            then: Box::new(rewrite(p, *then, u)),
            otherwise: Box::new(rewrite(p, *otherwise, u)),
        },
        other => other,
    }
}

fn alias(p: &mut Program, s: Stmt) -> Vec<Stmt> {
    let Stmt::IfLeq {
        guard,
        threshold,
        then,
        otherwise,
    } = s
    else {
        unreachable!("alias is only called on conditionals")
    };
    let g = p.fresh_var("guard");
    vec![
        Stmt::assign(g, guard),
        Stmt::IfLeq {
            guard: Expr::var(g),
            threshold,
            then,
            otherwise,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{SafeSet, SafeInterval};

    fn two_candidates() -> (Program, Stmt, VarId) {
        let mut p = Program::new("argmax");
        let p0 = p.var("p0");
        let p1 = p.var("p1");
        let out = p.var("out");
        let s = lower_argmax(
            &mut p,
            &[p0, p1],
            vec![
                Stmt::assign(out, Expr::constant(0.0)),
                Stmt::assign(out, Expr::constant(1.0)),
            ],
        )
        .unwrap();
        (p, s, out)
    }

    #[test]
    fn two_candidates_use_one_guard() {
        let (_, s, _) = two_candidates();
        let guards = s.count_nodes(&|s| matches!(s, Stmt::IfLeq { .. }));
        assert_eq!(guards, 1);
    }

    #[test]
    fn four_candidates_nest_three_deep() {
        let mut p = Program::new("argmax4");
        let c: Vec<VarId> = (0..4).map(|i| p.var(&format!("p{i}"))).collect();
        let out = p.var("out");
        let bodies = (0..4).map(|k| Stmt::assign(out, Expr::constant(k as f64))).collect();
        let s = lower_argmax(&mut p, &c, bodies).unwrap();
        fn depth(s: &Stmt) -> usize {
            match s {
                Stmt::Seq { body } => body.iter().map(depth).max().unwrap_or(0),
                Stmt::IfLeq { then, otherwise, .. } => 1 + depth(then).max(depth(otherwise)),
                _ => 0,
            }
        }
        assert_eq!(depth(&s), 3);
        assert_eq!(s.count_nodes(&|s| matches!(s, Stmt::IfLeq { .. })), 7);
    }

    #[test]
    fn argmax_arity_errors() {
        let mut p = Program::new("bad");
        let a = p.var("a");
        assert!(matches!(lower_argmax(&mut p, &[a], vec![Stmt::skip()]), Err(Error::Arity(_))));
        let b = p.var("b");
        assert!(matches!(lower_argmax(&mut p, &[a, b], vec![Stmt::skip()]), Err(Error::Arity(_))));
    }

    #[test]
    fn normalization_introduces_aliases_once() {
        let mut p = Program::new("n");
        let x = p.var("x");
        let y = p.var("y");
        let z = p.var("z");
        p.add_input(x, -1.0, 1.0);
        p.body = Stmt::seq(vec![
            Stmt::assign(y, Expr::var(x)),
            Stmt::if_leq(Expr::var(y), 1.0, Stmt::assign(z, Expr::constant(10.0)), Stmt::assign(z, Expr::constant(1.0))),
            Stmt::if_leq(Expr::diff(x, y), 0.0, Stmt::skip(), Stmt::skip()),
            Stmt::assert(vec![z], SafeSet::single(vec![SafeInterval::at_most(1.0)])),
        ]);
        assert!(!is_normalized(&p));
        let n = normalize_guards(&p);
        assert!(is_normalized(&n));
        assert_eq!(n.variables.len(), p.variables.len() + 2);
        let again = normalize_guards(&n);
        assert_eq!(again, n);
    }

    #[test]
    fn lowered_argmax_is_already_normalized() {
        let (mut p, s, _) = two_candidates();
        p.body = s;
        assert!(is_normalized(&p));
        assert_eq!(normalize_guards(&p), p);
    }
}
