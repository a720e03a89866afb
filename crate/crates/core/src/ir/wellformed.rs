//! Static checks on programs.

use std::collections::BTreeSet;
use std::fmt;

use super::{Program, Stmt, VarId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// Statement path such as `body[2].then.body[0]`.
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// All violations of the program invariants; empty when well formed.
pub fn well_formed(p: &Program) -> Vec<Diagnostic> {
    let mut c = Checker { p, diags: vec![] };
    let mut defined = BTreeSet::new();
    let mut seen_inputs = BTreeSet::new();
    for (k, spec) in p.inputs.iter().enumerate() {
        let path = format!("inputs[{k}]");
        if !c.in_range(spec.var, &path) {
            continue;
        }
        if !seen_inputs.insert(spec.var) {
            c.push(&path, format!("variable `{}` listed twice as input", p.variables[spec.var]));
        }
        if !(spec.interval.lo.is_finite() && spec.interval.hi.is_finite()) || spec.interval.lo > spec.interval.hi {
            c.push(&path, "input interval must be finite with lo ≤ hi".into());
        }
        defined.insert(spec.var);
    }
    for (name, spec) in &p.modules {
        if let Err(e) = spec.validate() {
            c.push(&format!("modules.{name}"), e.to_string());
        }
    }
    c.stmt(&p.body, "body", &mut defined);
    c.diags
}

struct Checker<'a> {
    p: &'a Program,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn push(&mut self, path: &str, reason: String) {
        self.diags.push(Diagnostic {
            path: path.to_string(),
            reason,
        });
    }

    fn in_range(&mut self, v: VarId, path: &str) -> bool {
        if v >= self.p.variables.len() {
            self.push(path, format!("variable index {v} is not declared"));
            return false;
        }
        true
    }

    fn read(&mut self, v: VarId, path: &str, defined: &BTreeSet<VarId>) {
        if self.in_range(v, path) && !defined.contains(&v) {
            let name = self.p.variables[v].clone();
            self.push(path, format!("variable `{name}` is read before it is assigned"));
        }
    }

    fn stmt(&mut self, s: &Stmt, path: &str, defined: &mut BTreeSet<VarId>) {
        match s {
            Stmt::Seq { body } => {
                for (i, st) in body.iter().enumerate() {
                    self.stmt(st, &format!("{path}.body[{i}]"), defined);
                }
            }
            Stmt::Assign { target, expr } => {
                for v in expr.reads() {
                    self.read(v, path, defined);
                }
                if self.in_range(*target, path) {
                    defined.insert(*target);
                }
            }
            Stmt::NeuralCall {
                module,
                inputs,
                outputs,
            } => {
                for &v in inputs {
                    self.read(v, path, defined);
                }
                match self.p.modules.get(module) {
                    None => self.push(path, format!("module `{module}` is not declared")),
                    Some(spec) => {
                        if spec.widths.len() >= 2 && inputs.len() != spec.input_width() {
                            self.push(
                                path,
                                format!(
                                    "module `{module}` takes {} inputs, call passes {}",
                                    spec.input_width(),
                                    inputs.len()
                                ),
                            );
                        }
                        if spec.widths.len() >= 2 && outputs.len() != spec.output_width() {
                            self.push(
                                path,
                                format!(
                                    "module `{module}` returns {} outputs, call binds {}",
                                    spec.output_width(),
                                    outputs.len()
                                ),
                            );
                        }
                    }
                }
                for &v in outputs {
                    if self.in_range(v, path) {
                        defined.insert(v);
                    }
                }
            }
            Stmt::IfLeq {
                guard,
                threshold,
                then,
                otherwise,
            } => {
                for v in guard.reads() {
                    self.read(v, path, defined);
                }
                if !threshold.is_finite() {
                    self.push(path, "guard threshold must be finite".into());
                }
                let mut a = defined.clone();
                let mut b = defined.clone();
                self.stmt(then, &format!("{path}.then"), &mut a);
                self.stmt(otherwise, &format!("{path}.else"), &mut b);
                *defined = a.intersection(&b).copied().collect();
            }
            Stmt::Repeat { count, body } => {
                if *count == 0 {
                    self.push(path, "loop count must be positive".into());
                }
                self.stmt(body, &format!("{path}.body"), defined);
            }
            Stmt::Assert { vars, safe } => {
                for &v in vars {
                    self.read(v, path, defined);
                }
                if let Err(e) = safe.validate() {
                    self.push(path, e.to_string());
                } else if safe.dim() != vars.len() {
                    self.push(
                        path,
                        format!("assert over {} variables but safe set has dimension {}", vars.len(), safe.dim()),
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, MlpSpec};
    use crate::ir::{Expr, SafeSet};

    #[test]
    fn use_before_assign() {
        let mut p = Program::new("u");
        let x = p.var("x");
        let y = p.var("y");
        p.add_input(x, 0.0, 1.0);
        p.body = Stmt::assign(x, Expr::var(y));
        let d = well_formed(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].reason.contains("`y`"));
    }

    #[test]
    fn call_arity_mismatch() {
        let mut p = Program::new("a");
        let x = p.var("x");
        let y = p.var("y");
        p.add_input(x, 0.0, 1.0);
        p.modules.insert("nn".into(), MlpSpec::feed_forward(2, &[3], 1, Activation::Relu, Activation::None));
        p.body = Stmt::call("nn", vec![x], vec![y]);
        let d = well_formed(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].reason.contains("takes 2 inputs"));
    }

    #[test]
    fn branch_definitions_intersect() {
        let mut p = Program::new("b");
        let x = p.var("x");
        let z = p.var("z");
        p.add_input(x, 0.0, 1.0);
        p.body = Stmt::seq(vec![
            Stmt::if_leq(Expr::var(x), 0.5, Stmt::assign(z, Expr::constant(1.0)), Stmt::skip()),
            Stmt::assert(vec![z], SafeSet::interval(0.0, 1.0)),
        ]);
        let d = well_formed(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "body.body[1]");
    }
}
