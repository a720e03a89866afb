//! Ground-truth programs: trainable programs whose neural calls are served by
//! fixed controller procedures.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lower::normalize_guards;
use super::{Expr, Program, SafeSet, Stmt, VarId};
use crate::error::{Error, Result};
use crate::exec::concrete::{run_stmt, ModuleEval, NoModules};

/// A parameter-free procedure replacing one neural module. Its own variable
/// space starts with the inputs followed by the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub locals: Vec<String>,
    pub inputs: Vec<VarId>,
    pub outputs: Vec<VarId>,
    pub body: Stmt,
}

impl Controller {
    /// Evaluates on a concrete input.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "controller takes {} inputs, got {}",
                self.inputs.len(),
                input.len()
            )));
        }
        let mut env = vec![0.0; self.locals.len()];
        for (&v, &x) in self.inputs.iter().zip(input) {
            env[v] = x;
        }
        run_stmt(&self.body, &mut env, &mut NoModules, &mut Default::default())?;
        Ok(self.outputs.iter().map(|&v| env[v]).collect())
    }
}

/// Builder for controller variable spaces.
pub struct ControllerBuilder {
    locals: Vec<String>,
    inputs: Vec<VarId>,
    outputs: Vec<VarId>,
}

impl ControllerBuilder {
    pub fn new(inputs: &[&str], outputs: &[&str]) -> Self {
        let mut locals: Vec<String> = inputs.iter().map(|s| s.to_string()).collect();
        locals.extend(outputs.iter().map(|s| s.to_string()));
        Self {
            inputs: (0..inputs.len()).collect(),
            outputs: (inputs.len()..inputs.len() + outputs.len()).collect(),
            locals,
        }
    }

    pub fn input(&self, k: usize) -> VarId {
        self.inputs[k]
    }

    pub fn output(&self, k: usize) -> VarId {
        self.outputs[k]
    }

    pub fn temp(&mut self, name: &str) -> VarId {
        self.locals.push(name.to_string());
        self.locals.len() - 1
    }

    pub fn build(self, body: Stmt) -> Controller {
        Controller {
            locals: self.locals,
            inputs: self.inputs,
            outputs: self.outputs,
            body,
        }
    }
}

/// Perturbation applied to controller outputs during data generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    /// Independent uniform noise of the given half-width on each output.
    Uniform { half_widths: Vec<f64> },
    /// With probability `prob`, the one-hot action output is replaced by an
    /// action drawn uniformly among those whose successor `(x + dx[k], y + dy)`
    /// lies in `safe`.
    SafeStep {
        prob: f64,
        x_input: usize,
        y_input: usize,
        dx: Vec<f64>,
        dy: f64,
        safe: SafeSet,
    },
}

impl NoiseSpec {
    pub fn apply<R: Rng + ?Sized>(&self, input: &[f64], output: &mut [f64], rng: &mut R) {
        match self {
            NoiseSpec::None => {}
            NoiseSpec::Uniform { half_widths } => {
                for (o, &h) in output.iter_mut().zip(half_widths) {
                    if h > 0.0 {
                        *o += rng.gen_range(-h..=h);
                    }
                }
            }
            NoiseSpec::SafeStep {
                prob,
                x_input,
                y_input,
                dx,
                dy,
                safe,
            } => {
                if !rng.gen_bool(prob.clamp(0.0, 1.0)) {
                    return;
                }
                let (x, y) = (input[*x_input], input[*y_input]);
                let options: Vec<usize> = (0..dx.len())
                    .filter(|&k| safe.contains(&[x + dx[k], y + dy]))
                    .collect();
                if options.is_empty() {
                    return;
                }
                let pick = options[rng.gen_range(0..options.len())];
                for (k, o) in output.iter_mut().enumerate() {
                    *o = if k == pick { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthProgram {
    pub program: Program,
    pub controllers: BTreeMap<String, Controller>,
    pub noise: BTreeMap<String, NoiseSpec>,
}

impl GroundTruthProgram {
    /// The program with every neural call replaced by its controller body
    /// over fresh variables, and no neural modules left.
    pub fn inlined(&self) -> Result<Program> {
        let mut out = self.program.clone();
        out.modules.clear();
        let body = std::mem::replace(&mut out.body, Stmt::skip());
        out.body = self.inline_stmt(&mut out, body)?;
        Ok(out)
    }

    /// Inlined and guard-normalized, ready for the symbolic executors.
    pub fn verification_program(&self) -> Result<Program> {
        Ok(normalize_guards(&self.inlined()?))
    }

    fn inline_stmt(&self, p: &mut Program, s: Stmt) -> Result<Stmt> {
        Ok(match s {
            Stmt::Seq { body } => Stmt::Seq {
                body: body
                    .into_iter()
                    .map(|st| self.inline_stmt(p, st))
                    .collect::<Result<_>>()?,
            },
            Stmt::IfLeq {
                guard,
                threshold,
                then,
                otherwise,
            } => Stmt::IfLeq {
                guard,
                threshold,
                then: Box::new(self.inline_stmt(p, *then)?),
                otherwise: Box::new(self.inline_stmt(p, *otherwise)?),
            },
            Stmt::Repeat { count, body } => Stmt::Repeat {
                count,
                body: Box::new(self.inline_stmt(p, *body)?),
            },
            Stmt::NeuralCall {
                module,
                inputs,
                outputs,
            } => {
                let c = self
                    .controllers
                    .get(&module)
                    .ok_or_else(|| Error::IllFormed(format!("no controller for module `{module}`")))?;
                if c.inputs.len() != inputs.len() || c.outputs.len() != outputs.len() {
                    return Err(Error::Arity(format!("controller `{module}` arity does not match call")));
                }
                let map: HashMap<VarId, VarId> = (0..c.locals.len())
                    .map(|v| (v, p.fresh_var(&format!("{module}.{}", c.locals[v]))))
                    .collect();
                let mut seq = Vec::new();
                for (&local, &host) in c.inputs.iter().zip(&inputs) {
                    seq.push(Stmt::assign(map[&local], Expr::var(host)));
                }
                seq.push(remap(&c.body, &map));
                for (&local, &host) in c.outputs.iter().zip(&outputs) {
                    seq.push(Stmt::assign(host, Expr::var(map[&local])));
                }
                Stmt::seq(seq)
            }
            other => other,
        })
    }
}

/// Serves neural calls from the controllers, with optional noise.
pub struct ControllerModules<'a, R: Rng> {
    pub gt: &'a GroundTruthProgram,
    pub rng: Option<&'a mut R>,
}

impl<R: Rng> ModuleEval<f64> for ControllerModules<'_, R> {
    fn call(&mut self, module: &str, inputs: &[f64], _step: usize) -> Result<Vec<f64>> {
        let c = self
            .gt
            .controllers
            .get(module)
            .ok_or_else(|| Error::IllFormed(format!("no controller for module `{module}`")))?;
        let mut out = c.eval(inputs)?;
        if let (Some(rng), Some(noise)) = (self.rng.as_deref_mut(), self.gt.noise.get(module)) {
            noise.apply(inputs, &mut out, rng);
        }
        Ok(out)
    }
}

fn remap_expr(e: &Expr, map: &HashMap<VarId, VarId>) -> Expr {
    Expr {
        terms: e.terms.iter().map(|&(v, c)| (map[&v], c)).collect(),
        constant: e.constant,
        nonlinearity: e.nonlinearity,
    }
}

fn remap(s: &Stmt, map: &HashMap<VarId, VarId>) -> Stmt {
    match s {
        Stmt::Seq { body } => Stmt::Seq {
            body: body.iter().map(|st| remap(st, map)).collect(),
        },
        Stmt::Assign { target, expr } => Stmt::assign(map[target], remap_expr(expr, map)),
        Stmt::NeuralCall {
            module,
            inputs,
            outputs,
        } => Stmt::NeuralCall {
            module: module.clone(),
            inputs: inputs.iter().map(|v| map[v]).collect(),
            outputs: outputs.iter().map(|v| map[v]).collect(),
        },
        Stmt::IfLeq {
            guard,
            threshold,
            then,
            otherwise,
        } => Stmt::IfLeq {
            guard: remap_expr(guard, map),
            threshold: *threshold,
            then: Box::new(remap(then, map)),
            otherwise: Box::new(remap(otherwise, map)),
        },
        Stmt::Repeat { count, body } => Stmt::Repeat {
            count: *count,
            body: Box::new(remap(body, map)),
        },
        Stmt::Assert { vars, safe } => Stmt::Assert {
            vars: vars.iter().map(|v| map[v]).collect(),
            safe: safe.clone(),
        },
    }
}
