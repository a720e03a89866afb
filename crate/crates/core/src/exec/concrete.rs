//! Big-step concrete interpreter.

use serde::{Deserialize, Serialize};

use crate::autodiff::{mlp_forward, Eval, Lifted, ParameterStore};
use crate::error::{Error, Result};
use crate::ir::{Program, Stmt};
use crate::safety::unsafe_point;
use crate::scalar::Scalar;

/// Source of neural-call results during concrete execution.
pub trait ModuleEval<T> {
    fn call(&mut self, module: &str, inputs: &[T], step: usize) -> Result<Vec<T>>;
}

/// For programs without neural calls.
pub struct NoModules;

impl<T> ModuleEval<T> for NoModules {
    fn call(&mut self, module: &str, _: &[T], _: usize) -> Result<Vec<T>> {
        Err(Error::IllFormed(format!("no implementation for module `{module}`")))
    }
}

/// The program's MLPs under fixed parameters.
pub struct NeuralModules<'a, T> {
    program: &'a Program,
    params: Lifted<T>,
}

impl<'a, T: Scalar> NeuralModules<'a, T> {
    pub fn new(program: &'a Program, theta: &ParameterStore<T>) -> Result<Self> {
        for (name, spec) in &program.modules {
            spec.check_params(theta, name)?;
        }
        Ok(Self {
            program,
            params: theta.lift_values(&mut Eval),
        })
    }
}

impl<T: Scalar> ModuleEval<T> for NeuralModules<'_, T> {
    fn call(&mut self, module: &str, inputs: &[T], _: usize) -> Result<Vec<T>> {
        let spec = self
            .program
            .modules
            .get(module)
            .ok_or_else(|| Error::IllFormed(format!("module `{module}` is not declared")))?;
        mlp_forward(&mut Eval, spec, &self.params, module, inputs)
    }
}

/// One neural call observed during execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoRecord {
    pub module: String,
    pub step: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

/// Execution context: loop step, per-assert unsafety, neural I/O and the
/// sequence of branch decisions (`true` = then-branch).
#[derive(Clone, Debug, Default)]
pub struct Ctx {
    pub step: usize,
    depth: usize,
    pub unsafe_values: Vec<f64>,
    pub records: Vec<IoRecord>,
    pub branches: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct ConcreteRun<T> {
    pub env: Vec<T>,
    pub unsafe_values: Vec<f64>,
    pub records: Vec<IoRecord>,
    pub branches: Vec<bool>,
}

impl<T> ConcreteRun<T> {
    pub fn is_safe(&self) -> bool {
        self.unsafe_values.iter().all(|&u| u == 0.0)
    }
}

fn finite<T: Scalar>(x: T, what: impl FnOnce() -> String) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numeric(format!("{} evaluated to {x}", what())))
    }
}

/// Executes `s` in place on `env`. The step index reported to neural calls
/// is the iteration of the outermost loop.
pub fn run_stmt<T: Scalar, M: ModuleEval<T> + ?Sized>(
    s: &Stmt,
    env: &mut [T],
    modules: &mut M,
    ctx: &mut Ctx,
) -> Result<()> {
    match s {
        Stmt::Seq { body } => {
            for st in body {
                run_stmt(st, env, modules, ctx)?;
            }
        }
        Stmt::Assign { target, expr } => {
            let v = expr.eval(&mut Eval, env);
            env[*target] = finite(v, || format!("assignment to variable {target}"))?;
        }
        Stmt::NeuralCall {
            module,
            inputs,
            outputs,
        } => {
            let x: Vec<T> = inputs.iter().map(|&v| env[v]).collect();
            let y = modules.call(module, &x, ctx.step)?;
            if y.len() != outputs.len() {
                return Err(Error::Arity(format!(
                    "module `{module}` returned {} values for {} outputs",
                    y.len(),
                    outputs.len()
                )));
            }
            for (&v, &val) in outputs.iter().zip(&y) {
                env[v] = finite(val, || format!("output of `{module}`"))?;
            }
            ctx.records.push(IoRecord {
                module: module.clone(),
                step: ctx.step,
                input: x.iter().map(|v| v.as_f64()).collect(),
                output: y.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Stmt::IfLeq {
            guard,
            threshold,
            then,
            otherwise,
        } => {
            let g = finite(guard.eval(&mut Eval, env), || "guard".to_string())?;
            let take = g <= T::lit(*threshold);
            ctx.branches.push(take);
            run_stmt(if take { then } else { otherwise }, env, modules, ctx)?;
        }
        Stmt::Repeat { count, body } => {
            ctx.depth += 1;
            for i in 0..*count {
                if ctx.depth == 1 {
                    ctx.step = i;
                }
                run_stmt(body, env, modules, ctx)?;
            }
            ctx.depth -= 1;
        }
        Stmt::Assert { vars, safe } => {
            let vals: Vec<f64> = vars.iter().map(|&v| env[v].as_f64()).collect();
            ctx.unsafe_values.push(unsafe_point(&vals, safe));
        }
    }
    Ok(())
}

/// Runs the whole program from `input` with any module implementation.
pub fn run_program<T: Scalar, M: ModuleEval<T> + ?Sized>(
    p: &Program,
    modules: &mut M,
    input: &[T],
) -> Result<ConcreteRun<T>> {
    for (spec, &x) in p.inputs.iter().zip(input) {
        let x = x.as_f64();
        if !(spec.interval.lo <= x && x <= spec.interval.hi) {
            return Err(Error::Domain(format!(
                "input {} = {x} outside [{}, {}]",
                p.variables[spec.var], spec.interval.lo, spec.interval.hi
            )));
        }
    }
    let mut env = p.initial_env(input)?;
    let mut ctx = Ctx::default();
    run_stmt(&p.body, &mut env, modules, &mut ctx)?;
    Ok(ConcreteRun {
        env,
        unsafe_values: ctx.unsafe_values,
        records: ctx.records,
        branches: ctx.branches,
    })
}

/// Concrete execution under parameters `theta`.
pub fn exec_concrete<T: Scalar>(p: &Program, theta: &ParameterStore<T>, input: &[T]) -> Result<ConcreteRun<T>> {
    let mut modules = NeuralModules::new(p, theta)?;
    run_program(p, &mut modules, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::ir::{build_benchmark, BenchmarkConfig, Expr, SafeSet};

    /// pattern1 whose net is the constant `y`.
    fn pattern1_const(y: f64) -> (Program, ParameterStore<f64>) {
        let mut cfg = BenchmarkConfig::default();
        cfg.hidden = vec![1];
        let p = build_benchmark("pattern1", &cfg).unwrap().program;
        let mut s = ParameterStore::new();
        s.insert("nn", "w0", Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        s.insert("nn", "b0", Tensor::new(vec![1], vec![0.0]).unwrap());
        s.insert("nn", "w1", Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        s.insert("nn", "b1", Tensor::new(vec![1], vec![y]).unwrap());
        (p, s)
    }

    #[test]
    fn pattern1_branches() {
        let (p, s) = pattern1_const(2.0);
        let r = exec_concrete(&p, &s, &[0.0]).unwrap();
        assert_eq!(r.env[p.var_index("z").unwrap()], 1.0);
        assert_eq!(r.unsafe_values, vec![0.0]);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].output, vec![2.0]);

        let (p, s) = pattern1_const(0.0);
        let r = exec_concrete(&p, &s, &[0.0]).unwrap();
        assert_eq!(r.env[p.var_index("z").unwrap()], 10.0);
        assert_eq!(r.unsafe_values, vec![9.0]);
    }

    #[test]
    fn rejects_out_of_range_input_and_non_finite() {
        let (p, s) = pattern1_const(2.0);
        assert!(matches!(exec_concrete(&p, &s, &[6.0]), Err(Error::Domain(_))));

        let mut q = Program::new("nan");
        let x = q.var("x");
        q.add_input(x, -1.0, 1.0);
        q.body = Stmt::assign(x, Expr::constant(f64::NAN));
        assert!(matches!(run_program(&q, &mut NoModules, &[0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn ground_truth_thermostat_is_concretely_safe() {
        let gt = build_benchmark("thermostat", &BenchmarkConfig::default())
            .unwrap()
            .ground_truth
            .unwrap();
        let prog = gt.inlined().unwrap();
        for k in 0..=40 {
            let x = 60.0 + 0.1 * k as f64;
            let r = run_program(&prog, &mut NoModules, &[x]).unwrap();
            assert_eq!(r.unsafe_values.len(), 20);
            assert!(r.is_safe(), "x = {x}: {:?}", r.unsafe_values);
        }
    }

    #[test]
    fn step_index_follows_outer_loop() {
        let mut p = Program::new("loop");
        let x = p.var("x");
        p.add_input(x, 0.0, 1.0);
        p.body = Stmt::repeat(
            3,
            Stmt::seq(vec![
                Stmt::repeat(2, Stmt::assign(x, Expr::offset(x, 1.0))),
                Stmt::assert(vec![x], SafeSet::interval(0.0, 100.0)),
            ]),
        );
        let mut ctx = Ctx::default();
        let mut env = vec![0.0];
        run_stmt(&p.body, &mut env, &mut NoModules, &mut ctx).unwrap();
        assert_eq!(env[0], 6.0);
        assert_eq!(ctx.step, 2);
        assert_eq!(ctx.unsafe_values.len(), 3);
    }
}
