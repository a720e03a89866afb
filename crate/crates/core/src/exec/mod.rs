//! Interpreters: concrete, sound symbolic (joins), and sampled symbolic.

pub mod concrete;
pub mod sampling;
pub mod sound;

use serde::Serialize;

use crate::autodiff::{Backend, Lifted};
use crate::domain::{abstract_mlp, affine_row, nonlinear_dim, DiffBox, Interval};
use crate::error::{Error, Result};
use crate::ir::{is_normalized, Expr, Program, VarId};
use crate::scalar::Scalar;

pub use concrete::{exec_concrete, run_program, ConcreteRun, Ctx, IoRecord, ModuleEval, NeuralModules, NoModules};
pub use sampling::{
    dse_safety_estimate, enumerate_paths, sample_bundle, sample_trajectory, DseEstimate, PathOutcome, SampleConfig,
    TrajectoryRecord,
};
pub use sound::{exec_sound, sound_box, SoundConfig, SoundTrajectory};

/// Abstract value of `expr` over `bx` as a `(center, dev)` pair.
pub(crate) fn abstract_expr<T: Scalar, B: Backend<T>>(b: &mut B, bx: &DiffBox<B::V>, expr: &Expr) -> (B::V, B::V) {
    let terms: Vec<(T, usize)> = expr.terms.iter().map(|&(v, c)| (T::lit(c), v)).collect();
    let (c, e) = affine_row(b, bx, &terms, T::lit(expr.constant));
    match expr.nonlinearity {
        Some(nl) => nonlinear_dim(b, c, e, nl),
        None => (c, e),
    }
}

/// Interval image of a neural call written into the output dimensions.
pub(crate) fn abstract_call<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    bx: &mut DiffBox<B::V>,
    module: &str,
    inputs: &[VarId],
    outputs: &[VarId],
) -> Result<()> {
    let spec = p
        .modules
        .get(module)
        .ok_or_else(|| Error::IllFormed(format!("module `{module}` is not declared")))?;
    let c: Vec<B::V> = inputs.iter().map(|&v| bx.center[v]).collect();
    let e: Vec<B::V> = inputs.iter().map(|&v| bx.dev[v]).collect();
    let (oc, oe) = abstract_mlp(b, spec, params, module, &c, &e)?;
    if oc.len() != outputs.len() {
        return Err(Error::Arity(format!(
            "module `{module}` returns {} values for {} outputs",
            oc.len(),
            outputs.len()
        )));
    }
    for (k, &v) in outputs.iter().enumerate() {
        bx.set(v, oc[k], oe[k]);
    }
    Ok(())
}

pub(crate) fn check_box<T: Scalar, B: Backend<T>>(b: &B, bx: &DiffBox<B::V>, at: &str) -> Result<()> {
    for i in 0..bx.dim() {
        let (c, e) = (b.value(bx.center[i]), b.value(bx.dev[i]));
        if !c.is_finite() || !e.is_finite() {
            return Err(Error::Numeric(format!("dimension {i} after {at} is ⟨{c}, {e}⟩")));
        }
    }
    Ok(())
}

pub(crate) fn guard_axis(guard: &Expr) -> Result<VarId> {
    guard
        .as_var()
        .ok_or_else(|| Error::NotNormalized("conditional guard is not a plain variable".into()))
}

pub(crate) fn require_normalized(p: &Program) -> Result<()> {
    if is_normalized(p) {
        Ok(())
    } else {
        Err(Error::NotNormalized(format!("run normalize_guards on `{}` first", p.name)))
    }
}

/// The program's start box over all variables for the given input box.
pub fn start_box<T: Scalar, B: Backend<T>>(b: &mut B, p: &Program, input: &[Interval<T>]) -> Result<DiffBox<B::V>> {
    let ivs: Vec<Interval<f64>> = input.iter().map(|iv| iv.cast()).collect();
    let all = p.initial_intervals(&ivs)?;
    let all: Vec<Interval<T>> = all.iter().map(|iv| iv.cast()).collect();
    Ok(DiffBox::from_intervals(b, &all))
}

/// Even grid over the input box with `counts[i]` cells along axis `i`,
/// enumerated with the last axis fastest.
pub fn grid_cells<T: Scalar>(input: &[Interval<T>], counts: &[usize]) -> Vec<Vec<Interval<T>>> {
    let per_axis: Vec<Vec<Interval<T>>> = input.iter().zip(counts).map(|(iv, &n)| iv.split(n)).collect();
    let mut cells = vec![vec![]];
    for axis in &per_axis {
        let mut next = Vec::with_capacity(cells.len() * axis.len());
        for c in &cells {
            for iv in axis {
                let mut cell = c.clone();
                cell.push(*iv);
                next.push(cell);
            }
        }
        cells = next;
    }
    cells
}

/// Per-axis counts splitting `dim` axes into roughly `total` cells.
pub fn even_counts(dim: usize, total: usize) -> Vec<usize> {
    if dim == 0 {
        return vec![];
    }
    if dim == 1 {
        return vec![total.max(1)];
    }
    let k = (total as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
    vec![k; dim]
}

/// Trajectory dump line.
#[derive(Clone, Debug, Serialize)]
pub struct BoxDump {
    pub center: Vec<f64>,
    pub dev: Vec<f64>,
}

impl BoxDump {
    pub fn of<T: Scalar, B: Backend<T>>(b: &B, bx: &DiffBox<B::V>) -> Self {
        Self {
            center: bx.center.iter().map(|&v| b.value(v).as_f64()).collect(),
            dev: bx.dev.iter().map(|&v| b.value(v).as_f64()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let cells = grid_cells(&[Interval::new(0.0, 1.0), Interval::new(0.0, 2.0)], &[2, 4]);
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[1], vec![Interval::new(0.0, 0.5), Interval::new(0.5, 1.0)]);
        assert_eq!(even_counts(4, 100), vec![3; 4]);
        assert_eq!(even_counts(1, 100), vec![100]);
    }
}
