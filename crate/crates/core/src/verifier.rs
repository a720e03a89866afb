//! Grid verification, concrete safety sampling and held-out data loss.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Eval, Lifted, ParameterStore};
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::exec::{exec_concrete, grid_cells, sound_box};
use crate::ir::{normalize_guards, Program};
use crate::rng::{derive_seed, purpose, stream};
use crate::scalar::Scalar;
use crate::trainer::{data_loss, Dataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Cells per input axis; defaults to `cells` for one input and
    /// `per_axis` along each axis otherwise.
    pub grid: Option<Vec<usize>>,
    pub cells: usize,
    pub per_axis: usize,
    /// Starting points for the concrete safety fraction.
    pub concrete_samples: usize,
    /// Held-out records for the test data loss.
    pub test_samples: usize,
    pub seed: u64,
    /// Unsafety at or below this counts as zero.
    pub tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            grid: None,
            cells: 10_000,
            per_axis: 20,
            concrete_samples: 100,
            test_samples: 10_000,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

impl VerifyConfig {
    pub fn grid_for(&self, p: &Program) -> Result<Vec<usize>> {
        let g = match &self.grid {
            Some(g) => g.clone(),
            None if p.input_dim() == 1 => vec![self.cells],
            None => vec![self.per_axis; p.input_dim()],
        };
        if g.len() != p.input_dim() || g.contains(&0) {
            return Err(Error::Config(format!(
                "grid {g:?} does not fit {} positive input axes",
                p.input_dim()
            )));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellVerdict {
    pub index: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub safe: bool,
    pub worst: f64,
}

#[derive(Clone, Debug)]
pub struct Verification {
    pub portion: f64,
    pub cells: Vec<CellVerdict>,
}

/// Sound propagation of every grid cell; a cell is safe when every assert's
/// unsafety is zero (within the tolerance).
pub fn verify<T: Scalar + Send + Sync>(p: &Program, theta: &ParameterStore<T>, cfg: &VerifyConfig) -> Result<Verification> {
    for (name, spec) in &p.modules {
        spec.check_params(theta, name)?;
    }
    let prog = normalize_guards(p);
    let params: Lifted<T> = theta.lift_values(&mut Eval);
    let input: Vec<Interval<T>> = prog.input_intervals().iter().map(|iv| iv.cast()).collect();
    let cells = grid_cells(&input, &cfg.grid_for(&prog)?);
    let verdicts: Vec<Result<CellVerdict>> = cells
        .par_iter()
        .enumerate()
        .map(|(index, cell)| {
            let t = sound_box(&mut Eval, &prog, &params, cell)?;
            let worst = t
                .unsafety_terms
                .iter()
                .map(|u| u.as_f64())
                .fold(0.0, f64::max);
            Ok(CellVerdict {
                index,
                lo: cell.iter().map(|iv| iv.lo.as_f64()).collect(),
                hi: cell.iter().map(|iv| iv.hi.as_f64()).collect(),
                safe: worst <= cfg.tolerance,
                worst,
            })
        })
        .collect();
    let cells = verdicts.into_iter().collect::<Result<Vec<_>>>()?;
    let safe = cells.iter().filter(|c| c.safe).count();
    Ok(Verification {
        portion: safe as f64 / cells.len() as f64,
        cells,
    })
}

pub fn verdicts_csv(cells: &[CellVerdict]) -> String {
    let dim = cells.first().map_or(0, |c| c.lo.len());
    let mut s = String::from("cell_index");
    for i in 0..dim {
        let _ = write!(s, ",lo{i}");
    }
    for i in 0..dim {
        let _ = write!(s, ",hi{i}");
    }
    s.push_str(",safe,worst_unsafe_value\n");
    for c in cells {
        let _ = write!(s, "{}", c.index);
        for v in c.lo.iter().chain(&c.hi) {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{}", c.safe, c.worst);
    }
    s
}

/// Fraction of uniformly sampled concrete trajectories with every assert
/// satisfied.
pub fn eval_concrete_safety<T: Scalar>(p: &Program, theta: &ParameterStore<T>, samples: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    if samples == 0 {
        return Err(Error::Config("concrete sample count must be positive".into()));
    }
    let mut rng = stream(derive_seed(seed, purpose::CONCRETE), 0);
    let mut safe = 0;
    for _ in 0..samples {
        let x: Vec<T> = p
            .inputs
            .iter()
            .map(|s| {
                let iv = s.interval;
                T::lit(if iv.is_point() { iv.lo } else { rng.gen_range(iv.lo..=iv.hi) })
            })
            .collect();
        if exec_concrete(p, theta, &x)?.is_safe() {
            safe += 1;
        }
    }
    Ok(safe as f64 / samples as f64)
}

/// Data loss on held-out records, primal only.
pub fn test_data_loss<T: Scalar>(p: &Program, theta: &ParameterStore<T>, test: &Dataset) -> Result<f64> {
    let params = theta.lift_values(&mut Eval);
    Ok(data_loss(&mut Eval, p, &params, test)?.as_f64())
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::ir::{build_benchmark, BenchmarkConfig};
    use crate::trainer::init_params;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn refining_the_grid_never_lowers_the_portion(pattern in 1..=5usize, seed in 0..10_000u64, n in 2..40usize, k in 2..5usize) {
            let cfg = BenchmarkConfig { hidden: vec![8, 8], ..BenchmarkConfig::default() };
            let p = build_benchmark(&format!("pattern{pattern}"), &cfg).unwrap().program;
            let theta = init_params::<f64>(&p, seed);
            let coarse = verify(&p, &theta, &VerifyConfig { cells: n, ..VerifyConfig::default() }).unwrap();
            let fine = verify(&p, &theta, &VerifyConfig { cells: n * k, ..VerifyConfig::default() }).unwrap();
            // every safe coarse cell stays safe in all of its sub-cells
            for c in coarse.cells.iter().filter(|c| c.safe) {
                for f in &fine.cells[c.index * k..(c.index + 1) * k] {
                    prop_assert!(f.safe, "coarse cell {} safe, sub-cell {} not", c.index, f.index);
                }
            }
            prop_assert!(fine.portion >= coarse.portion);
        }
    }
}
