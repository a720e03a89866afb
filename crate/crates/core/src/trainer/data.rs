//! Imitation datasets and the data loss.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::{mlp_forward, Backend, Lifted};
use crate::error::{Error, Result};
use crate::ir::Program;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub module: String,
    pub step: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub traj_id: usize,
}

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub benchmark: String,
    pub seed: u64,
    pub config_hash: String,
    pub records: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by module name.
    pub fn by_module(&self) -> BTreeMap<&str, Vec<&Record>> {
        let mut out: BTreeMap<&str, Vec<&Record>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.module.as_str()).or_default().push(r);
        }
        out
    }

    /// Distinct trajectory ids in order of first appearance.
    pub fn trajectories(&self) -> Vec<usize> {
        let mut seen = std::collections::BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.traj_id))
            .map(|r| r.traj_id)
            .collect()
    }

    /// Every record names a module of `p` with matching arities.
    pub fn check_against(&self, p: &Program) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let spec = p
                .modules
                .get(&r.module)
                .ok_or_else(|| Error::IllFormed(format!("record {i} names unknown module `{}`", r.module)))?;
            if r.input.len() != spec.input_width() || r.output.len() != spec.output_width() {
                return Err(Error::Shape(format!(
                    "record {i} for `{}` has {}→{} values, module is {}→{}",
                    r.module,
                    r.input.len(),
                    r.output.len(),
                    spec.input_width(),
                    spec.output_width()
                )));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, header: &DatasetHeader, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<(DatasetHeader, Self)> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(Error::EmptyDataset)??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        let mut records = Vec::with_capacity(header.records);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok((header, Self { records }))
    }
}

/// Mean over modules of each module's mean squared error on its records.
pub fn data_loss<T: Scalar, B: Backend<T>>(
    b: &mut B,
    p: &Program,
    params: &Lifted<B::V>,
    data: &Dataset,
) -> Result<B::V> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_module = Vec::new();
    for (module, recs) in data.by_module() {
        let spec = p
            .modules
            .get(module)
            .ok_or_else(|| Error::IllFormed(format!("dataset names unknown module `{module}`")))?;
        let mut sq = Vec::with_capacity(recs.len() * spec.output_width());
        for r in recs {
            let x: Vec<B::V> = r.input.iter().map(|&v| b.constant(T::lit(v))).collect();
            let y = mlp_forward(b, spec, params, module, &x)?;
            if y.len() != r.output.len() {
                return Err(Error::Shape(format!("record for `{module}` has {} outputs", r.output.len())));
            }
            for (&pred, &target) in y.iter().zip(&r.output) {
                let d = b.add_const(pred, T::lit(-target));
                sq.push(b.square(d));
            }
        }
        let total = b.sum(&sq);
        per_module.push(b.scale(total, T::one() / T::lit(sq.len() as f64)));
    }
    let total = b.sum(&per_module);
    Ok(b.scale(total, T::one() / T::lit(per_module.len() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Eval, MlpSpec, ParameterStore, Tensor};

    fn identity_program() -> (Program, ParameterStore<f64>) {
        let mut p = Program::new("id");
        for m in ["a", "b"] {
            p.modules
                .insert(m.into(), MlpSpec::new(vec![1, 1], vec![Activation::None]).unwrap());
        }
        let mut s = ParameterStore::new();
        for m in ["a", "b"] {
            s.insert(m, "w0", Tensor::new(vec![1, 1], vec![1.0]).unwrap());
            s.insert(m, "b0", Tensor::new(vec![1], vec![0.0]).unwrap());
        }
        (p, s)
    }

    fn rec(module: &str, x: f64, y: f64) -> Record {
        Record {
            module: module.into(),
            step: 0,
            input: vec![x],
            output: vec![y],
            traj_id: 0,
        }
    }

    #[test]
    fn mean_of_module_mses() {
        let (p, s) = identity_program();
        let l = s.lift_values(&mut Eval);
        let exact = Dataset::new(vec![rec("a", 1.0, 1.0)]);
        assert_eq!(data_loss(&mut Eval, &p, &l, &exact).unwrap(), 0.0);

        // MSE 0.2 for a and 0.4 for b
        let d = Dataset::new(vec![
            rec("a", 0.0, 0.2f64.sqrt()),
            rec("b", 0.0, 0.4f64.sqrt()),
        ]);
        let q = data_loss(&mut Eval, &p, &l, &d).unwrap();
        assert!((q - 0.3).abs() < 1e-12);

        let mut doubled = d.clone();
        doubled.records.push(rec("a", 0.0, 0.2f64.sqrt()));
        assert!((data_loss(&mut Eval, &p, &l, &doubled).unwrap() - q).abs() < 1e-12);

        assert!(matches!(data_loss(&mut Eval, &p, &l, &Dataset::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn jsonl_round_trip() {
        let d = Dataset::new(vec![rec("a", 1.0, 2.0), rec("b", 3.0, 4.0)]);
        let h = DatasetHeader {
            benchmark: "x".into(),
            seed: 1,
            config_hash: "h".into(),
            records: 2,
        };
        let mut buf = Vec::new();
        d.write_jsonl(&h, &mut buf).unwrap();
        let (h2, d2) = Dataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!((h2, d2), (h, d));
    }
}
