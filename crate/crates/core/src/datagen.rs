//! Imitation data from ground-truth programs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::run_program;
use crate::ir::ground_truth::ControllerModules;
use crate::ir::GroundTruthProgram;
use crate::rng::{derive_seed, purpose, stream};
use crate::trainer::{Dataset, Record};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Number of (input, output) pairs; trajectories are generated until this
    /// many records exist and the last one is truncated.
    pub size: usize,
    pub seed: u64,
    pub noise: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            size: 200,
            seed: 0,
            noise: true,
        }
    }
}

/// Uniform sample of the program's input box.
pub fn sample_input<R: Rng + ?Sized>(gt: &GroundTruthProgram, rng: &mut R) -> Vec<f64> {
    gt.program
        .inputs
        .iter()
        .map(|s| {
            let iv = s.interval;
            if iv.is_point() {
                iv.lo
            } else {
                rng.gen_range(iv.lo..=iv.hi)
            }
        })
        .collect()
}

/// Records of one ground-truth trajectory from `input`.
pub fn trajectory_records(gt: &GroundTruthProgram, input: &[f64], noise_seed: Option<u64>, traj_id: usize) -> Result<Vec<Record>> {
    let mut noise_rng = noise_seed.map(|s| stream(s, traj_id as u64));
    let mut modules = ControllerModules {
        gt,
        rng: noise_rng.as_mut(),
    };
    let run = run_program(&gt.program, &mut modules, input)?;
    Ok(run
        .records
        .into_iter()
        .map(|r| Record {
            module: r.module,
            step: r.step,
            input: r.input,
            output: r.output,
            traj_id,
        })
        .collect())
}

pub fn gen_dataset(gt: &GroundTruthProgram, cfg: &GenConfig) -> Result<Dataset> {
    gen_with_purpose(gt, cfg, purpose::DATA)
}

/// Held-out data drawn from a stream independent of the training data.
pub fn gen_test_dataset(gt: &GroundTruthProgram, cfg: &GenConfig) -> Result<Dataset> {
    gen_with_purpose(gt, cfg, purpose::TEST_DATA)
}

fn gen_with_purpose(gt: &GroundTruthProgram, cfg: &GenConfig, which: u64) -> Result<Dataset> {
    if cfg.size == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let base = derive_seed(cfg.seed, which);
    let mut input_rng = stream(base, 0);
    let noise = cfg.noise.then(|| derive_seed(base, 1));
    let mut records = Vec::with_capacity(cfg.size);
    let mut traj = 0;
    while records.len() < cfg.size {
        let x = sample_input(gt, &mut input_rng);
        let recs = trajectory_records(gt, &x, noise, traj)?;
        if recs.is_empty() {
            return Err(Error::Config(format!(
                "ground truth for `{}` makes no neural calls",
                gt.program.name
            )));
        }
        records.extend(recs);
        traj += 1;
    }
    records.truncate(cfg.size);
    Ok(Dataset::new(records))
}

/// Partitions by trajectory: the first `round(n·train)` trajectories train.
pub fn split_dataset(d: &Dataset, train: f64, test: f64) -> Result<(Dataset, Dataset)> {
    if !(train >= 0.0 && test >= 0.0 && (train + test - 1.0).abs() < 1e-9) {
        return Err(Error::Config(format!("split fractions {train} and {test} must sum to 1")));
    }
    let ids = d.trajectories();
    let cut = (ids.len() as f64 * train).round() as usize;
    let train_ids: std::collections::BTreeSet<usize> = ids[..cut].iter().copied().collect();
    let (a, b): (Vec<Record>, Vec<Record>) = d.records.iter().cloned().partition(|r| train_ids.contains(&r.traj_id));
    Ok((Dataset::new(a), Dataset::new(b)))
}

/// Hex SHA-256 of a serializable configuration.
pub fn config_hash<C: Serialize>(cfg: &C) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_benchmark, BenchmarkConfig};

    fn gt(name: &str) -> GroundTruthProgram {
        build_benchmark(name, &BenchmarkConfig::default()).unwrap().ground_truth.unwrap()
    }

    #[test]
    fn thermostat_single_trajectory() {
        let g = gt("thermostat");
        let d = gen_dataset(&g, &GenConfig { size: 20, seed: 3, noise: true }).unwrap();
        assert_eq!(d.len(), 20);
        assert!(d.records.iter().all(|r| r.traj_id == 0));
        assert_eq!(d.records[0].module, "cool");
        assert!(d.records.iter().any(|r| r.module == "heat"));
        for (k, r) in d.records.iter().enumerate() {
            assert_eq!(r.step, k);
        }
        // cool controller outputs stay near {0, 1}
        for r in &d.records {
            assert!(r.output[0].abs() <= 0.05 || (r.output[0] - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn deterministic_and_noise_free() {
        let g = gt("thermostat");
        let cfg = GenConfig { size: 200, seed: 9, noise: true };
        assert_eq!(gen_dataset(&g, &cfg).unwrap(), gen_dataset(&g, &cfg).unwrap());
        let quiet = GenConfig { noise: false, ..cfg };
        let d = gen_dataset(&g, &quiet).unwrap();
        assert!(d.records.iter().all(|r| r.output[0] == 0.0 || r.output[0] == 1.0));
        assert_eq!(d.len(), 200);
    }

    #[test]
    fn noisy_outputs_keep_thermostat_safe() {
        let g = gt("thermostat");
        let d = gen_dataset(&g, &GenConfig { size: 2000, seed: 5, noise: true }).unwrap();
        // replay every trajectory's recorded outputs through the dynamics
        let inlined = g.program.clone();
        struct Replay<'a>(std::slice::Iter<'a, Record>);
        impl crate::exec::ModuleEval<f64> for Replay<'_> {
            fn call(&mut self, _: &str, _: &[f64], _: usize) -> Result<Vec<f64>> {
                Ok(self.0.next().unwrap().output.clone())
            }
        }
        let mut rng = stream(derive_seed(5, purpose::DATA), 0);
        for id in d.trajectories() {
            let recs: Vec<Record> = d.records.iter().filter(|r| r.traj_id == id).cloned().collect();
            let x = sample_input(&g, &mut rng);
            if recs.len() < 20 {
                continue;
            }
            let run = run_program(&inlined, &mut Replay(recs.iter()), &x).unwrap();
            assert!(run.is_safe());
        }
    }

    #[test]
    fn split_by_trajectory() {
        let g = gt("thermostat");
        let d = gen_dataset(&g, &GenConfig { size: 200, seed: 1, noise: true }).unwrap();
        let (a, b) = split_dataset(&d, 0.8, 0.2).unwrap();
        assert_eq!(a.trajectories().len(), 8);
        assert_eq!(b.trajectories().len(), 2);
        assert_eq!(a.len() + b.len(), d.len());
        assert!(a.trajectories().iter().all(|t| !b.trajectories().contains(t)));
        assert!(split_dataset(&d, 0.5, 0.6).is_err());
    }

    #[test]
    fn racetrack_agents_can_collide() {
        let g = gt("racetrack");
        let mut found = false;
        'search: for seed in 0..200 {
            let d = gen_dataset(&g, &GenConfig { size: 40, seed, noise: true }).unwrap();
            let positions = |module: &str| -> Vec<f64> {
                d.records.iter().filter(|r| r.module == module).map(|r| r.input[0]).collect()
            };
            // inputs from step 1 on are post-move positions
            for (a, b) in positions("agent1").iter().zip(positions("agent2").iter()).skip(1) {
                if (a - b).abs() < 1.0 {
                    found = true;
                    break 'search;
                }
            }
        }
        assert!(found);
    }
}
