//! The subcommands. Each writes its artifacts under the run's output
//! directory and returns the process exit code.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nssafe::autodiff::{Checkpoint, ParameterStore, Tape, Var};
use nssafe::datagen::{config_hash, gen_dataset, gen_test_dataset, GenConfig};
use nssafe::ir::GroundTruthProgram;
use nssafe::trainer::{
    curves_csv, init_params, train_with_hook, Dataset, DatasetHeader, Mode, Objective, ProgramObjective, StopReason,
};
use nssafe::verifier::{eval_concrete_safety, test_data_loss, verdicts_csv, verify};
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    header: DatasetHeader,
    generation: GenConfig,
    benchmark_config: nssafe::ir::BenchmarkConfig,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "Q_train")]
    pub q_train: f64,
    #[serde(rename = "C_sharp_train")]
    pub c_sharp_train: Option<f64>,
    pub epochs: usize,
    pub stop_reason: StopReason,
    pub duality_gap: Option<f64>,
    pub failure: Option<String>,
}

/// Parameters at the last round boundary, for continuing a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResumeState {
    pub epoch: usize,
    pub params: Checkpoint,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub provably_safe_portion: f64,
    pub concrete_safe_fraction: f64,
    pub test_data_loss: Option<f64>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("cannot parse {}: {e}", path.display())))
}

fn ground_truth(r: &Resolved) -> Option<&GroundTruthProgram> {
    r.bench.ground_truth.as_ref()
}

fn gen_config(r: &Resolved, size: usize) -> GenConfig {
    GenConfig {
        size,
        seed: r.cfg.seed,
        noise: r.cfg.data.noise,
    }
}

pub fn gen_data(r: &Resolved) -> Result<(), CliError> {
    let gt = ground_truth(r).ok_or_else(|| {
        CliError::usage(format!("benchmark `{}` has no ground truth to generate data from", r.cfg.benchmark))
    })?;
    let generation = gen_config(r, r.cfg.data.size);
    let data = gen_dataset(gt, &generation).map_err(|e| CliError::generation(&e))?;
    let hash = config_hash(&(&r.cfg.benchmark, &r.cfg.benchmark_config, &generation))?;
    let header = DatasetHeader {
        benchmark: r.cfg.benchmark.clone(),
        seed: r.cfg.seed,
        config_hash: hash,
        records: data.len(),
    };
    let path = r.dataset_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    let file = File::create(&path).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    data.write_jsonl(&header, &mut w)?;
    w.flush().map_err(|e| CliError::io(e.to_string()))?;
    write_json(
        &path.with_extension("meta.json"),
        &DatasetMeta {
            header,
            generation,
            benchmark_config: r.cfg.benchmark_config.clone(),
        },
    )?;
    eprintln!("wrote {} records to {}", data.len(), path.display());
    Ok(())
}

fn load_dataset(r: &Resolved) -> Result<Option<Dataset>, CliError> {
    if ground_truth(r).is_none() {
        return Ok(None);
    }
    let path = r.dataset_path();
    if !path.exists() {
        return Err(CliError::usage(format!(
            "dataset {} not found; run gen-data first",
            path.display()
        )));
    }
    let file = File::open(&path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let (header, data) = Dataset::read_jsonl(BufReader::new(file))?;
    if header.benchmark != r.cfg.benchmark {
        return Err(CliError::usage(format!(
            "dataset {} is for `{}`, not `{}`",
            path.display(),
            header.benchmark,
            r.cfg.benchmark
        )));
    }
    Ok(Some(data))
}

/// Returns true when training stopped on a numeric failure.
pub fn train(r: &Resolved, resume: Option<&Path>) -> Result<bool, CliError> {
    let data = load_dataset(r)?;
    let program = &r.bench.program;
    let mut cfg = r.train.clone();
    let layout: ParameterStore<f64> = match resume {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::usage(format!("resume state {} not found", path.display())));
            }
            let state: ResumeState = read_json(path)?;
            cfg.start_epoch = state.epoch;
            cfg.warm_start_epochs = 0;
            ParameterStore::from_checkpoint(&state.params)?
        }
        None => init_params(program, r.cfg.seed),
    };
    let mut obj = ProgramObjective::new(program, &layout, data.as_ref(), &cfg)?;
    let theta0 = layout.to_flat();
    let mut last = (cfg.start_epoch, theta0.clone());
    let every = cfg.checkpoint_every;
    let mut next_ck = cfg.start_epoch + every;
    let mut ck_error = None;
    let result = train_with_hook(&mut obj, &theta0, &cfg, &mut |epoch, theta| {
        last = (epoch, theta.to_vec());
        if every > 0 && epoch >= next_ck && ck_error.is_none() {
            next_ck = epoch - epoch % every + every;
            let path = r.out.join("checkpoints").join(format!("epoch_{epoch}.json"));
            let saved = fs::create_dir_all(r.out.join("checkpoints"))
                .map_err(nssafe::Error::from)
                .and_then(|_| layout.with_flat(theta))
                .and_then(|p| p.save(&path));
            ck_error = saved.err();
        }
    })?;
    if let Some(e) = ck_error {
        return Err(CliError::io(format!("cannot write intermediate checkpoint: {e}")));
    }

    let c_sharp = match (result.c, cfg.mode) {
        (Some(c), _) => Some(c),
        (None, Mode::Ablation) if result.stop_reason != StopReason::Numeric => {
            // reported for comparison only; never trained on
            let dse = nssafe::trainer::TrainConfig { mode: Mode::Dse, ..cfg.clone() };
            let mut probe = ProgramObjective::new(program, &layout, data.as_ref(), &dse)?;
            let mut tape = Tape::new();
            let leaves: Vec<Var> = result.theta.iter().map(|&x| tape.leaf(x)).collect();
            let ev = probe.evaluate(&mut tape, &leaves, cfg.start_epoch + result.epochs, true)?;
            ev.c.map(|v| tape.value(v))
        }
        (None, _) => None,
    };

    let out = &r.out;
    layout.with_flat(&result.theta)?.save(&out_file(out, "checkpoint.json")?)?;
    write_json(
        &out.join("resume.json"),
        &ResumeState {
            epoch: last.0,
            params: layout.with_flat(&last.1)?.to_checkpoint(),
        },
    )?;
    write_file(&out.join("curves.csv"), &curves_csv(&result.curves))?;
    let numeric = result.stop_reason == StopReason::Numeric;
    write_json(
        &out.join("summary.json"),
        &Summary {
            q_train: result.q,
            c_sharp_train: c_sharp,
            epochs: result.epochs,
            stop_reason: result.stop_reason,
            duality_gap: result.gap.map(|(hi, lo)| hi - lo),
            failure: result.failure.clone(),
        },
    )?;
    let mut run = r.cfg.clone();
    run.train = serde_json::to_value(&cfg).map_err(|e| CliError::io(e.to_string()))?;
    run.out = Some(out.clone());
    write_json(&out.join("run.json"), &run)?;
    eprintln!(
        "{} on {}: {} epochs, stop {:?}, Q {:.6}",
        cfg.mode.name(),
        r.cfg.benchmark,
        result.epochs,
        result.stop_reason,
        result.q
    );
    if let Some(f) = &result.failure {
        eprintln!("numeric failure: {f}");
    }
    Ok(numeric)
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

pub fn evaluate(r: &Resolved, checkpoint: Option<&Path>) -> Result<Metrics, CliError> {
    let path = checkpoint.map_or_else(|| r.out.join("checkpoint.json"), Path::to_path_buf);
    if !path.exists() {
        return Err(CliError::usage(format!("checkpoint {} not found", path.display())));
    }
    let theta = ParameterStore::<f64>::load(&path)?;
    let program = &r.bench.program;
    let mut vcfg = r.cfg.verify.clone();
    vcfg.seed = r.cfg.seed;
    let v = verify(program, &theta, &vcfg)?;
    let concrete = eval_concrete_safety(program, &theta, vcfg.concrete_samples, vcfg.seed)?;
    let test_loss = match ground_truth(r) {
        Some(gt) if vcfg.test_samples > 0 => {
            let test = gen_test_dataset(gt, &gen_config(r, vcfg.test_samples)).map_err(|e| CliError::generation(&e))?;
            Some(test_data_loss(program, &theta, &test)?)
        }
        _ => None,
    };
    let metrics = Metrics {
        provably_safe_portion: v.portion,
        concrete_safe_fraction: concrete,
        test_data_loss: test_loss,
    };
    write_file(&out_file(&r.out, "verdicts.csv")?, &verdicts_csv(&v.cells))?;
    write_json(&r.out.join("metrics.json"), &metrics)?;
    eprintln!(
        "{}: provably safe portion {}, concrete safe fraction {}",
        r.cfg.benchmark, metrics.provably_safe_portion, metrics.concrete_safe_fraction
    );
    Ok(metrics)
}
