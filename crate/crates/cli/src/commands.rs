use std::fs;
use std::path::{Path, PathBuf};

use advar::channel::{read_capture, write_capture, ChannelTap, EavesdropDataset};
use advar::data::{load_dataset, synthetic_dataset, write_cifar10};
use advar::eval::{
    budget_study, contact_sheet, interpolation_study, paired_configs, sweep, write_curves, EvalReport,
};
use advar::feasibility::{
    differentiability_study, harmonize, elbow_select, inertia_curve, project_3d, split_by_label, write_projection_csv, FeatureMatrix,
};
use advar::model::{train_model, Classifier};
use advar::vae::{train_vae, Interpolation, LatentPool, VaeModel};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

const MODEL_DIR: &str = "model";
const CAPTURE_DIR: &str = "capture";
const CAPTURE_FILE: &str = "frames.advr";
const VAE_DIR: &str = "vae";
const POOL_FILE: &str = "pool.latents";

/// Creates a stage directory that must not exist yet.
fn fresh(dir: PathBuf) -> CliResult<PathBuf> {
    if dir.exists() {
        return Err(CliError::new("exists", format!("{} already exists; outputs are write-once", dir.display())));
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn require(path: PathBuf, stage: &str) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::new("precondition", format!("{} is missing; run `{stage}` first", path.display())))
    }
}

fn write_new(path: &Path, bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    fs::OpenOptions::new().write(true).create_new(true).open(path)?.write_all(bytes)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    write_new(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

pub fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

/// Sidecar holding the true labels of a capture, for class-tagged studies.
pub fn labels_path(capture: &Path) -> PathBuf {
    capture.with_extension("labels.json")
}

pub fn synth_data(out: &Path, train: usize, test: usize, seed: u64) -> CliResult<Value> {
    fs::create_dir_all(out)?;
    let (train_path, test_path) = (out.join("train.bin"), out.join("test.bin"));
    write_cifar10(&train_path, &synthetic_dataset::<f32>(train, seed))?;
    write_cifar10(&test_path, &synthetic_dataset::<f32>(test, seed.wrapping_add(1)))?;
    Ok(json!({ "train": train_path, "test": test_path }))
}

pub fn train(config: &ExperimentConfig) -> CliResult<Value> {
    let run = config.open_run()?;
    let dir = run.join(MODEL_DIR);
    if dir.exists() {
        return Err(CliError::new("exists", format!("{} already exists; outputs are write-once", dir.display())));
    }
    let trainset = load_dataset::<f32>(&config.train_data)?;
    let testset = load_dataset::<f32>(&config.test_data)?;
    let init = advar::model::build_model::<f32>(&config.model, config.seed)?;
    let model = train_model(&init, &trainset, Some(&testset), &config.train_options())?;
    model.save(&dir)?;
    Ok(json!({ "run_dir": run, "checkpoint": dir, "baseline_accuracy": model.baseline_accuracy(), "seed": config.seed }))
}

fn load_model(run: &Path) -> CliResult<Classifier<f32>> {
    Ok(Classifier::<f32>::load(&require(run.join(MODEL_DIR), "train-model")?)?)
}

pub fn capture(config: &ExperimentConfig, by_class: bool) -> CliResult<Value> {
    let run = config.open_run()?;
    let model = load_model(&run)?;
    let partition = model.partition(config.cut_index)?;
    let traffic = load_dataset::<f32>(config.capture_source())?;
    let n = config.capture_count;
    if n > traffic.len() {
        return Err(advar::Error::InsufficientData { requested: n, available: traffic.len() }.into());
    }
    if n == 0 {
        warn("capture_count is 0; writing an empty capture");
    }
    let dir = fresh(run.join(CAPTURE_DIR))?;
    let tap = ChannelTap::passive();
    for i in 0..n {
        tap.transmit(&partition.forward_head(&traffic.image(i))?)?;
    }
    let frames = tap.logged();
    let path = dir.join(CAPTURE_FILE);
    write_capture(&path, &frames)?;
    let mut out = json!({ "run_dir": run, "capture": path, "frames": frames.len(), "cut_shape": partition.cut_shape().dims() });
    if by_class {
        let labels = labels_path(&path);
        write_json(&labels, &traffic.labels()[..n].to_vec())?;
        out["labels"] = json!(labels);
    }
    Ok(out)
}

fn load_captures(run: &Path) -> CliResult<EavesdropDataset<f32>> {
    let path = require(run.join(CAPTURE_DIR).join(CAPTURE_FILE), "capture")?;
    Ok(EavesdropDataset::from_frames(read_capture(&path)?)?)
}

pub fn train_vae_cmd(config: &ExperimentConfig) -> CliResult<Value> {
    let run = config.open_run()?;
    let model = load_model(&run)?;
    let expected = model.partition(config.cut_index)?.cut_shape().clone();
    let captures = load_captures(&run)?;
    let shape = captures.shape().ok_or_else(|| CliError::new("precondition", "capture holds no frames"))?;
    if *shape != expected {
        return Err(advar::Error::Shape { expected: expected.dims().to_vec(), actual: shape.dims().to_vec() }.into());
    }
    let dir = run.join(VAE_DIR);
    if dir.exists() {
        return Err(CliError::new("exists", format!("{} already exists; outputs are write-once", dir.display())));
    }
    let vae = train_vae(&captures, &config.vae_config(expected))?;
    vae.save(&dir)?;
    let pool = LatentPool::from_dataset(&vae, &captures)?;
    pool.save(&run.join(POOL_FILE))?;
    let last = vae.loss_trace().last().cloned();
    Ok(json!({ "run_dir": run, "checkpoint": dir, "epochs": vae.loss_trace().len(), "final_loss": last, "pool": pool.len() }))
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    report.write_json(&dir.join("report.json"))?;
    report.write_csvs(&dir.join("points.csv"), &dir.join("records.csv"))?;
    Ok(())
}

fn summary(report: &EvalReport) -> Value {
    json!(report
        .points
        .iter()
        .map(|p| json!({ "alpha": p.alpha, "accuracy": p.accuracy, "asr": p.asr }))
        .collect::<Vec<_>>())
}

/// Which attack evaluation to run.
#[derive(Debug, Clone)]
pub enum EvalMode {
    Single(Interpolation),
    Both,
    Budget(Vec<usize>),
}

pub fn attack_eval(config: &ExperimentConfig, mode: EvalMode) -> CliResult<Value> {
    let run = config.open_run()?;
    let model = load_model(&run)?;
    let partition = model.partition(config.cut_index)?;
    let testset = load_dataset::<f32>(&config.test_data)?;
    let base = config.attack_config(0.0);
    let alphas = &config.alphas;

    if let EvalMode::Budget(budgets) = &mode {
        let captures = load_captures(&run)?;
        let vae_config = config.vae_config(partition.cut_shape().clone());
        let points =
            budget_study(&partition, &captures, &testset, budgets, &vae_config, alphas, &base, config.baseline_mode)?;
        let dir = fresh(run.join("eval-budget"))?;
        for p in &points {
            let sub = fresh(dir.join(format!("budget-{}", p.budget)))?;
            write_report(&sub, &p.report)?;
        }
        write_json(&dir.join("budget.json"), &points)?;
        let labels: Vec<String> = points.iter().map(|p| format!("{} captures", p.budget)).collect();
        let series: Vec<(&str, &EvalReport)> = labels.iter().map(String::as_str).zip(points.iter().map(|p| &p.report)).collect();
        write_curves(&dir, "budget", &series)?;
        let conf: Vec<Value> = points
            .iter()
            .map(|p| json!({ "budget": p.budget, "alpha": p.confidence_alpha, "misclassified_confidence": p.misclassified_confidence }))
            .collect();
        return Ok(json!({ "run_dir": run, "out": dir, "budgets": conf }));
    }

    let vae = VaeModel::<f32>::load(&require(run.join(VAE_DIR), "train-vae")?)?;
    let pool = LatentPool::<f32>::load(&require(run.join(POOL_FILE), "train-vae")?)?;
    match mode {
        EvalMode::Single(interpolation) => {
            let attack = advar::vae::AttackConfig { interpolation, ..base };
            let report = sweep(&partition, &vae, &pool, &testset, alphas, &attack, config.baseline_mode)?;
            let dir = fresh(run.join(format!("eval-{}", interpolation.name())))?;
            write_report(&dir, &report)?;
            write_curves(&dir, "curve", &[(interpolation.name(), &report)])?;
            let indices: Vec<usize> = config.contact_samples.iter().copied().filter(|&i| i < testset.len()).collect();
            if !indices.is_empty() {
                contact_sheet(&partition, &vae, &pool, &testset, &indices, alphas, &attack)?
                    .write(&dir.join("contact_sheet.png"))?;
            }
            Ok(json!({ "run_dir": run, "out": dir, "clean_accuracy": report.clean_accuracy, "points": summary(&report) }))
        }
        EvalMode::Both => {
            let (lerp, slerp) = paired_configs(&base);
            let paired =
                interpolation_study(&partition, &vae, &pool, &testset, alphas, &lerp, &slerp, config.baseline_mode)?;
            let dir = fresh(run.join("eval-both"))?;
            write_report(&fresh(dir.join("lerp"))?, &paired.lerp)?;
            write_report(&fresh(dir.join("slerp"))?, &paired.slerp)?;
            write_curves(&dir, "interpolation", &[("lerp", &paired.lerp), ("slerp", &paired.slerp)])?;
            Ok(json!({ "run_dir": run, "out": dir, "lerp": summary(&paired.lerp), "slerp": summary(&paired.slerp) }))
        }
        EvalMode::Budget(_) => unreachable!("handled above"),
    }
}

fn tag_of(path: &Path) -> String {
    path.display().to_string()
}

pub fn feasibility(config: &ExperimentConfig, captures: &[PathBuf], by_class: bool) -> CliResult<Value> {
    let run = config.open_run()?;
    let paths: Vec<PathBuf> = if captures.is_empty() { config.feasibility.captures.clone() } else { captures.to_vec() };
    if let Some(p) = paths.iter().find(|p| !p.exists()) {
        return Err(CliError::new("config", format!("capture file {} does not exist", p.display())));
    }
    let (datasets, kind) = if by_class {
        if paths.len() != 1 {
            return Err(CliError::new("precondition", format!("--by-class takes one capture, got {}", paths.len())));
        }
        let frames = read_capture(&paths[0])?;
        let labels_file = require(labels_path(&paths[0]), "capture --by-class")?;
        let labels: Vec<usize> = serde_json::from_slice(&fs::read(labels_file)?)?;
        if labels.len() != frames.len() {
            return Err(advar::Error::Dimension { left: frames.len(), right: labels.len() }.into());
        }
        let sets = split_by_label(&FeatureMatrix::from_activations(&frames)?, &labels)?;
        (sets, "by-class")
    } else {
        if paths.len() < 2 {
            return Err(advar::Error::Precondition(format!(
                "differentiability study needs at least 2 capture files, got {}",
                paths.len()
            ))
            .into());
        }
        let frames = paths.iter().map(|p| read_capture(p)).collect::<advar::Result<Vec<_>>>()?;
        let views: Vec<&[advar::ActivationTensor<f32>]> = frames.iter().map(Vec::as_slice).collect();
        let sets = harmonize(&views)?.into_iter().zip(paths.iter().map(|p| tag_of(p))).collect();
        (sets, "captures")
    };
    let report = differentiability_study(&datasets, config.seed)?;

    let pooled = FeatureMatrix::stack(&datasets.iter().map(|(f, _)| f).collect::<Vec<_>>())?;
    let k_max = config.feasibility.k_max.unwrap_or(10).min(pooled.len());
    let dir = fresh(run.join(if by_class { "feasibility-by-class" } else { "feasibility" }))?;
    report.write_json(&dir.join("report.json"))?;
    if k_max >= 3 {
        let curve = inertia_curve(&pooled, k_max, config.seed)?;
        let k = elbow_select(&pooled, k_max, config.seed)?;
        write_json(&dir.join("elbow.json"), &json!({ "k_max": k_max, "elbow_k": k, "inertia_curve": curve }))?;
    }
    if pooled.dim() >= 3 {
        let tags: Vec<String> = report.row_tags.iter().map(|&t| datasets[t].1.clone()).collect();
        write_projection_csv(&dir.join("projection.csv"), &project_3d(&pooled)?, &tags, &report.assignments)?;
    }
    Ok(json!({
        "run_dir": run,
        "out": dir,
        "mode": kind,
        "silhouette": report.silhouette,
        "tag_silhouette": report.tag_silhouette,
        "purity": report.purity,
    }))
}
