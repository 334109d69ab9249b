//! The pipeline behind each subcommand: generate, train, eval, calibrate,
//! ablate-es, plot, sweep. All file names under the run directory are fixed
//! so a rerun with the same config and seed reproduces every output
//! byte-for-byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use entropic_ood_core::calibration::{calibrate_temperature, CalibrationResult};
use entropic_ood_core::checkpoint::{
    load_checkpoint, save_checkpoint, to_json_17, Checkpoint, ModelCheckpoint,
};
use entropic_ood_core::data::{
    gen_blobs, gen_ood_ring, gen_ood_uniform_box, load_csv, split, write_csv, LabeledDataset,
};
use entropic_ood_core::eval::{evaluate, EvalReport};
use entropic_ood_core::heads::{LossConfig, LossKind};
use entropic_ood_core::matrix::Matrix;
use entropic_ood_core::model::Model;
use entropic_ood_core::report::{report_to_csv, report_to_text};
use entropic_ood_core::scores::ScoreKind;
use entropic_ood_core::seeding::derive_seed;
use entropic_ood_core::train::{mean_normalized_entropy, train, TrainOptions, TrainOutcome};

use crate::config::{DatasetConfig, ExperimentConfig, SyntheticConfig};
use crate::plot;
use crate::CliError;

/// Canonical file layout of a run directory.
pub struct RunPaths {
    pub root: PathBuf,
    pub data_dir: PathBuf,
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub report_csv: PathBuf,
    pub report_txt: PathBuf,
    pub calibration: PathBuf,
    pub ablation_csv: PathBuf,
    pub ablation_txt: PathBuf,
    pub plots_dir: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        RunPaths {
            data_dir: root.join("data"),
            config: root.join("config.json"),
            checkpoint: root.join("checkpoint.json"),
            train_log: root.join("train_log.csv"),
            report_csv: root.join("report.csv"),
            report_txt: root.join("report.txt"),
            calibration: root.join("calibration.json"),
            ablation_csv: root.join("ablation.csv"),
            ablation_txt: root.join("ablation.txt"),
            plots_dir: root.join("plots"),
            root,
        }
    }

    fn dataset_file(&self, name: &str) -> PathBuf {
        self.data_dir.join(format!("{name}.csv"))
    }

    fn ood_file(&self, name: &str) -> PathBuf {
        self.data_dir.join(format!("ood_{name}.csv"))
    }
}

fn write_config_copy(config: &ExperimentConfig, paths: &RunPaths) -> Result<(), CliError> {
    std::fs::create_dir_all(&paths.root)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", paths.root.display())))?;
    std::fs::write(&paths.config, config.to_json())
        .map_err(|e| CliError::data(format!("cannot write config copy: {e}")))?;
    Ok(())
}

/// Names of the OOD sets a synthetic config generates, in report order.
pub fn synthetic_ood_names(s: &SyntheticConfig) -> Vec<String> {
    let mut names = Vec::new();
    if s.ood_ring.is_some() {
        names.push("ring".to_string());
    }
    if s.ood_box.is_some() {
        names.push("box".to_string());
    }
    if s.ood_id_control.is_some() {
        names.push("id_control".to_string());
    }
    names
}

/// Generates the dataset files for a synthetic config: `data/train.csv`,
/// `data/val.csv`, `data/test.csv` and one `data/ood_<name>.csv` per
/// configured OOD set.
pub fn cmd_generate(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let paths = RunPaths::new(out);
    write_config_copy(config, &paths)?;
    std::fs::create_dir_all(&paths.data_dir)
        .map_err(|e| CliError::data(format!("cannot create data dir: {e}")))?;

    let s = match &config.dataset {
        DatasetConfig::Synthetic(s) => s,
        DatasetConfig::Files(_) => {
            return Err(CliError::config(
                "generate requires a synthetic dataset config",
            ))
        }
    };

    let seed = config.seed;
    let blobs = gen_blobs(
        s.classes,
        s.per_class,
        s.dim,
        s.spread,
        derive_seed(seed, 0x20),
    )?;
    let (train_set, val_set, test_set) = split(
        &blobs,
        (s.split[0], s.split[1], s.split[2]),
        derive_seed(seed, 0x21),
    )?;

    let mut written = Vec::new();
    for (name, part) in [
        ("train", &train_set),
        ("val", &val_set),
        ("test", &test_set),
    ] {
        let path = paths.dataset_file(name);
        write_csv(&path, part)?;
        written.push(path);
    }
    if let Some(ring) = &s.ood_ring {
        let ds = gen_ood_ring(ring.count, s.dim, ring.radius, derive_seed(seed, 0x22))?;
        let path = paths.ood_file("ring");
        write_csv(&path, &ds)?;
        written.push(path);
    }
    if let Some(bx) = &s.ood_box {
        let ds = gen_ood_uniform_box(bx.count, s.dim, bx.half_width, derive_seed(seed, 0x23))?;
        let path = paths.ood_file("box");
        write_csv(&path, &ds)?;
        written.push(path);
    }
    if let Some(count) = s.ood_id_control {
        // same distribution as the blobs, fresh stream: detection against it
        // should hover at chance
        let per_class = count.div_ceil(s.classes);
        let control = gen_blobs(
            s.classes,
            per_class,
            s.dim,
            s.spread,
            derive_seed(seed, 0x24),
        )?;
        let rows: Vec<usize> = (0..count.min(control.len())).collect();
        let ds = LabeledDataset::unlabeled(control.features.select_rows(&rows));
        let path = paths.ood_file("id_control");
        write_csv(&path, &ds)?;
        written.push(path);
    }
    Ok(written)
}

struct LoadedData {
    train: LabeledDataset,
    val: LabeledDataset,
    test: LabeledDataset,
    ood: Vec<(String, Matrix)>,
    classes: usize,
}

fn apply_grid(
    dataset: LabeledDataset,
    grid: Option<[usize; 3]>,
) -> Result<LabeledDataset, CliError> {
    match grid {
        Some([h, w, c]) => Ok(dataset.with_grid_shape(h, w, c)?),
        None => Ok(dataset),
    }
}

fn load_data(config: &ExperimentConfig, paths: &RunPaths) -> Result<LoadedData, CliError> {
    let (train_path, val_path, test_path, ood_paths, grid) = match &config.dataset {
        DatasetConfig::Synthetic(s) => {
            let ood: BTreeMap<String, PathBuf> = synthetic_ood_names(s)
                .into_iter()
                .map(|n| {
                    let p = paths.ood_file(&n);
                    (n, p)
                })
                .collect();
            (
                paths.dataset_file("train"),
                paths.dataset_file("val"),
                paths.dataset_file("test"),
                ood,
                s.grid_shape,
            )
        }
        DatasetConfig::Files(f) => (
            f.train.clone(),
            f.val.clone(),
            f.test.clone(),
            f.ood.clone(),
            f.grid_shape,
        ),
    };

    let missing = |p: &Path| CliError::data(format!("missing data file {}", p.display()));
    for p in [&train_path, &val_path, &test_path] {
        if !p.exists() {
            return Err(missing(p));
        }
    }
    let train = apply_grid(load_csv(&train_path)?, grid)?;
    let val = apply_grid(load_csv(&val_path)?, grid)?;
    let test = apply_grid(load_csv(&test_path)?, grid)?;
    let mut ood = Vec::new();
    for (name, path) in ood_paths {
        if !path.exists() {
            return Err(missing(&path));
        }
        ood.push((name, load_csv(&path)?.features));
    }

    let classes = train
        .num_classes()
        .ok_or_else(|| CliError::data("training set must be labeled"))?;
    Ok(LoadedData {
        train,
        val,
        test,
        ood,
        classes,
    })
}

fn train_one(
    config: &ExperimentConfig,
    data: &LoadedData,
    loss: LossConfig,
    name: &str,
) -> Result<TrainOutcome, CliError> {
    let spec = config.encoder.to_spec(data.train.dim());
    let opts = TrainOptions {
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        optimizer: config.optimizer.to_config(),
        seed: derive_seed(config.seed, fnv1a(name)),
    };
    Ok(train(spec, data.classes, loss, &data.train, &opts)?)
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Trains the configured head plus (when different) a softmax baseline with
/// the same recipe, then writes `checkpoint.json` and `train_log.csv`.
pub fn cmd_train(config: &ExperimentConfig, out: &Path) -> Result<Checkpoint, CliError> {
    let paths = RunPaths::new(out);
    write_config_copy(config, &paths)?;
    let data = load_data(config, &paths)?;

    let primary_loss = config.loss.to_config();
    let mut jobs = vec![(primary_loss.kind.name().to_string(), primary_loss)];
    if primary_loss.kind != LossKind::Softmax {
        jobs.push(("softmax".to_string(), LossConfig::new(LossKind::Softmax)));
    }

    let mut log_csv = String::from("head,epoch,mean_loss,train_accuracy,mean_normalized_entropy\n");
    let mut models = Vec::new();
    for (name, loss) in jobs {
        let outcome = train_one(config, &data, loss, &name)?;
        for entry in &outcome.logs {
            log_csv.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                name,
                entry.epoch,
                entry.mean_loss,
                entry.train_accuracy,
                entry.mean_normalized_entropy
            ));
        }
        eprintln!(
            "trained {name}: final accuracy {:.4}, mean normalized entropy {:.4}, floor hits {}",
            outcome.logs.last().map_or(0.0, |l| l.train_accuracy),
            outcome
                .logs
                .last()
                .map_or(0.0, |l| l.mean_normalized_entropy),
            outcome.diagnostics.floor_hits
        );
        models.push(ModelCheckpoint {
            name,
            spec: outcome.model.encoder.clone(),
            classes: outcome.model.classes,
            params: outcome.model.params.clone(),
            optimizer_state: outcome.optimizer,
            epoch: config.train.epochs,
            loss_config: outcome.model.loss,
            calibration: None,
        });
    }

    let checkpoint = Checkpoint {
        models,
        val_features: Some(data.val.features.clone()),
        val_labels: data.val.labels.clone(),
    };
    save_checkpoint(&paths.checkpoint, &checkpoint)?;
    std::fs::write(&paths.train_log, log_csv)
        .map_err(|e| CliError::data(format!("cannot write train log: {e}")))?;
    Ok(checkpoint)
}

/// Evaluates every model in the checkpoint on the ID test set against each
/// OOD set, writing `report.csv` and `report.txt`.
pub fn cmd_eval(config: &ExperimentConfig, out: &Path) -> Result<EvalReport, CliError> {
    let paths = RunPaths::new(out);
    let data = load_data(config, &paths)?;
    let checkpoint = load_checkpoint(&paths.checkpoint)
        .map_err(|e| CliError::data(format!("cannot load checkpoint: {e}")))?;

    if data.test.len() < 20 {
        eprintln!(
            "warning: only {} ID test rows; TNR@TPR95 is heavily quantized below 20",
            data.test.len()
        );
    }

    let models: Vec<(String, Model)> = checkpoint
        .models
        .iter()
        .map(|m| (m.name.clone(), m.to_model()))
        .collect();
    let model_refs: Vec<(String, &Model)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let report = evaluate(
        &model_refs,
        &data.test,
        &data.ood,
        &config.eval.scores,
        config.eval.ece_bins,
    )?;

    std::fs::write(&paths.report_csv, report_to_csv(&report))
        .map_err(|e| CliError::data(format!("cannot write report.csv: {e}")))?;
    std::fs::write(&paths.report_txt, report_to_text(&report))
        .map_err(|e| CliError::data(format!("cannot write report.txt: {e}")))?;
    Ok(report)
}

/// Calibrates the temperature of every model on the recorded validation
/// split, updates the checkpoint in place and writes `calibration.json`.
pub fn cmd_calibrate(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<(String, CalibrationResult)>, CliError> {
    let paths = RunPaths::new(out);
    let mut checkpoint = load_checkpoint(&paths.checkpoint)
        .map_err(|e| CliError::data(format!("cannot load checkpoint: {e}")))?;
    let val = checkpoint
        .val_dataset()
        .ok_or_else(|| CliError::config("checkpoint has no recorded validation split"))?;
    let labels = val.labels.as_ref().expect("val_dataset always labeled");

    let mut results = Vec::new();
    for model_ckpt in &mut checkpoint.models {
        let model = model_ckpt.to_model();
        let logits = model.inference_logits(&val.features)?;
        let result = calibrate_temperature(&logits, labels, config.eval.ece_bins)?;
        model_ckpt.loss_config.temperature = result.temperature;
        model_ckpt.calibration = Some(result);
        results.push((model_ckpt.name.clone(), result));
    }

    save_checkpoint(&paths.checkpoint, &checkpoint)?;
    let json = to_json_17(
        &results
            .iter()
            .map(|(n, r)| (n.clone(), *r))
            .collect::<BTreeMap<_, _>>(),
    )?;
    std::fs::write(&paths.calibration, json)
        .map_err(|e| CliError::data(format!("cannot write calibration.json: {e}")))?;
    Ok(results)
}

/// One row of the entropic-scale ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub entropic_scale: f64,
    pub mean_inference_entropy: f64,
    pub test_accuracy: f64,
    pub auroc_first_ood: f64,
}

/// Trains one model per entropic scale and reports mean inference entropy,
/// test accuracy and AUROC against the first configured OOD set.
pub fn cmd_ablate_es(
    config: &ExperimentConfig,
    out: &Path,
    es_values: &[f64],
) -> Result<Vec<AblationRow>, CliError> {
    if es_values.is_empty() || es_values.iter().any(|&v| v <= 0.0) {
        return Err(CliError::config("es values must be positive"));
    }
    let paths = RunPaths::new(out);
    write_config_copy(config, &paths)?;
    let data = load_data(config, &paths)?;
    let (first_ood_name, first_ood) = data
        .ood
        .first()
        .ok_or_else(|| CliError::config("ablate-es needs at least one OOD set"))?;

    let default_score = ScoreKind::default_for(config.loss.kind);
    let mut rows = Vec::new();
    for &es in es_values {
        let mut loss = config.loss.to_config();
        loss.entropic_scale = es;
        let outcome = train_one(config, &data, loss, config.loss.kind.name())?;
        let model = &outcome.model;

        let entropy = mean_normalized_entropy(model, &data.test)? * (model.classes as f64).ln();
        let probs = model.inference_probabilities(&data.test.features)?;
        let labels = data.test.labels.as_ref().unwrap();
        let accuracy = entropic_ood_core::metrics::accuracy(&probs, labels);

        let id_scores =
            entropic_ood_core::eval::score_dataset(model, default_score, &data.test.features)?;
        let ood_scores = entropic_ood_core::eval::score_dataset(model, default_score, first_ood)?;
        let auroc = entropic_ood_core::metrics::auroc(&id_scores, &ood_scores)?;

        rows.push(AblationRow {
            entropic_scale: es,
            mean_inference_entropy: entropy,
            test_accuracy: accuracy,
            auroc_first_ood: auroc,
        });
    }

    let mut csv =
        format!("entropic_scale,mean_inference_entropy,test_accuracy,auroc_{first_ood_name}\n");
    let mut txt = format!(
        "{:>14}  {:>22}  {:>13}  {:>12}\n",
        "entropic_scale", "mean_inference_entropy", "test_accuracy", "auroc"
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.entropic_scale, row.mean_inference_entropy, row.test_accuracy, row.auroc_first_ood
        ));
        txt.push_str(&format!(
            "{:>14}  {:>22.4}  {:>13.4}  {:>12.4}\n",
            row.entropic_scale, row.mean_inference_entropy, row.test_accuracy, row.auroc_first_ood
        ));
    }
    std::fs::write(&paths.ablation_csv, csv)
        .map_err(|e| CliError::data(format!("cannot write ablation.csv: {e}")))?;
    std::fs::write(&paths.ablation_txt, txt)
        .map_err(|e| CliError::data(format!("cannot write ablation.txt: {e}")))?;
    Ok(rows)
}

/// Emits score histograms (ID test vs each OOD set, per supported score) and
/// one reliability diagram per model under `plots/`.
pub fn cmd_plot(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let paths = RunPaths::new(out);
    let data = load_data(config, &paths)?;
    let checkpoint = load_checkpoint(&paths.checkpoint)
        .map_err(|e| CliError::data(format!("cannot load checkpoint: {e}")))?;
    std::fs::create_dir_all(&paths.plots_dir)
        .map_err(|e| CliError::data(format!("cannot create plots dir: {e}")))?;

    if data.test.is_empty() {
        return Err(CliError::data("cannot plot: empty ID test set"));
    }

    let labels = data
        .test
        .labels
        .as_ref()
        .ok_or_else(|| CliError::data("cannot plot: unlabeled ID test set"))?;

    let mut written = Vec::new();
    for model_ckpt in &checkpoint.models {
        let model = model_ckpt.to_model();
        let name = &model_ckpt.name;

        for &score in &config.eval.scores {
            if !score.supports(model.loss.kind) {
                continue;
            }
            let id_scores =
                entropic_ood_core::eval::score_dataset(&model, score, &data.test.features)?;
            for (ood_name, ood_features) in &data.ood {
                if ood_features.rows() == 0 {
                    return Err(CliError::data(format!("OOD set {ood_name} is empty")));
                }
                let ood_scores =
                    entropic_ood_core::eval::score_dataset(&model, score, ood_features)?;
                let svg = plot::score_histogram_svg(
                    &format!("{name} / {score} / {ood_name}"),
                    &id_scores,
                    &ood_scores,
                    30,
                );
                let path = paths
                    .plots_dir
                    .join(format!("scores_{name}_{score}_{ood_name}.svg"));
                std::fs::write(&path, svg)
                    .map_err(|e| CliError::data(format!("cannot write plot: {e}")))?;
                written.push(path);
            }
        }

        let probs = model.inference_probabilities(&data.test.features)?;
        let bins =
            entropic_ood_core::metrics::reliability_bins(&probs, labels, config.eval.ece_bins);
        let ece = entropic_ood_core::metrics::ece(&probs, labels, config.eval.ece_bins);
        let svg = plot::reliability_svg(&format!("{name} reliability"), &bins, ece);
        let path = paths.plots_dir.join(format!("reliability_{name}.svg"));
        std::fs::write(&path, svg)
            .map_err(|e| CliError::data(format!("cannot write plot: {e}")))?;
        written.push(path);
    }
    Ok(written)
}

/// Full pipeline in one call: generate, train, calibrate, eval, plot.
pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<EvalReport, CliError> {
    cmd_generate(config, out)?;
    cmd_train(config, out)?;
    cmd_calibrate(config, out)?;
    let report = cmd_eval(config, out)?;
    cmd_plot(config, out)?;
    Ok(report)
}

/// Per-seed pipeline runs in worker threads plus a mean/std summary.
/// `ENTROPIC_OOD_THREADS` caps the worker count. Each seed writes into
/// `seed_<n>/` under the output directory; outputs are independent of the
/// thread schedule.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    out: &Path,
    num_seeds: usize,
    with_plots: bool,
) -> Result<SweepSummary, CliError> {
    if num_seeds == 0 {
        return Err(CliError::config("sweep needs at least one seed"));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;

    let threads = std::env::var("ENTROPIC_OOD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(num_seeds);

    let jobs: Vec<(u64, PathBuf)> = (0..num_seeds)
        .map(|i| {
            let seed = config.seed + i as u64;
            (seed, out.join(format!("seed_{seed:04}")))
        })
        .collect();

    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<EvalReport, CliError>>>> = (0..jobs.len())
        .map(|_| std::sync::Mutex::new(None))
        .collect();

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (seed, dir) = &jobs[i];
                let mut seed_config = config.clone();
                seed_config.seed = *seed;
                let result = (|| {
                    cmd_generate(&seed_config, dir)?;
                    cmd_train(&seed_config, dir)?;
                    cmd_calibrate(&seed_config, dir)?;
                    let report = cmd_eval(&seed_config, dir)?;
                    if with_plots {
                        cmd_plot(&seed_config, dir)?;
                    }
                    Ok(report)
                })();
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut reports = Vec::with_capacity(jobs.len());
    for cell in results {
        match cell.into_inner().unwrap() {
            Some(Ok(report)) => reports.push(report),
            Some(Err(e)) => return Err(e),
            None => return Err(CliError::data("sweep worker dropped a job")),
        }
    }

    let summary = summarize(&reports);
    std::fs::write(out.join("sweep_summary.csv"), summary.to_csv())
        .map_err(|e| CliError::data(format!("cannot write sweep summary: {e}")))?;
    Ok(summary)
}

/// Mean and standard deviation of each metric across sweep seeds.
pub struct SweepSummary {
    pub seeds: usize,
    pub heads: Vec<HeadStats>,
    pub detection: Vec<DetectionStats>,
}

pub struct HeadStats {
    pub head: String,
    pub accuracy: (f64, f64),
    pub ece: (f64, f64),
}

pub struct DetectionStats {
    pub head: String,
    pub score: String,
    pub ood_set: String,
    pub auroc: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(reports: &[EvalReport]) -> SweepSummary {
    let first = &reports[0];
    let mut heads = Vec::new();
    let mut detection = Vec::new();
    for (hi, head) in first.heads.iter().enumerate() {
        let accs: Vec<f64> = reports.iter().map(|r| r.heads[hi].accuracy).collect();
        let eces: Vec<f64> = reports.iter().map(|r| r.heads[hi].ece).collect();
        heads.push(HeadStats {
            head: head.head.clone(),
            accuracy: mean_std(&accs),
            ece: mean_std(&eces),
        });
        for (ri, row) in head.rows.iter().enumerate() {
            if row.metrics.is_none() {
                continue;
            }
            let aurocs: Vec<f64> = reports
                .iter()
                .map(|r| r.heads[hi].rows[ri].metrics.as_ref().unwrap().auroc)
                .collect();
            detection.push(DetectionStats {
                head: head.head.clone(),
                score: row.score.to_string(),
                ood_set: row.ood_set.clone(),
                auroc: mean_std(&aurocs),
            });
        }
    }
    SweepSummary {
        seeds: reports.len(),
        heads,
        detection,
    }
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("head,score,ood_set,metric,mean,std\n");
        for h in &self.heads {
            out.push_str(&format!(
                "{},,,accuracy,{:.6},{:.6}\n",
                h.head, h.accuracy.0, h.accuracy.1
            ));
            out.push_str(&format!("{},,,ece,{:.6},{:.6}\n", h.head, h.ece.0, h.ece.1));
        }
        for d in &self.detection {
            out.push_str(&format!(
                "{},{},{},auroc,{:.6},{:.6}\n",
                d.head, d.score, d.ood_set, d.auroc.0, d.auroc.1
            ));
        }
        out
    }

    pub fn head_accuracy(&self, head: &str) -> Option<(f64, f64)> {
        self.heads
            .iter()
            .find(|h| h.head == head)
            .map(|h| h.accuracy)
    }

    pub fn detection_auroc(&self, head: &str, score: &str, ood: &str) -> Option<(f64, f64)> {
        self.detection
            .iter()
            .find(|d| d.head == head && d.score == score && d.ood_set == ood)
            .map(|d| d.auroc)
    }
}
