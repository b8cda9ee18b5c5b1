//! Training runs on disk: manifest, per-epoch metrics CSV, checkpoints.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::config_file::RunConfig;
use crate::data::{load_cifar100, stratified_subset, ChannelStats, CifarFiles, Dataset};
use crate::error::{Error, Result};
use crate::model::{count_params, Model, ModelConfig};
use crate::train::{evaluate_top1, train_epoch, AdamWState, EpochMetrics, TrainConfig};

pub const METRICS_HEADER: &str = "epoch,train_loss,lr,val_top1,seconds";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Snapshot of everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub version: String,
    pub started_at: String,
    pub metrics_path: PathBuf,
    pub normalization: ChannelStats,
    pub precision: String,
    pub threads: usize,
    pub data_dir: PathBuf,
    pub subset: Option<usize>,
    pub train_samples: usize,
    pub val_samples: usize,
    pub param_count: u64,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("cannot serialise manifest: {e}")))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(format!("bad manifest: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub val_top1: f64,
    pub seconds: f64,
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:.3}",
            self.epoch, self.train_loss, self.lr, self.val_top1, self.seconds
        )
    }

    fn parse(line: &str, line_no: usize) -> Result<Self> {
        let bad = || Error::format(format!("metrics line {line_no}: cannot parse `{line}`"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad());
        }
        let f = |i: usize| fields[i].trim().parse::<f64>().map_err(|_| bad());
        Ok(MetricsRow {
            epoch: fields[0].trim().parse().map_err(|_| bad())?,
            train_loss: f(1)?,
            lr: f(2)?,
            val_top1: f(3)?,
            seconds: f(4)?,
        })
    }
}

/// Append-only metrics file with a fixed header.
#[derive(Debug)]
pub struct MetricsLog {
    path: PathBuf,
}

impl MetricsLog {
    /// Creates the file with its header, truncating any previous content.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut f = File::create(&path)?;
        writeln!(f, "{METRICS_HEADER}")?;
        Ok(MetricsLog { path })
    }

    pub fn append(&self, row: &MetricsRow) -> Result<()> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", row.to_csv())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::format(format!(
                "metrics file must start with `{METRICS_HEADER}`"
            )))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| MetricsRow::parse(&l?, i + 2))
        .collect()
}

/// Inputs to [`train_run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: RunConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides `config.train.seed`.
    pub seed: Option<u64>,
    /// Overrides `config.train.epochs`.
    pub epochs: Option<usize>,
    /// Train on a class-stratified subset of this many samples.
    pub subset: Option<usize>,
    /// Evaluate on at most this many held-out samples (stratified); all when `None`.
    pub val_subset: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub epochs: Vec<(EpochMetrics, f64)>,
    pub best_val_top1: f64,
}

/// Loads both splits, normalises them with statistics of the full training
/// split, and applies the requested subsets and upscaling.
pub fn load_splits(
    data_dir: &Path,
    image_size: usize,
    subset: Option<usize>,
    val_subset: Option<usize>,
    seed: u64,
) -> Result<(Dataset, Dataset, ChannelStats)> {
    let files = CifarFiles::locate(data_dir)?;
    let train_records = load_cifar100(&files.train)?;
    let test_records = load_cifar100(&files.test)?;
    if train_records.is_empty() || test_records.is_empty() {
        return Err(Error::format("CIFAR-100 split files contain no records"));
    }
    let stats = ChannelStats::from_records(&train_records);
    let pick = |ds: Dataset, k: Option<usize>, salt: u64| match k {
        Some(k) => {
            let idx = stratified_subset(ds.labels(), ds.num_classes(), k, seed ^ salt);
            ds.subset(&idx)
        }
        None => ds,
    };
    let train = pick(Dataset::from_records(&train_records, &stats), subset, 0);
    let val = pick(
        Dataset::from_records(&test_records, &stats),
        val_subset,
        0x0076_616c,
    );
    Ok((
        train.resize_nearest(image_size),
        val.resize_nearest(image_size),
        stats,
    ))
}

/// Runs a full training job, writing the manifest before the first step,
/// one metrics row per epoch, and `last`/`best` checkpoints.
pub fn train_run(
    opts: &RunOptions,
    mut on_epoch: impl FnMut(&EpochMetrics, f64),
) -> Result<RunSummary> {
    let mut cfg = opts.config.clone();
    if let Some(seed) = opts.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = opts.epochs {
        cfg.train.epochs = epochs;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    let seed = cfg.train.seed;
    let (train, val, stats) = load_splits(
        &opts.data_dir,
        cfg.model.image_size,
        opts.subset,
        opts.val_subset,
        seed,
    )?;
    if cfg.model.channels_in != crate::data::CHANNELS {
        return Err(Error::validation(format!(
            "CIFAR-100 images have 3 channels, config asks for {}",
            cfg.model.channels_in
        )));
    }
    if cfg.model.num_classes != train.num_classes() {
        return Err(Error::validation(format!(
            "CIFAR-100 has {} classes, config asks for {}",
            train.num_classes(),
            cfg.model.num_classes
        )));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let metrics_path = opts.out_dir.join(METRICS_FILE);
    let manifest = RunManifest {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: chrono::Utc::now().to_rfc3339(),
        metrics_path: metrics_path.clone(),
        normalization: stats,
        precision: "f32".into(),
        threads: 1,
        data_dir: opts.data_dir.clone(),
        subset: opts.subset,
        train_samples: train.len(),
        val_samples: val.len(),
        param_count: count_params(&cfg.model),
    };
    manifest.write(opts.out_dir.join(MANIFEST_FILE))?;
    let log = MetricsLog::create(&metrics_path)?;

    let mut model = Model::<f32>::init(&cfg.model, seed)?;
    let mut state = AdamWState::new(&model);
    let mut best = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        let metrics = train_epoch(&mut model, &train, &mut state, &cfg.train, epoch)?;
        let val_top1 = evaluate_top1(&model, &val, cfg.train.batch_size)?;
        log.append(&MetricsRow {
            epoch: epoch + 1,
            train_loss: metrics.mean_loss,
            lr: metrics.lr,
            val_top1,
            seconds: metrics.seconds,
        })?;
        save_checkpoint(&model, Some(&state), opts.out_dir.join(LAST_CHECKPOINT))?;
        if val_top1 > best {
            best = val_top1;
            save_checkpoint(&model, Some(&state), opts.out_dir.join(BEST_CHECKPOINT))?;
        }
        on_epoch(&metrics, val_top1);
        history.push((metrics, val_top1));
    }
    Ok(RunSummary {
        manifest,
        epochs: history,
        best_val_top1: best,
    })
}
