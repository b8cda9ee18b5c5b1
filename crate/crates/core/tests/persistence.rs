use std::fs;

use mcmlp_core::checkpoint::{checksum, decode, encode, FORMAT_VERSION, MAGIC};
use mcmlp_core::data::{
    load_cifar100, parse_cifar100, synthetic_records, write_cifar100, ChannelStats, Dataset,
    RECORD_BYTES,
};
use mcmlp_core::run::{
    read_metrics, train_run, RunManifest, RunOptions, BEST_CHECKPOINT, LAST_CHECKPOINT,
    MANIFEST_FILE, METRICS_FILE, METRICS_HEADER,
};
use mcmlp_core::train::{train_epoch, AdamWState};
use mcmlp_core::{
    count_params, load_checkpoint, save_checkpoint, Error, Model, ModelConfig, RunConfig,
    TrainConfig,
};

fn tiny() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 2,
        dim: 8,
        depth: 1,
        expansion: 2,
        num_classes: 10,
        ..ModelConfig::default()
    }
}

fn bits(model: &Model<f32>) -> Vec<Vec<u32>> {
    model
        .params()
        .iter()
        .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn reseal(body: &mut Vec<u8>) {
    let n = body.len() - 8;
    body.truncate(n);
    let sum = checksum(body);
    body.extend_from_slice(&sum.to_le_bytes());
}

/// Walks the documented layout and counts stored parameter scalars.
fn stored_scalars(bytes: &[u8]) -> u64 {
    let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap()) as usize;
    let u64_at = |p: usize| u64::from_le_bytes(bytes[p..p + 8].try_into().unwrap()) as usize;
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32_at(4), FORMAT_VERSION as usize);
    let mut pos = 12 + u32_at(8);
    let tensors = u32_at(pos);
    pos += 4;
    let mut total = 0u64;
    for _ in 0..tensors {
        pos += 4 + u32_at(pos);
        let ndim = u32_at(pos);
        pos += 4;
        let numel: usize = (0..ndim).map(|i| u64_at(pos + 8 * i)).product();
        pos += 8 * ndim + 4 * numel;
        total += numel as u64;
    }
    total
}

#[test]
fn round_trip_is_bit_exact_after_training() {
    let cfg = tiny();
    let records = synthetic_records(20, 10, 1);
    let data = Dataset::from_records(&records, &ChannelStats::from_records(&records))
        .resize_nearest(cfg.image_size);
    let mut data_labels = data.labels().to_vec();
    data_labels.iter_mut().for_each(|l| *l %= 10);
    let data = Dataset::from_parts(
        (0..data.len())
            .flat_map(|i| data.image(i).to_vec())
            .collect(),
        data_labels,
        cfg.image_size,
        10,
    )
    .unwrap();
    let train = TrainConfig {
        epochs: 2,
        warmup_epochs: 0,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let mut model = Model::<f32>::init(&cfg, 4).unwrap();
    let mut state = AdamWState::new(&model);
    train_epoch(&mut model, &data, &mut state, &train, 0).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&model, Some(&state), &path).unwrap();
    let (mut loaded, loaded_state) = load_checkpoint(&path).unwrap();
    let mut loaded_state = loaded_state.unwrap();
    assert_eq!(bits(&loaded), bits(&model));
    assert_eq!(loaded_state, state);
    assert_eq!(loaded.config(), model.config());

    // Resuming from the checkpoint continues the same trajectory.
    train_epoch(&mut model, &data, &mut state, &train, 1).unwrap();
    train_epoch(&mut loaded, &data, &mut loaded_state, &train, 1).unwrap();
    assert_eq!(bits(&loaded), bits(&model));

    save_checkpoint(&model, None, &path).unwrap();
    let (again, none) = load_checkpoint(&path).unwrap();
    assert!(none.is_none());
    assert_eq!(bits(&again), bits(&model));
}

#[test]
fn stored_scalars_equal_parameter_count() {
    for cfg in [tiny(), ModelConfig::toy()] {
        let model = Model::<f32>::init(&cfg, 0).unwrap();
        let bytes = encode(&model, None).unwrap();
        assert_eq!(stored_scalars(&bytes), count_params(&cfg));
        let with_state = encode(&model, Some(&AdamWState::new(&model))).unwrap();
        assert_eq!(
            with_state.len() - bytes.len(),
            8 + 2 * 4 * count_params(&cfg) as usize
        );
    }
}

#[test]
fn flipped_payload_byte_fails_checksum() {
    let model = Model::<f32>::init(&tiny(), 0).unwrap();
    let bytes = encode(&model, None).unwrap();
    for pos in [12, bytes.len() / 2, bytes.len() - 9] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(
            matches!(decode(&bad), Err(Error::Checksum { .. })),
            "byte {pos}"
        );
    }
    let mut bad_sum = bytes.clone();
    let last = bad_sum.len() - 1;
    bad_sum[last] ^= 1;
    assert!(matches!(decode(&bad_sum), Err(Error::Checksum { .. })));
}

#[test]
fn version_magic_and_shape_errors_are_distinct() {
    let model = Model::<f32>::init(&tiny(), 0).unwrap();
    let bytes = encode(&model, None).unwrap();

    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    reseal(&mut future);
    match decode(&future) {
        Err(Error::Version { found, expected }) => {
            assert_eq!((found, expected), (FORMAT_VERSION + 1, FORMAT_VERSION))
        }
        other => panic!("expected version error, got {:?}", other.map(|_| ())),
    }

    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    assert!(matches!(decode(&wrong_magic), Err(Error::Format(_))));

    // Same-length edit of the embedded config: the head no longer fits.
    let at = bytes
        .windows(16)
        .position(|w| w == b"\"num_classes\":10")
        .unwrap();
    let mut reshaped = bytes.clone();
    reshaped[at..at + 16].copy_from_slice(b"\"num_classes\":12");
    reseal(&mut reshaped);
    match decode(&reshaped) {
        Err(Error::CheckpointShape {
            name,
            found,
            expected,
        }) => {
            assert_eq!(name, "head.weight");
            assert_eq!(found, vec![8, 10]);
            assert_eq!(expected, vec![8, 12]);
        }
        other => panic!("expected shape error, got {:?}", other.map(|_| ())),
    }

    let mut short = bytes[..bytes.len() / 2].to_vec();
    short.extend_from_slice(&[0; 8]);
    reseal(&mut short);
    assert!(matches!(decode(&short), Err(Error::Format(_))));
}

#[test]
fn loader_counts_records_and_rejects_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.bin");
    let records = synthetic_records(100, 5, 2);
    write_cifar100(&records, &path).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 307_400);
    let back = load_cifar100(&path).unwrap();
    assert_eq!(back.len(), 100);
    assert!(back.iter().zip(&records).all(|(a, b)| a == b));

    let bytes = fs::read(&path).unwrap();
    match parse_cifar100(&bytes[..bytes.len() - 1]) {
        Err(Error::Format(msg)) => {
            assert!(msg.contains("307399") && msg.contains("307400"), "{msg}")
        }
        other => panic!("expected format error, got {:?}", other.map(|r| r.len())),
    }

    let mut bad_label = bytes.clone();
    bad_label[7 * RECORD_BYTES + 1] = 100;
    match parse_cifar100(&bad_label) {
        Err(Error::Format(msg)) => assert!(msg.contains("record 7"), "{msg}"),
        other => panic!("expected format error, got {:?}", other.map(|r| r.len())),
    }
}

fn write_split(dir: &std::path::Path, train: usize, test: usize) {
    write_cifar100(&synthetic_records(train, 20, 11), dir.join("train.bin")).unwrap();
    write_cifar100(&synthetic_records(test, 20, 12), dir.join("test.bin")).unwrap();
}

fn run_options(data: &std::path::Path, out: &std::path::Path) -> RunOptions {
    let mut config = RunConfig::toy();
    config.model = ModelConfig {
        image_size: 8,
        patch_size: 2,
        dim: 8,
        depth: 1,
        expansion: 2,
        ..ModelConfig::default()
    };
    config.train.epochs = 3;
    config.train.warmup_epochs = 1;
    config.train.batch_size = 50;
    RunOptions {
        config,
        data_dir: data.to_path_buf(),
        out_dir: out.to_path_buf(),
        seed: Some(5),
        epochs: None,
        subset: Some(150),
        val_subset: Some(100),
    }
}

#[test]
fn training_run_writes_manifest_metrics_and_checkpoints() {
    let data = tempfile::tempdir().unwrap();
    write_split(data.path(), 300, 200);
    let out = tempfile::tempdir().unwrap();
    let opts = run_options(data.path(), out.path());
    let mut seen = 0;
    let summary = train_run(&opts, |_, _| seen += 1).unwrap();
    assert_eq!(seen, 3);

    let manifest = RunManifest::read(out.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest, summary.manifest);
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.train.seed, 5);
    assert_eq!(manifest.train_samples, 150);
    assert_eq!(manifest.val_samples, 100);
    assert_eq!(manifest.param_count, count_params(&opts.config.model));
    assert_eq!(manifest.metrics_path, out.path().join(METRICS_FILE));

    let text = fs::read_to_string(out.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    let rows = read_metrics(out.path().join(METRICS_FILE)).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
    for (row, (m, val)) in rows.iter().zip(&summary.epochs) {
        assert_eq!(row.train_loss, m.mean_loss);
        assert_eq!(row.lr, m.lr);
        assert_eq!(row.val_top1, *val);
    }

    let (last, state) = load_checkpoint(out.path().join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(state.unwrap().t, 9);
    assert_eq!(last.config(), &opts.config.model);
    let (_, best_state) = load_checkpoint(out.path().join(BEST_CHECKPOINT)).unwrap();
    let best_epoch = rows
        .iter()
        .fold((0, f64::NEG_INFINITY), |acc, r| {
            if r.val_top1 > acc.1 {
                (r.epoch, r.val_top1)
            } else {
                acc
            }
        })
        .0;
    assert_eq!(best_state.unwrap().t, 3 * best_epoch as u64);
}

#[test]
fn rerun_truncates_metrics_and_reproduces_rows() {
    let data = tempfile::tempdir().unwrap();
    write_split(data.path(), 200, 100);
    let out = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        epochs: Some(2),
        subset: None,
        val_subset: None,
        ..run_options(data.path(), out.path())
    };
    train_run(&opts, |_, _| {}).unwrap();
    let first = read_metrics(out.path().join(METRICS_FILE)).unwrap();
    train_run(&opts, |_, _| {}).unwrap();
    let second = read_metrics(out.path().join(METRICS_FILE)).unwrap();
    assert_eq!(first.len(), 2);
    assert_eq!(second.len(), 2);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(
            (a.epoch, a.train_loss, a.lr, a.val_top1),
            (b.epoch, b.train_loss, b.lr, b.val_top1)
        );
    }
}

#[test]
fn run_rejects_mismatched_class_count() {
    let data = tempfile::tempdir().unwrap();
    write_split(data.path(), 100, 100);
    let out = tempfile::tempdir().unwrap();
    let mut opts = run_options(data.path(), out.path());
    opts.config.model.num_classes = 10;
    assert!(matches!(
        train_run(&opts, |_, _| {}),
        Err(Error::Validation(_))
    ));
    assert!(!out.path().join(MANIFEST_FILE).exists());
}

#[test]
fn config_file_errors_name_the_line() {
    let err = RunConfig::parse("dim = 64\ndepht = 2\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2") && err.contains("depht"), "{err}");
    let err = RunConfig::parse("dim = 64\ndim = 32\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("duplicate"), "{err}");
    let err = RunConfig::parse("dim = sixty-four\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 1"), "{err}");
    assert!(matches!(
        RunConfig::parse("dim = 48\n"),
        Err(Error::Validation(_))
    ));

    let cfg =
        RunConfig::parse("# comment only\nbase_lr = 0.02  # peak\nmixer_order = dct, hadamard\n")
            .unwrap();
    assert_eq!(cfg.train.base_lr, 0.02);
    assert!((cfg.train.min_lr - 2e-4).abs() < 1e-15);
    assert_eq!(cfg.model.mixer_order[0], mcmlp_core::TransformKind::Dct);
}
