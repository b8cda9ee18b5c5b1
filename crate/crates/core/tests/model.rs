use mcmlp_core::model::{
    count_macs, count_params, mixer_forward, param_specs, MixerOptions, MixerParams, ParamRole,
    TransformSet,
};
use mcmlp_core::verify::random_tensor;
use mcmlp_core::{Error, Model, ModelConfig, Tape, Tensor, TransformKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 2,
        dim: 8,
        depth: 2,
        expansion: 2,
        num_classes: 10,
        ..ModelConfig::default()
    }
}

fn images(cfg: &ModelConfig, batch: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tensor(
        &mut rng,
        &[batch, cfg.channels_in, cfg.image_size, cfg.image_size],
        1.0,
    )
}

fn zero_mixers(model: &mut Model<f64>) {
    let cfg = model.config().clone();
    for block in &mut model.blocks {
        for m in block.iter_mut() {
            *m = MixerParams::zeroed(m.kind, cfg.dim, cfg.expansion);
        }
    }
}

#[test]
fn zero_mixers_reduce_to_embed_pool_head_bitwise() {
    let cfg = ModelConfig::toy();
    let mut model = Model::<f64>::init(&cfg, 11).unwrap();
    zero_mixers(&mut model);
    let x = images(&cfg, 3, 1);
    let full = model.logits(&x).unwrap();

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let xv = tape.constant(x);
    let tokens = model.patch_embed(&mut tape, &bound, xv).unwrap();
    let pooled = tape.mean_tokens(tokens).unwrap();
    let logits = tape.matmul(pooled, bound.head.0).unwrap();
    let logits = tape.add_bias(logits, bound.head.1).unwrap();
    let direct = tape.value(logits);
    let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&full), bits(direct));
}

#[test]
fn zero_mixer_passes_input_through() {
    let (n, c, f) = (16, 8, 3);
    let transforms = TransformSet::<f64>::new(n, c).unwrap();
    for kind in [TransformKind::Hadamard, TransformKind::Dct] {
        for output_activation in [true, false] {
            let mut tape = Tape::new();
            let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(4), &[2, n, c], 2.0);
            let xv = tape.constant(x.clone());
            let bound = MixerParams::<f64>::zeroed(kind, c, f).bind(&mut tape, false);
            let opts = MixerOptions {
                eps: 1e-6,
                output_activation,
            };
            let y = mixer_forward(&mut tape, xv, &bound, &transforms, opts).unwrap();
            assert_eq!(tape.value(y).data(), x.data());
        }
    }
}

#[test]
fn mixers_and_blocks_preserve_shape() {
    let cfg = small();
    let model = Model::<f64>::init(&cfg, 2).unwrap();
    let x = images(&cfg, 5, 2);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let xv = tape.constant(x);
    let tokens = model.patch_embed(&mut tape, &bound, xv).unwrap();
    assert_eq!(tape.value(tokens).shape(), &[5, cfg.tokens(), cfg.dim]);
    let opts = MixerOptions::from_config(&cfg);
    let mut h = tokens;
    for block in &bound.blocks {
        for m in block {
            h = mixer_forward(&mut tape, h, m, model.transforms(), opts).unwrap();
            assert_eq!(tape.value(h).shape(), &[5, cfg.tokens(), cfg.dim]);
        }
    }
    let logits = model.forward(&mut tape, &bound, xv).unwrap();
    assert_eq!(tape.value(logits).shape(), &[5, cfg.num_classes]);
}

#[test]
fn token_order_matters() {
    // Swapping two patches of the input changes the logits: the transforms mix
    // information across token positions.
    let cfg = small();
    let model = Model::<f64>::init(&cfg, 3).unwrap();
    let x = images(&cfg, 1, 3);
    let mut swapped = x.clone();
    let side = cfg.image_size;
    let p = cfg.patch_size;
    for ch in 0..cfg.channels_in {
        for dy in 0..p {
            for dx in 0..p {
                let a = ch * side * side + dy * side + dx;
                let b = ch * side * side + (side - p + dy) * side + (side - p + dx);
                swapped.data_mut().swap(a, b);
            }
        }
    }
    let a = model.logits(&x).unwrap();
    let b = model.logits(&swapped).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-6);
}

#[test]
fn patch_embedding_examples() {
    let cfg = ModelConfig::default();
    let model = Model::<f64>::init(&cfg, 0).unwrap();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let zero = tape.constant(Tensor::zeros(&[1, 3, 32, 32]));
    let tokens = model.patch_embed(&mut tape, &bound, zero).unwrap();
    assert_eq!(tape.value(tokens).shape(), &[1, 64, 128]);
    assert!(tape.value(tokens).data().iter().all(|&v| v == 0.0));

    let cfg = small();
    let model = Model::<f64>::init(&cfg, 5).unwrap();
    let side = cfg.image_size;
    let p = cfg.patch_size;
    let grid = side / p;
    let c = cfg.dim;
    let proj = model.embed.projection.data();
    for (ch, y, x) in [(0, 0, 0), (1, 3, 6), (2, 7, 7), (0, 5, 2)] {
        let mut img = Tensor::zeros(&[1, 3, side, side]);
        img.data_mut()[ch * side * side + y * side + x] = 1.0;
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let iv = tape.constant(img);
        let tokens = model.patch_embed(&mut tape, &bound, iv).unwrap();
        let out = tape.value(tokens).data();
        let token = (y / p) * grid + x / p;
        let feature = ch * p * p + (y % p) * p + x % p;
        for t in 0..cfg.tokens() {
            let row = &out[t * c..(t + 1) * c];
            if t == token {
                for (j, &v) in row.iter().enumerate() {
                    assert!((v - proj[feature * c + j]).abs() <= 1e-12);
                }
            } else {
                assert!(
                    row.iter().all(|&v| v == 0.0),
                    "token {t} lit for pixel ({ch},{y},{x})"
                );
            }
        }
    }
}

#[test]
fn patch_embedding_rejects_wrong_image_size() {
    let cfg = small();
    let model = Model::<f64>::init(&cfg, 0).unwrap();
    let err = model.logits(&Tensor::zeros(&[1, 3, 16, 16])).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn init_is_deterministic_in_seed() {
    let cfg = small();
    let a = Model::<f32>::init(&cfg, 42).unwrap();
    let b = Model::<f32>::init(&cfg, 42).unwrap();
    let c = Model::<f32>::init(&cfg, 43).unwrap();
    let bits = |m: &Model<f32>| {
        m.params()
            .iter()
            .flat_map(|p| {
                p.tensor
                    .data()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn first_layer_weight_spread_matches_uniform_moment() {
    // fan_in 2C = 256; Uniform(±1/√256) has std 1/(√3·16).
    let cfg = ModelConfig {
        depth: 1,
        ..ModelConfig::default()
    };
    assert_eq!(2 * cfg.dim, 256);
    let model = Model::<f64>::init(&cfg, 7).unwrap();
    let w: Vec<f64> = model.blocks[0][0].w1.data().to_vec();
    assert!(w.len() >= 90_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let expected = 1.0 / (3f64.sqrt() * 16.0);
    assert!(
        (std / expected - 1.0).abs() <= 0.05,
        "std {std}, expected {expected}"
    );
    assert!(w.iter().all(|v| v.abs() <= 1.0 / 16.0));
}

#[test]
fn biases_start_at_zero_and_norms_at_identity() {
    let model = Model::<f32>::init(&small(), 1).unwrap();
    for p in model.params() {
        match p.spec.role {
            ParamRole::Bias => {
                assert!(p.tensor.data().iter().all(|&v| v == 0.0), "{}", p.spec.name)
            }
            ParamRole::Norm => {
                let want = if p.spec.name.ends_with("ln_gamma") {
                    1.0
                } else {
                    0.0
                };
                assert!(
                    p.tensor.data().iter().all(|&v| v == want),
                    "{}",
                    p.spec.name
                );
            }
            ParamRole::Weight => {}
        }
    }
}

#[test]
fn parameter_count_matches_tensors() {
    for cfg in [small(), ModelConfig::toy(), ModelConfig::default()] {
        let model = Model::<f32>::init(&cfg, 0).unwrap();
        assert_eq!(model.num_scalars() as u64, count_params(&cfg));
        let from_specs: usize = param_specs(&cfg).iter().map(|s| s.numel()).sum();
        assert_eq!(from_specs as u64, count_params(&cfg));
    }
    // Embed 48·64 + 64, two blocks of two mixers, head 64·100 + 100.
    let toy = ModelConfig::toy();
    let mixer = 2 * 128 + 128 * 192 + 192 + 192 * 64 + 64;
    assert_eq!(
        count_params(&toy),
        48 * 64 + 64 + 4 * mixer + 64 * 100 + 100
    );

    let embed_and_head = count_params(&ModelConfig {
        depth: 0,
        ..toy.clone()
    });
    assert_eq!(embed_and_head, 48 * 64 + 64 + 64 * 100 + 100);
}

#[test]
fn mac_count_matches_hand_arithmetic() {
    let toy = ModelConfig::toy();
    let (n, c, h) = (64u64, 64u64, 192u64);
    let embed = n * 48 * c;
    let mixer = n * (2 * c * h + h * c) + n * c * 12;
    let head = c * 100;
    assert_eq!(count_macs(&toy), embed + 4 * mixer + head);
}

#[test]
fn identical_images_give_identical_logits() {
    let cfg = small();
    let model = Model::<f64>::init(&cfg, 9).unwrap();
    let one = images(&cfg, 1, 4);
    let mut data = one.data().to_vec();
    data.extend_from_slice(one.data());
    let two = Tensor::new(&[2, 3, cfg.image_size, cfg.image_size], data).unwrap();
    let logits = model.logits(&two).unwrap();
    let k = cfg.num_classes;
    assert_eq!(&logits.data()[..k], &logits.data()[k..]);
}

#[test]
fn toy_forward_is_finite_in_single_precision() {
    let cfg = ModelConfig::toy();
    let model = Model::<f32>::init(&cfg, 1).unwrap();
    let x = images(&cfg, 4, 6).cast::<f32>();
    let logits = model.logits(&x).unwrap();
    assert_eq!(logits.shape(), &[4, 100]);
    assert!(logits.all_finite());
}

#[test]
fn invalid_configs_are_rejected() {
    let cases: [(ModelConfig, &str); 4] = [
        (
            ModelConfig {
                image_size: 24,
                ..ModelConfig::toy()
            },
            "power of 2",
        ),
        (
            ModelConfig {
                dim: 96,
                ..ModelConfig::toy()
            },
            "dim C",
        ),
        (
            ModelConfig {
                num_classes: 1,
                ..ModelConfig::toy()
            },
            "num_classes",
        ),
        (
            ModelConfig {
                patch_size: 3,
                ..ModelConfig::toy()
            },
            "patch_size",
        ),
    ];
    for (cfg, needle) in cases {
        match Model::<f32>::init(&cfg, 0) {
            Err(Error::Validation(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("expected validation error, got {:?}", other.map(|_| ())),
        }
    }
}
