//! The MC-MLP network.
//!
//! `images → patch embedding → depth × MC-Block → token mean → linear head`.
//! A mixer computes, per sample slab `X ∈ R^{N×C}`:
//!
//! ```text
//! Y  = T(X)                       2D Hadamard or DCT over tokens × channels
//! Z  = [Y | X]                    concat on channels, width 2C
//! Z' = LayerNorm(Z)
//! X' = σ(W₂ σ(W₁ Z' + b₁) + b₂) + X
//! ```
//!
//! with `W₁: 2C → f·C`, `W₂: f·C → C`, σ = exact GELU. The outer σ can be
//! disabled with [`ModelConfig::output_activation`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transforms::{Transform2d, TransformKind};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels_in: usize,
    /// Channel width C of every token.
    pub dim: usize,
    /// Number of MC-Blocks.
    pub depth: usize,
    /// Hidden width multiplier f of the mixer MLP.
    pub expansion: usize,
    pub num_classes: usize,
    pub mixer_order: [TransformKind; 2],
    /// Apply σ after the second MLP layer, before the residual add.
    pub output_activation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 32,
            patch_size: 4,
            channels_in: 3,
            dim: 128,
            depth: 8,
            expansion: 3,
            num_classes: 100,
            mixer_order: [TransformKind::Hadamard, TransformKind::Dct],
            output_activation: true,
        }
    }
}

impl ModelConfig {
    /// Depth 2, C = 64, N = 64: small enough to train on a laptop core.
    pub fn toy() -> Self {
        ModelConfig {
            dim: 64,
            depth: 2,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn hidden(&self) -> usize {
        self.expansion * self.dim
    }

    pub fn patch_features(&self) -> usize {
        self.patch_size * self.patch_size * self.channels_in
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(msg));
        if self.patch_size == 0
            || self.image_size == 0
            || !self.image_size.is_multiple_of(self.patch_size)
        {
            return fail(format!(
                "image_size ({}) must be a positive multiple of patch_size ({})",
                self.image_size, self.patch_size
            ));
        }
        if self.channels_in == 0 {
            return fail("channels_in must be at least 1".into());
        }
        if !self.tokens().is_power_of_two() {
            return fail(format!(
                "token count N = (image_size/patch_size)^2 = {} must be a power of 2",
                self.tokens()
            ));
        }
        if !self.dim.is_power_of_two() {
            return fail(format!("dim C = {} must be a power of 2", self.dim));
        }
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.expansion == 0 {
            return fail("expansion must be at least 1".into());
        }
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        Ok(())
    }
}

/// How a parameter is treated by the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    /// Matrix weights; subject to weight decay.
    Weight,
    Bias,
    Norm,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], role: ParamRole) -> Self {
        ParamSpec {
            name,
            shape: shape.to_vec(),
            role,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Every trainable tensor of a configuration, in canonical order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let c = config.dim;
    let h = config.hidden();
    let mut specs = vec![
        ParamSpec::new(
            "embed.projection".into(),
            &[config.patch_features(), c],
            ParamRole::Weight,
        ),
        ParamSpec::new("embed.bias".into(), &[c], ParamRole::Bias),
    ];
    for block in 0..config.depth {
        for kind in config.mixer_order {
            let p = format!("blocks.{block}.{kind}");
            specs.extend([
                ParamSpec::new(format!("{p}.ln_gamma"), &[2 * c], ParamRole::Norm),
                ParamSpec::new(format!("{p}.ln_beta"), &[2 * c], ParamRole::Norm),
                ParamSpec::new(format!("{p}.w1"), &[2 * c, h], ParamRole::Weight),
                ParamSpec::new(format!("{p}.b1"), &[h], ParamRole::Bias),
                ParamSpec::new(format!("{p}.w2"), &[h, c], ParamRole::Weight),
                ParamSpec::new(format!("{p}.b2"), &[c], ParamRole::Bias),
            ]);
        }
    }
    specs.push(ParamSpec::new(
        "head.weight".into(),
        &[c, config.num_classes],
        ParamRole::Weight,
    ));
    specs.push(ParamSpec::new(
        "head.bias".into(),
        &[config.num_classes],
        ParamRole::Bias,
    ));
    specs
}

/// Trainable scalars in one mixer: `2·(2C) + 2C·fC + fC + fC·C + C`.
pub fn mixer_param_count(dim: usize, expansion: usize) -> u64 {
    let (c, h) = (dim as u64, (expansion * dim) as u64);
    2 * (2 * c) + 2 * c * h + h + h * c + c
}

/// Exact number of trainable scalars.
pub fn count_params(config: &ModelConfig) -> u64 {
    let c = config.dim as u64;
    let embed = config.patch_features() as u64 * c + c;
    let head = c * config.num_classes as u64 + config.num_classes as u64;
    embed + config.depth as u64 * 2 * mixer_param_count(config.dim, config.expansion) + head
}

/// Matmul MACs of one mixer over N tokens: `N·(2C·fC + fC·C)`.
pub fn mixer_matmul_macs(tokens: usize, dim: usize, expansion: usize) -> u64 {
    let (n, c, h) = (tokens as u64, dim as u64, (expansion * dim) as u64);
    n * (2 * c * h + h * c)
}

/// Estimated multiply–accumulates for a single-image forward pass: all matmul
/// MACs plus `N·C·log₂(N·C)` per 2D transform.
pub fn count_macs(config: &ModelConfig) -> u64 {
    let n = config.tokens() as u64;
    let c = config.dim as u64;
    let embed = n * config.patch_features() as u64 * c;
    let nc = n * c;
    let transform = nc * u64::from(nc.trailing_zeros());
    let mixer = mixer_matmul_macs(config.tokens(), config.dim, config.expansion) + transform;
    let head = c * config.num_classes as u64;
    embed + config.depth as u64 * 2 * mixer + head
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixerParams<T: Element> {
    pub kind: TransformKind,
    pub ln_gamma: Tensor<T>,
    pub ln_beta: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Element> MixerParams<T> {
    /// Zero MLP weights and biases; identity LayerNorm. The mixer then reduces to
    /// its residual path.
    pub fn zeroed(kind: TransformKind, dim: usize, expansion: usize) -> Self {
        let h = dim * expansion;
        MixerParams {
            kind,
            ln_gamma: Tensor::ones(&[2 * dim]),
            ln_beta: Tensor::zeros(&[2 * dim]),
            w1: Tensor::zeros(&[2 * dim, h]),
            b1: Tensor::zeros(&[h]),
            w2: Tensor::zeros(&[h, dim]),
            b2: Tensor::zeros(&[dim]),
        }
    }

    fn tensors(&self) -> [&Tensor<T>; 6] {
        [
            &self.ln_gamma,
            &self.ln_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 6] {
        [
            &mut self.ln_gamma,
            &mut self.ln_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    /// Records the parameters on `tape` as differentiable leaves.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundMixer {
        let [g, b, w1, b1, w2, b2] = self.tensors().map(|t| bind_leaf(tape, t, trainable));
        BoundMixer {
            kind: self.kind,
            ln_gamma: g,
            ln_beta: b,
            w1,
            b1,
            w2,
            b2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbedParams<T: Element> {
    pub projection: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Tape handles of one mixer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct BoundMixer {
    pub kind: TransformKind,
    pub ln_gamma: Var,
    pub ln_beta: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape handles of every model parameter, in [`param_specs`] order.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub embed: (Var, Var),
    pub blocks: Vec<[BoundMixer; 2]>,
    pub head: (Var, Var),
    order: Vec<Var>,
}

impl BoundModel {
    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

fn bind_leaf<T: Element>(tape: &mut Tape<T>, t: &Tensor<T>, trainable: bool) -> Var {
    let mut fresh = Tensor::new(t.shape(), t.data().to_vec()).expect("parameter shape is valid");
    fresh.requires_grad = trainable;
    tape.leaf(fresh)
}

/// Prepared transforms for a fixed slab size, one per kind.
#[derive(Clone, Debug)]
pub struct TransformSet<T: Element> {
    hadamard: Arc<Transform2d<T>>,
    dct: Arc<Transform2d<T>>,
}

impl<T: Element> TransformSet<T> {
    pub fn new(tokens: usize, channels: usize) -> Result<Self> {
        Ok(TransformSet {
            hadamard: Arc::new(Transform2d::new(TransformKind::Hadamard, tokens, channels)?),
            dct: Arc::new(Transform2d::new(TransformKind::Dct, tokens, channels)?),
        })
    }

    pub fn get(&self, kind: TransformKind) -> &Arc<Transform2d<T>> {
        match kind {
            TransformKind::Hadamard => &self.hadamard,
            TransformKind::Dct => &self.dct,
        }
    }
}

/// Options shared by every mixer in a network.
#[derive(Clone, Copy, Debug)]
pub struct MixerOptions<T> {
    pub eps: T,
    pub output_activation: bool,
}

impl<T: Element> MixerOptions<T> {
    pub fn from_config(config: &ModelConfig) -> Self {
        MixerOptions {
            eps: T::from_f64(LAYER_NORM_EPS),
            output_activation: config.output_activation,
        }
    }
}

/// One mixer over `x: [B, N, C]`; returns `[B, N, C]`.
pub fn mixer_forward<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    params: &BoundMixer,
    transforms: &TransformSet<T>,
    opts: MixerOptions<T>,
) -> Result<Var> {
    let y = tape.transform2d(x, transforms.get(params.kind))?;
    let z = tape.concat_last(y, x)?;
    let z = tape.layer_norm(z, params.ln_gamma, params.ln_beta, opts.eps)?;
    let h = tape.matmul(z, params.w1)?;
    let h = tape.add_bias(h, params.b1)?;
    let h = tape.gelu(h)?;
    let o = tape.matmul(h, params.w2)?;
    let mut o = tape.add_bias(o, params.b2)?;
    if opts.output_activation {
        o = tape.gelu(o)?;
    }
    tape.add(o, x)
}

/// Both mixers of an MC-Block, in the order given.
pub fn mc_block_forward<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    block: &[BoundMixer; 2],
    transforms: &TransformSet<T>,
    opts: MixerOptions<T>,
) -> Result<Var> {
    let x = mixer_forward(tape, x, &block[0], transforms, opts)?;
    mixer_forward(tape, x, &block[1], transforms, opts)
}

/// Parameters of a full network, plus its prepared transforms.
#[derive(Clone, Debug)]
pub struct Model<T: Element> {
    config: ModelConfig,
    pub embed: PatchEmbedParams<T>,
    pub blocks: Vec<[MixerParams<T>; 2]>,
    pub head: HeadParams<T>,
    transforms: TransformSet<T>,
}

/// Borrowed view of one parameter.
pub struct ParamRef<'a, T: Element> {
    pub spec: ParamSpec,
    pub tensor: &'a Tensor<T>,
}

/// Mutable view of one parameter.
pub struct ParamMut<'a, T: Element> {
    pub spec: ParamSpec,
    pub tensor: &'a mut Tensor<T>,
}

impl<T: Element> Model<T> {
    /// Uniform(±1/√fan_in) matrices, zero biases, unit LayerNorm scale. Deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = param_specs(config)
            .into_iter()
            .map(|spec| {
                let data: Vec<T> = match spec.role {
                    ParamRole::Weight => {
                        let bound = 1.0 / (spec.shape[0] as f64).sqrt();
                        (0..spec.numel())
                            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                            .collect()
                    }
                    ParamRole::Bias => vec![T::ZERO; spec.numel()],
                    ParamRole::Norm if spec.name.ends_with("ln_gamma") => {
                        vec![T::ONE; spec.numel()]
                    }
                    ParamRole::Norm => vec![T::ZERO; spec.numel()],
                };
                (
                    spec.name,
                    Tensor::new(&spec.shape, data).expect("spec shape"),
                )
            })
            .collect();
        Self::from_named(config, tensors)
    }

    /// Assembles a model from `(name, tensor)` pairs in [`param_specs`] order.
    pub fn from_named(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(config);
        if specs.len() != tensors.len() {
            return Err(Error::format(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        let mut it = specs.iter().zip(tensors).map(|(spec, (name, t))| {
            if spec.name != name {
                return Err(Error::format(format!(
                    "expected parameter `{}`, found `{name}`",
                    spec.name
                )));
            }
            if spec.shape != t.shape() {
                return Err(Error::CheckpointShape {
                    name,
                    found: t.shape().to_vec(),
                    expected: spec.shape.clone(),
                });
            }
            let mut t = t;
            t.requires_grad = true;
            t.grad = None;
            Ok(t)
        });
        let mut next = || it.next().expect("length checked above");
        let embed = PatchEmbedParams {
            projection: next()?,
            bias: next()?,
        };
        let mut blocks = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            let mut mixer = |kind| -> Result<MixerParams<T>> {
                Ok(MixerParams {
                    kind,
                    ln_gamma: next()?,
                    ln_beta: next()?,
                    w1: next()?,
                    b1: next()?,
                    w2: next()?,
                    b2: next()?,
                })
            };
            let first = mixer(config.mixer_order[0])?;
            let second = mixer(config.mixer_order[1])?;
            blocks.push([first, second]);
        }
        let head = HeadParams {
            weight: next()?,
            bias: next()?,
        };
        Ok(Model {
            config: config.clone(),
            embed,
            blocks,
            head,
            transforms: TransformSet::new(config.tokens(), config.dim)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn transforms(&self) -> &TransformSet<T> {
        &self.transforms
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embed.projection, &self.embed.bias];
        for block in &self.blocks {
            for m in block {
                out.extend(m.tensors());
            }
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embed.projection, &mut self.embed.bias];
        for block in &mut self.blocks {
            for m in block {
                out.extend(m.tensors_mut());
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        param_specs(&self.config)
            .into_iter()
            .zip(self.tensors())
            .map(|(spec, tensor)| ParamRef { spec, tensor })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let specs = param_specs(&self.config);
        specs
            .into_iter()
            .zip(self.tensors_mut())
            .map(|(spec, tensor)| ParamMut { spec, tensor })
            .collect()
    }

    /// Number of scalars actually held, which must equal [`count_params`].
    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    /// Records all parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundModel {
        let embed = (
            bind_leaf(tape, &self.embed.projection, trainable),
            bind_leaf(tape, &self.embed.bias, trainable),
        );
        let mut order = vec![embed.0, embed.1];
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for [a, b] in &self.blocks {
            let ba = a.bind(tape, trainable);
            let bb = b.bind(tape, trainable);
            for m in [&ba, &bb] {
                order.extend([m.ln_gamma, m.ln_beta, m.w1, m.b1, m.w2, m.b2]);
            }
            blocks.push([ba, bb]);
        }
        let head = (
            bind_leaf(tape, &self.head.weight, trainable),
            bind_leaf(tape, &self.head.bias, trainable),
        );
        order.extend([head.0, head.1]);
        BoundModel {
            embed,
            blocks,
            head,
            order,
        }
    }

    /// `[B, C_in, H, W] → [B, N, C]`.
    pub fn patch_embed(&self, tape: &mut Tape<T>, bound: &BoundModel, images: Var) -> Result<Var> {
        let shape = tape.value(images).shape();
        let cfg = &self.config;
        if shape.len() != 4
            || shape[1] != cfg.channels_in
            || shape[2] != cfg.image_size
            || shape[3] != cfg.image_size
        {
            return Err(Error::shape(format!(
                "images {shape:?} do not match [B, {}, {}, {}]",
                cfg.channels_in, cfg.image_size, cfg.image_size
            )));
        }
        let patches = tape.patchify(images, cfg.patch_size)?;
        let tokens = tape.matmul(patches, bound.embed.0)?;
        tape.add_bias(tokens, bound.embed.1)
    }

    /// Logits `[B, num_classes]` for `[B, C_in, H, W]` images.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &BoundModel, images: Var) -> Result<Var> {
        let opts = MixerOptions::from_config(&self.config);
        let mut x = self.patch_embed(tape, bound, images)?;
        for block in &bound.blocks {
            x = mc_block_forward(tape, x, block, &self.transforms, opts)?;
        }
        let pooled = tape.mean_tokens(x)?;
        let logits = tape.matmul(pooled, bound.head.0)?;
        tape.add_bias(logits, bound.head.1)
    }

    /// Inference-only forward pass.
    pub fn logits(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(images.clone());
        let out = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(out).clone())
    }

    /// Adds the gradients from the last `tape.backward` into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &BoundModel) {
        for (t, &v) in self.tensors_mut().into_iter().zip(bound.vars()) {
            match tape.grad(v) {
                Some(g) => t.accumulate_grad(g),
                None => {
                    let zeros = vec![T::ZERO; t.len()];
                    t.accumulate_grad(&zeros);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::toy().validate().unwrap();
        assert_eq!(ModelConfig::default().tokens(), 64);
    }

    #[test]
    fn validation_names_the_violation() {
        let bad = |f: fn(&mut ModelConfig)| {
            let mut c = ModelConfig::toy();
            f(&mut c);
            c.validate().unwrap_err().to_string()
        };
        assert!(bad(|c| c.patch_size = 5).contains("patch_size"));
        assert!(bad(|c| c.image_size = 24).contains("power of 2"));
        assert!(bad(|c| c.dim = 48).contains("dim C"));
        assert!(bad(|c| c.depth = 0).contains("depth"));
        assert!(bad(|c| c.expansion = 0).contains("expansion"));
        assert!(bad(|c| c.num_classes = 1).contains("num_classes"));
    }

    #[test]
    fn per_mixer_count_matches_expansion() {
        assert_eq!(mixer_param_count(16, 2), 64 + 1024 + 32 + 512 + 16);
        assert_eq!(mixer_param_count(16, 2), 1648);
    }

    #[test]
    fn per_mixer_macs() {
        assert_eq!(mixer_matmul_macs(64, 16, 2), 98_304);
    }

    #[test]
    fn count_params_matches_enumeration() {
        for cfg in [ModelConfig::default(), ModelConfig::toy()] {
            let enumerated: usize = param_specs(&cfg).iter().map(ParamSpec::numel).sum();
            assert_eq!(count_params(&cfg), enumerated as u64);
        }
    }

    #[test]
    fn macs_are_additive_in_depth() {
        let one = ModelConfig {
            depth: 1,
            ..ModelConfig::toy()
        };
        let two = ModelConfig {
            depth: 2,
            ..ModelConfig::toy()
        };
        let four = ModelConfig {
            depth: 4,
            ..ModelConfig::toy()
        };
        let block = count_macs(&two) - count_macs(&one);
        assert_eq!(count_macs(&four) - count_macs(&two), 2 * block);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::toy();
        let a = Model::<f32>::init(&cfg, 7).unwrap();
        let b = Model::<f32>::init(&cfg, 7).unwrap();
        let c = Model::<f32>::init(&cfg, 8).unwrap();
        assert_eq!(a.embed, b.embed);
        assert_eq!(a.blocks, b.blocks);
        assert_ne!(a.embed.projection, c.embed.projection);
        assert!(a.blocks[0][0].ln_gamma.data().iter().all(|&v| v == 1.0));
        assert!(a.blocks[0][0].b1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_rejects_invalid_config() {
        let cfg = ModelConfig {
            dim: 100,
            ..ModelConfig::toy()
        };
        assert!(matches!(
            Model::<f32>::init(&cfg, 0),
            Err(Error::Validation(_))
        ));
    }
}
