//! Oracle and gradient-check suites behind `mcmlp check-transforms`.
//!
//! Fast kernels are compared against dense reference products (cosine matrix,
//! Sylvester matrix); autograd is compared against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{finite_diff_grad, Tape, Var};
use crate::error::Result;
use crate::model::{
    mc_block_forward, mixer_forward, MixerOptions, Model, ModelConfig, TransformSet,
};
use crate::tensor::Tensor;
use crate::transforms::dct::{dct_matrix, DctPlan};
use crate::transforms::hadamard::{fwht, hadamard_matrix};
use crate::transforms::{dct2d, hadamard2d, Transform2d, TransformKind};

/// Tolerance for fast-vs-oracle transform comparisons.
pub const TRANSFORM_TOL: f64 = 1e-9;
/// Tolerance for autograd-vs-finite-difference relative error.
pub const GRAD_TOL: f64 = 1e-4;
/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which gradient errors are measured absolutely.
///
/// Central differences with `h = 1e-5` on an O(1) loss carry round-off of a
/// few 1e-10 in 64-bit arithmetic, so gradients below this floor are held to
/// an absolute error of `GRAD_TOL · GRAD_FLOOR = 1e-9` instead.
pub const GRAD_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<4} {:<40} cases {:>7}  max error {:.3e}  (tol {:.0e})",
            if self.passed() { "ok" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Smallest and largest 1D size; every power of two in between is checked.
    pub min_size: usize,
    pub max_size: usize,
    /// Largest side of the square 2D slabs.
    pub max_side_2d: usize,
    /// Random inputs per size.
    pub trials: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            min_size: 2,
            max_size: 1024,
            max_side_2d: 64,
            trials: 1000,
            seed: 0x5eed,
        }
    }
}

fn powers_of_two(min: usize, max: usize) -> impl Iterator<Item = usize> {
    (1..usize::BITS)
        .map(|e| 1usize << e)
        .skip_while(move |&n| n < min)
        .take_while(move |&n| n <= max)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense `y = M x` for a row-major `n × n` matrix.
fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    m.chunks_exact(n)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `L X Rᵀ` with `L: n × n`, `R: c × c`, `X: n × c`, all row-major.
fn dense_2d(left: &[f64], right: &[f64], x: &[f64], n: usize, c: usize) -> Vec<f64> {
    let mut rows = vec![0.0; n * c];
    for i in 0..n {
        let out = mat_vec(right, &x[i * c..(i + 1) * c]);
        rows[i * c..(i + 1) * c].copy_from_slice(&out);
    }
    let mut out = vec![0.0; n * c];
    for k in 0..n {
        for i in 0..n {
            let w = left[k * n + i];
            for j in 0..c {
                out[k * c + j] += w * rows[i * c + j];
            }
        }
    }
    out
}

fn hadamard_dense(n: usize) -> Vec<f64> {
    hadamard_matrix(n)
        .expect("power of two")
        .entries()
        .iter()
        .map(|&e| e as f64)
        .collect()
}

/// Fast DCT-II and its transpose against the cosine matrix.
pub fn check_dct_1d(opts: &SuiteOptions) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut fwd, mut tr, mut cases) = (0.0f64, 0.0f64, 0);
    for n in powers_of_two(opts.min_size, opts.max_size) {
        let m = dct_matrix(n);
        let mut mt = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                mt[j * n + i] = m[i * n + j];
            }
        }
        let plan = DctPlan::<f64>::new(n).expect("power of two");
        for _ in 0..opts.trials {
            let x = random_vec(&mut rng, n);
            fwd = fwd.max(max_abs(&plan.forward(&x).unwrap(), &mat_vec(&m, &x)));
            tr = tr.max(max_abs(&plan.transpose(&x).unwrap(), &mat_vec(&mt, &x)));
            cases += 1;
        }
    }
    vec![
        CheckReport {
            name: format!(
                "dct1d vs cosine sum, n={}..{}",
                opts.min_size, opts.max_size
            ),
            cases,
            max_error: fwd,
            tolerance: TRANSFORM_TOL,
        },
        CheckReport {
            name: format!(
                "dct1d transpose vs matrix, n={}..{}",
                opts.min_size, opts.max_size
            ),
            cases,
            max_error: tr,
            tolerance: TRANSFORM_TOL,
        },
    ]
}

/// In-place FWHT against the dense Sylvester matrix.
pub fn check_fwht(opts: &SuiteOptions) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 1);
    let (mut err, mut cases) = (0.0f64, 0);
    for n in powers_of_two(opts.min_size, opts.max_size) {
        let h = hadamard_dense(n);
        for _ in 0..opts.trials {
            let x = random_vec(&mut rng, n);
            let mut fast = x.clone();
            fwht(&mut fast).unwrap();
            err = err.max(max_abs(&fast, &mat_vec(&h, &x)));
            cases += 1;
        }
    }
    CheckReport {
        name: format!(
            "fwht vs Sylvester matrix, n={}..{}",
            opts.min_size, opts.max_size
        ),
        cases,
        max_error: err,
        tolerance: TRANSFORM_TOL,
    }
}

/// 2D transforms against dense `L X Rᵀ` on square slabs plus a few
/// rectangular ones.
pub fn check_2d(opts: &SuiteOptions) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 2);
    let mut shapes: Vec<(usize, usize, usize)> = powers_of_two(2, opts.max_side_2d)
        .map(|s| (s, s, opts.trials))
        .collect();
    let rect_trials = opts.trials.div_ceil(10);
    for (n, c) in [(2, 8), (8, 2), (4, 32), (64, 16), (16, 64)] {
        if n.max(c) <= opts.max_side_2d {
            shapes.push((n, c, rect_trials));
        }
    }
    let mut reports = Vec::new();
    for kind in [TransformKind::Dct, TransformKind::Hadamard] {
        let (mut err, mut cases) = (0.0f64, 0);
        for &(n, c, trials) in &shapes {
            let (left, right, scale) = match kind {
                TransformKind::Dct => (dct_matrix(n), dct_matrix(c), 1.0),
                TransformKind::Hadamard => {
                    (hadamard_dense(n), hadamard_dense(c), 1.0 / (n * c) as f64)
                }
            };
            for _ in 0..trials {
                let x = Tensor::new(&[n, c], random_vec(&mut rng, n * c)).unwrap();
                let fast = match kind {
                    TransformKind::Dct => dct2d(&x).unwrap(),
                    TransformKind::Hadamard => hadamard2d(&x).unwrap(),
                };
                let mut oracle = dense_2d(&left, &right, x.data(), n, c);
                oracle.iter_mut().for_each(|v| *v *= scale);
                err = err.max(max_abs(fast.data(), &oracle));
                cases += 1;
            }
        }
        reports.push(CheckReport {
            name: format!("{kind}2d vs dense product, up to {0}x{0}", opts.max_side_2d),
            cases,
            max_error: err,
            tolerance: TRANSFORM_TOL,
        });
    }
    reports
}

/// Norm preservation, transpose-inverse, integer involution, and the closed-form cases.
pub fn check_structure(opts: &SuiteOptions) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
    let trials = opts.trials.div_ceil(10);
    let (mut norm, mut inv, mut invol, mut cases) = (0.0f64, 0.0f64, 0.0f64, 0);
    for n in powers_of_two(opts.min_size, opts.max_size) {
        let plan = DctPlan::<f64>::new(n).unwrap();
        for _ in 0..trials {
            let x = random_vec(&mut rng, n);
            let y = plan.forward(&x).unwrap();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm = norm.max((nx - ny).abs());
            inv = inv.max(max_abs(&plan.transpose(&y).unwrap(), &x));

            let ints: Vec<i64> = (0..n).map(|_| rng.random_range(-1000..=1000)).collect();
            let mut twice = ints.clone();
            fwht(&mut twice).unwrap();
            fwht(&mut twice).unwrap();
            let off = ints
                .iter()
                .zip(&twice)
                .map(|(a, b)| (a * n as i64 - b).unsigned_abs())
                .max()
                .unwrap_or(0);
            invol = invol.max(off as f64);
            cases += 1;
        }
    }
    let ones = Tensor::<f64>::ones(&[4, 4]);
    let had = hadamard2d(&ones).unwrap();
    let e00 = had
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - if i == 0 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let h2 = hadamard_matrix(2).unwrap();
    let h2_err = if h2.entries() == [1, 1, 1, -1] {
        0.0
    } else {
        1.0
    };
    vec![
        CheckReport {
            name: "dct1d preserves the 2-norm".into(),
            cases,
            max_error: norm,
            tolerance: TRANSFORM_TOL,
        },
        CheckReport {
            name: "dct1d transpose inverts dct1d".into(),
            cases,
            max_error: inv,
            tolerance: TRANSFORM_TOL,
        },
        CheckReport {
            name: "fwht twice = n * identity (integers)".into(),
            cases,
            max_error: invol,
            tolerance: 0.0,
        },
        CheckReport {
            name: "hadamard2d(ones 4x4) = E00".into(),
            cases: 1,
            max_error: e00,
            tolerance: 0.0,
        },
        CheckReport {
            name: "hadamard_matrix(2) = [[1,1],[1,-1]]".into(),
            cases: 1,
            max_error: h2_err,
            tolerance: 0.0,
        },
    ]
}

/// `|a − n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn grad_rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| grad_rel_error(a, n))
        .fold(0.0, f64::max)
}

/// Result of comparing tape gradients with finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub coordinates: usize,
    pub max_rel_error: f64,
}

/// Checks the gradient of a scalar-valued graph with respect to every
/// coordinate of every input. `build` records the graph on a fresh tape.
pub fn grad_check<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let out = build(&mut tape, &vars)?;
    tape.backward(out)?;
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let numeric = finite_diff_grad(
            |probe| {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, x)| t.leaf(if j == i { probe.clone() } else { x.clone() }))
                    .collect();
                build(&mut t, &vs).map_or(f64::NAN, |v| t.value(v).item())
            },
            input,
            h,
        );
        worst = worst.max(max_rel_error(&analytic, numeric.data()));
        if numeric.data().iter().any(|v| !v.is_finite()) {
            worst = f64::INFINITY;
        }
        coordinates += input.len();
    }
    Ok(GradCheck {
        coordinates,
        max_rel_error: worst,
    })
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// `Σ r ⊙ y` with a fixed random `r`, so every output coordinate matters.
pub fn random_projection(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let r = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &shape, 1.0);
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

fn mixer_inputs(
    rng: &mut ChaCha8Rng,
    batch: usize,
    n: usize,
    c: usize,
    f: usize,
) -> Vec<Tensor<f64>> {
    let h = f * c;
    vec![
        random_tensor(rng, &[batch, n, c], 1.0),
        Tensor::new(
            &[2 * c],
            (0..2 * c).map(|_| rng.random_range(0.5..1.5)).collect(),
        )
        .unwrap(),
        random_tensor(rng, &[2 * c], 0.5),
        random_tensor(rng, &[2 * c, h], 1.0 / (2.0 * c as f64).sqrt()),
        random_tensor(rng, &[h], 0.5),
        random_tensor(rng, &[h, c], 1.0 / (h as f64).sqrt()),
        random_tensor(rng, &[c], 0.5),
    ]
}

fn bound_mixer(kind: TransformKind, v: &[Var]) -> crate::model::BoundMixer {
    crate::model::BoundMixer {
        kind,
        ln_gamma: v[0],
        ln_beta: v[1],
        w1: v[2],
        b1: v[3],
        w2: v[4],
        b2: v[5],
    }
}

fn mixer_opts(output_activation: bool) -> MixerOptions<f64> {
    MixerOptions {
        eps: crate::model::LAYER_NORM_EPS,
        output_activation,
    }
}

/// Gradient check of one mixer of `kind` on `[1, n, c]` with expansion `f`.
pub fn check_mixer_grad(
    kind: TransformKind,
    n: usize,
    c: usize,
    f: usize,
    seed: u64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = mixer_inputs(&mut rng, 1, n, c, f);
    let transforms = TransformSet::<f64>::new(n, c)?;
    grad_check(&inputs, FD_STEP, |tape, v| {
        let y = mixer_forward(
            tape,
            v[0],
            &bound_mixer(kind, &v[1..7]),
            &transforms,
            mixer_opts(true),
        )?;
        random_projection(tape, y, seed ^ 0xabc)
    })
}

/// Gradient check of a full MC-Block (Hadamard then DCT mixer) on `[1, n, c]`.
pub fn check_block_grad(n: usize, c: usize, f: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = mixer_inputs(&mut rng, 1, n, c, f);
    inputs.extend(mixer_inputs(&mut rng, 1, n, c, f).into_iter().skip(1));
    let transforms = TransformSet::<f64>::new(n, c)?;
    grad_check(&inputs, FD_STEP, |tape, v| {
        let block = [
            bound_mixer(TransformKind::Hadamard, &v[1..7]),
            bound_mixer(TransformKind::Dct, &v[7..13]),
        ];
        let y = mc_block_forward(tape, v[0], &block, &transforms, mixer_opts(true))?;
        random_projection(tape, y, seed ^ 0xdef)
    })
}

/// Gradient check of a whole network under soft-label cross-entropy, over
/// every parameter and every input pixel.
pub fn check_model_grad(config: &ModelConfig, batch: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f64>::init(config, seed)?;
    // Non-trivial LayerNorm and bias values so their gradients are exercised.
    for p in model.params_mut() {
        if p.spec.role != crate::model::ParamRole::Weight {
            for v in p.tensor.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let s = config.image_size;
    let images = random_tensor(&mut rng, &[batch, config.channels_in, s, s], 1.0);
    let k = config.num_classes;
    let mut target: Vec<f64> = (0..batch * k).map(|_| rng.random_range(0.0..1.0)).collect();
    for row in target.chunks_exact_mut(k) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    let target = Tensor::new(&[batch, k], target)?;

    let loss_of = |m: &Model<f64>, x: &Tensor<f64>| -> f64 {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        m.forward(&mut tape, &bound, xv)
            .and_then(|l| tape.softmax_cross_entropy(l, &target))
            .map_or(f64::NAN, |l| tape.value(l).item())
    };

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let xv = tape.leaf(images.clone().with_grad());
    let logits = model.forward(&mut tape, &bound, xv)?;
    let loss = tape.softmax_cross_entropy(logits, &target)?;
    tape.backward(loss)?;

    let num_input = finite_diff_grad(|x| loss_of(&model, x), &images, FD_STEP);
    let mut worst = max_rel_error(tape.grad(xv).expect("input reached"), num_input.data());
    let mut coordinates = images.len();
    let count = bound.vars().len();
    for p in 0..count {
        let analytic = tape
            .grad(bound.vars()[p])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; model.params()[p].tensor.len()]);
        let original = model.params()[p].tensor.clone();
        let numeric = finite_diff_grad(
            |probe| {
                model.params_mut()[p]
                    .tensor
                    .data_mut()
                    .copy_from_slice(probe.data());
                loss_of(&model, &images)
            },
            &original,
            FD_STEP,
        );
        model.params_mut()[p]
            .tensor
            .data_mut()
            .copy_from_slice(original.data());
        worst = worst.max(max_rel_error(&analytic, numeric.data()));
        coordinates += original.len();
    }
    if worst.is_nan() {
        worst = f64::INFINITY;
    }
    Ok(GradCheck {
        coordinates,
        max_rel_error: worst,
    })
}

/// The depth-1 network used for exhaustive gradient checks: 8×8 RGB input
/// in 4×4 patches (N = 4 tokens), C = 4, f = 2, 100 classes.
pub fn grad_check_model_config() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        dim: 4,
        depth: 1,
        expansion: 2,
        ..ModelConfig::default()
    }
}

type BuildFn<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

/// Per-op gradient checks of every differentiable primitive.
pub fn check_op_grads(seed: u64) -> Result<Vec<(String, GradCheck)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, inputs: Vec<Tensor<f64>>, build: &BuildFn<'_>| -> Result<()> {
        let tag = seed ^ out.len() as u64;
        let r = grad_check(&inputs, FD_STEP, |t, v| {
            let y = build(t, v)?;
            if t.value(y).is_scalar() {
                Ok(y)
            } else {
                random_projection(t, y, tag)
            }
        })?;
        out.push((name.to_string(), r));
        Ok(())
    };
    let r = &mut rng;
    run(
        "matmul",
        vec![
            random_tensor(r, &[2, 3, 4], 1.0),
            random_tensor(r, &[4, 5], 1.0),
        ],
        &|t, v| t.matmul(v[0], v[1]),
    )?;
    run(
        "add_bias",
        vec![random_tensor(r, &[3, 4], 1.0), random_tensor(r, &[4], 1.0)],
        &|t, v| t.add_bias(v[0], v[1]),
    )?;
    run(
        "add",
        vec![
            random_tensor(r, &[3, 4], 1.0),
            random_tensor(r, &[3, 4], 1.0),
        ],
        &|t, v| t.add(v[0], v[1]),
    )?;
    run(
        "mul",
        vec![
            random_tensor(r, &[3, 4], 1.0),
            random_tensor(r, &[3, 4], 1.0),
        ],
        &|t, v| t.mul(v[0], v[1]),
    )?;
    run("scale", vec![random_tensor(r, &[5], 1.0)], &|t, v| {
        t.scale(v[0], -1.75)
    })?;
    run("sum", vec![random_tensor(r, &[2, 3], 1.0)], &|t, v| {
        t.sum(v[0])
    })?;
    run(
        "concat_last",
        vec![
            random_tensor(r, &[2, 3, 2], 1.0),
            random_tensor(r, &[2, 3, 4], 1.0),
        ],
        &|t, v| t.concat_last(v[0], v[1]),
    )?;
    run(
        "layer_norm",
        vec![
            random_tensor(r, &[2, 3, 8], 1.0),
            random_tensor(r, &[8], 1.5),
            random_tensor(r, &[8], 1.0),
        ],
        &|t, v| t.layer_norm(v[0], v[1], v[2], crate::model::LAYER_NORM_EPS),
    )?;
    run("gelu", vec![random_tensor(r, &[4, 6], 3.0)], &|t, v| {
        t.gelu(v[0])
    })?;
    let target = {
        let raw: Vec<f64> = (0..3 * 5).map(|_| r.random_range(0.0..1.0)).collect();
        let mut raw = raw;
        for row in raw.chunks_exact_mut(5) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        Tensor::new(&[3, 5], raw).unwrap()
    };
    run(
        "softmax_cross_entropy",
        vec![random_tensor(r, &[3, 5], 2.0)],
        &|t, v| t.softmax_cross_entropy(v[0], &target),
    )?;
    run(
        "mean_tokens",
        vec![random_tensor(r, &[2, 4, 3], 1.0)],
        &|t, v| t.mean_tokens(v[0]),
    )?;
    for (n, c) in [(4, 8), (8, 4), (16, 16)] {
        for kind in [TransformKind::Dct, TransformKind::Hadamard] {
            let tr = std::sync::Arc::new(Transform2d::<f64>::new(kind, n, c)?);
            run(
                &format!("{kind}2d {n}x{c}"),
                vec![random_tensor(r, &[2, n, c], 1.0)],
                &|t, v| t.transform2d(v[0], &tr),
            )?;
        }
    }
    run(
        "patchify",
        vec![random_tensor(r, &[2, 3, 8, 8], 1.0)],
        &|t, v| t.patchify(v[0], 4),
    )?;
    Ok(out)
}

/// Every suite, in reporting order.
pub fn run_all(opts: &SuiteOptions) -> Result<Vec<CheckReport>> {
    let mut reports = check_dct_1d(opts);
    reports.push(check_fwht(opts));
    reports.extend(check_2d(opts));
    reports.extend(check_structure(opts));
    let grad = |name: String, g: GradCheck| CheckReport {
        name,
        cases: g.coordinates,
        max_error: g.max_rel_error,
        tolerance: GRAD_TOL,
    };
    for (name, g) in check_op_grads(opts.seed)? {
        reports.push(grad(format!("grad {name}"), g));
    }
    for kind in [TransformKind::Hadamard, TransformKind::Dct] {
        let g = check_mixer_grad(kind, 4, 4, 2, opts.seed)?;
        reports.push(grad(format!("grad {kind} mixer (N=4, C=4, f=2)"), g));
    }
    reports.push(grad(
        "grad MC-Block (N=4, C=4, f=2)".into(),
        check_block_grad(4, 4, 2, opts.seed)?,
    ));
    let cfg = grad_check_model_config();
    reports.push(grad(
        format!("grad model depth 1 (N={}, C={})", cfg.tokens(), cfg.dim),
        check_model_grad(&cfg, 1, opts.seed)?,
    ));
    Ok(reports)
}
