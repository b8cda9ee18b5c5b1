//! Wall-clock scaling measurements for the transform kernels.
//!
//! Each trial restores the input and then runs the operation enough times to
//! last at least [`MIN_TRIAL`]; the reported figure is the median per-call
//! time over all trials. Restoring the input is an O(N) copy, included in the
//! time of every call.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transforms::dct::{dct_naive, DctPlan};
use crate::transforms::hadamard::fwht;

pub const MIN_TRIAL: Duration = Duration::from_millis(5);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    /// Fast orthonormal DCT-II.
    Dct,
    /// In-place fast Walsh–Hadamard transform.
    Fwht,
    /// Direct O(N²) cosine summation, the contrast control.
    DctNaive,
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchOp::Dct => "dct",
            BenchOp::Fwht => "fwht",
            BenchOp::DctNaive => "dct-naive",
        })
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(BenchOp::Dct),
            "fwht" | "wht" | "hadamard" => Ok(BenchOp::Fwht),
            "dct-naive" | "naive" => Ok(BenchOp::DctNaive),
            other => Err(Error::validation(format!(
                "unknown bench op `{other}` (expected dct, fwht or dct-naive)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub size: usize,
    pub median_ns: f64,
    pub trials: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One prepared measurement: input, buffers, and a calibrated repetition count.
struct Case {
    op: BenchOp,
    plan: DctPlan<f64>,
    input: Vec<f64>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
    reps: usize,
    samples: Vec<f64>,
}

impl Case {
    fn new(op: BenchOp, size: usize, seed: u64) -> Result<Self> {
        if !size.is_power_of_two() {
            return Err(Error::validation(format!(
                "bench size {size} must be a power of 2"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size as u64);
        let input: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut case = Case {
            op,
            plan: DctPlan::new(size)?,
            buf: input.clone(),
            scratch: vec![0.0; size],
            input,
            reps: 1,
            samples: Vec::new(),
        };
        while case.run() < MIN_TRIAL && case.reps < 1 << 24 {
            case.reps *= 2;
        }
        Ok(case)
    }

    fn run(&mut self) -> Duration {
        let start = Instant::now();
        for _ in 0..self.reps {
            self.buf.copy_from_slice(&self.input);
            match self.op {
                BenchOp::Dct => self.plan.forward_in_place(&mut self.buf, &mut self.scratch),
                BenchOp::Fwht => fwht(&mut self.buf).expect("power of two"),
                BenchOp::DctNaive => self.buf = dct_naive(&self.buf),
            }
        }
        let elapsed = start.elapsed();
        std::hint::black_box(&self.buf);
        elapsed
    }

    fn trial(&mut self) {
        let ns = self.run().as_nanos() as f64 / self.reps as f64;
        self.samples.push(ns);
    }

    fn finish(self) -> Timing {
        Timing {
            size: self.input.len(),
            trials: self.samples.len(),
            median_ns: median(self.samples),
        }
    }
}

/// Median nanoseconds per call of `op` on a random length-`size` input.
pub fn time_op(op: BenchOp, size: usize, trials: usize, seed: u64) -> Result<Timing> {
    Ok(time_sizes(op, &[size], trials, seed)?.remove(0))
}

/// `T(size_{i+1}) / T(size_i)` for consecutive timings.
pub fn ratios(timings: &[Timing]) -> Vec<f64> {
    timings
        .windows(2)
        .map(|w| w[1].median_ns / w[0].median_ns)
        .collect()
}

/// Times every size, interleaving trials across sizes so slow drifts in
/// machine load affect all sizes alike.
pub fn time_sizes(op: BenchOp, sizes: &[usize], trials: usize, seed: u64) -> Result<Vec<Timing>> {
    let mut cases = sizes
        .iter()
        .map(|&n| Case::new(op, n, seed))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..trials.max(1) {
        for case in &mut cases {
            case.trial();
        }
    }
    Ok(cases.into_iter().map(Case::finish).collect())
}
