//! Orthonormal DCT-II and its transpose (DCT-III).
//!
//! The fast path is B. G. Lee's recursive factorisation: an N-point DCT-II is
//! split into two N/2-point DCT-IIs over the folded sum `x[i] + x[N-1-i]` and the
//! scaled difference `(x[i] - x[N-1-i]) / (2 cos((i + 1/2)π/N))`. Even outputs come
//! from the first half, odd outputs from adjacent sums of the second. The
//! transpose runs the same flow graph backwards.

use std::f64::consts::PI;

use crate::element::Element;
use crate::error::{Error, Result};

/// Direct O(N²) evaluation of the orthonormal DCT-II:
/// `F(k) = c(k) sqrt(2/N) Σ f(n) cos(π(2n+1)k / 2N)` with `c(0) = 1/√2`, else 1.
///
/// Cosines are evaluated per term in `f64`; this is the reference oracle the fast
/// path is checked against.
pub fn dct_naive<T: Element>(x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let acc: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v.to_f64() * dct_cos(i, k, n))
                .sum();
            T::from_f64(orthonormal_scale(k, n) * acc)
        })
        .collect()
}

/// `cos(π(2i+1)k / 2N)`, with the angle reduced modulo 2π in integers first.
fn dct_cos(i: usize, k: usize, n: usize) -> f64 {
    let period = 4 * n;
    let idx = ((2 * i + 1) % period) * (k % period) % period;
    (PI * idx as f64 / (2 * n) as f64).cos()
}

/// Row-major N×N orthonormal DCT-II matrix, `D[k][n]`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for k in 0..n {
        let s = orthonormal_scale(k, n);
        for i in 0..n {
            d[k * n + i] = s * dct_cos(i, k, n);
        }
    }
    d
}

fn orthonormal_scale(k: usize, n: usize) -> f64 {
    let base = (2.0 / n as f64).sqrt();
    if k == 0 {
        base / std::f64::consts::SQRT_2
    } else {
        base
    }
}

/// Precomputed tables for an N-point fast DCT-II (N a power of two).
///
/// Immutable after construction; share freely across threads.
#[derive(Clone, Debug)]
pub struct DctPlan<T: Element> {
    len: usize,
    /// `levels[log2(m)]` holds `1 / (2 cos((i + 1/2)π/m))` for `i < m/2`.
    levels: Vec<Vec<T>>,
    scale_dc: T,
    scale_ac: T,
}

impl<T: Element> DctPlan<T> {
    pub fn new(len: usize) -> Result<Self> {
        if !len.is_power_of_two() {
            return Err(Error::validation(format!(
                "DCT length {len} is not a power of 2"
            )));
        }
        let log = len.trailing_zeros() as usize;
        let mut levels = vec![Vec::new(); log + 1];
        for (lvl, table) in levels.iter_mut().enumerate().skip(1) {
            let m = 1usize << lvl;
            *table = (0..m / 2)
                .map(|i| T::from_f64(1.0 / (2.0 * ((i as f64 + 0.5) * PI / m as f64).cos())))
                .collect();
        }
        Ok(DctPlan {
            len,
            levels,
            scale_dc: T::from_f64(orthonormal_scale(0, len)),
            scale_ac: T::from_f64(orthonormal_scale(1, len)),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check(&self, got: usize) -> Result<()> {
        if got != self.len {
            return Err(Error::shape(format!(
                "DCT plan is for length {}, input has length {got}",
                self.len
            )));
        }
        Ok(())
    }

    /// In-place orthonormal DCT-II. `scratch` must hold at least `len` values.
    pub fn forward_in_place(&self, x: &mut [T], scratch: &mut [T]) {
        assert_eq!(x.len(), self.len);
        let scratch = &mut scratch[..self.len];
        lee_forward(x, scratch, &self.levels);
        x[0] *= self.scale_dc;
        for v in &mut x[1..] {
            *v *= self.scale_ac;
        }
    }

    /// In-place transpose of the orthonormal DCT-II (i.e. the orthonormal DCT-III).
    pub fn transpose_in_place(&self, g: &mut [T], scratch: &mut [T]) {
        assert_eq!(g.len(), self.len);
        let scratch = &mut scratch[..self.len];
        g[0] *= self.scale_dc;
        for v in &mut g[1..] {
            *v *= self.scale_ac;
        }
        lee_transpose(g, scratch, &self.levels);
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        let mut out = x.to_vec();
        let mut scratch = vec![T::ZERO; self.len];
        self.forward_in_place(&mut out, &mut scratch);
        Ok(out)
    }

    pub fn transpose(&self, g: &[T]) -> Result<Vec<T>> {
        self.check(g.len())?;
        let mut out = g.to_vec();
        let mut scratch = vec![T::ZERO; self.len];
        self.transpose_in_place(&mut out, &mut scratch);
        Ok(out)
    }
}

/// Unnormalised DCT-II, `X[k] = Σ x[i] cos(π(2i+1)k / 2N)`, using `t` as scratch.
fn lee_forward<T: Element>(x: &mut [T], t: &mut [T], levels: &[Vec<T>]) {
    let n = x.len();
    if n == 1 {
        return;
    }
    let h = n / 2;
    let c = &levels[n.trailing_zeros() as usize];
    for i in 0..h {
        let a = x[i];
        let b = x[n - 1 - i];
        t[i] = a + b;
        t[h + i] = (a - b) * c[i];
    }
    {
        let (tl, tr) = t.split_at_mut(h);
        let (xl, xr) = x.split_at_mut(h);
        lee_forward(tl, xl, levels);
        lee_forward(tr, xr, levels);
    }
    let (tl, tr) = t.split_at(h);
    for k in 0..h {
        x[2 * k] = tl[k];
    }
    for k in 0..h - 1 {
        x[2 * k + 1] = tr[k] + tr[k + 1];
    }
    x[n - 1] = tr[h - 1];
}

/// Transpose of [`lee_forward`].
fn lee_transpose<T: Element>(g: &mut [T], t: &mut [T], levels: &[Vec<T>]) {
    let n = g.len();
    if n == 1 {
        return;
    }
    let h = n / 2;
    t[0] = g[0];
    t[h] = g[1];
    for k in 1..h {
        t[k] = g[2 * k];
        t[h + k] = g[2 * k + 1] + g[2 * k - 1];
    }
    {
        let (tl, tr) = t.split_at_mut(h);
        let (gl, gr) = g.split_at_mut(h);
        lee_transpose(tl, gl, levels);
        lee_transpose(tr, gr, levels);
    }
    let c = &levels[n.trailing_zeros() as usize];
    let (tl, tr) = t.split_at(h);
    for i in 0..h {
        let a = tl[i];
        let b = c[i] * tr[i];
        g[i] = a + b;
        g[n - 1 - i] = a - b;
    }
}
