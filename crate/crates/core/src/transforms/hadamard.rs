//! Walsh–Hadamard transform in natural (Sylvester) order.

use std::ops::{Add, Sub};

use crate::error::{Error, Result};

/// Sylvester-ordered Hadamard matrix of power-of-two order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i32>,
}

impl HadamardMatrix {
    /// Builds `H_n` by the recursion `H_2m = [[H_m, H_m], [H_m, -H_m]]` from `H_1 = [1]`.
    pub fn new(order: usize) -> Result<Self> {
        if !order.is_power_of_two() {
            return Err(Error::validation(format!(
                "Hadamard order {order} is not a power of 2"
            )));
        }
        let mut entries = vec![1i32];
        let mut m = 1;
        while m < order {
            let two_m = 2 * m;
            let mut next = vec![0i32; two_m * two_m];
            for i in 0..m {
                for j in 0..m {
                    let h = entries[i * m + j];
                    next[i * two_m + j] = h;
                    next[i * two_m + j + m] = h;
                    next[(i + m) * two_m + j] = h;
                    next[(i + m) * two_m + j + m] = -h;
                }
            }
            entries = next;
            m = two_m;
        }
        Ok(HadamardMatrix { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.entries[row * self.order + col]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[i32] {
        &self.entries
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.entries.chunks_exact(self.order)
    }

    /// Dense product `H·x`, accumulated in `f64`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        self.rows()
            .map(|row| row.iter().zip(x).map(|(&h, &v)| h as f64 * v).sum())
            .collect()
    }
}

/// Shorthand for [`HadamardMatrix::new`].
pub fn hadamard_matrix(order: usize) -> Result<HadamardMatrix> {
    HadamardMatrix::new(order)
}

/// Unnormalised in-place fast Walsh–Hadamard transform: `x ← H_N x`.
///
/// Uses only additions and subtractions, so integer inputs stay exact.
pub fn fwht<T>(x: &mut [T]) -> Result<()>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(Error::validation(format!(
            "Walsh-Hadamard length {n} is not a power of 2"
        )));
    }
    fwht_unchecked(x);
    Ok(())
}

/// Elements processed together while the short strides run, sized to stay in L1.
const FWHT_BLOCK: usize = 1024;

pub(crate) fn fwht_unchecked<T>(x: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = x.len();
    let block = n.min(FWHT_BLOCK);
    for chunk in x.chunks_exact_mut(block) {
        fwht_stages(chunk, 1);
    }
    fwht_stages(x, block);
}

/// Butterfly stages with strides `h, 2h, …, n/2`, two stages per sweep where possible.
fn fwht_stages<T>(x: &mut [T], mut h: usize)
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = x.len();
    while 4 * h <= n {
        for block in x.chunks_exact_mut(4 * h) {
            let (ab, cd) = block.split_at_mut(2 * h);
            let (a, b) = ab.split_at_mut(h);
            let (c, d) = cd.split_at_mut(h);
            for (((a, b), c), d) in a
                .iter_mut()
                .zip(b.iter_mut())
                .zip(c.iter_mut())
                .zip(d.iter_mut())
            {
                let (s0, d0) = (*a + *b, *a - *b);
                let (s1, d1) = (*c + *d, *c - *d);
                *a = s0 + s1;
                *b = d0 + d1;
                *c = s0 - s1;
                *d = d0 - d1;
            }
        }
        h *= 4;
    }
    if 2 * h <= n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
    }
}

/// FWHT along the row axis of a row-major `rows × cols` matrix, i.e. `H_rows · M`.
/// Butterflies combine whole rows so memory access stays contiguous.
pub(crate) fn fwht_columns<T>(m: &mut [T], rows: usize, cols: usize)
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    debug_assert_eq!(m.len(), rows * cols);
    let mut h = 1;
    while h < rows {
        for block in m.chunks_exact_mut(2 * h * cols) {
            let (lo, hi) = block.split_at_mut(h * cols);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}
