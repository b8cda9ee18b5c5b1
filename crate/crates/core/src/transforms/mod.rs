//! Coordinate-frame changes applied to each N×C token slab: the separable 2D
//! orthonormal DCT-II and the scaled 2D Walsh–Hadamard transform.

pub mod dct;
pub mod hadamard;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dct::{dct_matrix, dct_naive, DctPlan};
pub use hadamard::{fwht, hadamard_matrix, HadamardMatrix};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Hadamard,
    Dct,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Hadamard => "hadamard",
            TransformKind::Dct => "dct",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hadamard" | "wht" => Ok(TransformKind::Hadamard),
            "dct" => Ok(TransformKind::Dct),
            other => Err(Error::validation(format!(
                "unknown transform `{other}` (expected `hadamard` or `dct`)"
            ))),
        }
    }
}

/// Checks the power-of-two requirement on token count and channel width.
pub fn validate_slab(tokens: usize, channels: usize) -> Result<()> {
    if !tokens.is_power_of_two() || !channels.is_power_of_two() {
        return Err(Error::validation(format!(
            "2D transforms need the sequence length N ({tokens}) and the channel \
             dimension C ({channels}) to be integer powers of 2"
        )));
    }
    Ok(())
}

/// A 2D transform over row-major `tokens × channels` slabs, batched over any
/// number of consecutive slabs.
///
/// Rows (the channel axis) are transformed first, then columns (the token axis).
#[derive(Clone, Debug)]
pub struct Transform2d<T: Element> {
    kind: TransformKind,
    tokens: usize,
    channels: usize,
    row_plan: Option<DctPlan<T>>,
    col_plan: Option<DctPlan<T>>,
    hadamard_scale: T,
}

impl<T: Element> Transform2d<T> {
    pub fn new(kind: TransformKind, tokens: usize, channels: usize) -> Result<Self> {
        validate_slab(tokens, channels)?;
        let (row_plan, col_plan) = match kind {
            TransformKind::Dct => (Some(DctPlan::new(channels)?), Some(DctPlan::new(tokens)?)),
            TransformKind::Hadamard => (None, None),
        };
        Ok(Transform2d {
            kind,
            tokens,
            channels,
            row_plan,
            col_plan,
            hadamard_scale: T::ONE / T::from_usize(tokens * channels),
        })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn slab_len(&self) -> usize {
        self.tokens * self.channels
    }

    fn slabs<'a>(&self, data: &'a mut [T]) -> std::slice::ChunksExactMut<'a, T> {
        assert_eq!(
            data.len() % self.slab_len(),
            0,
            "buffer is not a whole number of {}x{} slabs",
            self.tokens,
            self.channels
        );
        data.chunks_exact_mut(self.slab_len())
    }

    /// Applies the transform in place to every slab in `data`.
    pub fn forward(&self, data: &mut [T]) {
        match self.kind {
            TransformKind::Dct => self.dct(data, false),
            TransformKind::Hadamard => self.hadamard(data),
        }
    }

    /// Applies the transpose of the transform in place; this is the backward rule.
    pub fn transpose(&self, data: &mut [T]) {
        match self.kind {
            TransformKind::Dct => self.dct(data, true),
            // H_N X H_C / (NC) is its own transpose.
            TransformKind::Hadamard => self.hadamard(data),
        }
    }

    fn dct(&self, data: &mut [T], transpose: bool) {
        let rows = self.row_plan.as_ref().expect("dct plan");
        let cols = self.col_plan.as_ref().expect("dct plan");
        let (n, c) = (self.tokens, self.channels);
        let mut scratch = vec![T::ZERO; n.max(c)];
        let mut column = vec![T::ZERO; n];
        let by_rows = |slab: &mut [T], scratch: &mut [T]| {
            for row in slab.chunks_exact_mut(c) {
                if transpose {
                    rows.transpose_in_place(row, scratch);
                } else {
                    rows.forward_in_place(row, scratch);
                }
            }
        };
        let mut by_cols = |slab: &mut [T], scratch: &mut [T]| {
            if n == 1 {
                return;
            }
            for j in 0..c {
                for (i, v) in column.iter_mut().enumerate() {
                    *v = slab[i * c + j];
                }
                if transpose {
                    cols.transpose_in_place(&mut column, scratch);
                } else {
                    cols.forward_in_place(&mut column, scratch);
                }
                for (i, v) in column.iter().enumerate() {
                    slab[i * c + j] = *v;
                }
            }
        };
        for slab in self.slabs(data) {
            if transpose {
                by_cols(slab, &mut scratch);
                by_rows(slab, &mut scratch);
            } else {
                by_rows(slab, &mut scratch);
                by_cols(slab, &mut scratch);
            }
        }
    }

    fn hadamard(&self, data: &mut [T]) {
        let (n, c) = (self.tokens, self.channels);
        let scale = self.hadamard_scale;
        for slab in self.slabs(data) {
            for row in slab.chunks_exact_mut(c) {
                hadamard::fwht_unchecked(row);
            }
            hadamard::fwht_columns(slab, n, c);
            for v in slab.iter_mut() {
                *v *= scale;
            }
        }
    }
}

fn slab_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [n, c] | [_, n, c] => Ok((*n, *c)),
        _ => Err(Error::shape(format!(
            "2D transform expects [N, C] or [B, N, C], got {shape:?}"
        ))),
    }
}

fn apply_2d<T: Element>(kind: TransformKind, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c) = slab_dims(x.shape())?;
    let t = Transform2d::new(kind, n, c)?;
    let mut out = x.data().to_vec();
    t.forward(&mut out);
    Tensor::new(x.shape(), out)
}

/// Orthonormal 2D DCT-II of an `[N, C]` matrix or a `[B, N, C]` batch.
pub fn dct2d<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    apply_2d(TransformKind::Dct, x)
}

/// `H_N · X · H_C / (N·C)` of an `[N, C]` matrix or a `[B, N, C]` batch.
pub fn hadamard2d<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    apply_2d(TransformKind::Hadamard, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_dc_only() {
        let x = Tensor::<f64>::ones(&[4, 4]);
        let d = dct2d(&x).unwrap();
        assert!((d.data()[0] - 4.0).abs() < 1e-12);
        assert!(d.data()[1..].iter().all(|v| v.abs() < 1e-12));

        let h = hadamard2d(&x).unwrap();
        let mut expected = [0.0; 16];
        expected[0] = 1.0;
        assert_eq!(h.data(), &expected[..]);
    }

    #[test]
    fn rejects_non_power_of_two_slab() {
        let x = Tensor::<f64>::ones(&[6, 4]);
        assert!(matches!(dct2d(&x), Err(Error::Validation(_))));
        assert!(matches!(hadamard2d(&x), Err(Error::Validation(_))));
        assert!(matches!(
            dct2d(&Tensor::<f64>::ones(&[4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn kind_parses() {
        assert_eq!("DCT".parse::<TransformKind>().unwrap(), TransformKind::Dct);
        assert_eq!(
            "hadamard".parse::<TransformKind>().unwrap(),
            TransformKind::Hadamard
        );
        assert!("fft".parse::<TransformKind>().is_err());
    }
}
