//! AdamW with decoupled weight decay.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::{Model, ParamRole};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// Per-parameter moment estimates and the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T: Element> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Element> AdamWState<T> {
    /// Zeroed moments for every parameter of `model`.
    pub fn new(model: &Model<T>) -> Self {
        Self::with_sizes(model.params().iter().map(|p| p.tensor.len()))
    }

    pub fn with_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::ZERO; n], vec![T::ZERO; n]))
            .unzip();
        AdamWState { m, v, t: 0 }
    }

    /// One update of every parameter from its accumulated `grad`.
    ///
    /// Weight decay applies to matrix weights only. The step is rejected before
    /// any parameter changes if a gradient is missing or non-finite.
    pub fn step(&mut self, model: &mut Model<T>, lr: f64, hyper: &AdamWHyper) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, model has {}",
                self.m.len(),
                params.len()
            )));
        }
        for p in &params {
            match &p.tensor.grad {
                None => {
                    return Err(Error::validation(format!(
                        "parameter `{}` has no gradient",
                        p.spec.name
                    )))
                }
                Some(g) if g.iter().any(|v| !v.is_finite()) => {
                    return Err(Error::NonFinite(format!(
                        "gradient of `{}` is not finite",
                        p.spec.name
                    )))
                }
                Some(_) => {}
            }
        }
        self.t += 1;
        let bias = BiasCorrection::at(self.t, hyper);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let decay = if p.spec.role == ParamRole::Weight {
                hyper.weight_decay
            } else {
                0.0
            };
            let grad = p.tensor.grad.take().expect("checked above");
            adamw_update(p.tensor.data_mut(), &grad, m, v, lr, decay, hyper, bias);
            p.tensor.grad = Some(grad);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiasCorrection {
    first: f64,
    second: f64,
}

impl BiasCorrection {
    /// `1 - β^t` for both moments at step `t` (1-based).
    pub fn at(t: u64, hyper: &AdamWHyper) -> Self {
        let t = t as i32;
        BiasCorrection {
            first: 1.0 - hyper.beta1.powi(t),
            second: 1.0 - hyper.beta2.powi(t),
        }
    }
}

/// Elementwise AdamW update of one tensor:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ(1 − lr·wd) − lr · (m/(1−β₁ᵗ)) / (√(v/(1−β₂ᵗ)) + ε)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Element>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: f64,
    weight_decay: f64,
    hyper: &AdamWHyper,
    bias: BiasCorrection,
) {
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one_b1 = T::from_f64(1.0 - hyper.beta1);
    let one_b2 = T::from_f64(1.0 - hyper.beta2);
    let bc1 = T::from_f64(bias.first);
    let bc2 = T::from_f64(bias.second);
    let eps = T::from_f64(hyper.eps);
    let lr_t = T::from_f64(lr);
    let shrink = T::from_f64(1.0 - lr * weight_decay);
    for (((p, &g), mi), vi) in param
        .iter_mut()
        .zip(grad)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = b1 * *mi + one_b1 * g;
        *vi = b2 * *vi + one_b2 * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p = *p * shrink - lr_t * m_hat / (v_hat.sqrt() + eps);
    }
}
