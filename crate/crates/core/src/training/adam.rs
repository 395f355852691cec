use crate::scalar::{lit, Real};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for a list of weight tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `shapes` (tensor lengths).
    pub fn new(lengths: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<T>> = lengths.into_iter().map(|n| vec![T::zero(); n]).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// One update `w -= lr · m̂ / (√v̂ + ε)`.
    pub fn update(&mut self, weights: Vec<&mut [T]>, grads: Vec<&[T]>, learning_rate: f64) {
        assert_eq!(weights.len(), self.m.len(), "tensor count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count changed");
        self.step += 1;
        let b1 = lit::<T>(ADAM_BETA1);
        let b2 = lit::<T>(ADAM_BETA2);
        let one = T::one();
        let c1 = lit::<T>(1.0 - ADAM_BETA1.powi(self.step.min(i32::MAX as u64) as i32));
        let c2 = lit::<T>(1.0 - ADAM_BETA2.powi(self.step.min(i32::MAX as u64) as i32));
        let lr = lit::<T>(learning_rate);
        let eps = lit::<T>(ADAM_EPSILON);
        for (((w, g), m), v) in weights.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(w.len(), m.len(), "tensor shape changed");
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
