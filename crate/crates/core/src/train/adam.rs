use std::collections::BTreeMap;

use crate::autograd::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Bias-corrected Adam. Entries held at zero by a parameter mask are never
/// updated and keep zero moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of completed steps.
    pub t: u64,
    pub state: BTreeMap<String, AdamState<T>>,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, t: 0, state: BTreeMap::new() }
    }

    /// Advances the step counter; call once per optimizer step before
    /// [`Adam::update`].
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Applies one update to `p` with gradient `grad` (scaled by
    /// `grad_scale`) at learning rate `lr`.
    pub fn update(&mut self, p: &mut Parameter<T>, grad: &Tensor<T>, lr: f64, grad_scale: f64) {
        assert!(self.t >= 1, "begin_step must precede update");
        assert_eq!(p.value.shape(), grad.shape(), "gradient shape for {}", p.name);
        let st = self
            .state
            .entry(p.name.clone())
            .or_insert_with(|| AdamState { m: Tensor::zeros(p.value.shape()), v: Tensor::zeros(p.value.shape()) });
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let bc1 = T::lit(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - self.beta2.powi(self.t as i32));
        let (lr, eps, gs) = (T::lit(lr), T::lit(self.eps), T::lit(grad_scale));
        let mask = p.mask.as_ref().map(|m| m.data());
        let values = p.value.data_mut();
        let (m, v) = (st.m.data_mut(), st.v.data_mut());
        for i in 0..values.len() {
            if mask.is_some_and(|mk| mk[i] == T::zero()) {
                m[i] = T::zero();
                v[i] = T::zero();
                continue;
            }
            let g = grad.data()[i] * gs;
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            values[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }

    /// Zeroes the moments of masked entries, e.g. right after condensation.
    pub fn apply_mask(&mut self, p: &Parameter<T>) {
        let (Some(mask), Some(st)) = (&p.mask, self.state.get_mut(&p.name)) else { return };
        for (i, &mk) in mask.data().iter().enumerate() {
            if mk == T::zero() {
                st.m.data_mut()[i] = T::zero();
                st.v.data_mut()[i] = T::zero();
            }
        }
    }
}
