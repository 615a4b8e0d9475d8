use super::{ParamStore, Real};
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are kept in `f64`, one array per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moment(&self, index: usize) -> Option<&[f64]> {
        self.m.get(index).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[f64]> {
        self.v.get(index).map(Vec::as_slice)
    }

    /// Applies one update using the gradients stored on each tensor. A missing
    /// gradient counts as zero. Nothing is modified if any gradient is non-finite.
    pub fn step<T: Real>(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        for (name, t) in params.iter() {
            if let Some(g) = &t.grad {
                if g.len() != t.numel() {
                    return Err(Error::dim(
                        "adam_step",
                        name.to_string(),
                        t.numel(),
                        g.len(),
                    ));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(name.to_string()));
                }
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::dim(
                "adam_step",
                "parameter count",
                self.m.len(),
                params.len(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (name, tensor)) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if m.len() != tensor.numel() {
                return Err(Error::dim(
                    "adam_step",
                    name.to_string(),
                    m.len(),
                    tensor.numel(),
                ));
            }
            let grad = tensor.grad.take();
            for (j, p) in tensor.data_mut().iter_mut().enumerate() {
                let gj = grad.as_ref().map_or(0.0, |g| g[j].as_f64());
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *p = T::from_f64(p.as_f64() - self.lr * mh / (vh.sqrt() + self.eps));
            }
            tensor.grad = grad;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn scalar_store(v: f64, g: Option<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let mut t = Tensor::scalar(v).with_grad();
        t.grad = g.map(|g| vec![g]);
        s.insert("p", t);
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.25, Some(0.0));
        let mut adam = AdamState::new(1e-4);
        adam.step(&mut s).unwrap();
        assert_eq!(s.get("p").unwrap().data(), &[0.25]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let mut s = scalar_store(0.0, Some(1.0));
        let mut adam = AdamState::new(1e-4);
        adam.step(&mut s).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn counter_increments() {
        let mut s = scalar_store(0.0, Some(1.0));
        let mut adam = AdamState::new(1e-4);
        adam.step(&mut s).unwrap();
        assert_eq!(adam.step, 1);
        adam.step(&mut s).unwrap();
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut s = scalar_store(0.5, Some(f64::NAN));
        let mut adam = AdamState::new(1e-4);
        let err = adam.step(&mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "p"));
        assert_eq!(s.get("p").unwrap().data(), &[0.5]);
        assert_eq!(adam.step, 0);
    }
}
