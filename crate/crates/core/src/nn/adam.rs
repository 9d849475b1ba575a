use crate::{Error, Result};

/// Adam moments and hyperparameters for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut s = AdamState::new(3, 1e-3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        // step 1: m_hat = g, v_hat = g², update = lr·g/(|g| + eps)
        let lr = 1e-3;
        let g = [0.5, -2.0, 1e-2];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3, lr);
        adam_step(&mut p, &g, &mut s).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - lr).abs() < lr * 1e-5);
            assert_eq!(pi.signum(), -gi.signum());
        }
    }

    #[test]
    fn deterministic_and_counting() {
        let mut a = (vec![0.1, 0.2], AdamState::new(2, 0.01));
        let mut b = a.clone();
        for _ in 0..3 {
            adam_step(&mut a.0, &[0.3, -0.1], &mut a.1).unwrap();
            adam_step(&mut b.0, &[0.3, -0.1], &mut b.1).unwrap();
        }
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.step_count(), 3);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2, 0.01);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s).is_err());
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s).is_err());
    }
}
