use crate::nn::{Activation, ForwardCache, Mlp};
use crate::{Error, Result};

/// Dueling Q-network: shared ReLU trunk with value and advantage heads,
/// `Q(s,a) = V(s) + A(s,a) − mean_a' A(s,a')`.
#[derive(Debug, Clone)]
pub struct DuelingQNet {
    pub trunk: Mlp,
    pub value: Mlp,
    pub advantage: Mlp,
}

/// Gradients for each part of a [`DuelingQNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingGrads {
    pub trunk: Vec<f64>,
    pub value: Vec<f64>,
    pub advantage: Vec<f64>,
}

impl DuelingGrads {
    pub fn zeros(net: &DuelingQNet) -> Self {
        Self {
            trunk: vec![0.0; net.trunk.num_params()],
            value: vec![0.0; net.value.num_params()],
            advantage: vec![0.0; net.advantage.num_params()],
        }
    }
}

pub struct DuelingCache {
    trunk: ForwardCache,
    value: ForwardCache,
    advantage: ForwardCache,
}

impl DuelingQNet {
    /// `hidden` lists trunk widths; the last one feeds both heads.
    pub fn new(state_dim: usize, hidden: &[usize], num_actions: usize, seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("dueling trunk needs at least one hidden layer".into()));
        }
        if num_actions == 0 {
            return Err(Error::Config("no actions".into()));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        let feat = *hidden.last().unwrap();
        Ok(Self {
            trunk: Mlp::new(&sizes, Activation::Relu, 0.0, seed)?,
            value: Mlp::new(&[feat, 1], Activation::Identity, 0.0, seed.wrapping_add(1))?,
            advantage: Mlp::new(
                &[feat, num_actions],
                Activation::Identity,
                0.0,
                seed.wrapping_add(2),
            )?,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.advantage.output_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Raw head outputs `(V(s), A(s, ·))`.
    pub fn heads(&self, state: &[f64]) -> Result<(f64, Vec<f64>)> {
        let h = self.trunk.predict(state)?;
        Ok((self.value.predict(&h)?[0], self.advantage.predict(&h)?))
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (v, a) = self.heads(state)?;
        Ok(combine(v, &a))
    }

    pub fn forward(&self, state: &[f64]) -> Result<(Vec<f64>, DuelingCache)> {
        let (h, trunk) = self.trunk.forward(state, None)?;
        let (v, value) = self.value.forward(&h, None)?;
        let (a, advantage) = self.advantage.forward(&h, None)?;
        Ok((
            combine(v[0], &a),
            DuelingCache {
                trunk,
                value,
                advantage,
            },
        ))
    }

    /// Accumulates gradients for `∂loss/∂Q = q_grad`.
    pub fn backward_into(
        &self,
        cache: &DuelingCache,
        q_grad: &[f64],
        grads: &mut DuelingGrads,
    ) -> Result<()> {
        let n = q_grad.len() as f64;
        let total: f64 = q_grad.iter().sum();
        // ∂Q_j/∂V = 1, ∂Q_j/∂A_k = δ_jk − 1/n
        let adv_grad: Vec<f64> = q_grad.iter().map(|g| g - total / n).collect();
        let mut h_grad = self
            .value
            .backward_into(&cache.value, &[total], &mut grads.value)?;
        let h2 = self
            .advantage
            .backward_into(&cache.advantage, &adv_grad, &mut grads.advantage)?;
        for (a, b) in h_grad.iter_mut().zip(h2) {
            *a += b;
        }
        self.trunk
            .backward_into(&cache.trunk, &h_grad, &mut grads.trunk)?;
        Ok(())
    }

    pub fn copy_from(&mut self, other: &DuelingQNet) -> Result<()> {
        self.trunk.copy_from(&other.trunk)?;
        self.value.copy_from(&other.value)?;
        self.advantage.copy_from(&other.advantage)
    }
}

fn combine(v: f64, a: &[f64]) -> Vec<f64> {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|x| v + x - mean).collect()
}
