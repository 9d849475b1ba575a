//! Action-conditioned BYOL: the online branch encodes `s_t`, projects it,
//! and, given the one-hot action, predicts the target branch's projection
//! of `s_{t+1}`. Only the online branch receives gradients; the target
//! branch follows it by exponential moving average.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dqn::Transition;
use crate::nn::{adam_step, l2_normalize, normalized_mse, Activation, AdamState, Mlp};
use crate::{Error, Result};

use super::SelectorConfig;

#[derive(Debug, Clone)]
pub struct ActionByol {
    pub encoder: Mlp,
    pub projector: Mlp,
    pub predictor: Mlp,
    pub target_encoder: Mlp,
    pub target_projector: Mlp,
    /// Target decay rate τ in `ξ ← τξ + (1 − τ)θ`.
    pub tau: f64,
    num_actions: usize,
    adam: [AdamState; 3],
}

/// Gradients of the online branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ByolGrads {
    pub encoder: Vec<f64>,
    pub projector: Vec<f64>,
    pub predictor: Vec<f64>,
}

impl ByolGrads {
    fn zeros(m: &ActionByol) -> Self {
        Self {
            encoder: vec![0.0; m.encoder.num_params()],
            projector: vec![0.0; m.projector.num_params()],
            predictor: vec![0.0; m.predictor.num_params()],
        }
    }

    fn scale(&mut self, k: f64) {
        for g in [&mut self.encoder, &mut self.projector, &mut self.predictor] {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
}

impl ActionByol {
    pub fn new(state_dim: usize, num_actions: usize, cfg: &SelectorConfig, seed: u64) -> Result<Self> {
        let encoder = Mlp::new(
            &[state_dim, cfg.encoder_hidden, cfg.feature_dim],
            Activation::Identity,
            0.0,
            seed,
        )?;
        let projector = Mlp::new(
            &[cfg.feature_dim, cfg.projector_hidden, cfg.projection_dim],
            Activation::Identity,
            0.0,
            seed.wrapping_add(1),
        )?;
        let predictor = Mlp::new(
            &[
                cfg.projection_dim + num_actions,
                cfg.predictor_hidden,
                cfg.projection_dim,
            ],
            Activation::Identity,
            0.0,
            seed.wrapping_add(2),
        )?;
        let lr = cfg.learning_rate;
        Ok(Self {
            target_encoder: encoder.clone(),
            target_projector: projector.clone(),
            adam: [
                AdamState::new(encoder.num_params(), lr),
                AdamState::new(projector.num_params(), lr),
                AdamState::new(predictor.num_params(), lr),
            ],
            encoder,
            projector,
            predictor,
            tau: cfg.tau,
            num_actions,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn predictor_input(&self, z: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                index: action,
                len: self.num_actions,
            });
        }
        let mut input = Vec::with_capacity(z.len() + self.num_actions);
        input.extend_from_slice(z);
        input.extend((0..self.num_actions).map(|i| if i == action { 1.0 } else { 0.0 }));
        Ok(input)
    }

    /// Online prediction `q_θ(g_θ(f_θ(s)), a)`.
    pub fn predict(&self, state: &[f64], action: usize) -> Result<Vec<f64>> {
        let z = self.projector.predict(&self.encoder.predict(state)?)?;
        self.predictor.predict(&self.predictor_input(&z, action)?)
    }

    /// Target projection `g_ξ(f_ξ(s'))`.
    pub fn target_projection(&self, next_state: &[f64]) -> Result<Vec<f64>> {
        self.target_projector
            .predict(&self.target_encoder.predict(next_state)?)
    }

    /// `2 − 2·cos(prediction, target projection)` and online gradients.
    pub fn loss(&self, state: &[f64], action: usize, next_state: &[f64]) -> Result<(f64, ByolGrads)> {
        let mut grads = ByolGrads::zeros(self);
        let loss = self.loss_into(state, action, next_state, &mut grads)?;
        Ok((loss, grads))
    }

    fn loss_into(
        &self,
        state: &[f64],
        action: usize,
        next_state: &[f64],
        grads: &mut ByolGrads,
    ) -> Result<f64> {
        let target = self.target_projection(next_state)?;
        let (x, enc_cache) = self.encoder.forward(state, None)?;
        let (z, proj_cache) = self.projector.forward(&x, None)?;
        let (p, pred_cache) = self
            .predictor
            .forward(&self.predictor_input(&z, action)?, None)?;
        let (loss, dp) = normalized_mse(&p, &target)?;
        let d_in = self
            .predictor
            .backward_into(&pred_cache, &dp, &mut grads.predictor)?;
        let dx = self
            .projector
            .backward_into(&proj_cache, &d_in[..z.len()], &mut grads.projector)?;
        self.encoder
            .backward_into(&enc_cache, &dx, &mut grads.encoder)?;
        Ok(loss)
    }

    /// `ξ ← τξ + (1 − τ)θ` for the target encoder and projector.
    pub fn ema_update(&mut self) {
        let tau = self.tau;
        for (target, online) in [
            (&mut self.target_encoder, &self.encoder),
            (&mut self.target_projector, &self.projector),
        ] {
            for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
                *t = tau * *t + (1.0 - tau) * o;
            }
        }
    }

    fn apply(&mut self, grads: &ByolGrads) -> Result<()> {
        adam_step(self.encoder.params_mut(), &grads.encoder, &mut self.adam[0])?;
        adam_step(self.projector.params_mut(), &grads.projector, &mut self.adam[1])?;
        adam_step(self.predictor.params_mut(), &grads.predictor, &mut self.adam[2])
    }

    /// Shuffled minibatch training, one EMA update per optimizer step.
    /// Returns the mean loss of every epoch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        data: &[&Transition],
        epochs: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("action-BYOL training set"));
        }
        let batch_size = batch_size.max(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch_size) {
                let mut grads = ByolGrads::zeros(self);
                for &i in chunk {
                    let t = data[i];
                    total += self.loss_into(&t.state, t.action, &t.next_state, &mut grads)?;
                }
                grads.scale(1.0 / chunk.len() as f64);
                self.apply(&grads)?;
                self.ema_update();
            }
            epoch_losses.push(total / data.len() as f64);
        }
        Ok(epoch_losses)
    }

    /// L2-normalized encoder output, the state feature.
    pub fn extract_feature(&self, state: &[f64]) -> Result<Vec<f64>> {
        l2_normalize(&self.encoder.predict(state)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cosine_similarity, loss::norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SelectorConfig {
        SelectorConfig {
            encoder_hidden: 12,
            feature_dim: 8,
            projector_hidden: 10,
            projection_dim: 6,
            predictor_hidden: 10,
            ..SelectorConfig::default()
        }
    }

    fn transition(rng: &mut ChaCha8Rng, dim: usize) -> Transition {
        let s: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Transition {
            state: s,
            action: rng.gen_range(0..4),
            reward: 0.0,
            next_state: s2,
            terminal: false,
            advised: false,
        }
    }

    #[test]
    fn loss_is_two_minus_two_cos() {
        let m = ActionByol::new(5, 4, &small_cfg(), 3).unwrap();
        let s = [0.1, 0.2, -0.3, 0.4, 0.5];
        let s2 = [0.5, -0.1, 0.0, 0.2, 0.3];
        let (l, _) = m.loss(&s, 2, &s2).unwrap();
        let cos = cosine_similarity(&m.predict(&s, 2).unwrap(), &m.target_projection(&s2).unwrap()).unwrap();
        assert!((l - (2.0 - 2.0 * cos)).abs() < 1e-12);
        assert!((0.0..=4.0).contains(&l));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = ActionByol::new(5, 4, &small_cfg(), 7).unwrap();
        // decouple target from online so the stop-gradient matters
        m.target_encoder = Mlp::new(m.encoder.sizes(), Activation::Identity, 0.0, 99).unwrap();
        let t = transition(&mut rng, 5);
        let (_, g) = m.loss(&t.state, t.action, &t.next_state).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for part in 0..3 {
            let n = [m.encoder.num_params(), m.projector.num_params(), m.predictor.num_params()][part];
            for i in 0..n {
                let mut p = m.clone();
                fn net(p: &mut ActionByol, part: usize) -> &mut Mlp {
                    match part {
                        0 => &mut p.encoder,
                        1 => &mut p.projector,
                        _ => &mut p.predictor,
                    }
                }
                net(&mut p, part).params_mut()[i] += h;
                let up = p.loss(&t.state, t.action, &t.next_state).unwrap().0;
                net(&mut p, part).params_mut()[i] -= 2.0 * h;
                let down = p.loss(&t.state, t.action, &t.next_state).unwrap().0;
                let fd = (up - down) / (2.0 * h);
                let a = [&g.encoder, &g.projector, &g.predictor][part][i];
                if fd.abs().max(a.abs()) > 1e-6 {
                    worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()));
                }
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn ema_extremes() {
        let mut m = ActionByol::new(5, 4, &small_cfg(), 1).unwrap();
        m.encoder.params_mut().iter_mut().for_each(|p| *p += 0.5);
        let before = m.target_encoder.params().to_vec();
        m.tau = 1.0;
        m.ema_update();
        assert_eq!(m.target_encoder.params(), &before[..]);
        m.tau = 0.0;
        m.ema_update();
        assert_eq!(m.target_encoder.params(), m.encoder.params());
        assert_eq!(m.target_projector.params(), m.projector.params());
    }

    #[test]
    fn ema_half_step() {
        let mut m = ActionByol::new(5, 4, &small_cfg(), 1).unwrap();
        let old = m.target_encoder.params().to_vec();
        let doubled: Vec<f64> = old.iter().map(|p| 2.0 * p).collect();
        m.encoder.params_mut().copy_from_slice(&doubled);
        m.tau = 0.5;
        m.ema_update();
        for (n, o) in m.target_encoder.params().iter().zip(&old) {
            assert!((n - 1.5 * o).abs() < 1e-15);
        }
    }

    #[test]
    fn ema_fixed_point() {
        let mut m = ActionByol::new(5, 4, &small_cfg(), 2).unwrap();
        let before = m.target_projector.params().to_vec();
        m.ema_update();
        for (a, b) in m.target_projector.params().iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn features_are_unit_norm_and_deterministic() {
        let m = ActionByol::new(5, 4, &small_cfg(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let s: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = m.extract_feature(&s).unwrap();
            assert!((norm(&f) - 1.0).abs() < 1e-12);
            assert_eq!(f, m.extract_feature(&s).unwrap());
            let raw = m.encoder.forward(&s, None).unwrap().0;
            let n = norm(&raw);
            for (a, b) in f.iter().zip(&raw) {
                assert!((a - b / n).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_transition_overfits() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut m = ActionByol::new(5, 4, &small_cfg(), 11).unwrap();
        let t = transition(&mut rng, 5);
        let data = vec![&t; 32];
        let losses = m.train(&data, 300, 32, &mut rng).unwrap();
        assert!(*losses.last().unwrap() < 0.01 * losses[0], "{losses:?}");
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut m = ActionByol::new(5, 4, &small_cfg(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(m.train(&[], 1, 32, &mut rng), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn training_reduces_loss_across_seeds() {
        let mut decreased = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            // a deterministic toy dynamics: s' is a fixed function of (s, a)
            let data: Vec<Transition> = (0..128)
                .map(|_| {
                    let s: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let a = rng.gen_range(0..4);
                    let mut s2 = s.clone();
                    s2[a] += 0.5;
                    Transition {
                        state: s,
                        action: a,
                        reward: 0.0,
                        next_state: s2,
                        terminal: false,
                        advised: false,
                    }
                })
                .collect();
            let refs: Vec<&Transition> = data.iter().collect();
            let mut m = ActionByol::new(5, 4, &small_cfg(), seed).unwrap();
            let losses = m.train(&refs, 20, 32, &mut rng).unwrap();
            if losses[19] < losses[0] {
                decreased += 1;
            }
        }
        assert!(decreased >= 9, "{decreased}/10 seeds decreased");
    }
}
