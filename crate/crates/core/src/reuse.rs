//! Intrinsic reward generator: a behavior-cloned reuse model gated by
//! MC-dropout uncertainty, and the decaying intrinsic reward.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, argmax, checkpoint, nll_loss, Activation, AdamState, Mlp};
use crate::percentile::percentile;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReuseConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Teacher advices between training rounds.
    pub advice_milestone: u64,
    /// Minibatch updates in the first round.
    pub first_round_epochs: usize,
    /// Minibatch updates in every later round.
    pub later_round_epochs: usize,
    /// Stochastic forward passes `K` per uncertainty estimate.
    pub mc_passes: usize,
    pub reuse_probability: f64,
    pub uncertainty_percentile: f64,
    pub lambda_initial: f64,
    pub lambda_horizon: u64,
}

impl Default for ReuseConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dropout_rate: 0.35,
            learning_rate: 1e-4,
            batch_size: 32,
            advice_milestone: 500,
            first_round_epochs: 2_000,
            later_round_epochs: 800,
            mc_passes: 100,
            reuse_probability: 0.5,
            uncertainty_percentile: 0.9,
            lambda_initial: 0.1,
            lambda_horizon: 20_000,
        }
    }
}

impl ReuseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reuse: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive and non-empty");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.learning_rate <= 0.0 || self.batch_size == 0 || self.mc_passes < 2 {
            return bad("need learning_rate > 0, batch_size > 0, mc_passes >= 2");
        }
        if self.advice_milestone == 0 {
            return bad("advice_milestone must be positive");
        }
        if !(0.0..=1.0).contains(&self.reuse_probability) {
            return bad("reuse_probability must lie in [0, 1]");
        }
        if !(self.uncertainty_percentile > 0.0 && self.uncertainty_percentile <= 1.0) {
            return bad("uncertainty_percentile must lie in (0, 1]");
        }
        if self.lambda_initial < 0.0 || self.lambda_horizon == 0 {
            return bad("need lambda_initial >= 0 and lambda_horizon > 0");
        }
        Ok(())
    }

    pub fn lambda(&self) -> LambdaSchedule {
        LambdaSchedule {
            initial: self.lambda_initial,
            horizon: self.lambda_horizon,
        }
    }
}

/// `λ_t = λ₀·max(0, 1 − t/horizon)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub horizon: u64,
}

impl LambdaSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.horizon {
            return 0.0;
        }
        self.initial * (1.0 - step as f64 / self.horizon as f64)
    }
}

/// `λ·tanh(d/d_m)`.
pub fn intrinsic_reward(distance: f64, mean_distance: f64, lambda: f64) -> Result<f64> {
    if !(mean_distance > 0.0) {
        return Err(Error::Degenerate("mean feature distance must be positive"));
    }
    Ok(lambda * (distance / mean_distance).tanh())
}

/// Behavior-cloned imitation of the teacher over advised state-action pairs.
#[derive(Debug, Clone)]
pub struct ReuseModel {
    net: Mlp,
    adam: AdamState,
    pairs: Vec<(Vec<f64>, usize)>,
    threshold: Option<f64>,
    rounds: u64,
    cfg: ReuseConfig,
}

impl ReuseModel {
    pub fn new(state_dim: usize, num_actions: usize, cfg: ReuseConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(num_actions);
        let net = Mlp::new(&sizes, Activation::Identity, cfg.dropout_rate, seed)?;
        Ok(Self::with_network(net, cfg))
    }

    /// Wraps an existing network (its dropout rate is used as-is).
    pub fn with_network(net: Mlp, cfg: ReuseConfig) -> Self {
        Self {
            adam: AdamState::new(net.num_params(), cfg.learning_rate),
            net,
            pairs: Vec::new(),
            threshold: None,
            rounds: 0,
            cfg,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn pairs(&self) -> &[(Vec<f64>, usize)] {
        &self.pairs
    }

    /// `u_r`, set by the latest training round.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn config(&self) -> &ReuseConfig {
        &self.cfg
    }

    pub fn add_pair(&mut self, state: Vec<f64>, action: usize) -> Result<()> {
        if action >= self.net.output_dim() {
            return Err(Error::IndexOutOfRange {
                index: action,
                len: self.net.output_dim(),
            });
        }
        if state.len() != self.net.input_dim() {
            return Err(Error::InputShape {
                expected: self.net.input_dim(),
                got: state.len(),
            });
        }
        self.pairs.push((state, action));
        Ok(())
    }

    /// Epoch count for the next round: the first round is longer.
    pub fn next_round_epochs(&self) -> usize {
        if self.rounds == 0 {
            self.cfg.first_round_epochs
        } else {
            self.cfg.later_round_epochs
        }
    }

    /// Minimizes the mean NLL of the advised actions with dropout active,
    /// `epochs` minibatch updates, then refreshes `u_r`. Returns each
    /// update's pre-step minibatch loss.
    pub fn train<R: Rng + ?Sized>(&mut self, epochs: usize, rng: &mut R) -> Result<Vec<f64>> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset("reuse-model pairs"));
        }
        let n = self.pairs.len();
        let bs = self.cfg.batch_size.min(n);
        let dropout = self.net.dropout_rate() > 0.0;
        let mut losses = Vec::with_capacity(epochs);
        let mut grads = vec![0.0; self.net.num_params()];
        for _ in 0..epochs {
            grads.fill(0.0);
            let mut total = 0.0;
            for _ in 0..bs {
                let (state, action) = &self.pairs[rng.gen_range(0..n)];
                let mask = dropout.then(|| self.net.sample_mask(rng));
                let (logits, cache) = self.net.forward(state, mask.as_ref())?;
                let (loss, g) = nll_loss(&logits, *action)?;
                total += loss;
                self.net.backward_into(&cache, &g, &mut grads)?;
            }
            grads.iter_mut().for_each(|g| *g /= bs as f64);
            adam_step(self.net.params_mut(), &grads, &mut self.adam)?;
            losses.push(total / bs as f64);
        }
        self.rounds += 1;
        self.threshold = Some(self.reuse_threshold(rng)?);
        Ok(losses)
    }

    /// Mean NLL over every stored pair with dropout disabled.
    pub fn dataset_nll(&self) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset("reuse-model pairs"));
        }
        let mut total = 0.0;
        for (s, a) in &self.pairs {
            total += nll_loss(&self.net.predict(s)?, *a)?.0;
        }
        Ok(total / self.pairs.len() as f64)
    }

    /// Mean over actions of the variance of the output logits across `K`
    /// dropout masks.
    pub fn uncertainty<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        let k = self.cfg.mc_passes;
        let actions = self.net.output_dim();
        let dropout = self.net.dropout_rate() > 0.0;
        // Welford, so identical passes give exactly zero variance
        let mut mean = vec![0.0; actions];
        let mut m2 = vec![0.0; actions];
        for i in 0..k {
            let mask = dropout.then(|| self.net.sample_mask(rng));
            let out = self.net.predict_masked(state, mask.as_ref())?;
            for ((mu, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(out) {
                let delta = x - *mu;
                *mu += delta / (i + 1) as f64;
                *s += delta * (x - *mu);
            }
        }
        Ok(m2.iter().map(|s| s / k as f64).sum::<f64>() / actions as f64)
    }

    /// `u_r`: percentile of the uncertainty over every trained state.
    pub fn reuse_threshold<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset("reuse-model pairs"));
        }
        let us = self
            .pairs
            .iter()
            .map(|(s, _)| self.uncertainty(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(percentile(&us, self.cfg.uncertainty_percentile).expect("non-empty"))
    }

    /// Dropout-free argmax of the reuse model.
    pub fn advice(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.net.predict(state)?))
    }

    /// Coin flip with the reuse probability, then the uncertainty gate
    /// `u_s < u_r`; on success, the dropout-free argmax.
    pub fn maybe_reuse<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Option<usize>> {
        let Some(threshold) = self.threshold else {
            return Ok(None);
        };
        if rng.gen::<f64>() >= self.cfg.reuse_probability {
            return Ok(None);
        }
        if self.uncertainty(state, rng)? < threshold {
            Ok(Some(self.advice(state)?))
        } else {
            Ok(None)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.net, path)
    }

    /// Writes the pairs as CSV: `s0,…,s{n-1},action`.
    pub fn save_pairs(&self, path: &Path) -> Result<()> {
        std::fs::write(path, pairs_to_csv(&self.pairs, self.net.input_dim()))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn pairs_to_csv(pairs: &[(Vec<f64>, usize)], state_dim: usize) -> String {
    let mut out = String::new();
    for i in 0..state_dim {
        let _ = write!(out, "s{i},");
    }
    out.push_str("action\n");
    for (s, a) in pairs {
        for v in s {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{a}");
    }
    out
}

pub fn pairs_from_csv(text: &str) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyDataset("pairs CSV"))?;
    let cols = header.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Shape(format!("pairs row {} has {} fields", i + 1, fields.len())));
            }
            let bad = |f: &str| Error::Shape(format!("pairs row {}: bad field {f:?}", i + 1));
            let state = fields[..cols - 1]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
                .collect::<Result<Vec<_>>>()?;
            let action = fields[cols - 1].parse().map_err(|_| bad(fields[cols - 1]))?;
            Ok((state, action))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ReuseConfig {
        ReuseConfig {
            hidden: vec![16],
            mc_passes: 100,
            ..ReuseConfig::default()
        }
    }

    #[test]
    fn lambda_schedule() {
        let s = ReuseConfig::default().lambda();
        assert_eq!(s.value(0), 0.1);
        assert_eq!(s.value(10_000), 0.05);
        assert_eq!(s.value(20_000), 0.0);
        assert_eq!(s.value(25_000), 0.0);
        assert!(s.value(5_000) > s.value(5_001));
    }

    #[test]
    fn reward_examples() {
        assert_eq!(intrinsic_reward(0.0, 0.4, 0.1).unwrap(), 0.0);
        let r = intrinsic_reward(0.4, 0.4, 0.1).unwrap();
        assert!((r - 0.1 * 1f64.tanh()).abs() < 1e-15);
        assert!((r - 0.07616).abs() < 1e-5);
        assert_eq!(intrinsic_reward(0.7, 0.3, 0.0).unwrap(), 0.0);
        assert!(intrinsic_reward(0.1, 0.0, 0.1).is_err());
        assert!(intrinsic_reward(0.1, -1.0, 0.1).is_err());
    }

    #[test]
    fn zero_dropout_gives_zero_uncertainty() {
        let cfg = ReuseConfig {
            dropout_rate: 0.0,
            ..small_cfg()
        };
        let model = ReuseModel::new(5, 4, cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(model.uncertainty(&[0.3, 0.1, 0.9, 0.2, 0.5], &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn constant_network_has_zero_uncertainty() {
        let mut net = Mlp::new(&[3, 8, 2], Activation::Identity, 0.35, 0).unwrap();
        let (w, b) = net.layer_mut(1);
        w.fill(0.0);
        b.copy_from_slice(&[1.5, -0.5]);
        let model = ReuseModel::with_network(net, small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(model.uncertainty(&[1.0, 2.0, 3.0], &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn untrained_model_never_reuses() {
        let model = ReuseModel::new(5, 4, small_cfg(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(model.maybe_reuse(&[0.0; 5], &mut rng).unwrap(), None);
        }
    }

    #[test]
    fn empty_pairs_rejected() {
        let mut model = ReuseModel::new(5, 4, small_cfg(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(model.train(10, &mut rng).is_err());
        assert!(model.reuse_threshold(&mut rng).is_err());
        assert!(model.add_pair(vec![0.0; 5], 4).is_err());
        assert!(model.add_pair(vec![0.0; 3], 0).is_err());
    }

    #[test]
    fn zero_dropout_never_reuses() {
        // u_s ≡ 0 and u_r = 0, so the strict gate never opens
        let cfg = ReuseConfig {
            dropout_rate: 0.0,
            reuse_probability: 1.0,
            ..small_cfg()
        };
        let mut model = ReuseModel::new(3, 2, cfg, 1).unwrap();
        model.add_pair(vec![0.1, 0.2, 0.3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.train(5, &mut rng).unwrap();
        assert_eq!(model.threshold(), Some(0.0));
        assert_eq!(model.maybe_reuse(&[0.1, 0.2, 0.3], &mut rng).unwrap(), None);
    }

    #[test]
    fn high_uncertainty_everywhere_blocks_reuse() {
        let mut model = ReuseModel::new(3, 2, small_cfg(), 1).unwrap();
        model.add_pair(vec![0.1, 0.2, 0.3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.train(1, &mut rng).unwrap();
        model.threshold = Some(-1.0);
        for _ in 0..20 {
            assert_eq!(model.maybe_reuse(&[0.1, 0.2, 0.3], &mut rng).unwrap(), None);
        }
    }

    #[test]
    fn threshold_percentile_rule() {
        assert_eq!(percentile(&[3.0; 7], 0.9), Some(3.0));
        let v: Vec<f64> = [4, 9, 1, 7, 10, 2, 6, 3, 8, 5].iter().map(|&x| x as f64).collect();
        assert_eq!(percentile(&v, 0.9), Some(9.0));
    }

    #[test]
    fn threshold_refreshes_after_retraining() {
        let mut model = ReuseModel::new(3, 2, small_cfg(), 4).unwrap();
        model.add_pair(vec![0.1, 0.2, 0.3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model.train(20, &mut rng).unwrap();
        let first = model.threshold().unwrap();
        model.add_pair(vec![0.9, 0.0, 0.4], 0).unwrap();
        model.train(20, &mut rng).unwrap();
        assert_ne!(model.threshold().unwrap(), first);
        assert_eq!(model.rounds(), 2);
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let net = Mlp::new(&[5, 12, 16, 4], Activation::Identity, 0.35, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = net.sample_mask(&mut rng);
        let x = [0.2, -0.4, 0.9, 0.0, 0.5];
        let (logits, cache) = net.forward(&x, Some(&mask)).unwrap();
        let (_, g_out) = nll_loss(&logits, 3).unwrap();
        let (g, _) = net.backward(&cache, &g_out).unwrap();
        let h = 1e-5;
        let loss = |n: &Mlp| nll_loss(&n.predict_masked(&x, Some(&mask)).unwrap(), 3).unwrap().0;
        for i in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let up = loss(&p);
            p.params_mut()[i] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs());
            assert!(scale < 1e-6 || (fd - g[i]).abs() / scale < 1e-4, "param {i}");
        }
    }

    #[test]
    fn training_reduces_nll_across_seeds() {
        let mut decreased = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = ReuseModel::new(4, 4, small_cfg(), seed).unwrap();
            for _ in 0..40 {
                let s: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                let a = crate::nn::argmax(&s);
                model.add_pair(s, a).unwrap();
            }
            let before = model.dataset_nll().unwrap();
            model.train(300, &mut rng).unwrap();
            if model.dataset_nll().unwrap() < before {
                decreased += 1;
            }
        }
        assert!(decreased >= 9);
    }

    #[test]
    fn pairs_csv_round_trip() {
        let pairs = vec![(vec![0.5, 1.0, 0.0], 2), (vec![0.25, 0.0, 1.0], 0)];
        let csv = pairs_to_csv(&pairs, 3);
        assert!(csv.starts_with("s0,s1,s2,action\n"));
        assert_eq!(pairs_from_csv(&csv).unwrap(), pairs);
    }
}
