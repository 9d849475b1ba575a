//! Comparison advising strategies: no advising, early advising, random
//! advising, Q-importance advising and RND-novelty advising.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, Activation, AdamState, Mlp};
use crate::selector::DistanceQueue;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    A7,
    Na,
    Ea,
    Ra,
    Iaa,
    Ana,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::A7,
        StrategyKind::Na,
        StrategyKind::Ea,
        StrategyKind::Ra,
        StrategyKind::Iaa,
        StrategyKind::Ana,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::A7 => "a7",
            StrategyKind::Na => "na",
            StrategyKind::Ea => "ea",
            StrategyKind::Ra => "ra",
            StrategyKind::Iaa => "iaa",
            StrategyKind::Ana => "ana",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; expected one of a7, na, ea, ra, iaa, ana"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub random_probability: f64,
    /// Fixed importance threshold; adaptive percentile when absent.
    pub iaa_threshold: Option<f64>,
    pub iaa_queue_len: usize,
    pub iaa_percentile: f64,
    pub rnd_hidden: usize,
    pub rnd_output: usize,
    pub rnd_learning_rate: f64,
    pub ana_queue_len: usize,
    pub ana_percentile: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            random_probability: 0.5,
            iaa_threshold: None,
            iaa_queue_len: 200,
            iaa_percentile: 0.5,
            rnd_hidden: 64,
            rnd_output: 16,
            rnd_learning_rate: 1e-4,
            ana_queue_len: 200,
            ana_percentile: 0.7,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("baselines: {m}")));
        if !(0.0..=1.0).contains(&self.random_probability) {
            return bad("random_probability must lie in [0, 1]");
        }
        if self.iaa_queue_len == 0 || self.ana_queue_len == 0 {
            return bad("queue lengths must be positive");
        }
        for p in [self.iaa_percentile, self.ana_percentile] {
            if !(p > 0.0 && p <= 1.0) {
                return bad("percentiles must lie in (0, 1]");
            }
        }
        if self.rnd_hidden == 0 || self.rnd_output == 0 || self.rnd_learning_rate <= 0.0 {
            return bad("RND widths and learning rate must be positive");
        }
        Ok(())
    }
}

/// Early advising: ask while budget remains.
pub fn decide_ea(budget: u64) -> bool {
    budget > 0
}

/// Random advising: Bernoulli(`p`) while budget remains.
pub fn decide_ra<R: Rng + ?Sized>(rng: &mut R, p: f64, budget: u64) -> bool {
    // draw unconditionally so the stream does not depend on the budget
    let coin = rng.gen::<f64>() < p;
    coin && budget > 0
}

/// `max(Q) − min(Q)`.
pub fn importance(q_values: &[f64]) -> Result<f64> {
    if q_values.is_empty() {
        return Err(Error::EmptyDataset("Q-values"));
    }
    let max = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Advise iff the Q-spread exceeds `threshold`.
pub fn decide_iaa(q_values: &[f64], threshold: f64) -> Result<bool> {
    Ok(importance(q_values)? > threshold)
}

/// Importance advising with either a fixed or an adaptive threshold.
#[derive(Debug, Clone)]
pub struct ImportanceAdvisor {
    fixed: Option<f64>,
    queue: DistanceQueue,
}

impl ImportanceAdvisor {
    pub fn new(cfg: &BaselineConfig) -> Self {
        Self {
            fixed: cfg.iaa_threshold,
            queue: DistanceQueue::new(cfg.iaa_queue_len, cfg.iaa_percentile),
        }
    }

    /// Returns `(importance, threshold, advise)`; the adaptive threshold
    /// advises unconditionally while its queue fills.
    pub fn decide(&mut self, q_values: &[f64]) -> Result<(f64, Option<f64>, bool)> {
        let imp = importance(q_values)?;
        let threshold = match self.fixed {
            Some(t) => Some(t),
            None => {
                let t = self.queue.threshold();
                self.queue.push(imp);
                t
            }
        };
        let advise = match threshold {
            Some(t) => decide_iaa(q_values, t)?,
            None => true,
        };
        Ok((imp, threshold, advise))
    }
}

/// Random network distillation: a frozen random target and a predictor
/// trained only on advised states.
#[derive(Debug, Clone)]
pub struct RndPair {
    target: Mlp,
    predictor: Mlp,
    adam: AdamState,
}

impl RndPair {
    pub fn new(state_dim: usize, hidden: usize, output: usize, lr: f64, seed: u64) -> Result<Self> {
        let sizes = [state_dim, hidden, output];
        let target = Mlp::new(&sizes, Activation::Identity, 0.0, seed)?;
        let predictor = Mlp::new(&sizes, Activation::Identity, 0.0, seed.wrapping_add(1))?;
        Ok(Self {
            adam: AdamState::new(predictor.num_params(), lr),
            target,
            predictor,
        })
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp {
        &mut self.predictor
    }

    /// `‖target(s) − predictor(s)‖²`.
    pub fn novelty(&self, state: &[f64]) -> Result<f64> {
        let t = self.target.predict(state)?;
        let p = self.predictor.predict(state)?;
        Ok(t.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// One Adam step on the predictor toward the target at `state`.
    pub fn update(&mut self, state: &[f64]) -> Result<()> {
        let t = self.target.predict(state)?;
        let (p, cache) = self.predictor.forward(state, None)?;
        let grad: Vec<f64> = p.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect();
        let (g, _) = self.predictor.backward(&cache, &grad)?;
        adam_step(self.predictor.params_mut(), &g, &mut self.adam)
    }
}

/// RND novelty with the same adaptive percentile threshold as the
/// contrastive selector.
#[derive(Debug, Clone)]
pub struct NoveltyAdvisor {
    rnd: RndPair,
    queue: DistanceQueue,
}

impl NoveltyAdvisor {
    pub fn new(state_dim: usize, cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            rnd: RndPair::new(state_dim, cfg.rnd_hidden, cfg.rnd_output, cfg.rnd_learning_rate, seed)?,
            queue: DistanceQueue::new(cfg.ana_queue_len, cfg.ana_percentile),
        })
    }

    pub fn rnd(&self) -> &RndPair {
        &self.rnd
    }

    /// Returns `(novelty, threshold, advise)`.
    pub fn decide(&mut self, state: &[f64]) -> Result<(f64, Option<f64>, bool)> {
        let n = self.rnd.novelty(state)?;
        let threshold = self.queue.threshold();
        self.queue.push(n);
        Ok((n, threshold, threshold.is_none_or(|t| n > t)))
    }

    /// Called only for states where advice was actually taken.
    pub fn advised(&mut self, state: &[f64]) -> Result<()> {
        self.rnd.update(state)
    }
}
