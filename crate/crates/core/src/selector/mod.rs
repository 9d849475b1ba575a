//! Contrastive advice selector.
//!
//! A periodically retrained action-BYOL encoder maps states to unit
//! features. Each step the current feature is compared with the running
//! mean of all stored features; the resulting distance is pushed into a
//! fixed-length queue whose percentile is the advising threshold.

mod byol;
mod features;

pub use byol::{ActionByol, ByolGrads};
pub use features::{should_advise, DistanceQueue, FeatureBuffer};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::Transition;
use crate::{Error, Result};

/// How the mean feature similarity becomes the distance `d_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// `d_t = 1 − x_t·x̄`: larger means less like what has been seen.
    Novelty,
    /// `d_t = x_t·x̄`, so advice goes to familiar states.
    Similarity,
}

impl DistanceMode {
    pub fn distance(self, similarity: f64) -> f64 {
        match self {
            DistanceMode::Novelty => 1.0 - similarity,
            DistanceMode::Similarity => similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub encoder_hidden: usize,
    pub feature_dim: usize,
    pub projector_hidden: usize,
    pub projection_dim: usize,
    pub predictor_hidden: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Environment steps between retraining rounds.
    pub retrain_every: u64,
    pub queue_len: usize,
    pub percentile: f64,
    pub distance_mode: DistanceMode,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: 64,
            feature_dim: 16,
            projector_hidden: 32,
            projection_dim: 16,
            predictor_hidden: 32,
            learning_rate: 1e-3,
            tau: 0.996,
            epochs: 20,
            batch_size: 32,
            retrain_every: 1_000,
            queue_len: 200,
            percentile: 0.7,
            distance_mode: DistanceMode::Novelty,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("selector: {m}")));
        if [
            self.encoder_hidden,
            self.feature_dim,
            self.projector_hidden,
            self.projection_dim,
            self.predictor_hidden,
            self.batch_size,
            self.queue_len,
        ]
        .contains(&0)
        {
            return bad("widths, batch_size and queue_len must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return bad("percentile must lie in (0, 1]");
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be positive");
        }
        if self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Outcome of running the selector on one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// `d_t`, absent before the first encoder exists.
    pub distance: Option<f64>,
    /// σ used for this step, absent while the queue is filling.
    pub threshold: Option<f64>,
    pub advise: bool,
}

/// Running mean of distances since the last feature rebuild (`d_m`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RunningMean {
    sum: f64,
    count: u64,
}

#[derive(Debug, Clone)]
pub struct AdviceSelector {
    model: ActionByol,
    features: FeatureBuffer,
    queue: DistanceQueue,
    mode: DistanceMode,
    distances: RunningMean,
    rounds: u64,
    cfg: SelectorConfig,
}

impl AdviceSelector {
    pub fn new(state_dim: usize, num_actions: usize, cfg: SelectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model: ActionByol::new(state_dim, num_actions, &cfg, seed)?,
            features: FeatureBuffer::new(cfg.feature_dim),
            queue: DistanceQueue::new(cfg.queue_len, cfg.percentile),
            mode: cfg.distance_mode,
            distances: RunningMean::default(),
            rounds: 0,
            cfg,
        })
    }

    pub fn model(&self) -> &ActionByol {
        &self.model
    }

    pub fn features(&self) -> &FeatureBuffer {
        &self.features
    }

    pub fn queue(&self) -> &DistanceQueue {
        &self.queue
    }

    /// Number of completed training rounds.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn has_encoder(&self) -> bool {
        self.rounds > 0
    }

    /// `d_m`: mean of the distances seen since the last rebuild, `1.0`
    /// until two distances exist.
    pub fn mean_distance(&self) -> f64 {
        let RunningMean { sum, count } = self.distances;
        let mean = sum / count as f64;
        if count < 2 || mean <= 0.0 {
            1.0
        } else {
            mean
        }
    }

    /// Distance of `state` to the stored features, without side effects.
    pub fn distance(&self, state: &[f64]) -> Result<Option<f64>> {
        if !self.has_encoder() {
            return Ok(None);
        }
        let x = self.model.extract_feature(state)?;
        Ok(self.features.similarity(&x).map(|s| self.mode.distance(s)))
    }

    /// Feature similarity and advising decision for the current state:
    /// compute `d_t`, fold the feature, read σ, then enqueue `d_t`.
    pub fn decide(&mut self, state: &[f64]) -> Result<Decision> {
        if !self.has_encoder() {
            return Ok(Decision {
                distance: None,
                threshold: None,
                advise: true,
            });
        }
        let x = self.model.extract_feature(state)?;
        let distance = self.features.similarity(&x).map(|s| self.mode.distance(s));
        self.features.fold(&x)?;
        let Some(d) = distance else {
            return Ok(Decision {
                distance: None,
                threshold: None,
                advise: true,
            });
        };
        let threshold = self.queue.threshold();
        self.queue.push(d);
        self.distances.sum += d;
        self.distances.count += 1;
        Ok(Decision {
            distance: Some(d),
            threshold,
            advise: threshold.is_none_or(|sigma| should_advise(d, sigma)),
        })
    }

    /// Trains action-BYOL on `data`, then rebuilds the feature buffer from
    /// `data`'s states and clears the distance queue. Returns per-epoch loss.
    pub fn retrain<R: Rng + ?Sized>(&mut self, data: &[&Transition], rng: &mut R) -> Result<Vec<f64>> {
        let losses = self
            .model
            .train(data, self.cfg.epochs, self.cfg.batch_size, rng)?;
        self.features.clear();
        for t in data {
            self.features.fold(&self.model.extract_feature(&t.state)?)?;
        }
        self.queue.clear();
        self.distances = RunningMean::default();
        self.rounds += 1;
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::dot;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        crate::nn::l2_normalize(&v).unwrap()
    }

    #[test]
    fn incremental_mean_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stored: Vec<Vec<f64>> = (0..100).map(|_| unit(&mut rng, 16)).collect();
        let mut buf = FeatureBuffer::new(16);
        stored.iter().for_each(|x| buf.fold(x).unwrap());
        let x = unit(&mut rng, 16);
        let brute = stored.iter().map(|s| dot(s, &x)).sum::<f64>() / 100.0;
        assert!((buf.similarity(&x).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn cold_start_always_advises() {
        let mut sel = AdviceSelector::new(4, 4, SelectorConfig::default(), 0).unwrap();
        let d = sel.decide(&[0.0, 0.1, 0.2, 0.3]).unwrap();
        assert!(d.advise && d.distance.is_none());
        assert_eq!(sel.mean_distance(), 1.0);
    }

    fn dataset(n: usize) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..n)
            .map(|_| Transition {
                state: (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                action: rng.gen_range(0..4),
                reward: 0.0,
                next_state: (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                terminal: false,
                advised: false,
            })
            .collect()
    }

    #[test]
    fn decisions_replay_by_hand() {
        let cfg = SelectorConfig {
            epochs: 2,
            queue_len: 10,
            ..SelectorConfig::default()
        };
        let mut sel = AdviceSelector::new(4, 4, cfg, 1).unwrap();
        let data = dataset(64);
        let refs: Vec<&Transition> = data.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        sel.retrain(&refs, &mut rng).unwrap();
        assert_eq!(sel.features().count(), 64);
        assert!(sel.queue().is_empty());

        // replay the two selector steps with independent bookkeeping
        let mut mean = sel.features().mean().to_vec();
        let mut m = 64.0;
        let mut queue: Vec<f64> = Vec::new();
        let trace = dataset(40);
        for t in &trace {
            let x = sel.model().extract_feature(&t.state).unwrap();
            let d = 1.0 - dot(&x, &mean);
            for (a, v) in mean.iter_mut().zip(&x) {
                *a = (m * *a + v) / (m + 1.0);
            }
            m += 1.0;
            let sigma = (queue.len() == 10).then(|| {
                let mut s = queue.clone();
                s.sort_by(f64::total_cmp);
                s[6]
            });
            queue.push(d);
            if queue.len() > 10 {
                queue.remove(0);
            }
            let expected = sigma.is_none_or(|s| d > s);
            let got = sel.decide(&t.state).unwrap();
            assert!((got.distance.unwrap() - d).abs() < 1e-12);
            assert_eq!(got.threshold, sigma);
            assert_eq!(got.advise, expected);
        }
    }

    #[test]
    fn literal_mode_uses_similarity() {
        assert_eq!(DistanceMode::Similarity.distance(0.3), 0.3);
        assert_eq!(DistanceMode::Novelty.distance(0.25), 0.75);
    }

    proptest! {
        #[test]
        fn incremental_mean_tracks_batch_mean(
            xs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..200)
        ) {
            let mut buf = FeatureBuffer::new(4);
            xs.iter().for_each(|x| buf.fold(x).unwrap());
            for j in 0..4 {
                let batch = xs.iter().map(|x| x[j]).sum::<f64>() / xs.len() as f64;
                prop_assert!((buf.mean()[j] - batch).abs() < 1e-9);
            }
            prop_assert_eq!(buf.count(), xs.len() as u64);
        }
    }
}
