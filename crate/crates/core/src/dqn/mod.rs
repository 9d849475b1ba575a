//! The student: dueling double-DQN with uniform replay, ε-greedy exploration
//! and hard target syncs.

mod net;
mod replay;

pub use net::{DuelingCache, DuelingGrads, DuelingQNet};
pub use replay::{ReplayBuffer, Transition};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, argmax, checkpoint, Activation, AdamState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub replay_min_size: usize,
    pub replay_max_size: usize,
    pub target_update_every: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            gamma: 0.99,
            replay_min_size: 500,
            replay_max_size: 5_000,
            target_update_every: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_anneal_steps: 5_000,
            hidden: vec![64, 64],
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("dqn: {m}")));
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.replay_max_size == 0 || self.replay_min_size > self.replay_max_size {
            return bad("need 0 < replay_min_size <= replay_max_size");
        }
        if self.target_update_every == 0 {
            return bad("target_update_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive and non-empty");
        }
        Ok(())
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            anneal_steps: self.epsilon_anneal_steps,
        }
    }
}

/// Linear ε annealing, constant after `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// ε-greedy choice; greedy ties go to the lowest action index.
pub fn select_action<R: Rng + ?Sized>(
    net: &DuelingQNet,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..net.num_actions()));
    }
    Ok(argmax(&net.q_values(state)?))
}

/// Double-DQN targets: `r` for terminals, else
/// `r + γ·Q_target(s', argmax_a Q_online(s', a))`.
pub fn td_targets(
    batch: &[&Transition],
    online: &DuelingQNet,
    target: &DuelingQNet,
    gamma: f64,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.terminal || gamma == 0.0 {
                return Ok(t.reward);
            }
            let best = argmax(&online.q_values(&t.next_state)?);
            Ok(t.reward + gamma * target.q_values(&t.next_state)?[best])
        })
        .collect()
}

/// Mean squared TD error of `net` against fixed `targets`, with gradients.
pub fn td_loss_and_grads(
    net: &DuelingQNet,
    batch: &[&Transition],
    targets: &[f64],
) -> Result<(f64, DuelingGrads)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("TD batch"));
    }
    let n = batch.len() as f64;
    let mut grads = DuelingGrads::zeros(net);
    let mut loss = 0.0;
    let mut q_grad = vec![0.0; net.num_actions()];
    for (t, &y) in batch.iter().zip(targets) {
        if t.action >= net.num_actions() {
            return Err(Error::IndexOutOfRange {
                index: t.action,
                len: net.num_actions(),
            });
        }
        let (q, cache) = net.forward(&t.state)?;
        let err = q[t.action] - y;
        loss += err * err / n;
        q_grad.fill(0.0);
        q_grad[t.action] = 2.0 * err / n;
        net.backward_into(&cache, &q_grad, &mut grads)?;
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
struct DuelingAdam {
    trunk: AdamState,
    value: AdamState,
    advantage: AdamState,
}

impl DuelingAdam {
    fn new(net: &DuelingQNet, lr: f64) -> Self {
        Self {
            trunk: AdamState::new(net.trunk.num_params(), lr),
            value: AdamState::new(net.value.num_params(), lr),
            advantage: AdamState::new(net.advantage.num_params(), lr),
        }
    }

    fn step(&mut self, net: &mut DuelingQNet, grads: &DuelingGrads) -> Result<()> {
        adam_step(net.trunk.params_mut(), &grads.trunk, &mut self.trunk)?;
        adam_step(net.value.params_mut(), &grads.value, &mut self.value)?;
        adam_step(net.advantage.params_mut(), &grads.advantage, &mut self.advantage)
    }
}

/// Online and target networks, optimizer, and replay memory.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: DuelingQNet,
    pub target: DuelingQNet,
    pub buffer: ReplayBuffer,
    adam: DuelingAdam,
    config: DqnConfig,
    train_steps: u64,
}

impl DqnAgent {
    pub fn new(state_dim: usize, num_actions: usize, config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let online = DuelingQNet::new(state_dim, &config.hidden, num_actions, seed)?;
        let target = online.clone();
        Ok(Self {
            adam: DuelingAdam::new(&online, config.learning_rate),
            buffer: ReplayBuffer::new(config.replay_max_size, config.replay_min_size),
            online,
            target,
            config,
            train_steps: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.q_values(state)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        select_action(&self.online, state, epsilon, rng)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.online.q_values(state)?))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One Adam step on the online network for `batch`; returns the mean
    /// squared TD error measured before the update.
    pub fn train_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = td_targets(batch, &self.online, &self.target, self.config.gamma)?;
        let (loss, grads) = td_loss_and_grads(&self.online, batch, &targets)?;
        self.adam.step(&mut self.online, &grads)?;
        Ok(loss)
    }

    /// Samples a minibatch, trains on it, and syncs the target network every
    /// `target_update_every` training steps.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        if !self.buffer.is_ready() {
            return Err(Error::NotReady {
                len: self.buffer.len(),
                min: self.buffer.min_size(),
            });
        }
        let batch: Vec<Transition> = self
            .buffer
            .sample(rng, self.config.batch_size)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let loss = self.train_batch(&refs)?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_update_every) {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Hard copy online → target.
    pub fn sync_target(&mut self) {
        self.target
            .copy_from(&self.online)
            .expect("online and target share a shape");
    }

    /// Writes `trunk.ckpt`, `value.ckpt`, `advantage.ckpt` and a manifest
    /// naming them into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(&self.online.trunk, &dir.join("trunk.ckpt"))?;
        checkpoint::save(&self.online.value, &dir.join("value.ckpt"))?;
        checkpoint::save(&self.online.advantage, &dir.join("advantage.ckpt"))?;
        let manifest = "# dueling Q-network\ntrunk = trunk.ckpt\nvalue = value.ckpt\nadvantage = advantage.ckpt\n";
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }
}

/// Loads the online network written by [`DqnAgent::save`] from its manifest.
pub fn load_q_network(manifest: &Path) -> Result<DuelingQNet> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut parts = [None, None, None];
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, file) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: manifest.to_path_buf(),
            msg: format!("expected `name = file`, got {line:?}"),
        })?;
        let slot = match key.trim() {
            "trunk" => 0,
            "value" => 1,
            "advantage" => 2,
            other => {
                return Err(Error::Parse {
                    path: manifest.to_path_buf(),
                    msg: format!("unknown part {other:?}"),
                })
            }
        };
        let act = if slot == 0 {
            Activation::Relu
        } else {
            Activation::Identity
        };
        parts[slot] = Some(checkpoint::load(&dir.join(file.trim()), act, 0.0)?);
    }
    let [Some(trunk), Some(value), Some(advantage)] = parts else {
        return Err(Error::Parse {
            path: manifest.to_path_buf(),
            msg: "manifest must list trunk, value and advantage".into(),
        });
    };
    let feat = trunk.output_dim();
    if value.sizes() != [feat, 1] || advantage.input_dim() != feat {
        return Err(Error::Checkpoint("head shapes do not match the trunk".into()));
    }
    Ok(DuelingQNet {
        trunk,
        value,
        advantage,
    })
}
