//! The training loop: student acts, the advising strategy may replace the
//! action with teacher or reused advice, the transition (with any intrinsic
//! reward) is stored, and the student trains. Periodic work: target syncs,
//! selector retraining, reuse-model retraining and evaluations.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::metrics::{compute_auc, write_metrics, EvalPoint, RunMetrics};
use crate::baselines::{decide_ea, decide_ra, ImportanceAdvisor, NoveltyAdvisor, StrategyKind};
use crate::dqn::{DqnAgent, DuelingQNet, Transition};
use crate::env::{Action, GridWorld};
use crate::nn::{argmax, checkpoint};
use crate::reuse::{intrinsic_reward, ReuseModel};
use crate::selector::AdviceSelector;
use crate::{Error, Result};

/// Everything that happened on one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub step: u64,
    /// Strategy signal: feature distance (A7), importance (IAA) or novelty (ANA).
    pub signal: Option<f64>,
    pub threshold: Option<f64>,
    pub advised: bool,
    pub reused: bool,
    pub intrinsic_reward: f64,
    pub teacher_queries: u64,
    pub budget_left: u64,
}

/// Mean episodic return of `policy` over `episodes` fresh episodes.
pub fn evaluate<P>(env: &mut GridWorld, episodes: usize, mut policy: P) -> Result<f64>
where
    P: FnMut(&GridWorld, &[f64]) -> Result<usize>,
{
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset();
        loop {
            let a = Action::from_index(policy(env, &state)?)?;
            let out = env.step(a)?;
            total += out.reward;
            if out.terminal {
                break;
            }
            state = out.state;
        }
    }
    Ok(total / episodes as f64)
}

/// Greedy (ε = 0) evaluation of a Q-network.
pub fn evaluate_agent(net: &DuelingQNet, env: &mut GridWorld, episodes: usize) -> Result<f64> {
    evaluate(env, episodes, |_, s| Ok(argmax(&net.q_values(s)?)))
}

/// Score of the exact teacher.
pub fn evaluate_teacher(env: &mut GridWorld, episodes: usize) -> Result<f64> {
    evaluate(env, episodes, |e, _| Ok(e.teacher_action(e.position())?.index()))
}

struct A7Advisor {
    selector: AdviceSelector,
    reuse: ReuseModel,
}

enum Advisor {
    None,
    Early,
    Random(f64),
    Importance(ImportanceAdvisor),
    Novelty(NoveltyAdvisor),
    A7(Box<A7Advisor>),
}

/// Independent random streams, so e.g. reuse sampling never perturbs
/// exploration.
struct Streams {
    explore: ChaCha8Rng,
    replay: ChaCha8Rng,
    strategy: ChaCha8Rng,
    selector: ChaCha8Rng,
    reuse: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            explore: stream(1),
            replay: stream(2),
            strategy: stream(3),
            selector: stream(4),
            reuse: stream(5),
        }
    }
}

pub struct Experiment {
    config: ExperimentConfig,
    env: GridWorld,
    eval_env: GridWorld,
    agent: DqnAgent,
    advisor: Advisor,
    rng: Streams,
    budget_left: u64,
    metrics: RunMetrics,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.build(config.max_episode_steps)?;
        let (dim, actions) = (env.state_dim(), env.num_actions());
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let agent_seed: u64 = init.gen();
        let advisor_seed: u64 = init.gen();
        let reuse_seed: u64 = init.gen();
        let agent = DqnAgent::new(dim, actions, config.dqn.clone(), agent_seed)?;
        let advisor = match config.strategy {
            StrategyKind::Na => Advisor::None,
            StrategyKind::Ea => Advisor::Early,
            StrategyKind::Ra => Advisor::Random(config.baselines.random_probability),
            StrategyKind::Iaa => Advisor::Importance(ImportanceAdvisor::new(&config.baselines)),
            StrategyKind::Ana => {
                Advisor::Novelty(NoveltyAdvisor::new(dim, &config.baselines, advisor_seed)?)
            }
            StrategyKind::A7 => Advisor::A7(Box::new(A7Advisor {
                selector: AdviceSelector::new(dim, actions, config.selector.clone(), advisor_seed)?,
                reuse: ReuseModel::new(dim, actions, config.reuse.clone(), reuse_seed)?,
            })),
        };
        Ok(Self {
            eval_env: env.clone(),
            env,
            agent,
            advisor,
            rng: Streams::new(config.seed),
            budget_left: config.budget,
            metrics: RunMetrics::default(),
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn agent(&self) -> &DqnAgent {
        &self.agent
    }

    pub fn env(&self) -> &GridWorld {
        &self.env
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn reuse_model(&self) -> Option<&ReuseModel> {
        match &self.advisor {
            Advisor::A7(a7) => Some(&a7.reuse),
            _ => None,
        }
    }

    pub fn selector(&self) -> Option<&AdviceSelector> {
        match &self.advisor {
            Advisor::A7(a7) => Some(&a7.selector),
            _ => None,
        }
    }

    fn evaluate_now(&mut self, step: u64) -> Result<()> {
        let score = evaluate_agent(&self.agent.online, &mut self.eval_env, self.config.eval.episodes)?;
        self.metrics.push(EvalPoint {
            step,
            score,
            teacher_queries: self.metrics.teacher_queries,
            reuse_firings: self.metrics.reuse_firings,
        })
    }

    /// Runs the whole schedule, calling `observer` after every step.
    pub fn run(&mut self, mut observer: impl FnMut(&StepTrace)) -> Result<RunMetrics> {
        let total = self.config.total_steps;
        let interval = self.config.eval.interval;
        let epsilon = self.config.dqn.epsilon();
        let lambda = self.config.reuse.lambda();
        let milestone = self.config.reuse.advice_milestone;
        let retrain_every = self.config.selector.retrain_every;

        self.evaluate_now(0)?;
        let mut state = self.env.reset();
        for step in 0..total {
            let mut action = self.agent.act(&state, epsilon.value(step), &mut self.rng.explore)?;
            let mut trace = StepTrace {
                step,
                signal: None,
                threshold: None,
                advised: false,
                reused: false,
                intrinsic_reward: 0.0,
                teacher_queries: self.metrics.teacher_queries,
                budget_left: self.budget_left,
            };
            let has_budget = self.budget_left > 0;

            let advise = match &mut self.advisor {
                Advisor::None => false,
                Advisor::Early => decide_ea(self.budget_left),
                Advisor::Random(p) => decide_ra(&mut self.rng.strategy, *p, self.budget_left),
                Advisor::Importance(iaa) if has_budget => {
                    let (imp, t, advise) = iaa.decide(&self.agent.q_values(&state)?)?;
                    (trace.signal, trace.threshold) = (Some(imp), t);
                    advise
                }
                Advisor::Novelty(ana) if has_budget => {
                    let (n, t, advise) = ana.decide(&state)?;
                    (trace.signal, trace.threshold) = (Some(n), t);
                    advise
                }
                Advisor::A7(a7) if has_budget => {
                    let d = a7.selector.decide(&state)?;
                    (trace.signal, trace.threshold) = (d.distance, d.threshold);
                    d.advise
                }
                _ => false,
            };

            if advise {
                let teacher = self.env.teacher_action(self.env.position())?.index();
                action = teacher;
                self.budget_left -= 1;
                self.metrics.teacher_queries += 1;
                trace.advised = true;
                match &mut self.advisor {
                    Advisor::Novelty(ana) => ana.advised(&state)?,
                    Advisor::A7(a7) => {
                        a7.reuse.add_pair(state.clone(), teacher)?;
                        if let Some(d) = trace.signal {
                            trace.intrinsic_reward =
                                intrinsic_reward(d, a7.selector.mean_distance(), lambda.initial)?;
                        }
                    }
                    _ => {}
                }
            } else if let Advisor::A7(a7) = &mut self.advisor {
                if let Some(reused) = a7.reuse.maybe_reuse(&state, &mut self.rng.reuse)? {
                    action = reused;
                    trace.reused = true;
                    self.metrics.reuse_firings += 1;
                    let d = match trace.signal {
                        Some(d) => Some(d),
                        None => a7.selector.distance(&state)?,
                    };
                    if let Some(d) = d {
                        trace.intrinsic_reward =
                            intrinsic_reward(d, a7.selector.mean_distance(), lambda.value(step))?;
                    }
                }
            }
            if self.metrics.teacher_queries > self.config.budget {
                return Err(Error::Config(format!(
                    "budget overrun: {} queries with budget {}",
                    self.metrics.teacher_queries, self.config.budget
                )));
            }

            let out = self.env.step(Action::from_index(action)?)?;
            self.agent.remember(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward + trace.intrinsic_reward,
                next_state: out.state.clone(),
                terminal: out.reached_goal,
                advised: trace.advised || trace.reused,
            });
            state = if out.terminal { self.env.reset() } else { out.state };
            if self.agent.buffer.is_ready() {
                self.agent.train_step(&mut self.rng.replay)?;
            }

            let done = step + 1;
            if let Advisor::A7(a7) = &mut self.advisor {
                if trace.advised && self.metrics.teacher_queries.is_multiple_of(milestone) {
                    let epochs = a7.reuse.next_round_epochs();
                    a7.reuse.train(epochs, &mut self.rng.reuse)?;
                }
                if done % retrain_every == 0 && self.budget_left > 0 {
                    let data: Vec<&Transition> = self.agent.buffer.iter().collect();
                    a7.selector.retrain(&data, &mut self.rng.selector)?;
                }
            }
            trace.teacher_queries = self.metrics.teacher_queries;
            trace.budget_left = self.budget_left;
            observer(&trace);
            if done % interval == 0 || done == total {
                self.evaluate_now(done)?;
            }
        }
        self.metrics.auc = compute_auc(&self.metrics.points, self.config.eval.teacher_score).ok();
        Ok(self.metrics.clone())
    }

    /// Writes the agent, and for A7 the encoder, reuse model and advice
    /// pairs, under `dir`.
    pub fn save_checkpoints(&self, dir: &Path) -> Result<()> {
        self.agent.save(&dir.join("agent"))?;
        if let Advisor::A7(a7) = &self.advisor {
            checkpoint::save(&a7.selector.model().encoder, &dir.join("byol_encoder.ckpt"))?;
            a7.reuse.save(&dir.join("reuse.ckpt"))?;
            a7.reuse.save_pairs(&dir.join("advice_pairs.csv"))?;
        }
        Ok(())
    }
}

/// Runs `config` end to end. When `output_dir` is set, writes
/// `config.toml`, `metrics.csv`, checkpoints and (if enabled) `trace.csv`.
pub fn run_training(config: &ExperimentConfig) -> Result<RunMetrics> {
    let mut exp = Experiment::new(config.clone())?;
    let trace_on = config.eval.trace && config.output_dir.is_some();
    let mut trace = String::new();
    if trace_on {
        trace.push_str("step,d_t,sigma,advised,reused,intrinsic_reward\n");
    }
    let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let metrics = exp.run(|t| {
        if trace_on {
            let _ = writeln!(
                trace,
                "{},{},{},{},{},{}",
                t.step,
                fmt_opt(t.signal),
                fmt_opt(t.threshold),
                t.advised as u8,
                t.reused as u8,
                t.intrinsic_reward
            );
        }
    })?;
    if let Some(dir) = &config.output_dir {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        config.save(&dir.join("config.toml"))?;
        write_metrics(&metrics, &dir.join("metrics.csv"))?;
        exp.save_checkpoints(dir)?;
        if trace_on {
            let path = dir.join("trace.csv");
            std::fs::write(&path, trace).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(metrics)
}
