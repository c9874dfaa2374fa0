//! Policy-gradient training of the proposal and selection policies.

mod loops;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{reset, EnvConfig, EnvError};
use crate::instances::{sample_distribution, sample_instance, DistributionSpec, Instance, ItemSet, Mode};
use crate::policy::{featurize_all, FeatureVector, PolicyPair, PolicyParams, ProposalSupport, SelectMode};
use crate::seeding::{self, derive_seed};

pub use loops::{
    adapt_online, evaluate, maml_pretrain, meta_step, post_train, train_two_phase, EpochLog, EvalStats,
    TrainOutput,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite {role:?} gradient at component {index}")]
    NonFinite { role: Role, index: usize },
    #[error("mean return {mean:.4} stayed below 10% of peak {peak:.4} for 20 iterations (stopped at iteration {iteration})")]
    Diverged { iteration: usize, mean: f64, peak: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("proposal parameters changed during adaptation")]
    ProposalMutated,
}

/// Which policy an update applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Proposal,
    Selection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Features of every candidate, in candidate order.
    pub feats: Vec<FeatureVector>,
    /// Proposal set as indices into `feats`.
    pub proposal: Vec<usize>,
    /// Chosen candidate index.
    pub chosen: usize,
    /// Position of `chosen` within `proposal`.
    pub slot: usize,
    pub reward: f64,
    /// `[1, utilization, t / 100, max height / H]` before the step.
    pub summary: [f64; 4],
    pub log_prob_selection: f64,
    pub log_prob_proposal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// Final utilization; the sum of all step rewards.
    pub ret: f64,
    pub num_packed: usize,
    pub advantages: Vec<f64>,
}

impl Trajectory {
    /// Undiscounted reward-to-go at every step.
    pub fn returns_to_go(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (i, s) in self.steps.iter().enumerate().rev() {
            acc += s.reward;
            g[i] = acc;
        }
        g
    }
}

pub fn rollout(
    pair: &PolicyPair,
    instance: &Instance,
    env: &EnvConfig,
    mode: SelectMode,
    seed: u64,
) -> Result<Trajectory, TrainError> {
    let mut state = reset(instance, env)?;
    let mut rng = seeding::rng(seed);
    let ch = state.container().dim.h;
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let feats = featurize_all(&state);
        let (prop, sel) = pair.decide(&feats, mode, &mut rng);
        let summary =
            [1.0, state.utilization(), state.t() as f64 / 100.0, state.heightmap().max_height() / ch];
        let out = state.step_index(sel.index)?;
        steps.push(StepRecord {
            feats,
            proposal: prop.indices,
            chosen: sel.index,
            slot: sel.slot,
            reward: out.reward,
            summary,
            log_prob_selection: sel.log_prob_selection,
            log_prob_proposal: sel.log_prob_proposal,
        });
    }
    Ok(Trajectory {
        ret: state.final_reward()?,
        num_packed: state.packed().len(),
        advantages: vec![0.0; steps.len()],
        steps,
    })
}

/// One trajectory per instance, run in parallel; episode `i` draws from
/// `derive_seed(seed, i)` so the result does not depend on scheduling.
pub fn rollout_batch(
    pair: &PolicyPair,
    instances: &[Instance],
    env: &EnvConfig,
    mode: SelectMode,
    seed: u64,
) -> Result<Vec<Trajectory>, TrainError> {
    if instances.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| rollout(pair, inst, env, mode, derive_seed(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Exponential moving average of returns.
    #[default]
    Ema,
    /// Linear value estimate over the step summary.
    Linear,
    /// No baseline; the advantage is the raw return.
    None,
}

/// Running baseline that turns returns into advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    kind: BaselineKind,
    decay: f64,
    dense: bool,
    ema: Vec<f64>,
    weights: [f64; 4],
}

impl Baseline {
    /// With `dense` rewards the EMA is kept per step index, otherwise one
    /// value tracks episode returns.
    pub fn new(kind: BaselineKind, decay: f64, dense: bool) -> Self {
        Self { kind, decay, dense, ema: Vec::new(), weights: [0.0; 4] }
    }

    pub fn value(&self) -> Option<f64> {
        self.ema.first().copied()
    }

    fn ema_slot(&self, t: usize) -> usize {
        if self.dense {
            t
        } else {
            0
        }
    }

    /// Fills `advantages` from the baseline as it stood before this batch,
    /// then folds the batch into the baseline, episode by episode.
    pub fn assign(&mut self, trajs: &mut [Trajectory]) {
        let returns: Vec<Vec<f64>> = trajs.iter().map(Trajectory::returns_to_go).collect();
        match self.kind {
            BaselineKind::None => {
                for (tr, g) in trajs.iter_mut().zip(&returns) {
                    tr.advantages = g.clone();
                }
            }
            BaselineKind::Ema => {
                self.init_ema(&returns);
                for (tr, g) in trajs.iter_mut().zip(&returns) {
                    tr.advantages =
                        g.iter().enumerate().map(|(t, gt)| gt - self.ema[self.ema_slot(t)]).collect();
                }
                for g in &returns {
                    for (t, gt) in g.iter().enumerate() {
                        if t > 0 && !self.dense {
                            break;
                        }
                        let s = self.ema_slot(t);
                        self.ema[s] = self.decay * self.ema[s] + (1.0 - self.decay) * gt;
                    }
                }
            }
            BaselineKind::Linear => {
                for (tr, g) in trajs.iter_mut().zip(&returns) {
                    tr.advantages = tr
                        .steps
                        .iter()
                        .zip(g)
                        .map(|(s, gt)| gt - dot4(&self.weights, &s.summary))
                        .collect();
                }
                self.fit_linear(trajs, &returns);
            }
        }
    }

    /// Slots seen for the first time start at the batch mean.
    fn init_ema(&mut self, returns: &[Vec<f64>]) {
        let longest = returns.iter().map(Vec::len).max().unwrap_or(0);
        let need = if self.dense { longest } else { longest.min(1) };
        for t in self.ema.len()..need {
            let vals: Vec<f64> = returns.iter().filter_map(|g| g.get(t)).copied().collect();
            self.ema.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }

    fn fit_linear(&mut self, trajs: &[Trajectory], returns: &[Vec<f64>]) {
        const LR: f64 = 0.1;
        let mut grad = [0.0; 4];
        let mut n = 0usize;
        for (tr, g) in trajs.iter().zip(returns) {
            for (s, gt) in tr.steps.iter().zip(g) {
                let err = dot4(&self.weights, &s.summary) - gt;
                for (gi, x) in grad.iter_mut().zip(s.summary) {
                    *gi += err * x;
                }
                n += 1;
            }
        }
        if n > 0 {
            for (w, gi) in self.weights.iter_mut().zip(grad) {
                *w -= LR * gi / n as f64;
            }
        }
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn role_grad(params: &PolicyParams, tr: &Trajectory, role: Role, support: ProposalSupport) -> Vec<f64> {
    let mut g = vec![0.0; params.len()];
    for (s, a) in tr.steps.iter().zip(&tr.advantages) {
        let restricted = match role {
            Role::Selection => true,
            Role::Proposal => support == ProposalSupport::Proposal,
        };
        if restricted {
            let sub: Vec<&FeatureVector> = s.proposal.iter().map(|&i| &s.feats[i]).collect();
            params.add_log_prob_grad(&sub, s.slot, *a, &mut g);
        } else {
            params.add_log_prob_grad(&s.feats, s.chosen, *a, &mut g);
        }
    }
    g
}

/// Mean over trajectories of `Σ_t A_t ∇θ log π(a_t | s_t)` for `role`.
///
/// Per-trajectory terms run in parallel and are summed in trajectory order.
pub fn policy_gradient(
    params: &PolicyParams,
    trajs: &[Trajectory],
    role: Role,
    support: ProposalSupport,
) -> Result<Vec<f64>, TrainError> {
    if trajs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let parts: Vec<Vec<f64>> = trajs.par_iter().map(|tr| role_grad(params, tr, role, support)).collect();
    let mut g = vec![0.0; params.len()];
    for p in parts {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi += pi;
        }
    }
    let n = trajs.len() as f64;
    g.iter_mut().for_each(|x| *x /= n);
    if let Some(index) = g.iter().position(|x| !x.is_finite()) {
        return Err(TrainError::NonFinite { role, index });
    }
    Ok(g)
}

/// One ascent step of size `lr` along [`policy_gradient`].
pub fn policy_gradient_update(
    params: &PolicyParams,
    trajs: &[Trajectory],
    role: Role,
    lr: f64,
    support: ProposalSupport,
) -> Result<PolicyParams, TrainError> {
    let g = policy_gradient(params, trajs, role, support)?;
    Ok(params.stepped(&g, lr))
}

/// Policy-gradient surrogate loss `-mean Σ_t A_t log π(a_t | s_t)`.
pub fn surrogate_loss(trajs: &[Trajectory], role: Role) -> f64 {
    let total: f64 = trajs
        .iter()
        .map(|tr| {
            tr.steps
                .iter()
                .zip(&tr.advantages)
                .map(|(s, a)| {
                    let lp = match role {
                        Role::Selection => s.log_prob_selection,
                        Role::Proposal => s.log_prob_proposal,
                    };
                    a * lp
                })
                .sum::<f64>()
        })
        .sum();
    -total / trajs.len().max(1) as f64
}

/// Per-phase lengths of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub pre_epochs: usize,
    pub post_epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub adaptation_batches: usize,
}

impl TrainSchedule {
    pub const DESK: TrainSchedule = TrainSchedule {
        pre_epochs: 25,
        post_epochs: 5,
        batches_per_epoch: 20,
        batch_size: 16,
        adaptation_batches: 50,
    };

    pub const PAPER_SCALE: TrainSchedule = TrainSchedule {
        pre_epochs: 250,
        post_epochs: 50,
        batches_per_epoch: 200,
        batch_size: 64,
        adaptation_batches: 200,
    };

    pub fn profile(name: &str) -> Option<TrainSchedule> {
        match name {
            "desk" => Some(Self::DESK),
            "paper-scale" => Some(Self::PAPER_SCALE),
            _ => None,
        }
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self::DESK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Inner step size.
    pub alpha: f64,
    /// Outer step size.
    pub beta: f64,
    pub tasks_per_batch: usize,
    pub instances_per_task: usize,
    pub inner_steps: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.1, tasks_per_batch: 4, instances_per_task: 4, inner_steps: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub schedule: TrainSchedule,
    pub meta: MetaConfig,
    pub post_lr: f64,
    pub adapt_lr: f64,
    pub k: usize,
    pub baseline: BaselineKind,
    pub ema_decay: f64,
    pub proposal_support: ProposalSupport,
    /// Wrap post-training batches in the meta-learning step.
    pub meta_post: bool,
}

impl TrainConfig {
    pub fn new(env: EnvConfig, k: usize) -> Self {
        Self {
            env,
            schedule: TrainSchedule::DESK,
            meta: MetaConfig::default(),
            post_lr: 0.03,
            adapt_lr: 0.03,
            k,
            baseline: BaselineKind::Ema,
            ema_decay: 0.99,
            proposal_support: ProposalSupport::Full,
            meta_post: true,
        }
    }

    pub fn baseline(&self) -> Baseline {
        Baseline::new(self.baseline, self.ema_decay, self.env.dense_reward)
    }
}

/// Generates tasks (item distributions) and instances from an item set.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSource {
    pub item_set: ItemSet,
    pub mode: Mode,
    pub episode_len: usize,
    /// When non-empty, tasks are drawn from this list instead of sampled.
    pub fixed_tasks: Vec<DistributionSpec>,
}

impl TaskSource {
    pub fn new(item_set: ItemSet, mode: Mode, episode_len: usize) -> Self {
        Self { item_set, mode, episode_len, fixed_tasks: Vec::new() }
    }

    /// A source that cycles through `tasks`; each must use `item_set`.
    pub fn fixed(item_set: ItemSet, mode: Mode, episode_len: usize, tasks: Vec<DistributionSpec>) -> Self {
        Self { item_set, mode, episode_len, fixed_tasks: tasks }
    }

    pub fn task(&self, seed: u64) -> DistributionSpec {
        if self.fixed_tasks.is_empty() {
            sample_distribution(&self.item_set, seed)
        } else {
            self.fixed_tasks[(seed % self.fixed_tasks.len() as u64) as usize].clone()
        }
    }

    pub fn instances(&self, spec: &DistributionSpec, n: usize, seed: u64) -> Vec<Instance> {
        (0..n)
            .map(|i| sample_instance(spec, self.episode_len, self.mode, derive_seed(seed, i as u64)))
            .collect()
    }

    /// `n` instances, each from its own freshly drawn task.
    pub fn mixed(&self, n: usize, seed: u64) -> Vec<Instance> {
        (0..n as u64)
            .map(|i| {
                let s = derive_seed(seed, i);
                let mut inst = sample_instance(&self.task(derive_seed(s, 0)), self.episode_len, self.mode, derive_seed(s, 1));
                inst.distribution = i as usize;
                inst
            })
            .collect()
    }
}
