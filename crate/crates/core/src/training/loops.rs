use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::instances::{sample_instance, DistributionSpec, Instance};
use crate::policy::{Architecture, PolicyPair, PolicyParams, SelectMode};
use crate::seeding::{derive_path, derive_seed};

use super::{
    policy_gradient, rollout_batch, surrogate_loss, Baseline, Role, TaskSource, TrainConfig, TrainError,
    Trajectory,
};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub epoch: usize,
    pub mean_uti: f64,
    pub mean_num: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<T> {
    pub result: T,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Default)]
struct Accum {
    uti: f64,
    num: f64,
    loss: f64,
    grad_norms: f64,
    episodes: usize,
    updates: usize,
}

impl Accum {
    fn add_trajs(&mut self, trajs: &[Trajectory], role: Role) {
        self.uti += trajs.iter().map(|t| t.ret).sum::<f64>();
        self.num += trajs.iter().map(|t| t.num_packed as f64).sum::<f64>();
        self.loss += surrogate_loss(trajs, role) * trajs.len() as f64;
        self.episodes += trajs.len();
    }

    fn add_grad(&mut self, g: &[f64]) {
        self.grad_norms += g.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.updates += 1;
    }

    fn finish(self, phase: &str, epoch: usize, started: Instant) -> EpochLog {
        let n = self.episodes.max(1) as f64;
        EpochLog {
            phase: phase.into(),
            epoch,
            mean_uti: self.uti / n,
            mean_num: self.num / n,
            loss: self.loss / n,
            grad_norm: self.grad_norms / self.updates.max(1) as f64,
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    }
}

fn with_role(pair: &PolicyPair, role: Role, params: &PolicyParams) -> PolicyPair {
    let mut p = pair.clone();
    match role {
        Role::Proposal => p.proposal = params.clone(),
        Role::Selection => p.selection = params.clone(),
    }
    p
}

fn role_params(pair: &PolicyPair, role: Role) -> &PolicyParams {
    match role {
        Role::Proposal => &pair.proposal,
        Role::Selection => &pair.selection,
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += x;
    }
}

/// One first-order meta-update of `role`'s parameters.
///
/// For each of `tasks_per_batch` freshly drawn tasks: take `inner_steps`
/// policy-gradient steps of size `alpha` from the current parameters, roll
/// out the adapted parameters on fresh instances of the same task, and take
/// the gradient there. The outer step adds `beta` times the sum of those
/// gradients to the unadapted parameters.
#[allow(clippy::too_many_arguments)]
pub fn meta_step(
    pair: &PolicyPair,
    role: Role,
    source: &TaskSource,
    cfg: &TrainConfig,
    alpha: f64,
    beta: f64,
    baseline: &mut Baseline,
    seed: u64,
) -> Result<(PolicyParams, Vec<Trajectory>, Vec<f64>), TrainError> {
    let theta = role_params(pair, role);
    let meta = &cfg.meta;
    let mut outer = vec![0.0; theta.len()];
    let mut outer_trajs = Vec::new();
    for task in 0..meta.tasks_per_batch as u64 {
        let spec = source.task(derive_path(seed, &[task, 0]));
        let mut adapted = theta.clone();
        for s in 0..meta.inner_steps as u64 {
            let insts = source.instances(&spec, meta.instances_per_task, derive_path(seed, &[task, 1, s]));
            let mut trajs = rollout_batch(
                &with_role(pair, role, &adapted),
                &insts,
                &cfg.env,
                SelectMode::Sample,
                derive_path(seed, &[task, 2, s]),
            )?;
            baseline.assign(&mut trajs);
            let g = policy_gradient(&adapted, &trajs, role, cfg.proposal_support)?;
            adapted = adapted.stepped(&g, alpha);
        }
        let insts = source.instances(&spec, meta.instances_per_task, derive_path(seed, &[task, 3]));
        let mut trajs = rollout_batch(
            &with_role(pair, role, &adapted),
            &insts,
            &cfg.env,
            SelectMode::Sample,
            derive_path(seed, &[task, 4]),
        )?;
        baseline.assign(&mut trajs);
        add_into(&mut outer, &policy_gradient(&adapted, &trajs, role, cfg.proposal_support)?);
        outer_trajs.extend(trajs);
    }
    Ok((theta.stepped(&outer, beta), outer_trajs, outer))
}

/// Tracks the mean return against its running peak.
struct DivergenceGuard {
    peak: f64,
    low_streak: usize,
    iteration: usize,
}

impl DivergenceGuard {
    const WINDOW: usize = 20;

    fn new() -> Self {
        Self { peak: f64::NEG_INFINITY, low_streak: 0, iteration: 0 }
    }

    fn observe(&mut self, mean: f64) -> Result<(), TrainError> {
        self.iteration += 1;
        self.peak = self.peak.max(mean);
        if self.peak > 0.0 && mean < 0.1 * self.peak {
            self.low_streak += 1;
        } else {
            self.low_streak = 0;
        }
        if self.low_streak >= Self::WINDOW {
            return Err(TrainError::Diverged { iteration: self.iteration, mean, peak: self.peak });
        }
        Ok(())
    }
}

/// Meta-learned initialization of a single policy that chooses over the
/// full candidate set; every task is one sampled item distribution.
pub fn maml_pretrain(
    init: &PolicyParams,
    source: &TaskSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput<PolicyParams>, TrainError> {
    let mut theta = init.clone();
    let mut baseline = cfg.baseline();
    let mut guard = DivergenceGuard::new();
    let mut log = Vec::new();
    for epoch in 0..cfg.schedule.pre_epochs {
        let started = Instant::now();
        let mut acc = Accum::default();
        for batch in 0..cfg.schedule.batches_per_epoch {
            let pair = PolicyPair::coupled(&theta);
            let (next, trajs, g) = meta_step(
                &pair,
                Role::Selection,
                source,
                cfg,
                cfg.meta.alpha,
                cfg.meta.beta,
                &mut baseline,
                derive_path(seed, &[epoch as u64, batch as u64]),
            )?;
            acc.add_trajs(&trajs, Role::Selection);
            acc.add_grad(&g);
            guard.observe(trajs.iter().map(|t| t.ret).sum::<f64>() / trajs.len().max(1) as f64)?;
            theta = next;
        }
        log.push(acc.finish("pre", epoch, started));
    }
    Ok(TrainOutput { result: theta, log })
}

/// Decoupled training that alternates between the proposal (even batches)
/// and the selection policy (odd batches).
pub fn post_train(
    pair: &PolicyPair,
    source: &TaskSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput<PolicyPair>, TrainError> {
    let mut pair = pair.clone();
    let mut baseline = cfg.baseline();
    let mut log = Vec::new();
    let nb = cfg.schedule.batches_per_epoch;
    for epoch in 0..cfg.schedule.post_epochs {
        let started = Instant::now();
        let mut acc = Accum::default();
        for batch in 0..nb {
            let role = if (epoch * nb + batch).is_multiple_of(2) { Role::Proposal } else { Role::Selection };
            let s = derive_path(seed, &[epoch as u64, batch as u64]);
            let (next, trajs, g) = if cfg.meta_post {
                meta_step(&pair, role, source, cfg, cfg.meta.alpha, cfg.post_lr, &mut baseline, s)?
            } else {
                let insts = source.mixed(cfg.schedule.batch_size, derive_seed(s, 0));
                let mut trajs = rollout_batch(&pair, &insts, &cfg.env, SelectMode::Sample, derive_seed(s, 1))?;
                baseline.assign(&mut trajs);
                let params = role_params(&pair, role);
                let g = policy_gradient(params, &trajs, role, cfg.proposal_support)?;
                (params.stepped(&g, cfg.post_lr), trajs, g)
            };
            acc.add_trajs(&trajs, role);
            acc.add_grad(&g);
            pair = with_role(&pair, role, &next);
        }
        log.push(acc.finish("post", epoch, started));
    }
    Ok(TrainOutput { result: pair, log })
}

/// Meta pre-training of a fresh `arch` policy, then decoupled post-training
/// with both policies starting from the pre-trained weights.
pub fn train_two_phase(
    arch: Architecture,
    source: &TaskSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput<PolicyPair>, TrainError> {
    let init = PolicyParams::init(arch, derive_seed(seed, 0));
    let pre = maml_pretrain(&init, source, cfg, derive_seed(seed, 1))?;
    let pair = PolicyPair::from_shared(&pre.result, cfg.k);
    let post = post_train(&pair, source, cfg, derive_seed(seed, 2))?;
    let mut log = pre.log;
    log.extend(post.log);
    Ok(TrainOutput { result: post.result, log })
}

/// Fine-tunes the selection policy on instances drawn from `specs` for
/// `cfg.schedule.adaptation_batches` batches. The proposal policy is never
/// written; its digest is checked on the way out.
pub fn adapt_online(
    pair: &PolicyPair,
    source: &TaskSource,
    specs: &[DistributionSpec],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput<PolicyPair>, TrainError> {
    let digest = pair.proposal.digest();
    let mut work = pair.clone();
    let mut baseline = cfg.baseline();
    let mut acc = Accum::default();
    let started = Instant::now();
    let bs = cfg.schedule.batch_size;
    for b in 0..cfg.schedule.adaptation_batches {
        let insts: Vec<Instance> = (0..bs)
            .map(|j| {
                let d = (b * bs + j) % specs.len().max(1);
                let mut inst = sample_instance(
                    &specs[d],
                    source.episode_len,
                    source.mode,
                    derive_path(seed, &[b as u64, j as u64]),
                );
                inst.distribution = d;
                inst
            })
            .collect();
        let mut trajs =
            rollout_batch(&work, &insts, &cfg.env, SelectMode::Sample, derive_path(seed, &[b as u64, u64::MAX]))?;
        baseline.assign(&mut trajs);
        let g = policy_gradient(&work.selection, &trajs, Role::Selection, cfg.proposal_support)?;
        work.selection = work.selection.stepped(&g, cfg.adapt_lr);
        acc.add_trajs(&trajs, Role::Selection);
        acc.add_grad(&g);
    }
    if work.proposal.digest() != digest {
        return Err(TrainError::ProposalMutated);
    }
    let log = if cfg.schedule.adaptation_batches > 0 { vec![acc.finish("adapt", 0, started)] } else { vec![] };
    Ok(TrainOutput { result: work, log })
}

/// Greedy (argmax) evaluation over fixed instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub n: usize,
    pub mean_uti: f64,
    pub mean_num: f64,
    /// Half-width of the normal 95% interval of the mean utilization.
    pub uti_half_width: f64,
    pub utis: Vec<f64>,
    pub nums: Vec<usize>,
}

impl EvalStats {
    pub fn from_results(utis: Vec<f64>, nums: Vec<usize>) -> Self {
        let n = utis.len();
        let nf = n.max(1) as f64;
        let mean_uti = utis.iter().sum::<f64>() / nf;
        let mean_num = nums.iter().sum::<usize>() as f64 / nf;
        let var = if n > 1 {
            utis.iter().map(|u| (u - mean_uti).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { n, mean_uti, mean_num, uti_half_width: 1.96 * (var / nf).sqrt(), utis, nums }
    }
}

pub fn evaluate(pair: &PolicyPair, instances: &[Instance], env: &EnvConfig) -> Result<EvalStats, TrainError> {
    let trajs = rollout_batch(pair, instances, env, SelectMode::Argmax, 0)?;
    Ok(EvalStats::from_results(
        trajs.iter().map(|t| t.ret).collect(),
        trajs.iter().map(|t| t.num_packed).collect(),
    ))
}
