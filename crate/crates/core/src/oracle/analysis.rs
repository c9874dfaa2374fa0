use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{reset, EnvConfig, PackingState};
use crate::instances::{DistributionSpec, Instance, Mode};
use crate::policy::{featurize_all, softmax, top_k, PolicyPair, SelectMode};
use crate::seeding::{self, derive_path};

use super::{mcts_decide, FutureModel, MctsConfig, OracleError};

/// Proposal size used in an inclusion-rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KValue {
    Top(usize),
    /// The whole candidate set.
    All,
}

impl KValue {
    fn resolve(self, n: usize) -> usize {
        match self {
            KValue::Top(k) => k,
            KValue::All => n,
        }
    }
}

impl fmt::Display for KValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KValue::Top(k) => write!(f, "{k}"),
            KValue::All => f.write_str("all"),
        }
    }
}

impl FromStr for KValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(KValue::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(KValue::Top(k)),
            _ => Err(format!("invalid k `{s}`")),
        }
    }
}

/// One decision point visited by the policy, with the oracle's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub instance: usize,
    pub t: usize,
    /// Proposal-policy logits over the candidate set.
    pub policy_logits: Vec<f64>,
    /// Oracle frequency of being the best action, per candidate.
    pub frequencies: Vec<f64>,
    pub oracle_best: usize,
}

fn future_for(instance: &Instance, specs: Option<&[DistributionSpec]>, mode: Mode) -> FutureModel {
    match specs.and_then(|s| s.get(instance.distribution)) {
        Some(spec) => FutureModel::Sampled { spec: spec.clone(), mode },
        None => FutureModel::Known,
    }
}

/// Plays each instance with the policy pair in argmax mode and runs the
/// oracle at every visited decision (at most `max_steps` per episode).
///
/// When `specs` is given, the oracle samples futures from the instance's
/// generating distribution; otherwise it sees the true remaining items.
#[allow(clippy::too_many_arguments)]
pub fn collect_decisions(
    pair: &PolicyPair,
    instances: &[Instance],
    specs: Option<&[DistributionSpec]>,
    mode: Mode,
    env: &EnvConfig,
    cfg: &MctsConfig,
    max_steps: Option<usize>,
) -> Result<Vec<DecisionRecord>, OracleError> {
    let per_episode: Vec<Vec<DecisionRecord>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let future = future_for(inst, specs, mode);
            let mut state = reset(inst, env)?;
            let mut rng = seeding::rng(0);
            let mut out = Vec::new();
            while !state.is_terminal() && out.len() < max_steps.unwrap_or(usize::MAX) {
                let feats = featurize_all(&state);
                let logits = pair.proposal.logits(&feats);
                let c = MctsConfig { seed: derive_path(cfg.seed, &[i as u64, state.t() as u64]), ..cfg.clone() };
                let d = mcts_decide(&state, &future, &c, None)?;
                out.push(DecisionRecord {
                    instance: i,
                    t: state.t(),
                    policy_logits: logits,
                    frequencies: d.frequencies.probs(),
                    oracle_best: d.best,
                });
                let (_, sel) = pair.decide(&feats, SelectMode::Argmax, &mut rng);
                state.step_index(sel.index)?;
            }
            Ok(out)
        })
        .collect::<Result<_, OracleError>>()?;
    Ok(per_episode.into_iter().flatten().collect())
}

/// Fraction of decisions whose oracle-best action is in the top-`k`
/// proposal.
pub fn inclusion_rate(records: &[DecisionRecord], k: KValue) -> f64 {
    let hits = records
        .iter()
        .filter(|r| top_k(&r.policy_logits, k.resolve(r.policy_logits.len())).contains(&r.oracle_best))
        .count();
    hits as f64 / records.len().max(1) as f64
}

pub fn inclusion_rates(records: &[DecisionRecord], ks: &[KValue]) -> Vec<(KValue, f64)> {
    ks.iter().map(|k| (*k, inclusion_rate(records, *k))).collect()
}

/// Mean policy probability and mean oracle frequency at each policy rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    /// 1-based.
    pub rank: usize,
    pub policy_prob: f64,
    pub optimal_freq: f64,
}

/// Candidates are ranked by policy probability (ties by candidate order);
/// decisions with fewer candidates contribute zero at the missing ranks, so
/// each curve sums to one.
pub fn rank_curves(records: &[DecisionRecord]) -> Vec<RankPoint> {
    let width = records.iter().map(|r| r.policy_logits.len()).max().unwrap_or(0);
    let mut pp = vec![0.0; width];
    let mut of = vec![0.0; width];
    for r in records {
        let probs = softmax(&r.policy_logits);
        let mut ranked: Vec<usize> = (0..r.policy_logits.len()).collect();
        ranked.sort_by(|&a, &b| r.policy_logits[b].total_cmp(&r.policy_logits[a]).then(a.cmp(&b)));
        for (rank, &i) in ranked.iter().enumerate() {
            pp[rank] += probs[i];
            of[rank] += r.frequencies[i];
        }
    }
    let n = records.len().max(1) as f64;
    (0..width)
        .map(|i| RankPoint { rank: i + 1, policy_prob: pp[i] / n, optimal_freq: of[i] / n })
        .collect()
}

pub fn write_inclusion_csv<W: Write>(mut w: W, rates: &[(KValue, f64)]) -> std::io::Result<()> {
    writeln!(w, "k,rate")?;
    for (k, r) in rates {
        writeln!(w, "{k},{r}")?;
    }
    Ok(())
}

pub fn write_rank_csv<W: Write>(mut w: W, points: &[RankPoint]) -> std::io::Result<()> {
    writeln!(w, "rank,policy_prob,optimal_freq")?;
    for p in points {
        writeln!(w, "{},{},{}", p.rank, p.policy_prob, p.optimal_freq)?;
    }
    Ok(())
}

/// Plays a whole episode choosing every action by [`mcts_decide`]; with
/// `restrict`, the root is limited to that pair's proposal set.
#[allow(clippy::too_many_arguments)]
pub fn play_with_mcts(
    instance: &Instance,
    spec: Option<&DistributionSpec>,
    mode: Mode,
    env: &EnvConfig,
    cfg: &MctsConfig,
    restrict: Option<&PolicyPair>,
) -> Result<f64, OracleError> {
    let future = match spec {
        Some(s) => FutureModel::Sampled { spec: s.clone(), mode },
        None => FutureModel::Known,
    };
    let mut state: PackingState = reset(instance, env)?;
    while !state.is_terminal() {
        let allowed = restrict.map(|pair| {
            let feats = featurize_all(&state);
            top_k(&pair.proposal.logits(&feats), pair.k)
        });
        let c = MctsConfig { seed: derive_path(cfg.seed, &[state.t() as u64]), ..cfg.clone() };
        let d = mcts_decide(&state, &future, &c, allowed.as_deref())?;
        state.step_index(d.best)?;
    }
    Ok(state.final_reward()?)
}
