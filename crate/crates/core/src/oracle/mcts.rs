use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Agent, GreedyAgent, PackingState};
use crate::geometry::Dim3;
use crate::instances::{DistributionSpec, Mode};
use crate::policy::{PolicyAgent, PolicyPair, SelectMode};
use crate::seeding::{self, derive_seed};

use super::OracleError;

/// How the tree simulates decisions below the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum RolloutPolicy {
    /// Lowest resulting top face.
    #[default]
    Greedy,
    /// Argmax of a policy pair.
    Policy(PolicyPair),
}

/// Where the items after the current one come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FutureModel {
    /// The state's own remaining items; every tree sees the same future.
    Known,
    /// Items drawn from `spec` for each tree, as many as the state has
    /// left; only the stream length is taken from the state.
    Sampled { spec: DistributionSpec, mode: Mode },
}

impl FutureModel {
    fn draw(&self, state: &PackingState, seed: u64) -> Option<Vec<Dim3>> {
        match self {
            FutureModel::Known => None,
            FutureModel::Sampled { spec, mode } => {
                Some(spec.sample_items(state.remaining_items().len(), *mode, &mut seeding::rng(seed)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MctsConfig {
    /// Simulations per tree.
    pub simulations: usize,
    /// UCB exploration constant.
    pub c: f64,
    /// Trees per decision, one per sampled future.
    pub futures: usize,
    pub rollout: RolloutPolicy,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self { simulations: 200, c: std::f64::consts::SQRT_2, futures: 64, rollout: RolloutPolicy::Greedy, seed: 0 }
    }
}

/// How often each candidate was the best root action across futures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub counts: Vec<usize>,
    pub samples: usize,
}

impl FrequencyTable {
    pub fn new(n: usize) -> Self {
        Self { counts: vec![0; n], samples: 0 }
    }

    pub fn probs(&self) -> Vec<f64> {
        let n = self.samples.max(1) as f64;
        self.counts.iter().map(|c| *c as f64 / n).collect()
    }

    /// Most frequent candidate; ties go to the lower index.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.counts.iter().enumerate() {
            if *c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// Sum of two tables over the same candidates.
    pub fn merge(&mut self, other: &FrequencyTable) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MctsDecision {
    /// Candidate index chosen most often as best.
    pub best: usize,
    pub frequencies: FrequencyTable,
    /// Per candidate, the best return found below it, averaged over trees;
    /// `NaN` for candidates never expanded.
    pub best_returns: Vec<f64>,
}

struct Node {
    state: PackingState,
    children: Vec<(usize, usize)>,
    untried: std::collections::VecDeque<usize>,
    visits: u32,
    total: f64,
    best: f64,
}

impl Node {
    fn new(state: PackingState, actions: Vec<usize>) -> Self {
        Self { state, children: Vec::new(), untried: actions.into(), visits: 0, total: 0.0, best: f64::NEG_INFINITY }
    }
}

fn play_to_end(mut state: PackingState, rollout: &RolloutPolicy) -> Result<f64, OracleError> {
    match rollout {
        RolloutPolicy::Greedy => {
            while !state.is_terminal() {
                let i = GreedyAgent.choose(&state).index;
                state.step_index(i)?;
            }
        }
        RolloutPolicy::Policy(pair) => {
            let mut agent = PolicyAgent::new(pair, SelectMode::Argmax, 0);
            while !state.is_terminal() {
                let i = agent.choose(&state).index;
                state.step_index(i)?;
            }
        }
    }
    Ok(state.final_reward()?)
}

/// Runs UCT on one determinized tree and returns, per root action, the best
/// backed-up return (`-inf` when never expanded).
fn search_tree(
    root_state: PackingState,
    root_actions: &[usize],
    cfg: &MctsConfig,
) -> Result<Vec<(usize, f64)>, OracleError> {
    let mut nodes = vec![Node::new(root_state, root_actions.to_vec())];
    for _ in 0..cfg.simulations.max(1) {
        let mut path = vec![0usize];
        let mut cur = 0;
        while !nodes[cur].state.is_terminal() && nodes[cur].untried.is_empty() && !nodes[cur].children.is_empty() {
            let ln_n = f64::from(nodes[cur].visits).ln();
            let mut pick = nodes[cur].children[0].1;
            let mut pick_score = f64::NEG_INFINITY;
            for &(_, id) in &nodes[cur].children {
                let ch = &nodes[id];
                let n = f64::from(ch.visits);
                let score = ch.total / n + cfg.c * (ln_n / n).sqrt();
                if score > pick_score {
                    pick = id;
                    pick_score = score;
                }
            }
            cur = pick;
            path.push(cur);
        }
        if !nodes[cur].state.is_terminal() {
            if let Some(a) = nodes[cur].untried.pop_front() {
                let mut child = nodes[cur].state.clone();
                child.step_index(a)?;
                let actions = (0..child.candidates().len()).collect();
                let id = nodes.len();
                nodes.push(Node::new(child, actions));
                nodes[cur].children.push((a, id));
                cur = id;
                path.push(cur);
            }
        }
        let value = if nodes[cur].state.is_terminal() {
            nodes[cur].state.final_reward()?
        } else {
            play_to_end(nodes[cur].state.clone(), &cfg.rollout)?
        };
        for &id in &path {
            let n = &mut nodes[id];
            n.visits += 1;
            n.total += value;
            n.best = n.best.max(value);
        }
    }
    Ok(nodes[0].children.iter().map(|&(a, id)| (a, nodes[id].best)).collect())
}

/// Monte Carlo tree search over sampled futures.
///
/// Each of `cfg.futures` trees fixes one future item sequence and runs
/// `cfg.simulations` UCT simulations. The root action with the highest
/// return found in a tree (lowest index on ties) scores one count in the
/// frequency table. With `restrict`, root children are limited to those
/// candidate indices.
pub fn mcts_decide(
    state: &PackingState,
    future: &FutureModel,
    cfg: &MctsConfig,
    restrict: Option<&[usize]>,
) -> Result<MctsDecision, OracleError> {
    if state.is_terminal() {
        return Err(OracleError::Terminal);
    }
    let n = state.candidates().len();
    let root_actions: Vec<usize> = match restrict {
        Some(r) => {
            let mut r: Vec<usize> = r.iter().copied().filter(|i| *i < n).collect();
            r.sort_unstable();
            r.dedup();
            r
        }
        None => (0..n).collect(),
    };
    if root_actions.is_empty() {
        return Err(OracleError::EmptyRestriction);
    }
    let trees: Vec<Vec<(usize, f64)>> = (0..cfg.futures.max(1) as u64)
        .into_par_iter()
        .map(|f| {
            let s = match future.draw(state, derive_seed(cfg.seed, f)) {
                Some(items) => state.with_future(&items),
                None => state.clone(),
            };
            search_tree(s, &root_actions, cfg)
        })
        .collect::<Result<_, _>>()?;

    let mut freq = FrequencyTable::new(n);
    let mut sums = vec![0.0; n];
    let mut seen = vec![0usize; n];
    for tree in &trees {
        let mut best: Option<(usize, f64)> = None;
        for &(a, v) in tree {
            if v.is_finite() {
                sums[a] += v;
                seen[a] += 1;
            }
            if best.is_none_or(|(b, bv)| v > bv || (v == bv && a < b)) {
                best = Some((a, v));
            }
        }
        if let Some((a, _)) = best {
            freq.counts[a] += 1;
        }
        freq.samples += 1;
    }
    let best_returns = sums.iter().zip(&seen).map(|(s, k)| if *k > 0 { s / *k as f64 } else { f64::NAN }).collect();
    Ok(MctsDecision { best: freq.best(), frequencies: freq, best_returns })
}
