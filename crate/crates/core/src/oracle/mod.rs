//! Reference decision makers: tree search over sampled futures, exhaustive
//! search for tiny instances, and the analyses that compare a proposal
//! policy against them.

mod analysis;
mod mcts;

use crate::env::{EnvError, PackingState};

pub use analysis::{
    collect_decisions, inclusion_rate, inclusion_rates, play_with_mcts, rank_curves, write_inclusion_csv,
    write_rank_csv, DecisionRecord, KValue, RankPoint,
};
pub use mcts::{mcts_decide, FrequencyTable, FutureModel, MctsConfig, MctsDecision, RolloutPolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("state is terminal")]
    Terminal,
    #[error("search visited more than {limit} nodes")]
    GuardExceeded { limit: usize },
    #[error("restriction leaves no root action")]
    EmptyRestriction,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Node budget of [`exhaustive_best`].
pub const EXHAUSTIVE_NODE_LIMIT: usize = 1_000_000;

/// Exact best first action over all candidate sequences for the state's own
/// item stream. Earlier candidates win ties at every depth. With a depth
/// cap, states at the cap score their current utilization.
pub fn exhaustive_best(state: &PackingState, depth_cap: Option<usize>) -> Result<(usize, f64), OracleError> {
    exhaustive_best_with_limit(state, depth_cap, EXHAUSTIVE_NODE_LIMIT)
}

pub fn exhaustive_best_with_limit(
    state: &PackingState,
    depth_cap: Option<usize>,
    limit: usize,
) -> Result<(usize, f64), OracleError> {
    if state.is_terminal() {
        return Err(OracleError::Terminal);
    }
    let mut nodes = 0usize;
    let cap = depth_cap.unwrap_or(usize::MAX);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..state.candidates().len() {
        let mut child = state.clone();
        child.step_index(i)?;
        let v = dfs(&child, 1, cap, &mut nodes, limit)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

fn dfs(state: &PackingState, depth: usize, cap: usize, nodes: &mut usize, limit: usize) -> Result<f64, OracleError> {
    *nodes += 1;
    if *nodes > limit {
        return Err(OracleError::GuardExceeded { limit });
    }
    if state.is_terminal() || depth >= cap {
        return Ok(state.utilization());
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..state.candidates().len() {
        let mut child = state.clone();
        child.step_index(i)?;
        best = best.max(dfs(&child, depth + 1, cap, nodes, limit)?);
    }
    Ok(best)
}
