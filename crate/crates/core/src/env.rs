//! The online packing MDP.
//!
//! A [`PackingState`] owns the packed boxes, the spatial indices and the
//! candidate set for the current item. It is the only place placements are
//! committed, and it re-derives the next candidate set at the end of every
//! step so that a non-terminal state always has at least one legal action.

use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{utilization, Container, Dim3, PlacedBox, EPS};
use crate::instances::{Instance, Mode};
use crate::seeding::{self, derive_seed, Rng};
use crate::spatial::{
    ems_update, generate_candidates, CandidateAction, CandidateConfig, CandidateSet,
    EmptyMaximalSpace, Heightmap, PackingView,
};

pub const TRACE_SCHEMA: &str = "packing-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("instance has no items")]
    EmptyInstance,
    #[error("episode already terminated")]
    Terminal,
    #[error("episode has not terminated yet")]
    NotTerminal,
    #[error("action is not in the current candidate set")]
    ForeignAction,
    #[error("candidate index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("spatial index corrupted: {0}")]
    Corrupted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub container: Container,
    pub candidates: CandidateConfig,
    /// Heightmap cells along x and y.
    pub heightmap_resolution: [usize; 2],
    /// Emit the volume gained by every step as its reward instead of a
    /// single terminal reward. Both sum to the final utilization.
    pub dense_reward: bool,
}

impl EnvConfig {
    /// One heightmap cell per unit length; 50 candidates.
    pub fn discrete(edge: f64) -> Self {
        let n = edge.round().max(1.0) as usize;
        Self {
            container: Container::cube(edge),
            candidates: CandidateConfig::discrete(),
            heightmap_resolution: [n, n],
            dense_reward: false,
        }
    }

    /// Two heightmap cells per unit length; 100 candidates.
    pub fn continuous(edge: f64) -> Self {
        let n = (2.0 * edge).round().max(1.0) as usize;
        Self {
            container: Container::cube(edge),
            candidates: CandidateConfig::continuous(),
            heightmap_resolution: [n, n],
            dense_reward: false,
        }
    }

    pub fn for_mode(mode: Mode, edge: f64) -> Self {
        match mode {
            Mode::Discrete => Self::discrete(edge),
            Mode::Continuous => Self::continuous(edge),
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.candidates.cap = cap;
        self
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::discrete(20.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackingState {
    config: Arc<EnvConfig>,
    items: Arc<[Dim3]>,
    t: usize,
    packed: Vec<PlacedBox>,
    heightmap: Heightmap,
    spaces: Vec<EmptyMaximalSpace>,
    candidates: CandidateSet,
    terminal: bool,
}

/// Result of a single transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
}

pub fn reset(instance: &Instance, config: &EnvConfig) -> Result<PackingState, EnvError> {
    PackingState::new(instance.items.clone().into(), Arc::new(config.clone()))
}

impl PackingState {
    pub fn new(items: Arc<[Dim3]>, config: Arc<EnvConfig>) -> Result<Self, EnvError> {
        if items.is_empty() {
            return Err(EnvError::EmptyInstance);
        }
        let [rx, ry] = config.heightmap_resolution;
        let mut s = Self {
            heightmap: Heightmap::new(&config.container, rx, ry),
            spaces: vec![EmptyMaximalSpace::whole(&config.container)],
            config,
            items,
            t: 0,
            packed: Vec::new(),
            candidates: CandidateSet::default(),
            terminal: false,
        };
        s.refresh_candidates();
        Ok(s)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn container(&self) -> &Container {
        &self.config.container
    }

    pub fn packed(&self) -> &[PlacedBox] {
        &self.packed
    }

    pub fn heightmap(&self) -> &Heightmap {
        &self.heightmap
    }

    pub fn spaces(&self) -> &[EmptyMaximalSpace] {
        &self.spaces
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    /// Number of committed steps.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn items(&self) -> &[Dim3] {
        &self.items
    }

    /// The item awaiting placement; `None` once terminal.
    pub fn current_item(&self) -> Option<Dim3> {
        (!self.terminal).then(|| self.items[self.t])
    }

    /// Items after the current one.
    pub fn remaining_items(&self) -> &[Dim3] {
        let from = (self.t + 1).min(self.items.len());
        &self.items[from..]
    }

    pub fn utilization(&self) -> f64 {
        utilization(&self.packed, &self.config.container)
    }

    pub fn view(&self) -> PackingView<'_> {
        PackingView {
            container: &self.config.container,
            packed: &self.packed,
            spaces: &self.spaces,
            heightmap: &self.heightmap,
        }
    }

    /// Copy of this state whose items after the current one are replaced by
    /// `future`.
    pub fn with_future(&self, future: &[Dim3]) -> PackingState {
        let keep = (self.t + 1).min(self.items.len());
        let items: Vec<Dim3> = self.items[..keep].iter().chain(future).copied().collect();
        PackingState { items: items.into(), ..self.clone() }
    }

    fn refresh_candidates(&mut self) {
        self.candidates = match self.items.get(self.t) {
            Some(item) => generate_candidates(&self.view(), item, &self.config.candidates),
            None => CandidateSet::default(),
        };
        self.terminal = self.candidates.is_empty();
    }

    pub fn step_index(&mut self, index: usize) -> Result<StepOutcome, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        let action = *self
            .candidates
            .get(index)
            .ok_or(EnvError::IndexOutOfRange { index, len: self.candidates.len() })?;
        self.commit(&action)
    }

    /// Commits `action`, which must belong to the current candidate set.
    pub fn step(&mut self, action: &CandidateAction) -> Result<StepOutcome, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        let i = self.candidates.position(action).ok_or(EnvError::ForeignAction)?;
        let action = self.candidates.actions[i];
        self.commit(&action)
    }

    fn commit(&mut self, action: &CandidateAction) -> Result<StepOutcome, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        if !action.feasible {
            return Err(EnvError::ForeignAction);
        }
        let b = action.placed_box();
        let before = self.utilization();
        self.spaces = ems_update(&self.spaces, &b).map_err(|e| EnvError::Corrupted(e.to_string()))?;
        self.heightmap.commit(&b);
        self.packed.push(b);
        self.t += 1;
        if cfg!(debug_assertions) {
            self.check_spaces()?;
        }
        self.refresh_candidates();
        let after = self.utilization();
        let reward = match (self.config.dense_reward, self.terminal) {
            (true, _) => after - before,
            (false, true) => after,
            (false, false) => 0.0,
        };
        Ok(StepOutcome { reward, terminal: self.terminal })
    }

    fn check_spaces(&self) -> Result<(), EnvError> {
        for s in &self.spaces {
            if let Some(b) = self.packed.iter().find(|b| s.intersects(b)) {
                return Err(EnvError::Corrupted(format!("space {s:?} intersects {b:?}")));
            }
        }
        Ok(())
    }

    /// Terminal reward: the utilization of the finished packing.
    pub fn final_reward(&self) -> Result<f64, EnvError> {
        if !self.terminal {
            return Err(EnvError::NotTerminal);
        }
        Ok(self.utilization())
    }
}

/// Per-step record kept in an [`EpisodeResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub item: Dim3,
    pub uti_before: f64,
    pub candidates: CandidateSet,
    pub chosen: usize,
    /// Log-probability of the chosen action under the selection policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_prob_selection: Option<f64>,
    /// Log-probability of the chosen action under the proposal policy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_prob_proposal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub uti: f64,
    pub num_packed: usize,
    pub trajectory: Vec<TraceStep>,
}

/// A decision returned by an [`Agent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub log_prob_selection: Option<f64>,
    pub log_prob_proposal: Option<f64>,
}

impl Choice {
    pub fn plain(index: usize) -> Self {
        Self { index, log_prob_selection: None, log_prob_proposal: None }
    }
}

/// Anything that picks an index into the current candidate set.
pub trait Agent {
    fn choose(&mut self, state: &PackingState) -> Choice;
}

impl<F: FnMut(&PackingState) -> usize> Agent for F {
    fn choose(&mut self, state: &PackingState) -> Choice {
        Choice::plain(self(state))
    }
}

/// Uniformly random candidate.
pub struct RandomAgent {
    rng: Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: seeding::rng(seed) }
    }
}

impl Agent for RandomAgent {
    fn choose(&mut self, state: &PackingState) -> Choice {
        Choice::plain(self.rng.random_range(0..state.candidates().len()))
    }
}

/// Lowest resulting top face, ties broken by candidate order.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyAgent;

impl Agent for GreedyAgent {
    fn choose(&mut self, state: &PackingState) -> Choice {
        let mut best = 0;
        let mut best_top = f64::INFINITY;
        for (i, a) in state.candidates().iter().enumerate() {
            let top = a.placement.z + a.dim.h;
            if top < best_top - EPS {
                best = i;
                best_top = top;
            }
        }
        Choice::plain(best)
    }
}

/// Plays `state` to the end with `agent`.
pub fn play_out(mut state: PackingState, agent: &mut impl Agent) -> Result<EpisodeResult, EnvError> {
    let mut trajectory = Vec::new();
    while !state.is_terminal() {
        let choice = agent.choose(&state);
        trajectory.push(TraceStep {
            t: state.t(),
            item: state.current_item().expect("non-terminal"),
            uti_before: state.utilization(),
            candidates: state.candidates().clone(),
            chosen: choice.index,
            log_prob_selection: choice.log_prob_selection,
            log_prob_proposal: choice.log_prob_proposal,
        });
        state.step_index(choice.index)?;
    }
    Ok(EpisodeResult { uti: state.final_reward()?, num_packed: state.packed().len(), trajectory })
}

pub fn run_episode(
    instance: &Instance,
    config: &EnvConfig,
    agent: &mut impl Agent,
) -> Result<EpisodeResult, EnvError> {
    play_out(reset(instance, config)?, agent)
}

/// Runs every instance in parallel with its own agent, built from a seed
/// derived from `(seed, index)`. Results come back in instance order.
pub fn run_batch<A, F>(
    instances: &[Instance],
    config: &EnvConfig,
    seed: u64,
    make_agent: F,
) -> Result<Vec<EpisodeResult>, EnvError>
where
    A: Agent,
    F: Fn(u64) -> A + Sync,
{
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| run_episode(inst, config, &mut make_agent(derive_seed(seed, i as u64))))
        .collect()
}

#[derive(Serialize)]
struct TraceHeader<'a> {
    schema: &'a str,
    version: u32,
    container: Dim3,
    episodes: usize,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    episode: usize,
    #[serde(flatten)]
    result: &'a EpisodeResult,
}

/// Writes episodes as JSON lines: a header, then one record per episode.
pub fn write_traces<W: Write>(
    mut w: W,
    container: &Container,
    episodes: &[EpisodeResult],
) -> std::io::Result<()> {
    let header =
        TraceHeader { schema: TRACE_SCHEMA, version: TRACE_VERSION, container: container.dim, episodes: episodes.len() };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (episode, result) in episodes.iter().enumerate() {
        serde_json::to_writer(&mut w, &TraceRecord { episode, result })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
