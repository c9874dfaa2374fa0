//! Decomposed decision making: the proposal policy keeps the `k` most
//! probable candidates and the selection policy picks one of them.

mod checkpoint;
mod features;
mod scorer;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::env::{Agent, Choice, PackingState};
use crate::seeding::{self, Rng};

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_SCHEMA, CHECKPOINT_VERSION};
pub use features::{featurize, featurize_all, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use scorer::{argmax, log_softmax, softmax, Architecture, ParamsError, PolicyParams};

/// Default proposal size for discrete instances.
pub const DEFAULT_K_DISCRETE: usize = 3;
/// Default proposal size for continuous instances.
pub const DEFAULT_K_CONTINUOUS: usize = 10;

pub const fn linear() -> Architecture {
    Architecture::Linear { features: N_FEATURES }
}

pub const fn mlp() -> Architecture {
    Architecture::Mlp { features: N_FEATURES, hidden: 32 }
}

/// Top-`k` candidates under the proposal policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    /// Indices into the candidate set, ascending.
    pub indices: Vec<usize>,
    /// Proposal log-probabilities of every candidate in the full set.
    pub log_probs: Vec<f64>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// The `k` candidates with the largest logits; ties go to the lower index.
pub fn top_k(logits: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    order.sort_unstable();
    order
}

pub fn propose<F: AsRef<[f64]>>(params: &PolicyParams, feats: &[F], k: usize) -> ProposalSet {
    let logits = params.logits(feats);
    ProposalSet { indices: top_k(&logits, k), log_probs: log_softmax(&logits) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMode {
    Sample,
    Argmax,
}

/// Which candidates the proposal policy's log-probability is normalized
/// over when it is trained on the selected action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalSupport {
    #[default]
    Full,
    Proposal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Index into the candidate set.
    pub index: usize,
    /// Position inside the proposal set.
    pub slot: usize,
    /// Selection log-probability over the proposal set.
    pub log_prob_selection: f64,
    /// Proposal log-probability over the full candidate set.
    pub log_prob_proposal: f64,
}

pub fn select<F: AsRef<[f64]>>(
    params: &PolicyParams,
    feats: &[F],
    proposal: &ProposalSet,
    mode: SelectMode,
    rng: &mut Rng,
) -> Selection {
    let sub: Vec<&[f64]> = proposal.indices.iter().map(|&i| feats[i].as_ref()).collect();
    let logp = log_softmax(&params.logits(&sub));
    let slot = match mode {
        SelectMode::Argmax => argmax(&logp),
        SelectMode::Sample => sample_index(&logp, rng),
    };
    let index = proposal.indices[slot];
    Selection {
        index,
        slot,
        log_prob_selection: logp[slot],
        log_prob_proposal: proposal.log_probs[index],
    }
}

fn sample_index(log_probs: &[f64], rng: &mut Rng) -> usize {
    if log_probs.len() == 1 {
        return 0;
    }
    let w: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    WeightedIndex::new(&w).expect("softmax weights are positive").sample(rng)
}

/// A proposal and a selection policy with their own weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    pub proposal: PolicyParams,
    pub selection: PolicyParams,
    pub k: usize,
}

impl PolicyPair {
    /// Both policies start from copies of `init`.
    pub fn from_shared(init: &PolicyParams, k: usize) -> Self {
        Self { proposal: init.clone(), selection: init.clone(), k }
    }

    /// One policy choosing over the whole candidate set.
    pub fn coupled(params: &PolicyParams) -> Self {
        Self::from_shared(params, usize::MAX)
    }

    pub fn decide<F: AsRef<[f64]>>(
        &self,
        feats: &[F],
        mode: SelectMode,
        rng: &mut Rng,
    ) -> (ProposalSet, Selection) {
        let prop = propose(&self.proposal, feats, self.k);
        let sel = select(&self.selection, feats, &prop, mode, rng);
        (prop, sel)
    }
}

/// Plays a [`PolicyPair`] inside the environment.
pub struct PolicyAgent<'a> {
    pub pair: &'a PolicyPair,
    pub mode: SelectMode,
    rng: Rng,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(pair: &'a PolicyPair, mode: SelectMode, seed: u64) -> Self {
        Self { pair, mode, rng: seeding::rng(seed) }
    }
}

impl Agent for PolicyAgent<'_> {
    fn choose(&mut self, state: &PackingState) -> Choice {
        let feats = featurize_all(state);
        let (_, sel) = self.pair.decide(&feats, self.mode, &mut self.rng);
        Choice {
            index: sel.index,
            log_prob_selection: Some(sel.log_prob_selection),
            log_prob_proposal: Some(sel.log_prob_proposal),
        }
    }
}
