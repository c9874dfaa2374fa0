//! Item sets, item distributions, instances and datasets.
//!
//! A distribution is a categorical over the full cross product of an item
//! set's per-axis values, drawn from a flat Dirichlet. Continuous instances
//! add independent uniform noise in `[-0.5, 0.5]` to each axis of every
//! drawn item.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Dim3;
use crate::seeding::{self, derive_seed, Rng};

pub const DATASET_SCHEMA: &str = "packing-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const CONTINUOUS_NOISE: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("unknown subset `{0}`")]
    UnknownSubset(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("malformed dataset file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Discrete,
    Continuous,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Discrete => "discrete",
            Mode::Continuous => "continuous",
        })
    }
}

impl FromStr for Mode {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "discrete" => Ok(Mode::Discrete),
            "continuous" => Ok(Mode::Continuous),
            _ => Err(InstanceError::UnknownMode(s.to_string())),
        }
    }
}

/// The seven evaluation subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "Default")]
    Default,
    #[serde(rename = "ID-Large")]
    IdLarge,
    #[serde(rename = "ID-Medium")]
    IdMedium,
    #[serde(rename = "ID-Small")]
    IdSmall,
    #[serde(rename = "OOD")]
    Ood,
    #[serde(rename = "OOD-Large")]
    OodLarge,
    #[serde(rename = "OOD-Small")]
    OodSmall,
}

impl Subset {
    pub const ALL: [Subset; 7] = [
        Subset::Default,
        Subset::IdLarge,
        Subset::IdMedium,
        Subset::IdSmall,
        Subset::Ood,
        Subset::OodLarge,
        Subset::OodSmall,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subset::Default => "Default",
            Subset::IdLarge => "ID-Large",
            Subset::IdMedium => "ID-Medium",
            Subset::IdSmall => "ID-Small",
            Subset::Ood => "OOD",
            Subset::OodLarge => "OOD-Large",
            Subset::OodSmall => "OOD-Small",
        }
    }

    pub fn values(&self) -> Vec<u32> {
        match self {
            Subset::Default => vec![2, 4, 6, 8, 10],
            Subset::IdLarge => vec![6, 8, 10],
            Subset::IdMedium => vec![4, 6, 8],
            Subset::IdSmall => vec![2, 4, 6],
            Subset::Ood => (1..=11).collect(),
            Subset::OodLarge => (6..=11).collect(),
            Subset::OodSmall => (1..=6).collect(),
        }
    }

    pub fn item_set(&self) -> ItemSet {
        ItemSet::new(self.name(), self.values()).expect("built-in item sets are valid")
    }

    pub fn is_out_of_distribution(&self) -> bool {
        matches!(self, Subset::Ood | Subset::OodLarge | Subset::OodSmall)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Subset::ALL
            .into_iter()
            .find(|sub| sub.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| InstanceError::UnknownSubset(s.to_string()))
    }
}

/// Allowed per-axis base values; every axis draws from the same list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSet {
    pub name: String,
    pub values: Vec<u32>,
}

impl ItemSet {
    pub fn new(name: impl Into<String>, mut values: Vec<u32>) -> Result<Self, InstanceError> {
        values.sort_unstable();
        values.dedup();
        if values.is_empty() || values.contains(&0) {
            return Err(InstanceError::InvalidDistribution(
                "item set needs at least one positive value".into(),
            ));
        }
        Ok(Self { name: name.into(), values })
    }

    pub fn n_types(&self) -> usize {
        self.values.len().pow(3)
    }

    /// Base dimensions of item type `index` (row-major over l, w, h).
    pub fn item_type(&self, index: usize) -> Dim3 {
        let n = self.values.len();
        let v = |i: usize| self.values[i] as f64;
        Dim3::new(v(index / (n * n)), v((index / n) % n), v(index % n))
    }

    pub fn type_index(&self, d: &Dim3) -> Option<usize> {
        let pos = |x: f64| self.values.iter().position(|v| *v as f64 == x);
        let n = self.values.len();
        Some((pos(d.l)? * n + pos(d.w)?) * n + pos(d.h)?)
    }

    pub fn max_value(&self) -> u32 {
        *self.values.last().expect("non-empty")
    }
}

/// Categorical distribution over the item types of an [`ItemSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub item_set: ItemSet,
    pub probs: Vec<f64>,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn new(item_set: ItemSet, probs: Vec<f64>, seed: u64) -> Result<Self, InstanceError> {
        if probs.len() != item_set.n_types() {
            return Err(InstanceError::InvalidDistribution(format!(
                "expected {} probabilities, got {}",
                item_set.n_types(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(InstanceError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(InstanceError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { item_set, probs, seed })
    }

    /// All mass on `item`, which must be a type of `item_set`.
    pub fn point(item_set: ItemSet, item: Dim3) -> Result<Self, InstanceError> {
        let idx = item_set
            .type_index(&item)
            .ok_or_else(|| InstanceError::InvalidDistribution("item not in set".into()))?;
        let mut probs = vec![0.0; item_set.n_types()];
        probs[idx] = 1.0;
        Self::new(item_set, probs, 0)
    }

    /// Uniform over every item type.
    pub fn uniform(item_set: ItemSet) -> Self {
        let n = item_set.n_types();
        let probs = normalize(vec![1.0; n]);
        Self { item_set, probs, seed: 0 }
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|p| **p > 0.0).count()
    }

    fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated distribution")
    }

    pub fn sample_items(&self, len: usize, mode: Mode, rng: &mut Rng) -> Vec<Dim3> {
        let sampler = self.sampler();
        (0..len)
            .map(|_| {
                let base = self.item_set.item_type(sampler.sample(rng));
                match mode {
                    Mode::Discrete => base,
                    Mode::Continuous => Dim3::new(
                        base.l + rng.random_range(-CONTINUOUS_NOISE..=CONTINUOUS_NOISE),
                        base.w + rng.random_range(-CONTINUOUS_NOISE..=CONTINUOUS_NOISE),
                        base.h + rng.random_range(-CONTINUOUS_NOISE..=CONTINUOUS_NOISE),
                    ),
                }
            })
            .collect()
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    // Fold the rounding residue into the largest entry so the sum is 1 to
    // within one ulp of it.
    let residue = 1.0 - v.iter().sum::<f64>();
    if let Some(m) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *m += residue;
    }
    v
}

/// Flat-Dirichlet draw over the joint item types.
pub fn sample_distribution(set: &ItemSet, seed: u64) -> DistributionSpec {
    let mut rng = seeding::rng(seed);
    let raw: Vec<f64> = (0..set.n_types()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    DistributionSpec { item_set: set.clone(), probs: normalize(raw), seed }
}

/// Product of three independent flat-Dirichlet per-axis marginals.
pub fn sample_distribution_axis_independent(set: &ItemSet, seed: u64) -> DistributionSpec {
    let mut rng = seeding::rng(seed);
    let n = set.values.len();
    let mut axis = || normalize((0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect());
    let (a, b, c) = (axis(), axis(), axis());
    let mut probs = Vec::with_capacity(n * n * n);
    for pa in &a {
        for pb in &b {
            for pc in &c {
                probs.push(pa * pb * pc);
            }
        }
    }
    DistributionSpec { item_set: set.clone(), probs: normalize(probs), seed }
}

/// An ordered item stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub items: Vec<Dim3>,
    /// Index of the generating distribution within its dataset.
    pub distribution: usize,
}

pub fn sample_instance(spec: &DistributionSpec, len: usize, mode: Mode, seed: u64) -> Instance {
    let mut rng = seeding::rng(seed);
    Instance { items: spec.sample_items(len, mode, &mut rng), distribution: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSize {
    pub n_dists: usize,
    pub n_instances: usize,
    pub episode_len: usize,
}

impl DatasetSize {
    pub const FULL: DatasetSize = DatasetSize { n_dists: 100, n_instances: 64, episode_len: 70 };
}

impl Default for DatasetSize {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subset: String,
    pub mode: Mode,
    pub seed: u64,
    pub size: DatasetSize,
    pub distributions: Vec<DistributionSpec>,
    /// `instances[d]` holds the instances drawn from distribution `d`.
    pub instances: Vec<Vec<Instance>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    subset: String,
    mode: Mode,
    seed: u64,
    n_dists: usize,
    n_instances: usize,
    episode_len: usize,
    item_values: Vec<u32>,
    distributions: Vec<Vec<f64>>,
    distribution_seeds: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    dist: usize,
    instance: usize,
    items: Vec<Dim3>,
}

/// Generates a named subset. Each distribution draws from its own child seed,
/// so the result does not depend on how the work is scheduled.
pub fn build_dataset(subset: Subset, mode: Mode, seed: u64, size: DatasetSize) -> Dataset {
    build_dataset_from_set(&subset.item_set(), subset.name(), mode, seed, size)
}

pub fn build_dataset_from_set(
    set: &ItemSet,
    name: &str,
    mode: Mode,
    seed: u64,
    size: DatasetSize,
) -> Dataset {
    let set = &ItemSet { name: name.to_string(), ..set.clone() };
    let per_dist: Vec<(DistributionSpec, Vec<Instance>)> = (0..size.n_dists)
        .into_par_iter()
        .map(|d| {
            let dist_seed = derive_seed(seed, d as u64);
            let spec = sample_distribution(set, dist_seed);
            let mut rng = seeding::rng(derive_seed(dist_seed, u64::MAX));
            let instances = (0..size.n_instances)
                .map(|_| Instance {
                    items: spec.sample_items(size.episode_len, mode, &mut rng),
                    distribution: d,
                })
                .collect();
            (spec, instances)
        })
        .collect();
    let (distributions, instances) = per_dist.into_iter().unzip();
    Dataset { subset: name.to_string(), mode, seed, size, distributions, instances }
}

impl Dataset {
    pub fn file_name(&self) -> String {
        format!("{}_{}.jsonl", self.subset, self.mode)
    }

    pub fn n_instances(&self) -> usize {
        self.instances.iter().map(Vec::len).sum()
    }

    pub fn iter_instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().flatten()
    }

    pub fn item_set(&self) -> &ItemSet {
        &self.distributions[0].item_set
    }

    /// The first `n_dists` distributions with at most `n_instances` each.
    pub fn slice(&self, n_dists: usize, n_instances: usize) -> Dataset {
        let n_dists = n_dists.min(self.distributions.len());
        Dataset {
            distributions: self.distributions[..n_dists].to_vec(),
            instances: self.instances[..n_dists]
                .iter()
                .map(|v| v.iter().take(n_instances).cloned().collect())
                .collect(),
            size: DatasetSize { n_dists, n_instances: n_instances.min(self.size.n_instances), ..self.size },
            ..self.clone()
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), InstanceError> {
        let header = Header {
            schema: DATASET_SCHEMA.into(),
            version: DATASET_VERSION,
            subset: self.subset.clone(),
            mode: self.mode,
            seed: self.seed,
            n_dists: self.size.n_dists,
            n_instances: self.size.n_instances,
            episode_len: self.size.episode_len,
            item_values: self.distributions.first().map(|d| d.item_set.values.clone()).unwrap_or_default(),
            distributions: self.distributions.iter().map(|d| d.probs.clone()).collect(),
            distribution_seeds: self.distributions.iter().map(|d| d.seed).collect(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for (d, list) in self.instances.iter().enumerate() {
            for (i, inst) in list.iter().enumerate() {
                let rec = Record { dist: d, instance: i, items: inst.items.clone() };
                serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset, InstanceError> {
        let mut lines = r.lines().enumerate();
        let err = |line: usize, msg: String| InstanceError::Parse { line: line + 1, msg };
        let (_, first) = lines.next().ok_or_else(|| err(0, "empty file".into()))?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| err(0, e.to_string()))?;
        if header.schema != DATASET_SCHEMA || header.version != DATASET_VERSION {
            return Err(err(0, format!("unsupported schema {} v{}", header.schema, header.version)));
        }
        if header.distributions.len() != header.n_dists || header.distribution_seeds.len() != header.n_dists {
            return Err(err(0, "distribution count does not match n_dists".into()));
        }
        let set = ItemSet::new(header.subset.clone(), header.item_values.clone()).map_err(|e| err(0, e.to_string()))?;
        let distributions = header
            .distributions
            .into_iter()
            .zip(header.distribution_seeds)
            .map(|(p, s)| DistributionSpec::new(set.clone(), p, s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(0, e.to_string()))?;
        let mut instances: Vec<Vec<Instance>> = vec![Vec::new(); header.n_dists];
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| err(n, e.to_string()))?;
            let slot = instances.get_mut(rec.dist).ok_or_else(|| err(n, format!("distribution {} out of range", rec.dist)))?;
            if rec.instance != slot.len() {
                return Err(err(n, format!("instance {} out of order", rec.instance)));
            }
            slot.push(Instance { items: rec.items, distribution: rec.dist });
        }
        Ok(Dataset {
            subset: header.subset,
            mode: header.mode,
            seed: header.seed,
            size: DatasetSize {
                n_dists: header.n_dists,
                n_instances: header.n_instances,
                episode_len: header.episode_len,
            },
            distributions,
            instances,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_set_has_125_types() {
        let spec = sample_distribution(&Subset::Default.item_set(), 1);
        assert_eq!(spec.probs.len(), 125);
        assert!((spec.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(spec.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn single_value_set_is_a_point_mass() {
        let set = ItemSet::new("one", vec![3]).unwrap();
        let spec = sample_distribution(&set, 9);
        assert_eq!(spec.probs, vec![1.0]);
    }

    #[test]
    fn same_seed_same_distribution() {
        let set = Subset::Ood.item_set();
        assert_eq!(sample_distribution(&set, 5), sample_distribution(&set, 5));
        assert_ne!(sample_distribution(&set, 5).probs, sample_distribution(&set, 6).probs);
    }

    #[test]
    fn axis_independent_is_a_product() {
        let set = Subset::IdSmall.item_set();
        let spec = sample_distribution_axis_independent(&set, 3);
        assert!((spec.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // p(a,b,c) * p(a',b',c') == p(a,b,c') * p(a',b',c) for a product measure.
        let p = |i: usize| spec.probs[i];
        let lhs = p(0) * p(26);
        let rhs = p(2) * p(24);
        assert!((lhs - rhs).abs() < 1e-15);
    }

    #[test]
    fn point_distribution_repeats_item() {
        let set = ItemSet::new("s", vec![2, 4, 6]).unwrap();
        let spec = DistributionSpec::point(set, Dim3::new(2.0, 4.0, 6.0)).unwrap();
        let inst = sample_instance(&spec, 3, Mode::Discrete, 0);
        assert_eq!(inst.items, vec![Dim3::new(2.0, 4.0, 6.0); 3]);
    }

    #[test]
    fn continuous_noise_stays_in_range() {
        let set = ItemSet::new("s", vec![2, 4, 6]).unwrap();
        let spec = DistributionSpec::point(set, Dim3::new(2.0, 4.0, 6.0)).unwrap();
        let inst = sample_instance(&spec, 2000, Mode::Continuous, 11);
        for d in &inst.items {
            assert!((1.5..=2.5).contains(&d.l));
            assert!((3.5..=4.5).contains(&d.w));
            assert!((5.5..=6.5).contains(&d.h));
        }
        assert!(inst.items.iter().any(|d| d.l != 2.0));
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let set = ItemSet::new("s", vec![2, 4]).unwrap();
        let spec = sample_distribution(&set, 21);
        let n = 100_000usize;
        let inst = sample_instance(&spec, n, Mode::Discrete, 22);
        let mut counts = vec![0usize; set.n_types()];
        for d in &inst.items {
            counts[set.type_index(d).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(&spec.probs) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma + 1.0, "{c} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn subset_names_round_trip() {
        for s in Subset::ALL {
            assert_eq!(s.name().parse::<Subset>().unwrap(), s);
        }
        assert!("Huge".parse::<Subset>().is_err());
        assert_eq!("ood_large".parse::<Subset>().unwrap(), Subset::OodLarge);
    }

    #[test]
    fn ood_sets_add_odd_values() {
        let default: Vec<u32> = Subset::Default.values();
        for s in [Subset::IdLarge, Subset::IdMedium, Subset::IdSmall] {
            assert!(s.values().iter().all(|v| default.contains(v)));
        }
        let ood = Subset::Ood.values();
        for v in [1, 3, 5, 7, 9, 11] {
            assert!(ood.contains(&v) && !default.contains(&v));
        }
        assert_eq!(Subset::OodLarge.values(), vec![6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn full_default_dataset_shape() {
        let ds = build_dataset(Subset::Default, Mode::Discrete, 2024, DatasetSize::FULL);
        assert_eq!(ds.n_instances(), 6400);
        for inst in ds.iter_instances() {
            assert_eq!(inst.items.len(), 70);
            for d in &inst.items {
                for v in d.as_array() {
                    assert!([2.0, 4.0, 6.0, 8.0, 10.0].contains(&v));
                }
            }
        }
    }

    #[test]
    fn ood_large_axes() {
        let size = DatasetSize { n_dists: 5, n_instances: 4, episode_len: 70 };
        let ds = build_dataset(Subset::OodLarge, Mode::Discrete, 3, size);
        for d in ds.iter_instances().flat_map(|i| &i.items) {
            assert!(d.as_array().iter().all(|v| (6.0..=11.0).contains(v) && v.fract() == 0.0));
        }
    }

    #[test]
    fn builds_are_byte_identical() {
        let size = DatasetSize { n_dists: 6, n_instances: 5, episode_len: 12 };
        let a = build_dataset(Subset::IdSmall, Mode::Continuous, 77, size).to_jsonl_bytes();
        let b = build_dataset(Subset::IdSmall, Mode::Continuous, 77, size).to_jsonl_bytes();
        assert_eq!(a, b);
        let c = build_dataset(Subset::IdSmall, Mode::Continuous, 78, size).to_jsonl_bytes();
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_and_serial_builds_agree() {
        let size = DatasetSize { n_dists: 8, n_instances: 3, episode_len: 10 };
        let par = build_dataset(Subset::Ood, Mode::Discrete, 5, size);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| build_dataset(Subset::Ood, Mode::Discrete, 5, size));
        assert_eq!(par, ser);
    }

    #[test]
    fn rejects_bad_header() {
        let bad = b"{\"schema\":\"other\"}\n";
        assert!(Dataset::read_jsonl(&bad[..]).is_err());
        assert!(Dataset::read_jsonl(&b""[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn jsonl_round_trip(seed in any::<u64>(), sub in 0usize..7, cont in any::<bool>()) {
            let mode = if cont { Mode::Continuous } else { Mode::Discrete };
            let size = DatasetSize { n_dists: 3, n_instances: 2, episode_len: 5 };
            let ds = build_dataset(Subset::ALL[sub], mode, seed, size);
            let bytes = ds.to_jsonl_bytes();
            let back = Dataset::read_jsonl(&bytes[..]).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(back.to_jsonl_bytes(), bytes);
        }
    }
}
