//! Reference implementations used as test oracles. None of them calls the
//! library's own geometry predicates.

#![allow(dead_code)]

use packing_core::env::EpisodeResult;
use packing_core::geometry::{Container, Dim3, PlacedBox, Placement};
use packing_core::policy::{Architecture, PolicyParams};
use packing_core::seeding;
use packing_core::spatial::{ems_update, EmptyMaximalSpace};
use rand::Rng as _;

/// Integer box `[lo, hi)` on each axis.
pub type IBox = ([i64; 3], [i64; 3]);

/// Occupancy grid of an integer-aligned packing in an `n`-cube.
pub struct Grid {
    n: usize,
    filled: Vec<bool>,
}

impl Grid {
    pub fn new(n: usize, boxes: &[IBox]) -> Self {
        let mut filled = vec![false; n * n * n];
        for (lo, hi) in boxes {
            for x in lo[0]..hi[0] {
                for y in lo[1]..hi[1] {
                    for z in lo[2]..hi[2] {
                        filled[(x as usize * n + y as usize) * n + z as usize] = true;
                    }
                }
            }
        }
        Self { n, filled }
    }

    fn empty(&self, lo: [i64; 3], hi: [i64; 3]) -> bool {
        let n = self.n as i64;
        if (0..3).any(|i| lo[i] < 0 || hi[i] > n || lo[i] >= hi[i]) {
            return false;
        }
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for z in lo[2]..hi[2] {
                    if self.filled[((x * n + y) * n + z) as usize] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Every empty box that cannot be grown by one unit on any face,
    /// sorted.
    pub fn maximal_empty_boxes(&self) -> Vec<IBox> {
        let n = self.n as i64;
        let mut out = Vec::new();
        for x0 in 0..n {
            for x1 in x0 + 1..=n {
                for y0 in 0..n {
                    for y1 in y0 + 1..=n {
                        for z0 in 0..n {
                            for z1 in z0 + 1..=n {
                                let (lo, hi) = ([x0, y0, z0], [x1, y1, z1]);
                                if !self.empty(lo, hi) {
                                    continue;
                                }
                                let grows = (0..3).any(|a| {
                                    let mut l = lo;
                                    l[a] -= 1;
                                    let mut h = hi;
                                    h[a] += 1;
                                    self.empty(l, hi) || self.empty(lo, h)
                                });
                                if !grows {
                                    out.push((lo, hi));
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }
}

/// Up to `max_boxes` non-overlapping integer boxes with edges in 1..=4,
/// placed anywhere in the `edge`-cube (floating boxes included).
pub fn random_packing(rng: &mut seeding::Rng, edge: i64, max_boxes: usize) -> Vec<IBox> {
    let target = rng.random_range(1..=max_boxes);
    let mut boxes: Vec<IBox> = Vec::new();
    for _ in 0..200 {
        if boxes.len() == target {
            break;
        }
        let d: [i64; 3] = std::array::from_fn(|_| rng.random_range(1..=4));
        let lo: [i64; 3] = std::array::from_fn(|i| rng.random_range(0..=edge - d[i]));
        let hi = [lo[0] + d[0], lo[1] + d[1], lo[2] + d[2]];
        if boxes.iter().all(|(a, b)| (0..3).any(|k| hi[k] <= a[k] || b[k] <= lo[k])) {
            boxes.push((lo, hi));
        }
    }
    boxes
}

pub fn int_box(b: &IBox) -> PlacedBox {
    let (lo, hi) = b;
    PlacedBox::new(
        Dim3::new((hi[0] - lo[0]) as f64, (hi[1] - lo[1]) as f64, (hi[2] - lo[2]) as f64),
        Placement::new(lo[0] as f64, lo[1] as f64, lo[2] as f64),
    )
}

/// The library's incremental EMS set after packing `boxes` in order, as
/// sorted integer boxes.
pub fn incremental_spaces(edge: i64, boxes: &[IBox]) -> Vec<IBox> {
    let c = Container::cube(edge as f64);
    let mut spaces = vec![EmptyMaximalSpace::whole(&c)];
    for b in boxes {
        spaces = ems_update(&spaces, &int_box(b)).expect("legal packing");
    }
    let mut out: Vec<IBox> =
        spaces.iter().map(|s| (s.min.map(|v| v.round() as i64), s.max.map(|v| v.round() as i64))).collect();
    out.sort();
    out
}

/// Why a packing is illegal, if it is: containment failures and pairwise
/// interior overlaps, found from raw coordinates with tolerance `tol`.
pub fn audit_packing(boxes: &[([f64; 3], [f64; 3])], container: [f64; 3], tol: f64) -> Vec<String> {
    let mut problems = Vec::new();
    for (i, (lo, hi)) in boxes.iter().enumerate() {
        for a in 0..3 {
            if lo[a] < -tol || hi[a] > container[a] + tol || hi[a] <= lo[a] {
                problems.push(format!("box {i} leaves the container on axis {a}: [{}, {}]", lo[a], hi[a]));
            }
        }
    }
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let (a, b) = (&boxes[i], &boxes[j]);
            let interiors_meet = (0..3).all(|k| a.0[k] < b.1[k] - tol && b.0[k] < a.1[k] - tol);
            if interiors_meet {
                problems.push(format!("boxes {i} and {j} overlap"));
            }
        }
    }
    problems
}

pub fn raw(b: &PlacedBox) -> ([f64; 3], [f64; 3]) {
    let lo = [b.pos.x, b.pos.y, b.pos.z];
    (lo, [lo[0] + b.dim.l, lo[1] + b.dim.w, lo[2] + b.dim.h])
}

/// Boxes placed during an episode, rebuilt from its trace.
pub fn boxes_from_trace(ep: &EpisodeResult) -> Vec<([f64; 3], [f64; 3])> {
    ep.trajectory
        .iter()
        .map(|s| {
            let a = &s.candidates.actions[s.chosen];
            let lo = [a.placement.x, a.placement.y, a.placement.z];
            (lo, [lo[0] + a.dim.l, lo[1] + a.dim.w, lo[2] + a.dim.h])
        })
        .collect()
}

/// Central finite difference of `f` at `x` along every coordinate.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` over the largest coordinate.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// Forward pass written out from the documented parameter layout: linear
/// is `θ · f`; the MLP stores `W` row-major (`hidden x features`), then
/// `b`, then `v`.
pub fn reference_log_prob(arch: Architecture, theta: &[f64], feats: &[Vec<f64>], chosen: usize) -> f64 {
    let logit = |f: &[f64]| -> f64 {
        match arch {
            Architecture::Linear { .. } => theta.iter().zip(f).map(|(a, b)| a * b).sum(),
            Architecture::Mlp { features, hidden } => (0..hidden)
                .map(|j| {
                    let row = &theta[j * features..(j + 1) * features];
                    let pre: f64 = row.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + theta[hidden * features + j];
                    theta[hidden * features + hidden + j] * pre.tanh()
                })
                .sum(),
        }
    };
    let z: Vec<f64> = feats.iter().map(|f| logit(f)).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    z[chosen] - m - z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Largest relative error between the analytic log-prob gradient and a
/// central difference of [`reference_log_prob`], one entry per random
/// `(params, features, choice)` case.
pub fn gradient_check(arch: Architecture, cases: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng(seed);
    (0..cases)
        .map(|_| {
            let theta: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = rng.random_range(2..=8);
            let feats: Vec<Vec<f64>> =
                (0..n).map(|_| (0..arch.features()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let chosen = rng.random_range(0..n);
            let params = PolicyParams::new(arch, theta.clone()).unwrap();
            let analytic = params.log_prob_grad(&feats, chosen);
            let numeric = numeric_gradient(|t| reference_log_prob(arch, t, &feats, chosen), &theta, 1e-5);
            max_relative_error(&analytic, &numeric, 1e-4)
        })
        .collect()
}
