use crate::env::PackingState;
use crate::geometry::{PlacedBox, EPS};
use crate::spatial::{ems_update_unchecked, support_fraction, CandidateAction};

pub const N_FEATURES: usize = 13;

/// Column names, in order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "x",
    "y",
    "z",
    "item_l",
    "item_w",
    "item_h",
    "fill_after",
    "support",
    "wasted_height",
    "max_height_after",
    "ems_count_after",
    "ems_volume_after",
    "roughness_delta",
];

pub type FeatureVector = [f64; N_FEATURES];

/// Features of placing the current item as `cand`. Lengths are divided by
/// the container extent on the matching axis.
///
/// * `wasted_height`: mean gap between the heightmap and the item base over
///   the footprint, weighted by cell overlap area.
/// * `ems_count_after`: number of free spaces after placement, over 20.
/// * `ems_volume_after`: summed free-space volume over container volume;
///   spaces overlap, so this can exceed 1.
/// * `roughness_delta`: heightmap roughness change over `H * (rx + ry)`.
pub fn featurize(state: &PackingState, cand: &CandidateAction) -> FeatureVector {
    let [cl, cw, ch] = state.container().extent();
    let cvol = cl * cw * ch;
    let b = cand.placed_box();
    let p = cand.placement;
    let d = cand.dim;
    let hm = state.heightmap();

    let fill_after = state.utilization() + b.volume() / cvol;
    let support = support_fraction(state.packed(), &b);
    let wasted = wasted_height(state, &b) / ch;
    let max_after = hm.max_height().max(p.z + d.h) / ch;
    let spaces = ems_update_unchecked(state.spaces(), &b);
    let ems_count = spaces.len() as f64 / 20.0;
    let ems_volume = spaces.iter().map(|s| s.volume()).sum::<f64>() / cvol;
    let (rx, ry) = hm.resolution();
    let rough = hm.roughness_delta(&b) / (ch * (rx + ry) as f64);

    [
        p.x / cl,
        p.y / cw,
        p.z / ch,
        d.l / cl,
        d.w / cw,
        d.h / ch,
        fill_after,
        support,
        wasted,
        max_after,
        ems_count,
        ems_volume,
        rough,
    ]
}

fn wasted_height(state: &PackingState, b: &PlacedBox) -> f64 {
    let hm = state.heightmap();
    let area = b.dim.l * b.dim.w;
    if area <= EPS {
        return 0.0;
    }
    let heights = hm.heights();
    hm.footprint_cells(b.pos.x, b.pos.y, b.dim.l, b.dim.w)
        .map(|(k, a)| (b.pos.z - heights[k]).max(0.0) * a)
        .sum::<f64>()
        / area
}

/// Features of every candidate of the current state, in candidate order.
pub fn featurize_all(state: &PackingState) -> Vec<FeatureVector> {
    state.candidates().iter().map(|c| featurize(state, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, EnvConfig};
    use crate::geometry::{Dim3, Placement};
    use crate::instances::Instance;
    use crate::spatial::Heuristic;

    fn state(items: &[[f64; 3]]) -> PackingState {
        let inst = Instance { items: items.iter().map(|d| Dim3::from(*d)).collect(), distribution: 0 };
        reset(&inst, &EnvConfig::default()).unwrap()
    }

    fn action(dim: [f64; 3], at: [f64; 3]) -> CandidateAction {
        CandidateAction {
            placement: Placement::from(at),
            dim: Dim3::from(dim),
            source: Heuristic::EmsCorner,
            feasible: true,
        }
    }

    #[test]
    fn full_item_in_empty_container() {
        let s = state(&[[20.0; 3]]);
        let f = featurize(&s, &s.candidates().actions[0]);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[6], 1.0);
        assert_eq!(f[7], 1.0);
        assert_eq!(f[9], 1.0);
        assert_eq!(f[10], 0.0);
        assert_eq!(featurize_all(&s), featurize_all(&s));
    }

    #[test]
    fn wasted_height_measures_gap_under_item() {
        let mut s = state(&[[10.0; 3], [2.0; 3]]);
        s.step_index(0).unwrap();
        // Resting on the 10-high column: no gap.
        let on_top = featurize(&s, &action([2.0; 3], [0.0, 0.0, 10.0]));
        assert_eq!(on_top[8], 0.0);
        // Hanging at z=10 over bare floor: the full 10 units are wasted.
        let floating = featurize(&s, &action([2.0; 3], [12.0, 12.0, 10.0]));
        assert_eq!(floating[8], 0.5);
        assert_eq!(floating[7], 0.0);
        // Half of the footprint over the column.
        let straddle = featurize(&s, &action([2.0; 3], [9.0, 0.0, 10.0]));
        assert!((straddle[8] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ems_features_match_direct_update() {
        let s = state(&[[10.0; 3]]);
        let f = featurize(&s, &s.candidates().actions[0]);
        // A corner cube leaves three half-container slabs.
        assert!((f[10] - 3.0 / 20.0).abs() < 1e-12);
        assert!((f[11] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn features_are_finite_along_an_episode() {
        let mut s = state(&[[4.0, 6.0, 2.0], [6.0, 2.0, 8.0], [8.0, 8.0, 4.0], [2.0; 3], [10.0, 10.0, 6.0]]);
        while !s.is_terminal() {
            for f in featurize_all(&s) {
                assert!(f.iter().all(|v| v.is_finite()));
            }
            s.step_index(s.candidates().len() / 2).unwrap();
        }
    }
}
