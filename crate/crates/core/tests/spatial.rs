mod common;

use common::{int_box, Grid, IBox};
use packing_core::geometry::Container;
use packing_core::seeding;
use packing_core::spatial::Heightmap;
use proptest::prelude::*;

const EDGE: i64 = 6;

fn incremental_spaces(boxes: &[IBox]) -> Vec<IBox> {
    common::incremental_spaces(EDGE, boxes)
}

fn random_packing(rng: &mut seeding::Rng, max_boxes: usize) -> Vec<IBox> {
    common::random_packing(rng, EDGE, max_boxes)
}

#[test]
fn ems_matches_brute_force_on_seeded_packings() {
    let mut rng = seeding::rng(0x5eed);
    for case in 0..500 {
        let boxes = random_packing(&mut rng, 5);
        let want = Grid::new(EDGE as usize, &boxes).maximal_empty_boxes();
        assert_eq!(incremental_spaces(&boxes), want, "case {case}: {boxes:?}");
    }
}

#[test]
fn heightmap_tracks_tallest_box_per_cell() {
    let mut rng = seeding::rng(11);
    for _ in 0..200 {
        let boxes = random_packing(&mut rng, 5);
        let mut hm = Heightmap::new(&Container::cube(EDGE as f64), EDGE as usize, EDGE as usize);
        for b in &boxes {
            hm.commit(&int_box(b));
        }
        for i in 0..EDGE {
            for j in 0..EDGE {
                let want = boxes
                    .iter()
                    .filter(|(lo, hi)| lo[0] <= i && i < hi[0] && lo[1] <= j && j < hi[1])
                    .map(|(_, hi)| hi[2] as f64)
                    .fold(0.0, f64::max);
                assert_eq!(hm.height(i as usize, j as usize), want);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ems_cover_is_exact_for_any_seed(seed in any::<u64>()) {
        let boxes = random_packing(&mut seeding::rng(seed), 5);
        prop_assert_eq!(incremental_spaces(&boxes), Grid::new(EDGE as usize, &boxes).maximal_empty_boxes());
    }

    #[test]
    fn spaces_never_meet_a_packed_box(seed in any::<u64>()) {
        let boxes = random_packing(&mut seeding::rng(seed), 5);
        for (slo, shi) in incremental_spaces(&boxes) {
            for (lo, hi) in &boxes {
                prop_assert!((0..3).any(|k| shi[k] <= lo[k] || hi[k] <= slo[k]));
            }
        }
    }
}
