//! Empty maximal spaces.
//!
//! The set of all maximal empty boxes covers the free region of the
//! container. When a box is committed, every space it cuts is replaced by
//! the (at most six) slabs of that space lying entirely on one side of the
//! box, and slabs contained in another surviving space are dropped. Given a
//! complete maximal cover before the placement, this yields exactly the
//! complete maximal cover after it.

use serde::{Deserialize, Serialize};

use crate::geometry::{Container, PlacedBox, EPS};

use super::SpatialError;

/// An empty axis-aligned box `[min, max]` that cannot grow on any face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmptyMaximalSpace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl EmptyMaximalSpace {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn whole(container: &Container) -> Self {
        Self::new([0.0; 3], container.extent())
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    fn has_volume(&self) -> bool {
        self.extent().iter().all(|e| *e > EPS)
    }

    /// Interior intersection with a placed box.
    pub fn intersects(&self, b: &PlacedBox) -> bool {
        let (bmin, bmax) = (b.min(), b.max());
        (0..3).all(|i| self.min[i] < bmax[i] - EPS && bmin[i] < self.max[i] - EPS)
    }

    pub fn contains(&self, other: &EmptyMaximalSpace) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] + EPS && other.max[i] <= self.max[i] + EPS)
    }

    pub fn contains_box(&self, b: &PlacedBox) -> bool {
        let (bmin, bmax) = (b.min(), b.max());
        (0..3).all(|i| self.min[i] <= bmin[i] + EPS && bmax[i] <= self.max[i] + EPS)
    }

    pub fn approx_eq(&self, other: &EmptyMaximalSpace) -> bool {
        (0..3).all(|i| {
            (self.min[i] - other.min[i]).abs() <= EPS && (self.max[i] - other.max[i]).abs() <= EPS
        })
    }

    /// The slabs of `self` lying strictly below / above `b` on each axis.
    fn split_around(&self, b: &PlacedBox) -> impl Iterator<Item = EmptyMaximalSpace> + '_ {
        let (bmin, bmax) = (b.min(), b.max());
        (0..3)
            .flat_map(move |axis| {
                let mut low = *self;
                low.max[axis] = bmin[axis];
                let mut high = *self;
                high.min[axis] = bmax[axis];
                [low, high]
            })
            .filter(EmptyMaximalSpace::has_volume)
    }
}

/// Returns the maximal cover of the free region after committing `placed`.
///
/// `placed` must lie inside one of `spaces` (any legal placement does); a box
/// that does not is a caller bug and is rejected.
pub fn ems_update(
    spaces: &[EmptyMaximalSpace],
    placed: &PlacedBox,
) -> Result<Vec<EmptyMaximalSpace>, SpatialError> {
    if !spaces.iter().any(|s| s.contains_box(placed)) {
        return Err(SpatialError::PlacementNotEmpty);
    }
    Ok(ems_update_unchecked(spaces, placed))
}

pub(crate) fn ems_update_unchecked(
    spaces: &[EmptyMaximalSpace],
    placed: &PlacedBox,
) -> Vec<EmptyMaximalSpace> {
    let (cut, kept): (Vec<&EmptyMaximalSpace>, Vec<&EmptyMaximalSpace>) =
        spaces.iter().partition(|s| s.intersects(placed));
    let pieces: Vec<EmptyMaximalSpace> =
        cut.iter().flat_map(|s| s.split_around(placed)).collect();

    // Untouched spaces were maximal and stay so; only the new pieces can be
    // dominated, either by an untouched space or by another piece.
    let mut out: Vec<EmptyMaximalSpace> = kept.into_iter().copied().collect();
    let n_kept = out.len();
    for (i, p) in pieces.iter().enumerate() {
        if out[..n_kept].iter().any(|s| s.contains(p)) {
            continue;
        }
        let dominated = pieces.iter().enumerate().any(|(j, q)| {
            j != i && q.contains(p) && (!p.contains(q) || j < i)
        });
        if !dominated {
            out.push(*p);
        }
    }
    out
}
