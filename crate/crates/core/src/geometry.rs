//! Axis-aligned cuboid arithmetic.
//!
//! Every coordinate is an `f64`. Discrete instances only ever hold small
//! integers, which `f64` represents exactly, so the same code serves both
//! modes; all `<=` comparisons carry an absolute slack of [`EPS`].

use serde::{Deserialize, Serialize};

/// Absolute tolerance applied to every geometric comparison.
pub const EPS: f64 = 1e-9;

/// Extent of an item or a container along the three axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Dim3 {
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl Dim3 {
    pub const fn new(l: f64, w: f64, h: f64) -> Self {
        Self { l, w, h }
    }

    pub fn cube(edge: f64) -> Self {
        Self::new(edge, edge, edge)
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.l, self.w, self.h].iter().all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l, self.w, self.h]
    }

    /// The item turned by 90 degrees about the vertical axis.
    pub fn rotated_xy(&self) -> Self {
        Self::new(self.w, self.l, self.h)
    }

    /// True when `self` fits inside `other` without rotation.
    pub fn fits_in(&self, other: &Dim3) -> bool {
        self.l <= other.l + EPS && self.w <= other.w + EPS && self.h <= other.h + EPS
    }
}

impl From<[f64; 3]> for Dim3 {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Dim3> for [f64; 3] {
    fn from(d: Dim3) -> Self {
        d.as_array()
    }
}

/// Minimum corner of a placed box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Placement {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Placement {
    pub const ORIGIN: Placement = Placement { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.z].iter().all(|v| v.is_finite() && *v >= -EPS)
    }

    /// Equality within [`EPS`] on every axis.
    pub fn approx_eq(&self, other: &Placement) -> bool {
        (self.x - other.x).abs() <= EPS
            && (self.y - other.y).abs() <= EPS
            && (self.z - other.z).abs() <= EPS
    }

    /// Lexicographic `(z, y, x)` order used as the deterministic tie-break
    /// everywhere candidates are ranked.
    pub fn zyx_cmp(&self, other: &Placement) -> std::cmp::Ordering {
        self.z
            .total_cmp(&other.z)
            .then(self.y.total_cmp(&other.y))
            .then(self.x.total_cmp(&other.x))
    }
}

impl From<[f64; 3]> for Placement {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Placement> for [f64; 3] {
    fn from(p: Placement) -> Self {
        p.as_array()
    }
}

/// A box committed at a position; occupies `[x, x+l) × [y, y+w) × [z, z+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedBox {
    pub dim: Dim3,
    pub pos: Placement,
}

impl PlacedBox {
    pub const fn new(dim: Dim3, pos: Placement) -> Self {
        Self { dim, pos }
    }

    pub fn min(&self) -> [f64; 3] {
        self.pos.as_array()
    }

    pub fn max(&self) -> [f64; 3] {
        [self.pos.x + self.dim.l, self.pos.y + self.dim.w, self.pos.z + self.dim.h]
    }

    pub fn volume(&self) -> f64 {
        self.dim.volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub dim: Dim3,
}

impl Container {
    pub const fn new(dim: Dim3) -> Self {
        Self { dim }
    }

    pub fn cube(edge: f64) -> Self {
        Self::new(Dim3::cube(edge))
    }

    pub fn volume(&self) -> f64 {
        self.dim.volume()
    }

    pub fn extent(&self) -> [f64; 3] {
        self.dim.as_array()
    }
}

/// Two boxes overlap when their open interiors intersect. Contact along a
/// face, edge or corner is legal.
pub fn boxes_overlap(a: &PlacedBox, b: &PlacedBox) -> bool {
    separating_axis(a, b).is_none()
}

/// Returns an axis along which `a` and `b` are separated, if any.
pub fn separating_axis(a: &PlacedBox, b: &PlacedBox) -> Option<usize> {
    let (amin, amax) = (a.min(), a.max());
    let (bmin, bmax) = (b.min(), b.max());
    (0..3).find(|&i| amax[i] <= bmin[i] + EPS || bmax[i] <= amin[i] + EPS)
}

pub fn box_inside(b: &PlacedBox, c: &Container) -> bool {
    let (min, max) = (b.min(), b.max());
    let ext = c.extent();
    (0..3).all(|i| min[i] >= -EPS && max[i] <= ext[i] + EPS)
}

/// Packed volume over container volume.
pub fn utilization(packed: &[PlacedBox], c: &Container) -> f64 {
    packed.iter().map(PlacedBox::volume).sum::<f64>() / c.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pb(d: [f64; 3], p: [f64; 3]) -> PlacedBox {
        PlacedBox::new(d.into(), p.into())
    }

    #[test]
    fn overlap_examples() {
        assert!(boxes_overlap(&pb([1.0; 3], [0.0; 3]), &pb([1.0; 3], [0.0; 3])));
        assert!(!boxes_overlap(
            &pb([1.0; 3], [0.0; 3]),
            &pb([1.0; 3], [1.0, 0.0, 0.0])
        ));
        assert!(boxes_overlap(
            &pb([2.0, 4.0, 6.0], [0.0; 3]),
            &pb([2.0; 3], [1.0, 3.0, 5.0])
        ));
    }

    #[test]
    fn edge_and_corner_contact_is_not_overlap() {
        let a = pb([1.0; 3], [0.0; 3]);
        assert!(!boxes_overlap(&a, &pb([1.0; 3], [1.0, 1.0, 0.0])));
        assert!(!boxes_overlap(&a, &pb([1.0; 3], [1.0, 1.0, 1.0])));
    }

    #[test]
    fn inside_examples() {
        let c = Container::cube(20.0);
        assert!(box_inside(&pb([20.0; 3], [0.0; 3]), &c));
        assert!(!box_inside(&pb([10.0; 3], [11.0, 0.0, 0.0]), &c));
        assert!(box_inside(&pb([2.0, 4.0, 6.0], [18.0, 16.0, 14.0]), &c));
        assert!(!box_inside(&pb([1.0; 3], [-0.5, 0.0, 0.0]), &c));
    }

    #[test]
    fn utilization_examples() {
        let c = Container::cube(20.0);
        assert_eq!(utilization(&[], &c), 0.0);
        assert_eq!(utilization(&[pb([20.0; 3], [0.0; 3])], &c), 1.0);
        assert!((utilization(&[pb([2.0, 4.0, 6.0], [0.0; 3])], &c) - 0.006).abs() < 1e-15);
    }

    #[test]
    fn dims_serialize_as_arrays() {
        let b = pb([2.0, 4.0, 6.0], [1.0, 0.0, 0.5]);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"dim":[2.0,4.0,6.0],"pos":[1.0,0.0,0.5]}"#);
        assert_eq!(serde_json::from_str::<PlacedBox>(&s).unwrap(), b);
    }

    /// Voxel rasterization of half-open integer boxes.
    fn voxels(b: &PlacedBox) -> Vec<(i64, i64, i64)> {
        let (min, max) = (b.min(), b.max());
        let mut out = Vec::new();
        for x in min[0] as i64..max[0] as i64 {
            for y in min[1] as i64..max[1] as i64 {
                for z in min[2] as i64..max[2] as i64 {
                    out.push((x, y, z));
                }
            }
        }
        out
    }

    fn int_box() -> impl Strategy<Value = PlacedBox> {
        (1u8..=12, 1u8..=12, 1u8..=12, 0u8..12, 0u8..12, 0u8..12).prop_filter_map(
            "inside 12^3",
            |(l, w, h, x, y, z)| {
                (x + l <= 12 && y + w <= 12 && z + h <= 12).then(|| {
                    pb(
                        [l as f64, w as f64, h as f64],
                        [x as f64, y as f64, z as f64],
                    )
                })
            },
        )
    }

    fn real_box() -> impl Strategy<Value = PlacedBox> {
        (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0)
            .prop_map(|(l, w, h, x, y, z)| pb([l, w, h], [x, y, z]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn overlap_matches_voxel_oracle(a in int_box(), b in int_box()) {
            let va: std::collections::HashSet<_> = voxels(&a).into_iter().collect();
            let shared = voxels(&b).into_iter().any(|v| va.contains(&v));
            prop_assert_eq!(boxes_overlap(&a, &b), shared);
        }

        #[test]
        fn overlap_is_symmetric(a in real_box(), b in real_box()) {
            prop_assert_eq!(boxes_overlap(&a, &b), boxes_overlap(&b, &a));
        }

        #[test]
        fn disjoint_pairs_have_a_separation_witness(a in real_box(), b in real_box()) {
            if !boxes_overlap(&a, &b) {
                let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
                let witness = (0..3).any(|i| amax[i] <= bmin[i] + EPS || bmax[i] <= amin[i] + EPS);
                prop_assert!(witness);
            }
        }

        #[test]
        fn utilization_is_additive(
            xs in prop::collection::vec(real_box(), 0..6),
            ys in prop::collection::vec(real_box(), 0..6),
        ) {
            let c = Container::cube(20.0);
            let all: Vec<_> = xs.iter().chain(ys.iter()).copied().collect();
            let lhs = utilization(&all, &c);
            let rhs = utilization(&xs, &c) + utilization(&ys, &c);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
