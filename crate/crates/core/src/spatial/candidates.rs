use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{box_inside, boxes_overlap, Container, Dim3, PlacedBox, Placement, EPS};

use super::{EmptyMaximalSpace, Heightmap};

/// Placement heuristic that contributed a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    /// Bottom corners of each empty maximal space.
    EmsCorner,
    /// Origin plus the three outer corners of each packed box.
    CornerPoint,
    /// Corner points projected back onto the nearest surface.
    ExtremePoint,
    /// Resting positions on the heightmap at edge-aligned footprints.
    HeightmapMin,
}

impl std::str::FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ems" | "ems-corner" => Ok(Heuristic::EmsCorner),
            "cp" | "corner-point" => Ok(Heuristic::CornerPoint),
            "ep" | "extreme-point" => Ok(Heuristic::ExtremePoint),
            "hm" | "heightmap-min" => Ok(Heuristic::HeightmapMin),
            other => Err(format!("unknown heuristic `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub heuristics: Vec<Heuristic>,
    /// Maximum number of candidates kept after ranking.
    pub cap: usize,
    /// Also try the item turned 90 degrees about the vertical axis.
    pub allow_rotation: bool,
    /// Minimum supported fraction of the item's base; `0` disables the check.
    pub min_support: f64,
}

impl CandidateConfig {
    pub fn discrete() -> Self {
        Self {
            heuristics: vec![Heuristic::EmsCorner],
            cap: 50,
            allow_rotation: false,
            min_support: 0.0,
        }
    }

    pub fn continuous() -> Self {
        Self { cap: 100, ..Self::discrete() }
    }
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self::discrete()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub placement: Placement,
    /// Item extent in the chosen orientation.
    pub dim: Dim3,
    pub source: Heuristic,
    pub feasible: bool,
}

impl CandidateAction {
    pub fn placed_box(&self) -> PlacedBox {
        PlacedBox::new(self.dim, self.placement)
    }

    pub fn same_action(&self, other: &CandidateAction) -> bool {
        self.placement.approx_eq(&other.placement)
            && (self.dim.l - other.dim.l).abs() <= EPS
            && (self.dim.w - other.dim.w).abs() <= EPS
            && (self.dim.h - other.dim.h).abs() <= EPS
    }
}

/// Feasible, deduplicated placements in `(z, y, x)` order, at most `cap` long.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub actions: Vec<CandidateAction>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&CandidateAction> {
        self.actions.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CandidateAction> {
        self.actions.iter()
    }

    pub fn position(&self, action: &CandidateAction) -> Option<usize> {
        self.actions.iter().position(|a| a.same_action(action))
    }
}

/// Read-only view over the spatial indices of a packing.
#[derive(Debug, Clone, Copy)]
pub struct PackingView<'a> {
    pub container: &'a Container,
    pub packed: &'a [PlacedBox],
    pub spaces: &'a [EmptyMaximalSpace],
    pub heightmap: &'a Heightmap,
}

impl PackingView<'_> {
    /// Containment, non-overlap and (when requested) base support.
    pub fn is_feasible(&self, b: &PlacedBox, min_support: f64) -> bool {
        box_inside(b, self.container)
            && !self.packed.iter().any(|p| boxes_overlap(p, b))
            && (min_support <= 0.0 || support_fraction(self.packed, b) + EPS >= min_support)
    }
}

/// Fraction of the base of `b` resting on the floor or on tops of `packed`.
pub fn support_fraction(packed: &[PlacedBox], b: &PlacedBox) -> f64 {
    if b.pos.z <= EPS {
        return 1.0;
    }
    let area = b.dim.l * b.dim.w;
    let covered: f64 = packed
        .iter()
        .filter(|p| (p.pos.z + p.dim.h - b.pos.z).abs() <= EPS)
        .map(|p| {
            let ox = (b.pos.x + b.dim.l).min(p.pos.x + p.dim.l) - b.pos.x.max(p.pos.x);
            let oy = (b.pos.y + b.dim.w).min(p.pos.y + p.dim.w) - b.pos.y.max(p.pos.y);
            ox.max(0.0) * oy.max(0.0)
        })
        .sum();
    (covered / area).min(1.0)
}

fn orientations(item: &Dim3, allow_rotation: bool) -> Vec<Dim3> {
    let mut out = vec![*item];
    if allow_rotation && (item.l - item.w).abs() > EPS {
        out.push(item.rotated_xy());
    }
    out
}

fn ems_corners(spaces: &[EmptyMaximalSpace], d: &Dim3, out: &mut Vec<(Placement, Dim3, Heuristic)>) {
    for s in spaces {
        if !d.fits_in(&Dim3::from(s.extent())) {
            continue;
        }
        let xs = [s.min[0], s.max[0] - d.l];
        let ys = [s.min[1], s.max[1] - d.w];
        for y in ys {
            for x in xs {
                out.push((Placement::new(x, y, s.min[2]), *d, Heuristic::EmsCorner));
            }
        }
    }
}

fn corner_points(packed: &[PlacedBox]) -> Vec<Placement> {
    let mut pts = vec![Placement::ORIGIN];
    for b in packed {
        let [x1, y1, z1] = b.max();
        pts.push(Placement::new(x1, b.pos.y, b.pos.z));
        pts.push(Placement::new(b.pos.x, y1, b.pos.z));
        pts.push(Placement::new(b.pos.x, b.pos.y, z1));
    }
    pts
}

/// Slides `p` towards the origin along `axis` until it meets a box face or
/// the wall.
fn project(packed: &[PlacedBox], p: [f64; 3], axis: usize) -> [f64; 3] {
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let stop = packed
        .iter()
        .filter(|q| {
            let (qmin, qmax) = (q.min(), q.max());
            qmax[axis] <= p[axis] + EPS
                && qmin[a] <= p[a] + EPS
                && p[a] < qmax[a] - EPS
                && qmin[b] <= p[b] + EPS
                && p[b] < qmax[b] - EPS
        })
        .map(|q| q.max()[axis])
        .fold(0.0, f64::max);
    let mut out = p;
    out[axis] = stop;
    out
}

fn extreme_points(packed: &[PlacedBox]) -> Vec<Placement> {
    let mut pts = vec![Placement::ORIGIN];
    for b in packed {
        let [x1, y1, z1] = b.max();
        let [x0, y0, z0] = b.min();
        let seeds = [([x1, y0, z0], [1, 2]), ([x0, y1, z0], [0, 2]), ([x0, y0, z1], [0, 1])];
        for (p, axes) in seeds {
            for axis in axes {
                pts.push(project(packed, p, axis).into());
            }
        }
    }
    pts
}

fn heightmap_positions(
    view: &PackingView<'_>,
    d: &Dim3,
    out: &mut Vec<(Placement, Dim3, Heuristic)>,
) {
    let [l, w, _] = view.container.extent();
    let axis_values = |len: f64, extent: f64, lo: fn(&PlacedBox) -> f64, size: fn(&PlacedBox) -> f64| {
        let mut v = vec![0.0, extent - len];
        for b in view.packed {
            v.push(lo(b) + size(b));
            v.push(lo(b) - len);
        }
        v.retain(|x| *x >= -EPS && *x + len <= extent + EPS);
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= EPS);
        v
    };
    let xs = axis_values(d.l, l, |b| b.pos.x, |b| b.dim.l);
    let ys = axis_values(d.w, w, |b| b.pos.y, |b| b.dim.w);
    for &y in &ys {
        for &x in &xs {
            if let Ok(Some(p)) = view.heightmap.place(d, x, y) {
                out.push((p, *d, Heuristic::HeightmapMin));
            }
        }
    }
}

fn snap(v: f64) -> i64 {
    (v / EPS).round() as i64
}

/// Builds the heuristic action set for `item`.
///
/// An empty result means the item cannot be placed anywhere the enabled
/// heuristics look; with the EMS heuristic enabled this coincides with the
/// item not fitting anywhere at all.
pub fn generate_candidates(view: &PackingView<'_>, item: &Dim3, cfg: &CandidateConfig) -> CandidateSet {
    let mut raw: Vec<(Placement, Dim3, Heuristic)> = Vec::new();
    let dims = orientations(item, cfg.allow_rotation);
    let mut heuristics = cfg.heuristics.clone();
    heuristics.sort();
    heuristics.dedup();
    for h in heuristics {
        for d in &dims {
            match h {
                Heuristic::EmsCorner => ems_corners(view.spaces, d, &mut raw),
                Heuristic::CornerPoint => raw.extend(
                    corner_points(view.packed).into_iter().map(|p| (p, *d, Heuristic::CornerPoint)),
                ),
                Heuristic::ExtremePoint => raw.extend(
                    extreme_points(view.packed).into_iter().map(|p| (p, *d, Heuristic::ExtremePoint)),
                ),
                Heuristic::HeightmapMin => heightmap_positions(view, d, &mut raw),
            }
        }
    }

    // Stable sort keeps the earlier heuristic for duplicated placements.
    raw.sort_by(|a, b| {
        a.0.zyx_cmp(&b.0)
            .then(a.1.l.total_cmp(&b.1.l))
            .then(a.1.w.total_cmp(&b.1.w))
    });
    let mut seen = HashSet::new();
    let mut actions = Vec::new();
    for (p, d, source) in raw {
        if actions.len() >= cfg.cap {
            break;
        }
        let key = (snap(p.x), snap(p.y), snap(p.z), snap(d.l), snap(d.w));
        if !seen.insert(key) {
            continue;
        }
        let b = PlacedBox::new(d, p);
        if view.is_feasible(&b, cfg.min_support) {
            actions.push(CandidateAction { placement: p, dim: d, source, feasible: true });
        }
    }
    CandidateSet { actions }
}
