use serde::{Deserialize, Serialize};

use crate::geometry::{Container, Dim3, PlacedBox, Placement, EPS};

use super::SpatialError;

/// Top height per floor cell.
///
/// With one cell per unit length the map is exact for integer packings; at
/// coarser resolution it over-approximates the resting height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    rx: usize,
    ry: usize,
    cell: [f64; 2],
    floor: [f64; 2],
    ceiling: f64,
    heights: Vec<f64>,
}

impl Heightmap {
    pub fn new(container: &Container, rx: usize, ry: usize) -> Self {
        assert!(rx > 0 && ry > 0, "heightmap needs at least one cell per axis");
        let [l, w, h] = container.extent();
        Self {
            rx,
            ry,
            cell: [l / rx as f64, w / ry as f64],
            floor: [l, w],
            ceiling: h,
            heights: vec![0.0; rx * ry],
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.rx, self.ry)
    }

    pub fn cell_size(&self) -> [f64; 2] {
        self.cell
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.rx + i]
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    fn span(&self, lo: f64, len: f64, axis: usize) -> std::ops::Range<usize> {
        let n = if axis == 0 { self.rx } else { self.ry };
        let c = self.cell[axis];
        let a = ((lo + EPS) / c).floor().max(0.0) as usize;
        let b = ((lo + len - EPS) / c).ceil().max(0.0) as usize;
        a.min(n)..b.min(n)
    }

    /// Cells under the footprint `[x, x+l) × [y, y+w)` with their overlap
    /// area.
    pub fn footprint_cells(
        &self,
        x: f64,
        y: f64,
        l: f64,
        w: f64,
    ) -> impl Iterator<Item = (usize, f64)> + '_ {
        let xs = self.span(x, l, 0);
        let ys = self.span(y, w, 1);
        let [cx, cy] = self.cell;
        ys.flat_map(move |j| {
            let xs = xs.clone();
            xs.map(move |i| {
                let ox = (x + l).min((i + 1) as f64 * cx) - x.max(i as f64 * cx);
                let oy = (y + w).min((j + 1) as f64 * cy) - y.max(j as f64 * cy);
                (j * self.rx + i, ox.max(0.0) * oy.max(0.0))
            })
        })
    }

    pub fn support_height(&self, x: f64, y: f64, l: f64, w: f64) -> f64 {
        self.footprint_cells(x, y, l, w)
            .map(|(k, _)| self.heights[k])
            .fold(0.0, f64::max)
    }

    /// Resting position of `dim` dropped at `(x, y)`; `Ok(None)` when it
    /// would stick out of the top.
    pub fn place(&self, dim: &Dim3, x: f64, y: f64) -> Result<Option<Placement>, SpatialError> {
        if x < -EPS || y < -EPS || x + dim.l > self.floor[0] + EPS || y + dim.w > self.floor[1] + EPS
        {
            return Err(SpatialError::FootprintOutOfBounds { x, y });
        }
        let z = self.support_height(x, y, dim.l, dim.w);
        Ok((z + dim.h <= self.ceiling + EPS).then_some(Placement::new(x, y, z)))
    }

    pub fn commit(&mut self, b: &PlacedBox) {
        let top = b.pos.z + b.dim.h;
        let cells: Vec<usize> = self
            .footprint_cells(b.pos.x, b.pos.y, b.dim.l, b.dim.w)
            .map(|(k, _)| k)
            .collect();
        for k in cells {
            if self.heights[k] < top {
                self.heights[k] = top;
            }
        }
    }

    /// Sum of absolute height steps between 4-neighbour cells.
    pub fn roughness(&self) -> f64 {
        let mut r = 0.0;
        for j in 0..self.ry {
            for i in 0..self.rx {
                let h = self.height(i, j);
                if i + 1 < self.rx {
                    r += (h - self.height(i + 1, j)).abs();
                }
                if j + 1 < self.ry {
                    r += (h - self.height(i, j + 1)).abs();
                }
            }
        }
        r
    }

    /// Change in [`roughness`](Self::roughness) if `b` were committed,
    /// computed over the footprint and its one-cell border only.
    pub fn roughness_delta(&self, b: &PlacedBox) -> f64 {
        let xs = self.span(b.pos.x, b.dim.l, 0);
        let ys = self.span(b.pos.y, b.dim.w, 1);
        if xs.is_empty() || ys.is_empty() {
            return 0.0;
        }
        let top = b.pos.z + b.dim.h;
        let after = |i: usize, j: usize| {
            let h = self.height(i, j);
            if xs.contains(&i) && ys.contains(&j) {
                h.max(top)
            } else {
                h
            }
        };
        let i0 = xs.start.saturating_sub(1);
        let i1 = (xs.end + 1).min(self.rx);
        let j0 = ys.start.saturating_sub(1);
        let j1 = (ys.end + 1).min(self.ry);
        let mut delta = 0.0;
        for j in j0..j1 {
            for i in i0..i1 {
                if i + 1 < i1 {
                    delta += (after(i, j) - after(i + 1, j)).abs()
                        - (self.height(i, j) - self.height(i + 1, j)).abs();
                }
                if j + 1 < j1 {
                    delta += (after(i, j) - after(i, j + 1)).abs()
                        - (self.height(i, j) - self.height(i, j + 1)).abs();
                }
            }
        }
        delta
    }
}
