//! Uniform-grid index over 2D points for radius and nearest-neighbor queries.

use std::collections::HashMap;

use crate::geometry::Vec2;

#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    /// Builds an index over `points`; item ids are positions in the slice.
    pub fn new(points: &[Vec2], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(cell, p)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(cell: f64, p: &Vec2) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn cell_range(&self, center: &Vec2, radius: f64) -> ((i64, i64), (i64, i64)) {
        let lo = Self::key(self.cell, &Vec2::new(center.x - radius, center.y - radius));
        let hi = Self::key(self.cell, &Vec2::new(center.x + radius, center.y + radius));
        (lo, hi)
    }

    /// Ids of all points within `radius` (inclusive) of `center`, ascending.
    pub fn within(&self, points: &[Vec2], center: &Vec2, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let ((x0, y0), (x1, y1)) = self.cell_range(center, radius);
        let mut out = Vec::new();
        if (x1 - x0 + 1) * (y1 - y0 + 1) > 4 * self.cells.len() as i64 {
            // query box dwarfs the populated cells; scan those instead
            for ids in self.cells.values() {
                out.extend(ids.iter().copied().filter(|&i| (points[i] - center).norm_squared() <= r2));
            }
        } else {
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    if let Some(ids) = self.cells.get(&(cx, cy)) {
                        out.extend(ids.iter().copied().filter(|&i| (points[i] - center).norm_squared() <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nearest point within `max_radius` of `query`; ties go to the lowest id.
    /// Returns the id and the squared distance.
    pub fn nearest(&self, points: &[Vec2], query: &Vec2, max_radius: f64) -> Option<(usize, f64)> {
        let r2 = max_radius * max_radius;
        let ((x0, y0), (x1, y1)) = self.cell_range(query, max_radius);
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |i: usize| {
            let d2 = (points[i] - query).norm_squared();
            if d2 > r2 {
                return;
            }
            match best {
                Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                _ => best = Some((i, d2)),
            }
        };
        if (x1 - x0 + 1) * (y1 - y0 + 1) > 4 * self.cells.len() as i64 {
            for ids in self.cells.values() {
                ids.iter().copied().for_each(&mut consider);
            }
        } else {
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    if let Some(ids) = self.cells.get(&(cx, cy)) {
                        ids.iter().copied().for_each(&mut consider);
                    }
                }
            }
        }
        best
    }
}
