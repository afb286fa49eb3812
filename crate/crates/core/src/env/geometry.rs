//! Axis-aligned cell mazes.
//!
//! Rows are given top (high y) to bottom; `'1'` marks a wall cell and `'0'` a
//! free one. Cell `(col, row)` covers `x ∈ [col·s, (col+1)·s)` and
//! `y ∈ [(H−1−row)·s, (H−row)·s)`. Anything outside the grid is wall.

use rand::Rng;

use crate::error::EnvError;

/// Distance kept between a resolved position and the wall it was pushed against.
pub const WALL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MazeGeometry {
    cell_size: f64,
    width: usize,
    height: usize,
    /// `walls[row][col]`, row 0 at the top.
    walls: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl MazeGeometry {
    pub fn from_rows<S: AsRef<str>>(rows: &[S], cell_size: f64) -> Result<Self, EnvError> {
        if rows.is_empty() {
            return Err(EnvError::Geometry("maze has no rows".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(EnvError::Geometry(format!("bad cell size {cell_size}")));
        }
        let width = rows[0].as_ref().len();
        let mut walls = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(EnvError::Geometry(format!(
                    "row {r} has width {}, expected {width}",
                    row.len()
                )));
            }
            let cells = row
                .chars()
                .map(|c| match c {
                    '1' | '#' => Ok(true),
                    '0' | '.' => Ok(false),
                    other => Err(EnvError::Geometry(format!("bad cell '{other}' in row {r}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            walls.push(cells);
        }
        let geometry = Self {
            cell_size,
            width,
            height: rows.len(),
            walls,
        };
        if geometry.free_cells().is_empty() {
            return Err(EnvError::Geometry("maze has no free cell".into()));
        }
        Ok(geometry)
    }

    /// A walled box whose interior is entirely free.
    pub fn open(width: usize, height: usize, cell_size: f64) -> Self {
        let rows: Vec<String> = (0..height)
            .map(|r| {
                (0..width)
                    .map(|c| {
                        if r == 0 || c == 0 || r + 1 == height || c + 1 == width {
                            '1'
                        } else {
                            '0'
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(&rows, cell_size).expect("open box is a valid maze")
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// World extent `(x_max, y_max)`; the origin is `(0, 0)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    /// Grid cell `(col, row)` containing the point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let col = (x / self.cell_size).floor();
        let from_bottom = (y / self.cell_size).floor();
        if col < 0.0 || from_bottom < 0.0 {
            return None;
        }
        let (col, from_bottom) = (col as usize, from_bottom as usize);
        if col >= self.width || from_bottom >= self.height {
            return None;
        }
        Some((col, self.height - 1 - from_bottom))
    }

    pub fn is_wall_cell(&self, col: usize, row: usize) -> bool {
        self.walls
            .get(row)
            .and_then(|r| r.get(col))
            .copied()
            .unwrap_or(true)
    }

    pub fn is_free(&self, x: f64, y: f64) -> bool {
        match self.cell_of(x, y) {
            Some((col, row)) => !self.is_wall_cell(col, row),
            None => false,
        }
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (row, cells) in self.walls.iter().enumerate() {
            for (col, wall) in cells.iter().enumerate() {
                if !wall {
                    out.push((col, row));
                }
            }
        }
        out
    }

    /// Lower-left corner of a cell in world coordinates.
    pub fn cell_origin(&self, col: usize, row: usize) -> (f64, f64) {
        (
            col as f64 * self.cell_size,
            (self.height - 1 - row) as f64 * self.cell_size,
        )
    }

    /// True iff the closed segment touches no wall cell and stays in the grid.
    pub fn segment_is_free(&self, p0: (f64, f64), p1: (f64, f64)) -> bool {
        if !self.is_free(p0.0, p0.1) || !self.is_free(p1.0, p1.1) {
            return false;
        }
        let s = self.cell_size;
        let col_lo = (p0.0.min(p1.0) / s).floor().max(0.0) as usize;
        let col_hi = ((p0.0.max(p1.0) / s).floor() as usize).min(self.width - 1);
        let yb_lo = (p0.1.min(p1.1) / s).floor().max(0.0) as usize;
        let yb_hi = ((p0.1.max(p1.1) / s).floor() as usize).min(self.height - 1);
        for yb in yb_lo..=yb_hi {
            let row = self.height - 1 - yb;
            for col in col_lo..=col_hi {
                if !self.is_wall_cell(col, row) {
                    continue;
                }
                let (x0, y0) = self.cell_origin(col, row);
                if segment_touches_box(p0, p1, (x0, y0), (x0 + s, y0 + s)) {
                    return false;
                }
            }
        }
        true
    }

    /// Moves `pos` along one axis by `delta`, stopping short of the first wall
    /// cell on the way. Returns the new coordinate and whether a wall was hit.
    /// `pos` must be free.
    pub fn sweep_axis(&self, pos: (f64, f64), delta: f64, axis: Axis) -> (f64, bool) {
        let s = self.cell_size;
        let (along, across) = match axis {
            Axis::X => (pos.0, pos.1),
            Axis::Y => (pos.1, pos.0),
        };
        let target = along + delta;
        if delta == 0.0 {
            return (along, false);
        }
        let is_free_at = |a: f64| match axis {
            Axis::X => self.is_free(a, across),
            Axis::Y => self.is_free(across, a),
        };
        let start_idx = (along / s).floor() as i64;
        let end_idx = (target / s).floor() as i64;
        if delta > 0.0 {
            let mut idx = start_idx + 1;
            while idx <= end_idx {
                if !is_free_at((idx as f64 + 0.5) * s) {
                    return (idx as f64 * s - WALL_MARGIN, true);
                }
                idx += 1;
            }
        } else {
            let mut idx = start_idx - 1;
            while idx >= end_idx {
                if !is_free_at((idx as f64 + 0.5) * s) {
                    return ((idx + 1) as f64 * s + WALL_MARGIN, true);
                }
                idx -= 1;
            }
        }
        (target, false)
    }

    /// Uniform point in free space by rejection sampling.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64), EnvError> {
        let (w, h) = self.extent();
        for _ in 0..1000 {
            let x = rng.random_range(0.0..w);
            let y = rng.random_range(0.0..h);
            if self.is_free(x, y) {
                return Ok((x, y));
            }
        }
        Err(EnvError::Geometry(
            "rejection sampling exceeded 1000 tries".into(),
        ))
    }
}

/// Liang–Barsky clip of a segment against a closed axis-aligned box.
fn segment_touches_box(p0: (f64, f64), p1: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    let checks = [
        (-dx, p0.0 - lo.0),
        (dx, hi.0 - p0.0),
        (-dy, p0.1 - lo.1),
        (dy, hi.1 - p0.1),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> MazeGeometry {
        MazeGeometry::from_rows(&["11111", "10001", "10101", "11111"], 1.0).unwrap()
    }

    #[test]
    fn cell_lookup_and_freedom() {
        let g = corridor();
        assert_eq!(g.extent(), (5.0, 4.0));
        assert_eq!(g.cell_of(1.5, 2.5), Some((1, 1)));
        assert!(g.is_free(1.5, 2.5));
        assert!(!g.is_free(2.5, 1.5)); // the pillar
        assert!(!g.is_free(0.5, 0.5));
        assert!(!g.is_free(-0.1, 2.5));
        assert!(!g.is_free(5.1, 2.5));
        assert!(!g.is_free(f64::NAN, 1.0));
    }

    #[test]
    fn segments_through_walls_are_blocked() {
        let g = corridor();
        assert!(g.segment_is_free((1.2, 2.5), (3.8, 2.5)));
        assert!(!g.segment_is_free((1.5, 1.5), (3.5, 1.5)));
        // diagonal clipping the pillar corner
        assert!(!g.segment_is_free((1.9, 1.5), (2.5, 2.1)));
        assert!(g.segment_is_free((1.5, 1.5), (1.5, 2.9)));
    }

    #[test]
    fn sweep_stops_before_walls() {
        let g = corridor();
        let (x, hit) = g.sweep_axis((1.5, 1.5), 3.0, Axis::X);
        assert!(hit);
        assert!(x < 2.0 && x > 1.99);
        assert!(g.is_free(x, 1.5));
        let (x, hit) = g.sweep_axis((1.5, 2.5), 2.0, Axis::X);
        assert!(!hit);
        assert_eq!(x, 3.5);
        let (y, hit) = g.sweep_axis((3.5, 2.5), -5.0, Axis::Y);
        assert!(hit);
        assert!(g.is_free(3.5, y));
        assert!(y <= 1.0 + 1e-5);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(MazeGeometry::from_rows(&["111", "10"], 1.0).is_err());
        assert!(MazeGeometry::from_rows(&["111", "111"], 1.0).is_err());
    }
}
