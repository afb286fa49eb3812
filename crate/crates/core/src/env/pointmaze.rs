//! Point mass pushed by a 2D force, no speed cap, no friction.

use serde::{Deserialize, Serialize};

use super::geometry::{Axis, MazeGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMazeParams {
    pub dt: f64,
    /// Acceleration produced by a unit action.
    pub max_force: f64,
}

impl Default for PointMazeParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_force: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMazeState {
    pub x: f64,
    pub y: f64,
    pub x_dot: f64,
    pub y_dot: f64,
}

impl PointMazeState {
    pub fn observation(&self) -> [f64; 4] {
        [self.x, self.y, self.x_dot, self.y_dot]
    }
}

/// Semi-implicit Euler step. The position moves along x, then along y; a wall
/// met on either leg stops the ball just short of it and zeroes that velocity
/// component, so the ball slides along walls it hits obliquely.
pub fn pointmaze_step(
    state: &PointMazeState,
    action: [f64; 2],
    p: &PointMazeParams,
    geometry: &MazeGeometry,
) -> PointMazeState {
    let clamp = |a: f64| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
    let mut x_dot = state.x_dot + clamp(action[0]) * p.max_force * p.dt;
    let mut y_dot = state.y_dot + clamp(action[1]) * p.max_force * p.dt;
    let (x, hit_x) = geometry.sweep_axis((state.x, state.y), x_dot * p.dt, Axis::X);
    if hit_x {
        x_dot = 0.0;
    }
    let (y, hit_y) = geometry.sweep_axis((x, state.y), y_dot * p.dt, Axis::Y);
    if hit_y {
        y_dot = 0.0;
    }
    PointMazeState { x, y, x_dot, y_dot }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_without_force_stays_put() {
        let g = MazeGeometry::open(5, 5, 1.0);
        let s = PointMazeState {
            x: 2.5,
            y: 2.5,
            x_dot: 0.0,
            y_dot: 0.0,
        };
        assert_eq!(pointmaze_step(&s, [0.0, 0.0], &PointMazeParams::default(), &g), s);
    }

    #[test]
    fn constant_force_is_uniformly_accelerated() {
        let g = MazeGeometry::open(200, 200, 1.0);
        let p = PointMazeParams::default();
        let (ax, ay) = (0.6, -0.3);
        let s0 = PointMazeState {
            x: 100.0,
            y: 100.0,
            x_dot: 0.0,
            y_dot: 0.0,
        };
        let mut s = s0;
        for n in 1..=100 {
            s = pointmaze_step(&s, [ax, ay], &p, &g);
            let n = n as f64;
            // semi-implicit Euler: x_n = x_0 + a f dt² n(n+1)/2
            let k = p.max_force * p.dt * p.dt * n * (n + 1.0) / 2.0;
            assert!((s.x - (s0.x + ax * k)).abs() < 1e-9);
            assert!((s.y - (s0.y + ay * k)).abs() < 1e-9);
        }
    }

    #[test]
    fn head_on_wall_zeroes_normal_velocity() {
        let g = MazeGeometry::from_rows(&["11111", "10001", "11111"], 1.0).unwrap();
        let p = PointMazeParams::default();
        let s = PointMazeState {
            x: 3.7,
            y: 1.5,
            x_dot: 5.0,
            y_dot: 0.4,
        };
        let n = pointmaze_step(&s, [1.0, 0.0], &p, &g);
        assert!(g.is_free(n.x, n.y));
        assert_eq!(n.x_dot, 0.0);
        assert!((n.y_dot - 0.4).abs() < 1e-12);
        assert!(n.x > 3.99 && n.x < 4.0);
    }
}
