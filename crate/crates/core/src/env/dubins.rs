//! Dubins car: constant forward speed, the action sets the turn rate.

use serde::{Deserialize, Serialize};

use super::geometry::MazeGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsParams {
    pub speed: f64,
    pub dt: f64,
    pub max_turn_rate: f64,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self {
            speed: 0.5,
            dt: 0.25,
            max_turn_rate: 1.25,
        }
    }
}

impl DubinsParams {
    /// Radius of the tightest turn, `v / ω_max`.
    pub fn min_turn_radius(&self) -> f64 {
        self.speed / self.max_turn_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub stuck: bool,
}

impl DubinsState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            stuck: false,
        }
    }

    pub fn observation(&self) -> [f64; 4] {
        let (s, c) = self.theta.sin_cos();
        [self.x, self.y, c, s]
    }
}

/// Sub-segments used to check the swept arc against walls.
const ARC_CHECKS: usize = 4;

/// Advances the car along the exact circular arc for one step. A step whose
/// swept path touches a wall leaves the car at its pre-collision pose, stuck.
pub fn dubins_step(state: &DubinsState, action: f64, p: &DubinsParams, geometry: &MazeGeometry) -> DubinsState {
    if state.stuck {
        return *state;
    }
    let a = if action.is_nan() { 0.0 } else { action.clamp(-1.0, 1.0) };
    let pose_at = |frac: f64| -> (f64, f64, f64) {
        let dtheta = a * p.max_turn_rate * p.dt * frac;
        let dist = p.speed * p.dt * frac;
        if dtheta.abs() < 1e-12 {
            (
                state.x + dist * state.theta.cos(),
                state.y + dist * state.theta.sin(),
                state.theta + dtheta,
            )
        } else {
            let radius = dist / dtheta;
            let th1 = state.theta + dtheta;
            (
                state.x + radius * (th1.sin() - state.theta.sin()),
                state.y - radius * (th1.cos() - state.theta.cos()),
                th1,
            )
        }
    };
    let mut prev = (state.x, state.y);
    for k in 1..=ARC_CHECKS {
        let (x, y, _) = pose_at(k as f64 / ARC_CHECKS as f64);
        if !geometry.segment_is_free(prev, (x, y)) {
            return DubinsState {
                stuck: true,
                ..*state
            };
        }
        prev = (x, y);
    }
    let (x, y, theta) = pose_at(1.0);
    DubinsState {
        x,
        y,
        theta: wrap_angle(theta),
        stuck: false,
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..PI).contains(&theta) {
        theta
    } else {
        (theta + PI).rem_euclid(2.0 * PI) - PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open() -> MazeGeometry {
        MazeGeometry::open(40, 40, 1.0)
    }

    #[test]
    fn stuck_is_absorbing() {
        let s = DubinsState {
            x: 1.5,
            y: 1.5,
            theta: 0.3,
            stuck: true,
        };
        for a in [-1.0, 0.0, 0.7] {
            assert_eq!(dubins_step(&s, a, &DubinsParams::default(), &open()), s);
        }
    }

    #[test]
    fn straight_line_advance() {
        let p = DubinsParams::default();
        let s = DubinsState::new(10.0, 10.0, 0.7);
        let n = dubins_step(&s, 0.0, &p, &open());
        let d = p.speed * p.dt;
        assert!((n.x - (10.0 + d * 0.7f64.cos())).abs() < 1e-12);
        assert!((n.y - (10.0 + d * 0.7f64.sin())).abs() < 1e-12);
        assert_eq!(n.theta, 0.7);
    }

    #[test]
    fn constant_turn_traces_analytic_circle() {
        let p = DubinsParams::default();
        let radius = p.min_turn_radius();
        for a in [1.0, -1.0] {
            let start = DubinsState::new(20.0, 20.0, 0.4);
            // centre lies to the left (a > 0) or right of the heading
            let sign = a;
            let cx = start.x - sign * radius * start.theta.sin();
            let cy = start.y + sign * radius * start.theta.cos();
            let mut s = start;
            for _ in 0..60 {
                s = dubins_step(&s, a, &p, &open());
                let r = ((s.x - cx).powi(2) + (s.y - cy).powi(2)).sqrt();
                assert!((r - radius).abs() < 1e-6, "radius {r}");
            }
        }
    }

    #[test]
    fn wall_hit_freezes_pose() {
        let g = MazeGeometry::from_rows(&["1111", "1001", "1111"], 1.0).unwrap();
        let p = DubinsParams::default();
        let mut s = DubinsState::new(1.2, 1.5, 0.0);
        for _ in 0..40 {
            s = dubins_step(&s, 0.0, &p, &g);
        }
        assert!(s.stuck);
        assert!(g.is_free(s.x, s.y));
        assert!(s.x < 3.0);
        assert_eq!(s.theta, 0.0);
    }

    #[test]
    fn observation_is_on_unit_circle() {
        for k in 0..100 {
            let s = DubinsState::new(0.0, 0.0, k as f64 * 0.173);
            let o = s.observation();
            assert!((o[2] * o[2] + o[3] * o[3] - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
    }
}
