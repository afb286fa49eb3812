//! Cartpole with a continuous force action, integrated with classical RK4.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub max_force: f64,
    pub dt: f64,
    /// |θ| beyond this (radians) is terminal.
    pub theta_limit: f64,
    /// Half-width of the uniform noise on ẋ, θ, θ̇ at training resets.
    pub reset_noise: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            max_force: 10.0,
            dt: 0.02,
            theta_limit: 0.12,
            reset_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleState {
    /// Absolute cart position; never shown to the agent.
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub fn observation(&self) -> [f64; 3] {
        [self.x_dot, self.theta, self.theta_dot]
    }

    fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self {
            x: v[0],
            x_dot: v[1],
            theta: v[2],
            theta_dot: v[3],
        }
    }
}

fn derivative(s: [f64; 4], force: f64, p: &CartpoleParams) -> [f64; 4] {
    let [_, x_dot, theta, theta_dot] = s;
    let total_mass = p.cart_mass + p.pole_mass;
    let pml = p.pole_mass * p.pole_half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc =
        (p.gravity * sin - cos * temp) / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pml * theta_acc * cos / total_mass;
    [x_dot, x_acc, theta_dot, theta_acc]
}

pub fn cartpole_step(state: &CartpoleState, action: f64, p: &CartpoleParams) -> CartpoleState {
    let a = if action.is_nan() { 0.0 } else { action.clamp(-1.0, 1.0) };
    let force = a * p.max_force;
    let h = p.dt;
    let s = state.as_array();
    let add = |base: [f64; 4], k: [f64; 4], scale: f64| -> [f64; 4] {
        std::array::from_fn(|i| base[i] + scale * k[i])
    };
    let k1 = derivative(s, force, p);
    let k2 = derivative(add(s, k1, h / 2.0), force, p);
    let k3 = derivative(add(s, k2, h / 2.0), force, p);
    let k4 = derivative(add(s, k3, h), force, p);
    CartpoleState::from_array(std::array::from_fn(|i| {
        s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}
