//! TD3: twin critics with a min target, clipped target-policy smoothing and
//! delayed actor / target updates.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Td3Error};
use crate::nn::{AdamConfig, Init, MlpParams, OutputActivation};
use crate::replay::Batch;

pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub exploration_sigma: f64,
    pub target_noise_sigma: f64,
    pub target_noise_clip: f64,
    /// Init bound of the actor's last layer.
    pub actor_final_init: f64,
    pub adam: AdamConfig,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            policy_delay: 2,
            exploration_sigma: 0.1,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            actor_final_init: 1e-3,
            adam: AdamConfig::default(),
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), Td3Error> {
        let bad = |m: &str| Err(Td3Error::InvalidConfig(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be positive");
        }
        if self.exploration_sigma < 0.0 || self.target_noise_sigma < 0.0 || self.target_noise_clip < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    /// L2 norm over both critics' gradients.
    pub critic_grad_norm: f64,
    /// Present on updates that stepped the actor.
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor: MlpParams,
    pub actor_target: MlpParams,
    pub critic1: MlpParams,
    pub critic2: MlpParams,
    pub critic1_target: MlpParams,
    pub critic2_target: MlpParams,
    pub update_counter: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: Td3Config, rng: &mut R) -> Result<Self, Td3Error> {
        config.validate()?;
        if obs_dim == 0 || action_dim == 0 {
            return Err(Td3Error::InvalidConfig("dimensions must be positive".into()));
        }
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let actor = MlpParams::new(
            &sizes(obs_dim, action_dim),
            Init::FanIn {
                final_layer_bound: Some(config.actor_final_init),
            },
            rng,
        )?;
        let critic_init = Init::FanIn {
            final_layer_bound: None,
        };
        let critic1 = MlpParams::new(&sizes(obs_dim + action_dim, 1), critic_init, rng)?;
        let critic2 = MlpParams::new(&sizes(obs_dim + action_dim, 1), critic_init, rng)?;
        Ok(Self {
            obs_dim,
            action_dim,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            update_counter: 0,
            config,
        })
    }

    fn check_obs(&self, obs: &[f64], batch: usize) -> Result<(), Td3Error> {
        if obs.len() != batch * self.obs_dim {
            return Err(NnError::DimensionMismatch {
                context: "observation",
                expected: batch * self.obs_dim,
                actual: obs.len(),
            }
            .into());
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Td3Error::NonFiniteObservation);
        }
        Ok(())
    }

    /// Deterministic action; with `explore`, plus N(0, σ²) noise, clamped to [−1, 1].
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>, Td3Error> {
        self.check_obs(obs, 1)?;
        let mut a = self.actor.forward(obs, OutputActivation::Tanh)?;
        if explore && self.config.exploration_sigma > 0.0 {
            let normal = Normal::new(0.0, self.config.exploration_sigma).expect("sigma validated");
            for v in &mut a {
                *v = (*v + normal.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// `min(Q1, Q2)(obs, π(obs))`.
    pub fn value(&self, obs: &[f64]) -> Result<f64, Td3Error> {
        self.check_obs(obs, 1)?;
        let a = self.actor.forward(obs, OutputActivation::Tanh)?;
        let input = concat_rows(obs, &a, 1, self.obs_dim, self.action_dim);
        let q1 = self.critic1.forward(&input, OutputActivation::Identity)?[0];
        let q2 = self.critic2.forward(&input, OutputActivation::Identity)?[0];
        Ok(q1.min(q2))
    }

    /// Bootstrapped targets `r + γ(1 − term)·min(Q1', Q2')(s', a')` with
    /// `a' = clamp(π'(s') + clip(ε, ±c), ±1)`.
    pub fn critic_targets<R: Rng + ?Sized>(
        &self,
        rewards: &[f64],
        next_obs: &[f64],
        terms: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, Td3Error> {
        let b = rewards.len();
        self.check_obs(next_obs, b)?;
        if terms.len() != b {
            return Err(NnError::DimensionMismatch {
                context: "terminal flags",
                expected: b,
                actual: terms.len(),
            }
            .into());
        }
        let mut a_next = self
            .actor_target
            .forward_batch(next_obs, b, OutputActivation::Tanh)?
            .output()
            .to_vec();
        let sigma = self.config.target_noise_sigma;
        let clip = self.config.target_noise_clip;
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));
        for v in &mut a_next {
            let eps = normal.as_ref().map_or(0.0, |n| n.sample(rng).clamp(-clip, clip));
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        let input = concat_rows(next_obs, &a_next, b, self.obs_dim, self.action_dim);
        let q1 = self.critic1_target.forward_batch(&input, b, OutputActivation::Identity)?;
        let q2 = self.critic2_target.forward_batch(&input, b, OutputActivation::Identity)?;
        Ok((0..b)
            .map(|i| {
                if terms[i] != 0.0 {
                    rewards[i]
                } else {
                    rewards[i] + self.config.gamma * q1.output()[i].min(q2.output()[i])
                }
            })
            .collect())
    }

    /// Single-transition form of [`Td3Agent::critic_targets`].
    pub fn compute_critic_target<R: Rng + ?Sized>(&self, r: f64, next_obs: &[f64], term: bool, rng: &mut R) -> Result<f64, Td3Error> {
        Ok(self.critic_targets(&[r], next_obs, &[if term { 1.0 } else { 0.0 }], rng)?[0])
    }

    /// One TD3 learning step. Nothing is modified if a loss comes out non-finite.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateDiagnostics, Td3Error> {
        let b = batch.size;
        if b == 0 {
            return Err(Td3Error::EmptyBatch);
        }
        self.check_obs(&batch.obs, b)?;
        if batch.actions.len() != b * self.action_dim {
            return Err(NnError::DimensionMismatch {
                context: "actions",
                expected: b * self.action_dim,
                actual: batch.actions.len(),
            }
            .into());
        }
        let y = self.critic_targets(&batch.rewards, &batch.next_obs, &batch.terms, rng)?;
        let input = concat_rows(&batch.obs, &batch.actions, b, self.obs_dim, self.action_dim);
        let scale = 1.0 / b as f64;

        let p1 = self.critic1.forward_batch(&input, b, OutputActivation::Identity)?;
        let p2 = self.critic2.forward_batch(&input, b, OutputActivation::Identity)?;
        let residual = |q: &[f64]| -> Vec<f64> { q.iter().zip(&y).map(|(q, y)| q - y).collect() };
        let (e1, e2) = (residual(p1.output()), residual(p2.output()));
        let loss = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>() * scale;
        let (l1, l2) = (loss(&e1), loss(&e2));
        if !(l1.is_finite() && l2.is_finite()) {
            return Err(Td3Error::NonFinite {
                what: "critic loss",
                critic1_loss: l1,
                critic2_loss: l2,
            });
        }
        let up = |e: &[f64]| -> Vec<f64> { e.iter().map(|v| 2.0 * v * scale).collect() };
        let (g1, _) = self.critic1.backward_batch(&p1, &up(&e1))?;
        let (g2, _) = self.critic2.backward_batch(&p2, &up(&e2))?;
        let grad_norm = (g1.l2_norm().powi(2) + g2.l2_norm().powi(2)).sqrt();
        if !grad_norm.is_finite() {
            return Err(Td3Error::NonFinite {
                what: "critic gradient",
                critic1_loss: l1,
                critic2_loss: l2,
            });
        }
        let lr = self.config.critic_lr;
        let adam = self.config.adam;
        self.critic1.adam_step(&g1, lr, adam)?;
        self.critic2.adam_step(&g2, lr, adam)?;

        self.update_counter += 1;
        let mut diag = UpdateDiagnostics {
            critic1_loss: l1,
            critic2_loss: l2,
            critic_grad_norm: grad_norm,
            actor_loss: None,
        };
        if self.update_counter.is_multiple_of(self.config.policy_delay) {
            let pa = self.actor.forward_batch(&batch.obs, b, OutputActivation::Tanh)?;
            let actor_input = concat_rows(&batch.obs, pa.output(), b, self.obs_dim, self.action_dim);
            let pq = self.critic1.forward_batch(&actor_input, b, OutputActivation::Identity)?;
            let actor_loss = -pq.output().iter().sum::<f64>() * scale;
            if !actor_loss.is_finite() {
                return Err(Td3Error::NonFinite {
                    what: "actor loss",
                    critic1_loss: l1,
                    critic2_loss: l2,
                });
            }
            // d(−mean Q)/dQ = −1/B, routed back through the critic's input.
            let (_, dq_dinput) = self.critic1.backward_batch(&pq, &vec![-scale; b])?;
            let width = self.obs_dim + self.action_dim;
            let da: Vec<f64> = dq_dinput
                .chunks_exact(width)
                .flat_map(|row| row[self.obs_dim..].iter().copied())
                .collect();
            let (ga, _) = self.actor.backward_batch(&pa, &da)?;
            self.actor.adam_step(&ga, self.config.actor_lr, adam)?;
            let tau = self.config.tau;
            self.actor_target.polyak_update(&self.actor, tau)?;
            self.critic1_target.polyak_update(&self.critic1, tau)?;
            self.critic2_target.polyak_update(&self.critic2, tau)?;
            diag.actor_loss = Some(actor_loss);
        }
        Ok(diag)
    }

    pub fn to_checkpoint_string(&self) -> String {
        serde_json::to_string(&AgentCheckpoint {
            version: AGENT_CHECKPOINT_VERSION,
            agent: self.clone(),
        })
        .expect("agents always serialize")
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, Td3Error> {
        let ckpt: AgentCheckpoint = serde_json::from_str(text).map_err(|e| NnError::Parse(e.to_string()))?;
        if ckpt.version != AGENT_CHECKPOINT_VERSION {
            return Err(NnError::UnsupportedVersion(ckpt.version).into());
        }
        let a = ckpt.agent;
        for net in [&a.actor, &a.actor_target, &a.critic1, &a.critic2, &a.critic1_target, &a.critic2_target] {
            net.validate()?;
        }
        a.config.validate()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentCheckpoint {
    version: u32,
    agent: Td3Agent,
}

/// Row-wise `[a_i | b_i]`.
fn concat_rows(a: &[f64], b: &[f64], rows: usize, a_w: usize, b_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * (a_w + b_w));
    for i in 0..rows {
        out.extend_from_slice(&a[i * a_w..(i + 1) * a_w]);
        out.extend_from_slice(&b[i * b_w..(i + 1) * b_w]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> Td3Config {
        Td3Config {
            hidden: vec![16, 16],
            gamma: 0.95,
            ..Td3Config::default()
        }
    }

    fn agent(seed: u64) -> Td3Agent {
        Td3Agent::new(4, 2, small_cfg(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn const_critic(sizes: &[usize], c: f64) -> MlpParams {
        let mut p = MlpParams::zeros(sizes).unwrap();
        *p.biases.last_mut().unwrap() = vec![c];
        p
    }

    fn batch_of(agent: &Td3Agent, n: usize, rng: &mut ChaCha8Rng) -> Batch {
        let obs: Vec<f64> = (0..n * agent.obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let next_obs: Vec<f64> = (0..n * agent.obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Batch {
            size: n,
            obs_dim: agent.obs_dim,
            action_dim: agent.action_dim,
            obs,
            actions: (0..n * agent.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            rewards: (0..n).map(|i| (i % 2) as f64).collect(),
            next_obs,
            terms: (0..n).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect(),
            ..Batch::default()
        }
    }

    #[test]
    fn greedy_actions_are_deterministic_and_bounded() {
        let a = agent(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = [0.3, -0.2, 1.0, 0.5];
        let x = a.select_action(&obs, false, &mut rng).unwrap();
        assert_eq!(x, a.select_action(&obs, false, &mut rng).unwrap());
        for _ in 0..100 {
            assert!(a.select_action(&obs, true, &mut rng).unwrap().iter().all(|v| v.abs() <= 1.0));
        }
        let mut z = a.clone();
        z.actor = MlpParams::zeros(&z.actor.layer_sizes).unwrap();
        assert_eq!(z.select_action(&obs, false, &mut rng).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            a.select_action(&[f64::NAN, 0.0, 0.0, 0.0], false, &mut rng),
            Err(Td3Error::NonFiniteObservation)
        ));
        assert!(a.select_action(&[0.0; 3], false, &mut rng).is_err());
    }

    #[test]
    fn exploration_noise_has_configured_std() {
        let mut a = agent(0);
        a.actor = MlpParams::zeros(&a.actor.layer_sizes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| a.select_action(&[0.0; 4], true, &mut rng).unwrap())
            .collect();
        for d in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|v| v[d]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            assert!((sd - 0.1).abs() < 0.01, "std {sd}");
        }
    }

    #[test]
    fn critic_target_examples() {
        let mut a = agent(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let next = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(a.compute_critic_target(1.0, &next, true, &mut rng).unwrap(), 1.0);
        let sizes = a.critic1.layer_sizes.clone();
        a.critic1_target = MlpParams::zeros(&sizes).unwrap();
        a.critic2_target = MlpParams::zeros(&sizes).unwrap();
        assert_eq!(a.compute_critic_target(0.0, &next, false, &mut rng).unwrap(), 0.0);
        a.critic1_target = const_critic(&sizes, 2.0);
        a.critic2_target = const_critic(&sizes, 3.0);
        let y = a.compute_critic_target(1.0, &next, false, &mut rng).unwrap();
        assert!((y - 2.9).abs() < 1e-12);
        // swapping which critic is lower does not change the min
        a.critic1_target = const_critic(&sizes, 3.0);
        a.critic2_target = const_critic(&sizes, 2.0);
        assert!((a.compute_critic_target(1.0, &next, false, &mut rng).unwrap() - 2.9).abs() < 1e-12);
    }

    #[test]
    fn terminal_targets_ignore_next_obs() {
        let a = agent(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in 0..20 {
            let next: Vec<f64> = (0..4).map(|i| (k * 4 + i) as f64 * 0.37 - 3.0).collect();
            assert_eq!(a.compute_critic_target(0.0, &next, true, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn actor_moves_only_every_second_update() {
        let mut a = agent(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = batch_of(&a, 32, &mut rng);
        for call in 1..=6 {
            let before = (a.actor.clone(), a.actor_target.clone(), a.critic1_target.clone());
            let d = a.update(&batch, &mut rng).unwrap();
            let moved = a.actor != before.0;
            assert_eq!(moved, call % 2 == 0, "call {call}");
            assert_eq!(a.actor_target != before.1, call % 2 == 0);
            assert_eq!(a.critic1_target != before.2, call % 2 == 0);
            assert_eq!(d.actor_loss.is_some(), call % 2 == 0);
        }
        assert_eq!(a.update_counter, 6);
    }

    #[test]
    fn critics_at_target_have_zero_gradient() {
        // terminal batch with r equal to the critics' constant output
        let mut a = agent(9);
        let sizes = a.critic1.layer_sizes.clone();
        a.critic1 = const_critic(&sizes, 1.0);
        a.critic2 = const_critic(&sizes, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut batch = batch_of(&a, 16, &mut rng);
        batch.rewards = vec![1.0; 16];
        batch.terms = vec![1.0; 16];
        let d = a.update(&batch, &mut rng).unwrap();
        assert!(d.critic_grad_norm <= 1e-10);
        assert_eq!(d.critic1_loss, 0.0);
    }

    #[test]
    fn single_unit_hand_trace() {
        // Linear critics Q = w·[o, a] + b, one terminal transition.
        let cfg = Td3Config {
            hidden: vec![],
            critic_lr: 0.01,
            ..Td3Config::default()
        };
        let mut a = Td3Agent::new(1, 1, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        a.critic1.weights[0] = vec![0.5, -0.25];
        a.critic1.biases[0] = vec![0.1];
        let batch = Batch {
            size: 1,
            obs_dim: 1,
            action_dim: 1,
            obs: vec![2.0],
            actions: vec![0.4],
            rewards: vec![1.0],
            next_obs: vec![0.0],
            terms: vec![1.0],
            ..Batch::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        a.update(&batch, &mut rng).unwrap();
        // Q = 0.5·2 − 0.25·0.4 + 0.1 = 1 = y: zero residual, Adam leaves the critic alone.
        assert_eq!(a.critic1.weights[0], vec![0.5, -0.25]);
        a.critic1.biases[0] = vec![0.3];
        a.update(&batch, &mut rng).unwrap();
        // residual 0.2: gradient 2·0.2·[2, 0.4, 1], all positive.
        let w = &a.critic1.weights[0];
        let lr = 0.01;
        // second Adam step with grads g1 = 0 then g2: m̂/√v̂ = (0.1 g2/0.19)/sqrt(0.001 g2²/0.001999)
        let ratio = (0.1 / 0.19) / (0.001f64 / 0.001999).sqrt();
        assert!((w[0] - (0.5 - lr * ratio)).abs() < 1e-9, "{w:?}");
        assert!((w[1] - (-0.25 - lr * ratio)).abs() < 1e-9);
        assert!((a.critic1.biases[0][0] - (0.3 - lr * ratio)).abs() < 1e-9);
    }

    #[test]
    fn critic_loss_decreases_on_a_fixed_batch() {
        let cfg = Td3Config {
            hidden: vec![32, 32],
            critic_lr: 1e-3,
            target_noise_sigma: 0.0,
            tau: 0.0,
            ..Td3Config::default()
        };
        let mut a = Td3Agent::new(4, 2, cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch = batch_of(&a, 64, &mut rng);
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(a.update(&batch, &mut rng).unwrap().critic1_loss);
        }
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{} -> {}", w[0], w[1]);
        }
        assert!(losses[99] < losses[0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = agent(13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let batch = batch_of(&a, 8, &mut rng);
        a.update(&batch, &mut rng).unwrap();
        let text = a.to_checkpoint_string();
        let b = Td3Agent::from_checkpoint_str(&text).unwrap();
        assert_eq!(a, b);
        assert!(Td3Agent::from_checkpoint_str(&text.replace("\"version\":1", "\"version\":2")).is_err());
    }

    #[test]
    fn non_finite_rewards_abort_without_mutation() {
        let mut a = agent(15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut batch = batch_of(&a, 8, &mut rng);
        batch.rewards[3] = f64::INFINITY;
        let before = a.clone();
        assert!(matches!(a.update(&batch, &mut rng), Err(Td3Error::NonFinite { .. })));
        assert_eq!(a, before);
    }
}
