#![allow(dead_code)]

use std::path::Path;

use goalseq::goal_mdp::{AgentVariant, EnvId};
use goalseq::harness::RunConfig;
use goalseq::nn::{MlpParams, OutputActivation};
use goalseq::planner::GoalGraph;

/// Largest violation of `|analytic - numeric| <= rel * max(|a|, |n|) + abs`
/// over every parameter and input coordinate of `net`, for the scalar loss
/// `Σ upstream · net(inputs)`. Returns `(worst_excess, checked)`.
pub fn gradient_check(
    net: &MlpParams,
    activation: OutputActivation,
    inputs: &[f64],
    batch: usize,
    upstream: &[f64],
    rel: f64,
    abs: f64,
) -> (f64, usize) {
    let loss = |n: &MlpParams, x: &[f64]| -> f64 {
        let pass = n.forward_batch(x, batch, activation).unwrap();
        pass.output().iter().zip(upstream).map(|(y, u)| y * u).sum()
    };
    let pass = net.forward_batch(inputs, batch, activation).unwrap();
    let (grads, dx) = net.backward_batch(&pass, upstream).unwrap();
    let eps = 1e-6;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut judge = |a: f64, n: f64| {
        let excess = (a - n).abs() - (rel * a.abs().max(n.abs()) + abs);
        worst = worst.max(excess);
        checked += 1;
    };
    for k in 0..net.num_layers() {
        for i in 0..net.weights[k].len() {
            let mut p = net.clone();
            p.weights[k][i] += eps;
            let up = loss(&p, inputs);
            p.weights[k][i] -= 2.0 * eps;
            let down = loss(&p, inputs);
            judge(grads.weights[k][i], (up - down) / (2.0 * eps));
        }
        for i in 0..net.biases[k].len() {
            let mut p = net.clone();
            p.biases[k][i] += eps;
            let up = loss(&p, inputs);
            p.biases[k][i] -= 2.0 * eps;
            let down = loss(&p, inputs);
            judge(grads.biases[k][i], (up - down) / (2.0 * eps));
        }
    }
    for i in 0..inputs.len() {
        let mut x = inputs.to_vec();
        x[i] += eps;
        let up = loss(net, &x);
        x[i] -= 2.0 * eps;
        let down = loss(net, &x);
        judge(dx[i], (up - down) / (2.0 * eps));
    }
    (worst, checked)
}

/// Bellman-Ford distances from `source` over the undirected Euclidean graph.
pub fn bellman_ford(graph: &GoalGraph, source: usize) -> Vec<f64> {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(a, b) in graph.edges() {
            let w = graph.node(a).distance(&graph.node(b));
            for (u, v) in [(a, b), (b, a)] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// A run small enough for a test: narrow networks, short budget.
pub fn tiny_config(env: EnvId, variant: AgentVariant, seed: u64, out: &Path) -> RunConfig {
    let mut c = RunConfig::defaults(env, variant);
    c.seed = seed;
    c.total_env_steps = 1_200;
    c.warmup_random_steps = 400;
    c.eval_every = 400;
    c.eval_episodes = 2;
    c.batch_size = 32;
    c.buffer_capacity = 100_000;
    c.max_episode_steps = Some(100);
    c.td3.hidden = vec![32, 32];
    c.output_dir = out.to_path_buf();
    c
}
