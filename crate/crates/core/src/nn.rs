//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Hidden layers use ReLU; the output layer is either the identity (critics)
//! or `tanh` (actors). Weights are row-major with shape `(out_dim, in_dim)`.
//! Batched inputs are flat row-major buffers of shape `(batch, in_dim)`.
//!
//! Gradients are sums over the batch of the gradient of `output · upstream`,
//! so loss scaling (e.g. `1/batch` for a mean) belongs in the upstream signal.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::NnError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// How the weights of a freshly built network are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Every weight and bias is zero.
    Zeros,
    /// Uniform in `±1/sqrt(fan_in)`; the final layer optionally uses a fixed
    /// bound instead (actors start with near-zero actions).
    FanIn { final_layer_bound: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter arrays shaped like the weights and biases of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Self { weights, biases }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter()).flatten()
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    fn same_shape(&self, other: &GradientSet) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

/// Weights, biases and Adam state of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub adam_m: GradientSet,
    pub adam_v: GradientSet,
    pub adam_t: u64,
}

/// Layer activations recorded by [`MlpParams::forward_batch`], consumed by
/// [`MlpParams::backward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    batch: usize,
    activation: OutputActivation,
    /// `activations[0]` is the input, `activations[k]` the output of layer k.
    activations: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input is stored")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl MlpParams {
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::InvalidConfig(
                "a network needs at least an input and an output size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(NnError::InvalidConfig("layer sizes must be positive".into()));
        }
        let n_layers = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for (k, w) in layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = match init {
                Init::Zeros => 0.0,
                Init::FanIn { final_layer_bound } => match final_layer_bound {
                    Some(b) if k + 1 == n_layers => b,
                    _ => 1.0 / (fan_in as f64).sqrt(),
                },
            };
            let mut draw = |n: usize| -> Vec<f64> {
                if bound == 0.0 {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                }
            };
            weights.push(draw(fan_in * fan_out));
            biases.push(draw(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            adam_m: GradientSet::zeros(layer_sizes),
            adam_v: GradientSet::zeros(layer_sizes),
            adam_t: 0,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        // Zero init never draws from the rng.
        Self::new(layer_sizes, Init::Zeros, &mut rand::rngs::SmallRng::seed_from_u64(0))
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> GradientSet {
        GradientSet::zeros(&self.layer_sizes)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64], activation: OutputActivation) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_batch(input, 1, activation)?.output().to_vec())
    }

    /// Single-sample gradients of `output · upstream` with respect to every
    /// parameter and to the input.
    pub fn backward(
        &self,
        input: &[f64],
        upstream: &[f64],
        activation: OutputActivation,
    ) -> Result<(GradientSet, Vec<f64>), NnError> {
        let pass = self.forward_batch(input, 1, activation)?;
        self.backward_batch(&pass, upstream)
    }

    pub fn forward_batch(
        &self,
        inputs: &[f64],
        batch: usize,
        activation: OutputActivation,
    ) -> Result<ForwardPass, NnError> {
        check_len("network input", batch * self.input_dim(), inputs.len())?;
        let n_layers = self.num_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(inputs.to_vec());
        for k in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(&self.biases[k]);
            }
            // z (batch x out) += x (batch x in) * W^T
            gemm(
                batch,
                fan_in,
                fan_out,
                &activations[k],
                (fan_in, 1),
                &self.weights[k],
                (1, fan_in),
                &mut z,
                (fan_out, 1),
            );
            if k + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if activation == OutputActivation::Tanh {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Ok(ForwardPass {
            batch,
            activation,
            activations,
        })
    }

    /// Gradients summed over the batch. `upstream` has shape `(batch, out_dim)`.
    pub fn backward_batch(
        &self,
        pass: &ForwardPass,
        upstream: &[f64],
    ) -> Result<(GradientSet, Vec<f64>), NnError> {
        let batch = pass.batch;
        check_len("upstream gradient", batch * self.output_dim(), upstream.len())?;
        if pass.activations.len() != self.layer_sizes.len() {
            return Err(NnError::ShapeMismatch(
                "forward pass was recorded on a different architecture".into(),
            ));
        }
        let n_layers = self.num_layers();
        let mut grads = self.zero_grads();
        let mut delta: Vec<f64> = match pass.activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Tanh => upstream
                .iter()
                .zip(pass.output())
                .map(|(g, y)| g * (1.0 - y * y))
                .collect(),
        };
        for k in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let layer_input = &pass.activations[k];
            // dW (out x in) = delta^T (out x batch) * x (batch x in)
            gemm(
                fan_out,
                batch,
                fan_in,
                &delta,
                (1, fan_out),
                layer_input,
                (fan_in, 1),
                &mut grads.weights[k],
                (fan_in, 1),
            );
            let db = &mut grads.biases[k];
            for row in delta.chunks_exact(fan_out) {
                db.iter_mut().zip(row).for_each(|(b, d)| *b += d);
            }
            // dx (batch x in) = delta (batch x out) * W (out x in)
            let mut dx = vec![0.0; batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                &delta,
                (fan_out, 1),
                &self.weights[k],
                (fan_in, 1),
                &mut dx,
                (fan_in, 1),
            );
            if k > 0 {
                // ReLU'(z) = 1[z > 0], and relu(z) > 0 iff z > 0.
                dx.iter_mut()
                    .zip(layer_input)
                    .for_each(|(g, a)| {
                        if *a <= 0.0 {
                            *g = 0.0
                        }
                    });
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// One Adam step with bias correction. Non-finite gradients leave the
    /// network untouched.
    pub fn adam_step(&mut self, grads: &GradientSet, lr: f64, cfg: AdamConfig) -> Result<(), NnError> {
        if !grads.same_shape(&self.adam_m) {
            return Err(NnError::ShapeMismatch(
                "gradient set does not match network".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        self.adam_t += 1;
        let t = self.adam_t as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        let params = self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten();
        let moments = self.adam_m.iter_mut().zip(self.adam_v.iter_mut());
        for ((p, g), (m, v)) in params.zip(grads.iter()).zip(moments) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }

    /// `self ← (1 − tau)·self + tau·source`, element-wise. Adam state is not blended.
    pub fn polyak_update(&mut self, source: &MlpParams, tau: f64) -> Result<(), NnError> {
        if self.layer_sizes != source.layer_sizes {
            return Err(NnError::ShapeMismatch(format!(
                "polyak target {:?} vs source {:?}",
                self.layer_sizes, source.layer_sizes
            )));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(NnError::InvalidConfig(format!("tau {tau} outside [0, 1]")));
        }
        let dst = self.weights.iter_mut().chain(self.biases.iter_mut()).flatten();
        let src = source.weights.iter().chain(&source.biases).flatten();
        if tau == 1.0 {
            dst.zip(src).for_each(|(d, s)| *d = *s);
        } else if tau > 0.0 {
            dst.zip(src).for_each(|(d, s)| *d = (1.0 - tau) * *d + tau * s);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            version: CHECKPOINT_VERSION,
            params: self.clone(),
        }
    }

    pub fn to_checkpoint_string(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("networks always serialize")
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, NnError> {
        let ckpt: MlpCheckpoint =
            serde_json::from_str(text).map_err(|e| NnError::Parse(e.to_string()))?;
        ckpt.into_params()
    }

    /// Checks every array against `layer_sizes`.
    pub fn validate(&self) -> Result<(), NnError> {
        let expected = GradientSet::zeros(&self.layer_sizes);
        let own = GradientSet {
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        if self.layer_sizes.len() < 2
            || !own.same_shape(&expected)
            || !self.adam_m.same_shape(&expected)
            || !self.adam_v.same_shape(&expected)
        {
            return Err(NnError::ShapeMismatch(format!(
                "arrays do not match layer sizes {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }
}

/// Versioned on-disk form of a network (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub params: MlpParams,
}

impl MlpCheckpoint {
    pub fn into_params(self) -> Result<MlpParams, NnError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::UnsupportedVersion(self.version));
        }
        self.params.validate()?;
        Ok(self.params)
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<(), NnError> {
    if expected != actual {
        return Err(NnError::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `c (m x n) += a (m x k) * b (k x n)` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    let extent = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= extent(m, k, a_strides));
    assert!(b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= extent(m, n, c_strides));
    // SAFETY: the asserts above guarantee every strided access stays in bounds,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            1.0,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line reimplementation used as an oracle.
    fn reference_forward(p: &MlpParams, x: &[f64], act: OutputActivation) -> Vec<f64> {
        let mut h = x.to_vec();
        for k in 0..p.num_layers() {
            let (n_in, n_out) = (p.layer_sizes[k], p.layer_sizes[k + 1]);
            let mut out = vec![0.0; n_out];
            for (o, out_v) in out.iter_mut().enumerate() {
                let mut acc = p.biases[k][o];
                for i in 0..n_in {
                    acc += p.weights[k][o * n_in + i] * h[i];
                }
                *out_v = if k + 1 < p.num_layers() {
                    if acc > 0.0 {
                        acc
                    } else {
                        0.0
                    }
                } else if act == OutputActivation::Tanh {
                    acc.tanh()
                } else {
                    acc
                };
            }
            h = out;
        }
        h
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[3, 5, 2]).unwrap();
        let y = p.forward(&[1.0, -2.0, 7.0], OutputActivation::Identity).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let mut p = MlpParams::zeros(&[2, 1]).unwrap();
        p.weights[0] = vec![1.0, 1.0];
        let y = p.forward(&[3.0, -5.0], OutputActivation::Identity).unwrap();
        assert_eq!(y, vec![-2.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut r = rng(7);
        for _ in 0..20 {
            let p = MlpParams::new(&[4, 8, 1], Init::FanIn { final_layer_bound: None }, &mut r).unwrap();
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            for act in [OutputActivation::Identity, OutputActivation::Tanh] {
                let got = p.forward(&x, act).unwrap();
                let want = reference_forward(&p, &x, act);
                assert!((got[0] - want[0]).abs() <= 1e-12, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn batch_rows_match_single_forward() {
        let mut r = rng(3);
        let p = MlpParams::new(&[3, 16, 16, 2], Init::FanIn { final_layer_bound: None }, &mut r).unwrap();
        let xs: Vec<f64> = (0..5 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
        let pass = p.forward_batch(&xs, 5, OutputActivation::Tanh).unwrap();
        for (row, x) in xs.chunks(3).enumerate() {
            let want = reference_forward(&p, x, OutputActivation::Tanh);
            for j in 0..2 {
                assert!((pass.output()[row * 2 + j] - want[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = MlpParams::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            p.forward(&[1.0], OutputActivation::Identity),
            Err(NnError::DimensionMismatch { .. })
        ));
        assert!(p.backward(&[1.0, 2.0, 3.0], &[1.0], OutputActivation::Identity).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut r = rng(1);
        let p = MlpParams::new(&[3, 8, 2], Init::FanIn { final_layer_bound: None }, &mut r).unwrap();
        let (g, dx) = p.backward(&[0.3, -0.1, 2.0], &[0.0, 0.0], OutputActivation::Tanh).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.weights[0][0] = 0.7;
        let (g, dx) = p.backward(&[2.5], &[1.0], OutputActivation::Identity).unwrap();
        assert_eq!(g.weights[0][0], 2.5);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(dx[0], 0.7);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        // hidden pre-activation is exactly zero
        let mut p = MlpParams::zeros(&[1, 1, 1]).unwrap();
        p.weights[0][0] = 1.0;
        p.weights[1][0] = 1.0;
        let (g, dx) = p.backward(&[0.0], &[1.0], OutputActivation::Identity).unwrap();
        assert_eq!(g.weights[0][0], 0.0);
        assert_eq!(g.biases[0][0], 0.0);
        assert_eq!(dx[0], 0.0);
    }

    #[test]
    fn adam_zero_gradients_is_identity() {
        let mut r = rng(5);
        let mut p = MlpParams::new(&[2, 4, 1], Init::FanIn { final_layer_bound: None }, &mut r).unwrap();
        let before = p.clone();
        let zeros = p.zero_grads();
        for _ in 0..7 {
            p.adam_step(&zeros, 1e-3, AdamConfig::default()).unwrap();
        }
        assert_eq!(p.weights, before.weights);
        assert_eq!(p.biases, before.biases);
        assert!(p.adam_m.iter().chain(p.adam_v.iter()).all(|v| *v == 0.0));
        assert_eq!(p.adam_t, 7);
    }

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.weights[0][0] = 0.5;
        let mut g = p.zero_grads();
        g.weights[0][0] = -3.0;
        p.adam_step(&g, 0.01, AdamConfig::default()).unwrap();
        let delta = p.weights[0][0] - 0.5;
        assert!((delta - 0.01).abs() < 1e-10, "delta {delta}");
    }

    #[test]
    fn adam_two_step_trace() {
        // Hand trace with g1 = 0.5, g2 = -0.25, lr = 0.1, p0 = 1:
        // m1 = 0.05, v1 = 0.00025, m̂1 = 0.5, v̂1 = 0.25 → p1 = 1 - 0.1·0.5/(0.5+1e-8)
        // m2 = 0.045 - 0.025 = 0.02, v2 = 0.00024975 + 0.0000625 = 0.00031225
        // m̂2 = 0.02/0.19, v̂2 = 0.00031225/0.001999 → p2 = p1 - 0.1·m̂2/(sqrt(v̂2)+1e-8)
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.weights[0][0] = 1.0;
        let cfg = AdamConfig::default();
        let mut g = p.zero_grads();
        g.weights[0][0] = 0.5;
        p.adam_step(&g, 0.1, cfg).unwrap();
        let p1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p.weights[0][0] - p1).abs() < 1e-15);
        g.weights[0][0] = -0.25;
        p.adam_step(&g, 0.1, cfg).unwrap();
        let m_hat = 0.02 / (1.0 - 0.81);
        let v_hat: f64 = 0.00031225 / (1.0 - 0.998001);
        let p2 = p1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.weights[0][0] - p2).abs() < 1e-12, "{} vs {p2}", p.weights[0][0]);
        assert!((p.adam_m.weights[0][0] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        let before = p.clone();
        let mut g = p.zero_grads();
        g.biases[0][0] = f64::NAN;
        assert!(matches!(
            p.adam_step(&g, 0.1, AdamConfig::default()),
            Err(NnError::NonFiniteGradient)
        ));
        assert_eq!(p, before);
    }

    #[test]
    fn polyak_limits_and_midpoint() {
        let mut r = rng(9);
        let src = MlpParams::new(&[2, 3, 1], Init::FanIn { final_layer_bound: None }, &mut r).unwrap();
        let mut t = MlpParams::zeros(&[2, 3, 1]).unwrap();
        t.polyak_update(&src, 0.0).unwrap();
        assert!(t.weights.iter().flatten().all(|v| *v == 0.0));
        t.polyak_update(&src, 0.5).unwrap();
        for (a, b) in t.weights.iter().flatten().zip(src.weights.iter().flatten()) {
            assert_eq!(*a, b / 2.0);
        }
        t.polyak_update(&src, 1.0).unwrap();
        assert_eq!(t.weights, src.weights);
        assert_eq!(t.biases, src.biases);
        let x = [0.4, -0.9];
        assert_eq!(
            t.forward(&x, OutputActivation::Identity).unwrap(),
            src.forward(&x, OutputActivation::Identity).unwrap()
        );
    }

    #[test]
    fn polyak_shape_mismatch() {
        let src = MlpParams::zeros(&[2, 3, 1]).unwrap();
        let mut t = MlpParams::zeros(&[2, 4, 1]).unwrap();
        assert!(matches!(t.polyak_update(&src, 0.5), Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut r = rng(11);
        let mut p = MlpParams::new(&[3, 7, 2], Init::FanIn { final_layer_bound: Some(1e-3) }, &mut r).unwrap();
        let g = p.backward(&[0.1, 0.2, 0.3], &[1.0, -1.0], OutputActivation::Tanh).unwrap().0;
        p.adam_step(&g, 1e-3, AdamConfig::default()).unwrap();
        let text = p.to_checkpoint_string();
        let back = MlpParams::from_checkpoint_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn checkpoint_rejects_wrong_version() {
        let p = MlpParams::zeros(&[1, 1]).unwrap();
        let mut ckpt = p.to_checkpoint();
        ckpt.version = 99;
        let text = serde_json::to_string(&ckpt).unwrap();
        assert!(matches!(
            MlpParams::from_checkpoint_str(&text),
            Err(NnError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn actor_final_layer_is_small() {
        let mut r = rng(2);
        let p = MlpParams::new(&[5, 32, 32, 2], Init::FanIn { final_layer_bound: Some(1e-3) }, &mut r).unwrap();
        assert!(p.weights[2].iter().all(|w| w.abs() <= 1e-3));
        let bound = 1.0 / 5f64.sqrt();
        assert!(p.weights[0].iter().all(|w| w.abs() <= bound));
    }
}
