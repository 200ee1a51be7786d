//! Feed-forward classifier with per-example gradients and full-batch DPSGD.
//!
//! Parameters are flattened layer by layer, weights before biases, each
//! weight matrix row-major with one row per output unit. Sensitivity norms
//! and gradient traces rely on this order.
//!
//! DPSGD noise is calibrated on the *sum* of clipped per-example gradients,
//! whose sensitivity is the clipping norm (or twice it for replacement
//! neighbors). The released gradient is that noisy sum divided by a public
//! normalizer, so a sum-space scale `sigma` becomes `sigma / n` on the
//! averaged gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::dp::{perturb, NoiseScale};
use crate::error::{check_dims, domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Rectifier hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layer_sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must list at least an input and an output layer of positive width, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| DenseLayer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// Weights uniform in `[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn glorot<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let r = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-r..=r);
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit layers.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("layers"))?;
        let mut sizes = vec![first.inputs];
        for l in &layers {
            if l.inputs != *sizes.last().unwrap()
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(Error::Config("inconsistent layer shapes".into()));
            }
            sizes.push(l.outputs);
        }
        check_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        check_dims(self.param_count(), flat.len())?;
        let mut net = self.clone();
        let mut offset = 0;
        for l in &mut net.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(domain("network parameters must be finite"));
        }
        Ok(net)
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dims(self.input_dim(), x.len())?;
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut input: Vec<f64> = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let z: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    l.biases[o] + row.iter().zip(&input).map(|(w, a)| w * a).sum::<f64>()
                })
                .collect();
            if li + 1 < self.layers.len() {
                input = z.iter().map(|v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        Ok(zs)
    }

    /// Class probabilities.
    /// `theta - learning_rate * gradient`.
    pub fn descend(&self, gradient: &[f64], learning_rate: f64) -> Result<Self> {
        check_dims(self.param_count(), gradient.len())?;
        let theta: Vec<f64> = self
            .params()
            .iter()
            .zip(gradient)
            .map(|(t, g)| t - learning_rate * g)
            .collect();
        self.with_params(&theta)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let zs = self.pre_activations(x)?;
        Ok(softmax(zs.last().unwrap()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.forward(x)?;
        Ok(argmax(&p))
    }

    /// Cross-entropy of the prediction for one example.
    pub fn loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(self.n_classes(), y.len())?;
        let zs = self.pre_activations(x)?;
        let logits = zs.last().unwrap();
        let lse = log_sum_exp(logits);
        Ok(y.iter().zip(logits).map(|(t, z)| t * (lse - z)).sum())
    }

    pub fn mean_loss(&self, ds: &TabularDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut total = 0.0;
        for (x, y) in ds.features.iter().zip(&ds.labels) {
            total += self.loss(x, y)?;
        }
        Ok(total / ds.len() as f64)
    }

    pub fn accuracy(&self, ds: &TabularDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut correct = 0usize;
        for (i, x) in ds.features.iter().enumerate() {
            if self.predict(x)? == ds.class_of(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    }

    /// Gradient of the cross-entropy loss with respect to all parameters,
    /// in flattening order.
    pub fn per_example_gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.n_classes(), y.len())?;
        let zs = self.pre_activations(x)?;
        let n_layers = self.layers.len();

        // delta of the output layer: softmax - one-hot
        let mut delta: Vec<f64> = softmax(&zs[n_layers - 1])
            .iter()
            .zip(y)
            .map(|(p, t)| p - t)
            .collect();
        let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n_layers);
        for li in (0..n_layers).rev() {
            let l = &self.layers[li];
            let input: Vec<f64> = if li == 0 {
                x.to_vec()
            } else {
                zs[li - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let mut gw = vec![0.0; l.weights.len()];
            for o in 0..l.outputs {
                for i in 0..l.inputs {
                    gw[o * l.inputs + i] = delta[o] * input[i];
                }
            }
            let gb = delta.clone();
            if li > 0 {
                let prev = &zs[li - 1];
                delta = (0..l.inputs)
                    .map(|i| {
                        if prev[i] > 0.0 {
                            (0..l.outputs).map(|o| l.weights[o * l.inputs + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
            per_layer.push((gw, gb));
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in per_layer.into_iter().rev() {
            flat.extend(gw);
            flat.extend(gb);
        }
        Ok(flat)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `gradient` to norm at most `clipping_norm`.
pub fn clip(gradient: &[f64], clipping_norm: f64) -> Vec<f64> {
    let norm = l2_norm(gradient);
    if norm <= clipping_norm {
        return gradient.to_vec();
    }
    let scale = clipping_norm / norm;
    gradient.iter().map(|g| g * scale).collect()
}

/// Clipped per-example gradients of a dataset and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub per_example: Vec<Vec<f64>>,
    pub sum: Vec<f64>,
}

impl BatchGradient {
    /// `sum / divisor`.
    pub fn scaled(&self, divisor: f64) -> Vec<f64> {
        self.sum.iter().map(|s| s / divisor).collect()
    }

    /// Average clipped gradient `g_hat`.
    pub fn mean(&self) -> Vec<f64> {
        self.scaled(self.per_example.len() as f64)
    }
}

/// Clips every per-example gradient to `clipping_norm` and accumulates them
/// in index order.
pub fn batch_clipped_gradient(net: &Network, ds: &TabularDataset, clipping_norm: f64) -> Result<BatchGradient> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if !(clipping_norm > 0.0) {
        return Err(domain("clipping norm must be positive"));
    }
    let mut sum = vec![0.0; net.param_count()];
    let mut per_example = Vec::with_capacity(ds.len());
    for (x, y) in ds.features.iter().zip(&ds.labels) {
        let g = clip(&net.per_example_gradient(x, y)?, clipping_norm);
        for (s, v) in sum.iter_mut().zip(&g) {
            *s += v;
        }
        per_example.push(g);
    }
    Ok(BatchGradient { per_example, sum })
}

/// One DPSGD update: `g_tilde = g_hat + N(0, sigma^2)`, `theta' = theta - lr * g_tilde`.
///
/// `sigma` is the noise scale on `g_hat` itself.
pub fn dpsgd_step<R: Rng + ?Sized>(
    net: &Network,
    g_hat: &[f64],
    sigma: NoiseScale,
    learning_rate: f64,
    rng: &mut R,
) -> Result<(Network, Vec<f64>)> {
    check_dims(net.param_count(), g_hat.len())?;
    let released = perturb(g_hat, sigma, rng);
    Ok((net.descend(&released, learning_rate)?, released))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub clipping_norm: f64,
    pub learning_rate: f64,
    /// Per-step noise scale on the summed clipped gradient; its length is
    /// the number of steps.
    pub sigma_schedule: Vec<NoiseScale>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn steps(&self) -> usize {
        self.sigma_schedule.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_schedule.is_empty() {
            return Err(Error::Config("training needs at least one step".into()));
        }
        if !(self.clipping_norm > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("clipping norm and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Parameters at which the step's gradient was evaluated.
    pub weights: Vec<f64>,
    /// Unperturbed averaged clipped gradient.
    pub clipped: Vec<f64>,
    /// Released perturbed gradient.
    pub perturbed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTrace {
    pub steps: Vec<TraceStep>,
    pub final_network: Network,
}

/// Full-batch DPSGD for `config.steps()` steps.
pub fn train_dpsgd<R: Rng + ?Sized>(
    net0: &Network,
    ds: &TabularDataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<GradientTrace> {
    config.validate()?;
    let n = ds.len() as f64;
    let mut net = net0.clone();
    let mut steps = Vec::with_capacity(config.steps());
    for sigma in &config.sigma_schedule {
        let batch = batch_clipped_gradient(&net, ds, config.clipping_norm)?;
        let g_hat = batch.mean();
        let avg_sigma = NoiseScale::new(sigma.get() / n)?;
        let (next, released) = dpsgd_step(&net, &g_hat, avg_sigma, config.learning_rate, rng)?;
        steps.push(TraceStep {
            weights: net.params(),
            clipped: g_hat,
            perturbed: released,
        });
        net = next;
    }
    Ok(GradientTrace {
        steps,
        final_network: net,
    })
}

/// Sum of scalar records, each required to lie in `[lo, hi]`.
pub fn sum_query(records: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if let Some(r) = records.iter().find(|r| !(lo..=hi).contains(*r)) {
        return Err(domain(format!("record {r} outside [{lo}, {hi}]")));
    }
    Ok(records.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, wage_universe};
    use crate::rng::{stream, Domain};

    fn small_net(seed: u64) -> Network {
        Network::glorot(&[4, 5, 3], &mut stream(seed, Domain::Initialization, 0)).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Network::zeros(&[3, 4, 5]).unwrap();
        let p = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hand_built_softmax() {
        let layer = DenseLayer {
            inputs: 2,
            outputs: 3,
            weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            biases: vec![0.0, 0.5, -1.0],
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        // logits (1, 2.5, 2)
        let p = net.forward(&[1.0, 2.0]).unwrap();
        let e = [1f64.exp(), 2.5f64.exp(), 2f64.exp()];
        let s: f64 = e.iter().sum();
        for (pi, ei) in p.iter().zip(e) {
            assert!((pi - ei / s).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = small_net(0);
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(net.per_example_gradient(&[0.0; 4], &[1.0]).is_err());
        assert!(Network::zeros(&[3]).is_err());
        assert!(Network::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn flatten_round_trip_and_order() {
        let net = small_net(1);
        let flat = net.params();
        assert_eq!(flat.len(), 4 * 5 + 5 + 5 * 3 + 3);
        assert_eq!(net.with_params(&flat).unwrap(), net);
        // weights of layer 0 come first, then its biases
        assert_eq!(flat[..20], net.layers()[0].weights[..]);
        assert_eq!(flat[20..25], net.layers()[0].biases[..]);
        assert!(net.with_params(&flat[1..]).is_err());
    }

    #[test]
    fn gradient_vanishes_on_confident_prediction() {
        let layer = DenseLayer {
            inputs: 1,
            outputs: 2,
            weights: vec![50.0, -50.0],
            biases: vec![0.0, 0.0],
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        let g = net.per_example_gradient(&[1.0], &[1.0, 0.0]).unwrap();
        assert!(l2_norm(&g) < 1e-40);
    }

    #[test]
    fn output_layer_gradient_is_linear_in_error() {
        // single layer: dW = (p - y) x^T, db = p - y
        let layer = DenseLayer {
            inputs: 2,
            outputs: 2,
            weights: vec![0.3, -0.2, 0.1, 0.4],
            biases: vec![0.05, -0.05],
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        let x = [2.0, -1.0];
        let p = net.forward(&x).unwrap();
        let g = net.per_example_gradient(&x, &[0.0, 1.0]).unwrap();
        let err = [p[0], p[1] - 1.0];
        let want = [err[0] * 2.0, -err[0], err[1] * 2.0, -err[1], err[0], err[1]];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        // doubling the input doubles the weight part
        let g2 = net.per_example_gradient(&[4.0, -2.0], &[0.0, 1.0]).unwrap();
        let p2 = net.forward(&[4.0, -2.0]).unwrap();
        assert!((g2[0] - p2[0] * 4.0).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let c = clip(&[3.0, 4.0], 1.0);
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn batch_gradient_properties() {
        let ds = synth_blobs(12, 4, 3, 2.0, 3).unwrap();
        let net = small_net(2);
        let c = 0.05;
        let batch = batch_clipped_gradient(&net, &ds, c).unwrap();
        assert!(batch.per_example.iter().all(|g| l2_norm(g) <= c * (1.0 + 1e-12)));
        let mean = batch.mean();
        assert!(l2_norm(&mean) <= c * (1.0 + 1e-12));
        let manual: Vec<f64> = (0..net.param_count())
            .map(|j| batch.per_example.iter().map(|g| g[j]).sum::<f64>() / 12.0)
            .collect();
        for (a, b) in mean.iter().zip(&manual) {
            assert!((a - b).abs() < 1e-12);
        }

        let single = ds.select(&[5]);
        let b1 = batch_clipped_gradient(&net, &single, c).unwrap();
        assert_eq!(b1.mean(), b1.per_example[0]);

        let doubled = ds.select(&(0..24).map(|i| i % 12).collect::<Vec<_>>());
        let b2 = batch_clipped_gradient(&net, &doubled, c).unwrap();
        for (a, b) in b2.mean().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(batch_clipped_gradient(&net, &ds.select(&[]), c).is_err());
    }

    #[test]
    fn dpsgd_step_degenerate_cases() {
        let net = small_net(3);
        let g = vec![0.1; net.param_count()];
        let mut rng = stream(0, Domain::Experiment, 0);
        let (next, released) = dpsgd_step(&net, &g, NoiseScale::ZERO, 0.5, &mut rng).unwrap();
        assert_eq!(released, g);
        for (a, b) in next.params().iter().zip(net.params()) {
            assert_eq!(*a, b - 0.05);
        }
        let (same, released) =
            dpsgd_step(&net, &g, NoiseScale::new(1.0).unwrap(), 0.0, &mut rng).unwrap();
        assert_eq!(same, net);
        assert_ne!(released, g);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synth_blobs(30, 4, 3, 3.0, 8).unwrap();
        let net = small_net(4);
        let cfg = TrainConfig {
            clipping_norm: 1.0,
            learning_rate: 0.5,
            sigma_schedule: vec![NoiseScale::new(2.0).unwrap(); 5],
            seed: 11,
        };
        let a = train_dpsgd(&net, &ds, &cfg, &mut stream(11, Domain::Experiment, 0)).unwrap();
        let b = train_dpsgd(&net, &ds, &cfg, &mut stream(11, Domain::Experiment, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 5);
        assert_eq!(a.steps[0].weights, net.params());
    }

    #[test]
    fn training_rejects_zero_steps() {
        let ds = synth_blobs(30, 4, 3, 3.0, 8).unwrap();
        let cfg = TrainConfig {
            clipping_norm: 1.0,
            learning_rate: 0.5,
            sigma_schedule: vec![],
            seed: 0,
        };
        let r = train_dpsgd(&small_net(0), &ds, &cfg, &mut stream(0, Domain::Experiment, 0));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn sum_query_examples() {
        let w = wage_universe();
        assert_eq!(sum_query(&w.d, w.lo, w.hi).unwrap(), 17.0);
        assert_eq!(sum_query(&w.d_prime, w.lo, w.hi).unwrap(), 8.0);
        assert_eq!(sum_query(&[], 1.0, 10.0).unwrap(), 0.0);
        assert!(sum_query(&[11.0], 1.0, 10.0).is_err());
        let diff = sum_query(&w.d, 1.0, 10.0).unwrap() - sum_query(&w.d_prime, 1.0, 10.0).unwrap();
        assert_eq!(diff, w.sensitivity());
    }
}
