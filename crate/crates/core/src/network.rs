//! Sigmoid multi-layer perceptron with NMSE loss, L1 weight penalty and
//! hand-written backpropagation.
//!
//! Every layer computes `out_l = W_l·y_{l-1} + b_l` followed by
//! `y_l = σ(out_l)`, with `y_0 = X`. The loss is
//!
//! ```text
//! NMSE = mean((y_p - y_t)²) / var_unbiased(y_t)
//! L    = NMSE + λ Σ_l Σ |W_l|
//! ```
//!
//! where the mean and variance run over every element of `y_t` (all output
//! units of all samples in the batch).

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Weights (`out_dim × in_dim`) and bias (`out_dim × 1`) of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Matrix) -> Result<Self> {
        if bias.cols() != 1 || bias.rows() != weights.rows() {
            return Err(Error::shape("layer bias", weights.shape(), bias.shape()));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<LayerParams>,
    lambda: f64,
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// `out_l` for each layer.
    pub pre_activations: Vec<Matrix>,
    /// `y_l = σ(out_l)` for each layer; the last entry is the prediction.
    pub activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub bias: Matrix,
}

/// Per-layer `dLoss/dW_l` and `dLoss/db_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl MlpNetwork {
    /// Random network with layer widths `dims` (`dims[0]` is the input size).
    ///
    /// Weights are uniform in `[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], lambda: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(
                "a network needs an input and at least one layer".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                LayerParams {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized buffer"),
                    bias: Matrix::zeros(fan_out, 1),
                }
            })
            .collect();
        Self::from_layers(layers, lambda)
    }

    pub fn from_layers(layers: Vec<LayerParams>, lambda: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(
                    "layer chain",
                    pair[0].weights.shape(),
                    pair[1].weights.shape(),
                )
                .in_layer(i + 1));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (l.out_dim(), 1) {
                return Err(Error::shape("layer bias", l.weights.shape(), l.bias.shape()).in_layer(i));
            }
        }
        Ok(Self { layers, lambda })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Weight matrix shapes, one per layer.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.shape()).collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardTrace> {
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap_or(x);
            let out = layer
                .weights
                .matmul(prev)
                .and_then(|z| z.add_bias(&layer.bias))
                .map_err(|e| e.in_layer(i))?;
            activations.push(sigmoid(&out));
            pre_activations.push(out);
        }
        Ok(ForwardTrace {
            input: x.clone(),
            pre_activations,
            activations,
        })
    }

    /// Forward pass that keeps only the output.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut current: Option<Matrix> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = current.as_ref().unwrap_or(x);
            let out = layer
                .weights
                .matmul(prev)
                .and_then(|z| z.add_bias(&layer.bias))
                .map_err(|e| e.in_layer(i))?;
            current = Some(sigmoid(&out));
        }
        Ok(current.expect("at least one layer"))
    }

    /// `λ Σ |W|` over every weight matrix; biases are not penalized.
    pub fn l1_penalty(&self) -> f64 {
        self.lambda
            * self
                .layers
                .iter()
                .map(|l| l.weights.total_abs_sum())
                .sum::<f64>()
    }

    /// `nmse(predict(x), y_t) + l1_penalty()`.
    pub fn loss(&self, x: &Matrix, y_t: &Matrix) -> Result<f64> {
        Ok(nmse(&self.predict(x)?, y_t)? + self.l1_penalty())
    }

    /// Backpropagates NMSE + L1 through a trace produced by [`forward`](Self::forward).
    pub fn backward(&self, trace: &ForwardTrace, y_t: &Matrix) -> Result<Gradients> {
        if trace.activations.len() != self.layers.len() {
            return Err(Error::InvalidValue(format!(
                "trace has {} layers, network has {}",
                trace.activations.len(),
                self.layers.len()
            )));
        }
        let mut delta = nmse_grad(trace.output(), y_t)?
            .hadamard(&sigmoid_prime_from_output(trace.output()))?;

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let prev = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            let layer = &self.layers[l];
            let mut dw = delta.matmul_t(prev).map_err(|e| e.in_layer(l))?;
            if self.lambda != 0.0 {
                for (g, &w) in dw.data_mut().iter_mut().zip(layer.weights.data()) {
                    *g += self.lambda * sign(w);
                }
            }
            let db = delta.row_sums();
            if l > 0 {
                delta = layer
                    .weights
                    .t_matmul(&delta)
                    .map_err(|e| e.in_layer(l))?
                    .hadamard(&sigmoid_prime_from_output(&trace.activations[l - 1]))?;
            }
            grads.push(LayerGradients {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradients {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: Matrix::zeros(l.bias.rows(), 1),
                })
                .collect(),
        }
    }
}

/// `sign(w)` with `sign(0) = 0`.
#[inline]
pub fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid_scalar(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(s: &Matrix) -> Matrix {
    s.map(sigmoid_scalar)
}

/// `σ'(s) = σ(s)(1 - σ(s))`.
pub fn sigmoid_prime(s: &Matrix) -> Matrix {
    s.map(|v| {
        let y = sigmoid_scalar(v);
        y * (1.0 - y)
    })
}

fn sigmoid_prime_from_output(y: &Matrix) -> Matrix {
    y.map(|v| v * (1.0 - v))
}

fn target_variance(y_t: &Matrix) -> Result<f64> {
    let n = y_t.len();
    if n < 2 {
        return Err(Error::InvalidValue(
            "NMSE needs at least two target elements".into(),
        ));
    }
    let mean = y_t.total_sum() / n as f64;
    let ss: f64 = y_t.data().iter().map(|v| (v - mean).powi(2)).sum();
    let var = ss / (n - 1) as f64;
    if var <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(var)
}

/// Mean squared error normalized by the unbiased variance of `y_t`.
pub fn nmse(y_p: &Matrix, y_t: &Matrix) -> Result<f64> {
    if y_p.shape() != y_t.shape() {
        return Err(Error::shape("nmse", y_p.shape(), y_t.shape()));
    }
    let var = target_variance(y_t)?;
    let n = y_t.len() as f64;
    let mse = y_p
        .data()
        .iter()
        .zip(y_t.data())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}

/// Element-wise `dNMSE/dy_p = (2/n)(y_p - y_t) / var_unbiased(y_t)`.
pub fn nmse_grad(y_p: &Matrix, y_t: &Matrix) -> Result<Matrix> {
    if y_p.shape() != y_t.shape() {
        return Err(Error::shape("nmse_grad", y_p.shape(), y_t.shape()));
    }
    let var = target_variance(y_t)?;
    let c = 2.0 / (y_t.len() as f64 * var);
    y_p.zip_with(y_t, "nmse_grad", |p, t| c * (p - t))
}

/// Index of the largest entry in each column; ties go to the lowest row.
pub fn argmax_columns(scores: &Matrix) -> Vec<usize> {
    (0..scores.cols())
        .map(|c| {
            let mut best = 0;
            for r in 1..scores.rows() {
                if scores.get(r, c) > scores.get(best, c) {
                    best = r;
                }
            }
            best
        })
        .collect()
}

/// Fraction of columns of `y_p` whose argmax equals the label.
pub fn accuracy(y_p: &Matrix, labels: &[u8]) -> Result<f64> {
    if labels.len() != y_p.cols() {
        return Err(Error::shape("accuracy", y_p.shape(), (1, labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= y_p.rows()) {
        return Err(Error::InvalidValue(format!(
            "label {bad} out of range for {} classes",
            y_p.rows()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let correct = argmax_columns(y_p)
        .into_iter()
        .zip(labels)
        .filter(|(p, &l)| *p == l as usize)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradients, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(2.0) - 0.880_797_077_977_882_4).abs() < 1e-15);
        assert!(sigmoid_scalar(-800.0).is_finite());
        assert!(sigmoid_scalar(800.0).is_finite());
        let s = Matrix::from_rows(&[[-3.0, 0.7, 12.0]]);
        let sum = sigmoid(&s).add(&sigmoid(&s.scale(-1.0))).unwrap();
        for v in sum.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_prime_matches_finite_difference() {
        let h = 1e-5;
        assert_eq!(sigmoid_prime(&Matrix::column(&[0.0])).get(0, 0), 0.25);
        for &s in &[-4.0, -1.3, -0.2, 0.0, 0.5, 2.0, 6.0] {
            let fd = (sigmoid_scalar(s + h) - sigmoid_scalar(s - h)) / (2.0 * h);
            let an = sigmoid_prime(&Matrix::column(&[s])).get(0, 0);
            assert!((fd - an).abs() < 1e-8, "s={s}: {fd} vs {an}");
            let neg = sigmoid_prime(&Matrix::column(&[-s])).get(0, 0);
            assert!((an - neg).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_bounds(s in -30.0f64..30.0) {
            let y = sigmoid_scalar(s);
            prop_assert!(y > 0.0 && y < 1.0);
            let d = y * (1.0 - y);
            prop_assert!(d > 0.0 && d <= 0.25);
        }

        #[test]
        fn nmse_is_non_negative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_matrix(3, 4, -1.0, 1.0, &mut rng);
            let t = random_matrix(3, 4, -1.0, 1.0, &mut rng);
            prop_assert!(nmse(&p, &t).unwrap() > 0.0);
            prop_assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        }

        #[test]
        fn l1_ignores_sign(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = MlpNetwork::new(&[3, 4, 2], 0.3, &mut rng).unwrap();
            let mut flipped = net.clone();
            for l in flipped.layers_mut() {
                l.weights = l.weights.scale(-1.0);
            }
            prop_assert_eq!(net.l1_penalty(), flipped.l1_penalty());
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let layer = LayerParams::new(Matrix::zeros(3, 4), Matrix::zeros(3, 1)).unwrap();
        let net = MlpNetwork::from_layers(vec![layer], 0.0).unwrap();
        let y = net.predict(&Matrix::ones(4, 5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn scalar_forward() {
        let layer = LayerParams::new(Matrix::column(&[1.0]), Matrix::column(&[0.0])).unwrap();
        let net = MlpNetwork::from_layers(vec![layer], 0.0).unwrap();
        let trace = net.forward(&Matrix::column(&[2.0])).unwrap();
        assert!((trace.output().get(0, 0) - 0.880_797_077_977_882_4).abs() < 1e-15);
    }

    #[test]
    fn trace_activations_are_sigmoid_of_pre_activations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpNetwork::new(&[5, 7, 6, 4, 3], 0.0, &mut rng).unwrap();
        let x = random_matrix(5, 8, -2.0, 2.0, &mut rng);
        let trace = net.forward(&x).unwrap();
        assert_eq!(trace.activations.len(), 4);
        for (out, y) in trace.pre_activations.iter().zip(&trace.activations) {
            assert_eq!(&sigmoid(out), y);
            assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert_eq!(trace.output(), &net.predict(&x).unwrap());
    }

    #[test]
    fn forward_dimension_error_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = MlpNetwork::new(&[3, 4, 2], 0.0, &mut rng).unwrap();
        assert!(matches!(
            net.forward(&Matrix::zeros(5, 1)),
            Err(Error::Layer { layer: 0, .. })
        ));
        net.layers_mut()[1].weights = Matrix::zeros(2, 9);
        assert!(matches!(
            net.forward(&Matrix::zeros(3, 1)),
            Err(Error::Layer { layer: 1, .. })
        ));
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let a = LayerParams::new(Matrix::zeros(4, 3), Matrix::zeros(4, 1)).unwrap();
        let b = LayerParams::new(Matrix::zeros(2, 5), Matrix::zeros(2, 1)).unwrap();
        assert!(MlpNetwork::from_layers(vec![a, b], 0.0).is_err());
        assert!(LayerParams::new(Matrix::zeros(4, 3), Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn nmse_examples() {
        let t = Matrix::from_rows(&[[2.0, 4.0, 6.0]]);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let p = Matrix::from_rows(&[[1.0, 2.0, 3.0]]);
        assert!((nmse(&p, &t).unwrap() - 7.0 / 6.0).abs() < 1e-15);
        let mean = Matrix::filled(1, 3, 4.0);
        assert!((nmse(&mean, &t).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            nmse(&p, &Matrix::filled(1, 3, 1.0)),
            Err(Error::DegenerateTarget)
        ));
        assert!(nmse(&p, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn l1_examples() {
        let w = Matrix::from_rows(&[[-1.0, 2.0], [-3.0, 4.0]]);
        let layer = LayerParams::new(w, Matrix::column(&[100.0, -100.0])).unwrap();
        let net = MlpNetwork::from_layers(vec![layer.clone()], 1.0).unwrap();
        assert_eq!(net.l1_penalty(), 10.0);
        let net0 = MlpNetwork::from_layers(vec![layer], 0.0).unwrap();
        assert_eq!(net0.l1_penalty(), 0.0);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpNetwork::new(&[4, 5, 3], 0.0, &mut rng).unwrap();
        let x = random_matrix(4, 6, -1.0, 1.0, &mut rng);
        let trace = net.forward(&x).unwrap();
        let y_t = trace.output().clone();
        let grads = net.backward(&trace, &y_t).unwrap();
        for g in &grads.layers {
            assert_eq!(g.weights.total_abs_sum(), 0.0);
            assert_eq!(g.bias.total_abs_sum(), 0.0);
        }
    }

    #[test]
    fn scalar_backward_matches_hand_expansion() {
        // One weight, one bias, two samples so the target variance is defined.
        let (w, b, lambda) = (0.7, -0.2, 0.05);
        let x = [1.5, -0.5];
        let t = [0.9, 0.1];
        let layer = LayerParams::new(Matrix::column(&[w]), Matrix::column(&[b])).unwrap();
        let net = MlpNetwork::from_layers(vec![layer], lambda).unwrap();
        let xm = Matrix::from_rows(&[x]);
        let tm = Matrix::from_rows(&[t]);
        let grads = net.backward(&net.forward(&xm).unwrap(), &tm).unwrap();

        let mu = (t[0] + t[1]) / 2.0;
        let var = ((t[0] - mu).powi(2) + (t[1] - mu).powi(2)) / 1.0;
        let mut dw = lambda;
        let mut db = 0.0;
        for i in 0..2 {
            let y = 1.0 / (1.0 + (-(w * x[i] + b)).exp());
            let d = (2.0 / 2.0) * (y - t[i]) / var * y * (1.0 - y);
            dw += d * x[i];
            db += d;
        }
        assert!((grads.layers[0].weights.get(0, 0) - dw).abs() < 1e-14);
        assert!((grads.layers[0].bias.get(0, 0) - db).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = MlpNetwork::new(&[6, 5, 4, 3], 0.01, &mut rng).unwrap();
            for l in net.layers_mut() {
                // keep weights away from the L1 kink
                l.weights = l.weights.map(|w| if w.abs() < 0.05 { 0.05_f64.copysign(w) } else { w });
                l.bias = random_matrix(l.bias.rows(), 1, -0.5, 0.5, &mut rng);
            }
            let x = random_matrix(6, 7, -1.0, 1.0, &mut rng);
            let t = random_matrix(3, 7, 0.0, 1.0, &mut rng);
            let analytic = net.backward(&net.forward(&x).unwrap(), &t).unwrap();
            let numeric = finite_difference_gradients(&net, &x, &t, 1e-5).unwrap();
            for (a, n) in analytic.layers.iter().zip(&numeric.layers) {
                for (u, v) in a.weights.data().iter().zip(n.weights.data()) {
                    assert!(relative_error(*u, *v) < 1e-4, "{u} vs {v}");
                }
                for (u, v) in a.bias.data().iter().zip(n.bias.data()) {
                    assert!(relative_error(*u, *v) < 1e-4, "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn duplicated_batch_keeps_mean_based_gradients() {
        // The mean squared error is unchanged by duplication, but the unbiased
        // variance goes from SS/(n-1) to 2SS/(2n-1).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MlpNetwork::new(&[4, 6, 3], 0.0, &mut rng).unwrap();
        let x = random_matrix(4, 5, -1.0, 1.0, &mut rng);
        let t = random_matrix(3, 5, 0.0, 1.0, &mut rng);
        let x2 = Matrix::hconcat(&[x.clone(), x.clone()]).unwrap();
        let t2 = Matrix::hconcat(&[t.clone(), t.clone()]).unwrap();
        let g1 = net.backward(&net.forward(&x).unwrap(), &t).unwrap();
        let g2 = net.backward(&net.forward(&x2).unwrap(), &t2).unwrap();
        let n = t.len() as f64;
        let ratio = 2.0 * (n - 1.0) / (2.0 * n - 1.0);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (u, v) in a.weights.data().iter().zip(b.weights.data()) {
                assert!((u - v * ratio).abs() < 1e-12, "{u} vs {v}");
            }
            for (u, v) in a.bias.data().iter().zip(b.bias.data()) {
                assert!((u - v * ratio).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accuracy_cases() {
        let labels = [2u8, 0, 1];
        let mut onehot = Matrix::zeros(3, 3);
        for (c, &l) in labels.iter().enumerate() {
            onehot.set(l as usize, c, 1.0);
        }
        assert_eq!(accuracy(&onehot, &labels).unwrap(), 1.0);
        let flat = Matrix::filled(3, 3, 0.3);
        assert_eq!(argmax_columns(&flat), vec![0, 0, 0]);
        assert!((accuracy(&flat, &labels).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&flat, &[0, 1, 3]).is_err());
    }

    #[test]
    fn accuracy_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let scores = random_matrix(10, 200, 0.0, 1.0, &mut rng);
        let labels: Vec<u8> = (0..200).map(|_| rng.gen_range(0..10)).collect();
        let mut correct = 0;
        for c in 0..200 {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for r in 0..10 {
                if scores.get(r, c) > best_v {
                    best_v = scores.get(r, c);
                    best = r;
                }
            }
            if best == labels[c] as usize {
                correct += 1;
            }
        }
        assert_eq!(
            accuracy(&scores, &labels).unwrap(),
            correct as f64 / 200.0
        );
    }
}
