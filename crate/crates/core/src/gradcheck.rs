//! Central finite-difference gradient checking.
//!
//! The numeric gradients here only ever call [`MlpNetwork::loss`], so they
//! stay independent of the analytic backward pass they are compared with.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::network::{Gradients, LayerGradients, MlpNetwork};

/// Gradients below this magnitude are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Numeric `dLoss/dθ` for every weight and bias using `(L(θ+h) - L(θ-h)) / 2h`.
pub fn finite_difference_gradients(
    net: &MlpNetwork,
    x: &Matrix,
    y_t: &Matrix,
    h: f64,
) -> Result<Gradients> {
    let mut probe = net.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    for l in 0..net.layers().len() {
        let weights = perturb_all(&mut probe, x, y_t, h, |n| &mut n.layers_mut()[l].weights)?;
        let bias = perturb_all(&mut probe, x, y_t, h, |n| &mut n.layers_mut()[l].bias)?;
        layers.push(LayerGradients { weights, bias });
    }
    Ok(Gradients { layers })
}

fn perturb_all(
    net: &mut MlpNetwork,
    x: &Matrix,
    y_t: &Matrix,
    h: f64,
    param: impl Fn(&mut MlpNetwork) -> &mut Matrix,
) -> Result<Matrix> {
    let (rows, cols) = param(net).shape();
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let orig = param(net).data()[i];
        param(net).data_mut()[i] = orig + h;
        let plus = net.loss(x, y_t)?;
        param(net).data_mut()[i] = orig - h;
        let minus = net.loss(x, y_t)?;
        param(net).data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}

/// Settings for a randomized gradient-check sweep over 3-layer networks.
#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub seeds: u64,
    pub max_dim: usize,
    pub batch: usize,
    pub lambda: f64,
    /// Weights closer to zero than this are pushed out to it (L1 kink).
    pub min_abs_weight: f64,
    pub h: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            max_dim: 12,
            batch: 8,
            lambda: 1e-3,
            min_abs_weight: 0.05,
            h: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub coordinates: usize,
    pub within_tolerance: usize,
    pub max_relative_error: f64,
    pub elapsed: Duration,
}

impl GradcheckReport {
    pub fn pass_fraction(&self) -> f64 {
        self.within_tolerance as f64 / self.coordinates.max(1) as f64
    }
}

/// Checks analytic against numeric gradients on `config.seeds` random nets.
pub fn run_gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport> {
    let start = Instant::now();
    let mut report = GradcheckReport {
        coordinates: 0,
        within_tolerance: 0,
        max_relative_error: 0.0,
        elapsed: Duration::ZERO,
    };
    for seed in 0..config.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = (0..4).map(|_| rng.gen_range(2..=config.max_dim)).collect();
        let mut net = MlpNetwork::new(&dims, config.lambda, &mut rng)?;
        let floor = config.min_abs_weight;
        for layer in net.layers_mut() {
            layer.weights = layer
                .weights
                .map(|w| if w.abs() < floor { floor.copysign(w) } else { w });
            for b in layer.bias.data_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let x = Matrix::from_vec(
            dims[0],
            config.batch,
            (0..dims[0] * config.batch)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )?;
        let out_dim = dims[3];
        let y_t = Matrix::from_vec(
            out_dim,
            config.batch,
            (0..out_dim * config.batch)
                .map(|_| rng.gen_range(0.0..1.0))
                .collect(),
        )?;

        let analytic = net.backward(&net.forward(&x)?, &y_t)?;
        let numeric = finite_difference_gradients(&net, &x, &y_t, config.h)?;
        for (a, n) in analytic.layers.iter().zip(&numeric.layers) {
            let pairs = a
                .weights
                .data()
                .iter()
                .zip(n.weights.data())
                .chain(a.bias.data().iter().zip(n.bias.data()));
            for (u, v) in pairs {
                let err = relative_error(*u, *v);
                report.coordinates += 1;
                if err < config.tolerance {
                    report.within_tolerance += 1;
                }
                report.max_relative_error = report.max_relative_error.max(err);
            }
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}
