//! Adam with bias correction, plus mask projection for pruned weights.

use crate::error::{Error, Result};
use crate::masks::SparseMask;
use crate::matrix::Matrix;
use crate::network::{Gradients, LayerParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

impl Moments {
    fn zeros_like(p: &Matrix) -> Self {
        Self {
            m: Matrix::zeros(p.rows(), p.cols()),
            v: Matrix::zeros(p.rows(), p.cols()),
        }
    }
}

/// First/second moment estimates for every weight and bias, and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    weights: Vec<Moments>,
    biases: Vec<Moments>,
}

impl AdamState {
    pub fn new(layers: &[LayerParams], config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            weights: layers.iter().map(|l| Moments::zeros_like(&l.weights)).collect(),
            biases: layers.iter().map(|l| Moments::zeros_like(&l.bias)).collect(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn timestep(&self) -> u64 {
        self.t
    }

    fn check_shapes(&self, layers: &[LayerParams], grads: &Gradients) -> Result<()> {
        if layers.len() != self.weights.len() || grads.layers.len() != layers.len() {
            return Err(Error::InvalidValue(format!(
                "optimizer tracks {} layers, got {} params and {} gradients",
                self.weights.len(),
                layers.len(),
                grads.layers.len()
            )));
        }
        for (i, (p, g)) in layers.iter().zip(&grads.layers).enumerate() {
            if p.weights.shape() != g.weights.shape() || p.weights.shape() != self.weights[i].m.shape() {
                return Err(Error::shape("adam weights", p.weights.shape(), g.weights.shape()).in_layer(i));
            }
            if p.bias.shape() != g.bias.shape() || p.bias.shape() != self.biases[i].m.shape() {
                return Err(Error::shape("adam bias", p.bias.shape(), g.bias.shape()).in_layer(i));
            }
        }
        Ok(())
    }

    /// One Adam update of every parameter.
    pub fn step(&mut self, layers: &mut [LayerParams], grads: &Gradients) -> Result<()> {
        self.check_shapes(layers, grads)?;
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut Matrix, g: &Matrix, mom: &mut Moments| {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(mom.m.data_mut().iter_mut().zip(mom.v.data_mut()));
            for ((p, &g), (m, v)) in it {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (i, layer) in layers.iter_mut().enumerate() {
            update(&mut layer.weights, &grads.layers[i].weights, &mut self.weights[i]);
            update(&mut layer.bias, &grads.layers[i].bias, &mut self.biases[i]);
        }
        Ok(())
    }

    /// Zeroes masked-out weights and their moment estimates. Biases are untouched.
    pub fn apply_masks(&mut self, layers: &mut [LayerParams], masks: &[SparseMask]) -> Result<()> {
        if masks.len() != layers.len() {
            return Err(Error::InvalidValue(format!(
                "{} masks for {} layers",
                masks.len(),
                layers.len()
            )));
        }
        for (i, (layer, mask)) in layers.iter_mut().zip(masks).enumerate() {
            let bits = mask.bits();
            layer.weights.hadamard_assign(bits).map_err(|e| e.in_layer(i))?;
            self.weights[i].m.hadamard_assign(bits).map_err(|e| e.in_layer(i))?;
            self.weights[i].v.hadamard_assign(bits).map_err(|e| e.in_layer(i))?;
        }
        Ok(())
    }

    /// [`step`](Self::step) followed by projecting the weights onto `masks`.
    pub fn masked_step(
        &mut self,
        layers: &mut [LayerParams],
        grads: &Gradients,
        masks: Option<&[SparseMask]>,
    ) -> Result<()> {
        if let Some(masks) = masks {
            // validate before mutating anything
            if masks.len() != layers.len() {
                return Err(Error::InvalidValue(format!(
                    "{} masks for {} layers",
                    masks.len(),
                    layers.len()
                )));
            }
            for (i, (l, m)) in layers.iter().zip(masks).enumerate() {
                if l.weights.shape() != m.shape() {
                    return Err(Error::shape("mask", l.weights.shape(), m.shape()).in_layer(i));
                }
            }
        }
        self.step(layers, grads)?;
        if let Some(masks) = masks {
            self.apply_masks(layers, masks)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerGradients, MlpNetwork};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_layer(w: f64) -> Vec<LayerParams> {
        vec![LayerParams::new(Matrix::column(&[w]), Matrix::column(&[0.0])).unwrap()]
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![LayerGradients {
                weights: Matrix::column(&[g]),
                bias: Matrix::column(&[0.0]),
            }],
        }
    }

    fn random_grads(net: &MlpNetwork, rng: &mut impl Rng) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        for l in &mut g.layers {
            l.weights = l.weights.map(|_| rng.gen_range(-1.0..1.0));
            l.bias = l.bias.map(|_| rng.gen_range(-1.0..1.0));
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = MlpNetwork::new(&[4, 3, 2], 0.0, &mut rng).unwrap();
        let mut layers = net.layers().to_vec();
        let mut state = AdamState::new(&layers, AdamConfig::default()).unwrap();
        state.step(&mut layers, &Gradients::zeros_like(&net)).unwrap();
        assert_eq!(layers, net.layers());
        assert_eq!(state.timestep(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::default();
        for &g in &[0.5, -3.0, 1e-2] {
            let mut layers = scalar_layer(1.0);
            let mut state = AdamState::new(&layers, cfg).unwrap();
            state.step(&mut layers, &scalar_grad(g)).unwrap();
            // m_hat = g, v_hat = g², so delta = -lr·g/(|g| + eps)
            let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((layers[0].weights.get(0, 0) - expected).abs() < 1e-15);
            assert!((layers[0].weights.get(0, 0) - (1.0 - cfg.lr * g.signum())).abs() < 1e-8);
        }
    }

    #[test]
    fn two_step_scalar_trace() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.75,
            eps: 0.01,
        };
        let mut layers = scalar_layer(0.0);
        let mut state = AdamState::new(&layers, cfg).unwrap();
        // g = 2
        // t=1: m=1, v=1, m_hat=1/0.5=2, v_hat=1/0.25=4
        // t=2: m=0.5+1=1.5, v=0.75+1=1.75, m_hat=1.5/0.75=2, v_hat=1.75/0.4375=4
        // each step: -0.1 * 2 / (2 + 0.01)
        state.step(&mut layers, &scalar_grad(2.0)).unwrap();
        let after1 = -0.2 / 2.01;
        assert!((layers[0].weights.get(0, 0) - after1).abs() < 1e-15);
        state.step(&mut layers, &scalar_grad(2.0)).unwrap();
        let after2 = after1 - 0.2 / 2.01;
        assert!((layers[0].weights.get(0, 0) - after2).abs() < 1e-14);
    }

    #[test]
    fn step_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpNetwork::new(&[5, 4, 3], 0.0, &mut rng).unwrap();
        let g = random_grads(&net, &mut rng);
        let run = || {
            let mut layers = net.layers().to_vec();
            let mut s = AdamState::new(&layers, AdamConfig::default()).unwrap();
            for _ in 0..3 {
                s.step(&mut layers, &g).unwrap();
            }
            (layers, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn masked_step_with_full_and_empty_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpNetwork::new(&[5, 4, 3], 0.0, &mut rng).unwrap();
        let g = random_grads(&net, &mut rng);
        let ones: Vec<_> = net.weight_shapes().iter().map(|&(r, c)| SparseMask::ones(r, c)).collect();
        let zeros: Vec<_> = net.weight_shapes().iter().map(|&(r, c)| SparseMask::zeros(r, c)).collect();

        let mut plain = net.layers().to_vec();
        let mut s1 = AdamState::new(&plain, AdamConfig::default()).unwrap();
        s1.step(&mut plain, &g).unwrap();

        let mut full = net.layers().to_vec();
        let mut s2 = AdamState::new(&full, AdamConfig::default()).unwrap();
        s2.masked_step(&mut full, &g, Some(&ones)).unwrap();
        assert_eq!(plain, full);
        assert_eq!(s1, s2);

        let mut empty = net.layers().to_vec();
        let mut s3 = AdamState::new(&empty, AdamConfig::default()).unwrap();
        s3.masked_step(&mut empty, &g, Some(&zeros)).unwrap();
        for l in &empty {
            assert_eq!(l.weights.total_abs_sum(), 0.0);
            assert!(l.bias.total_abs_sum() > 0.0);
        }
    }

    #[test]
    fn masked_entries_stay_zero_for_100_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpNetwork::new(&[8, 6, 4], 0.0, &mut rng).unwrap();
        let masks: Vec<_> = net
            .weight_shapes()
            .iter()
            .map(|&(r, c)| SparseMask::generate(r, c, 0.5, &mut rng).unwrap())
            .collect();
        let mut layers = net.layers().to_vec();
        let mut state = AdamState::new(&layers, AdamConfig::default()).unwrap();
        let mut reference = layers.clone();
        let mut ref_state = state.clone();
        for _ in 0..100 {
            let g = random_grads(&net, &mut rng);
            state.masked_step(&mut layers, &g, Some(&masks)).unwrap();
            ref_state.step(&mut reference, &g).unwrap();
            ref_state.apply_masks(&mut reference, &masks).unwrap();
            assert_eq!(layers, reference);
            for (l, m) in layers.iter().zip(&masks) {
                for (w, b) in l.weights.data().iter().zip(m.bits().data()) {
                    if *b == 0.0 {
                        assert_eq!(*w, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut layers = scalar_layer(1.0);
        let mut state = AdamState::new(&layers, AdamConfig::default()).unwrap();
        let bad = Gradients {
            layers: vec![LayerGradients {
                weights: Matrix::zeros(2, 1),
                bias: Matrix::zeros(1, 1),
            }],
        };
        assert!(state.step(&mut layers, &bad).is_err());
        assert_eq!(state.timestep(), 0);
        let wrong_mask = [SparseMask::ones(2, 2)];
        assert!(state
            .masked_step(&mut layers, &scalar_grad(1.0), Some(&wrong_mask))
            .is_err());
        assert!(AdamConfig { lr: 0.0, ..Default::default() }.validate().is_err());
    }
}
