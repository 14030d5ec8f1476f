//! Pruning-at-initialization strategies.
//!
//! * **Random dropout**: one fixed random mask per layer.
//! * **KStarts**: every layer starts with `k` random masks. After each
//!   optimizer step the mask whose masked fitness source (weights, latest
//!   gradient, or accumulated gradients) has the largest absolute sum is
//!   applied to the weights, and every `elimination_interval` iterations the
//!   weakest mask is dropped until one remains.
//! * **Dissipating gradients**: gradients are summed over each epoch; at the
//!   end of each of the first `active_epochs` epochs, weights whose
//!   accumulated gradient stays below `epsilon` in magnitude are pruned.
//! * **Combination**: the intersection of the kstarts mask and the
//!   dissipating-gradients mask.
//!
//! Only weight matrices are pruned. Biases always survive.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::masks::SparseMask;
use crate::matrix::Matrix;
use crate::network::{Gradients, LayerParams};
use crate::optimizer::AdamState;

/// Which matrix is masked to build the kstarts population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitnessVariant {
    /// Current weights.
    #[default]
    Magnitude,
    /// Gradient of the latest iteration.
    Gradient,
    /// Gradients summed since the last elimination event.
    SumOfGradients,
}

impl FitnessVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FitnessVariant::Magnitude => "magnitude",
            FitnessVariant::Gradient => "gradient",
            FitnessVariant::SumOfGradients => "sumgrad",
        }
    }
}

impl fmt::Display for FitnessVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitnessVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(FitnessVariant::Magnitude),
            "gradient" => Ok(FitnessVariant::Gradient),
            "sumgrad" | "sum-of-gradients" => Ok(FitnessVariant::SumOfGradients),
            _ => Err(Error::Config(format!(
                "unknown fitness {s:?} (expected magnitude, gradient or sumgrad)"
            ))),
        }
    }
}

/// How a masked matrix is reduced to a fitness score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitnessSum {
    /// Σ |x|
    #[default]
    Absolute,
    /// Σ x
    Signed,
}

/// Sum of absolute values of a population member.
pub fn fitness(member: &Matrix) -> f64 {
    member.total_abs_sum()
}

/// Fitness of `source ∘ mask` without materializing the product.
pub fn masked_fitness(source: &Matrix, mask: &SparseMask, sum: FitnessSum) -> f64 {
    let pairs = source.data().iter().zip(mask.bits().data());
    match sum {
        FitnessSum::Absolute => pairs.map(|(s, m)| s.abs() * m).sum(),
        FitnessSum::Signed => pairs.map(|(s, m)| s * m).sum(),
    }
}

/// One random mask per weight shape, drawn in layer order.
pub fn random_dropout<R: Rng + ?Sized>(
    shapes: &[(usize, usize)],
    p: f64,
    exact: bool,
    rng: &mut R,
) -> Result<Vec<SparseMask>> {
    shapes
        .iter()
        .map(|&(r, c)| {
            if exact {
                SparseMask::generate_exact(r, c, p, rng)
            } else {
                SparseMask::generate(r, c, p, rng)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KStartsConfig {
    pub k: usize,
    pub p: f64,
    pub elimination_interval: u64,
    pub fitness: FitnessVariant,
    pub fitness_sum: FitnessSum,
    pub exact_count: bool,
}

impl Default for KStartsConfig {
    fn default() -> Self {
        Self {
            k: 10,
            p: 0.5,
            elimination_interval: 5,
            fitness: FitnessVariant::Magnitude,
            fitness_sum: FitnessSum::Absolute,
            exact_count: false,
        }
    }
}

impl KStartsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p must be in [0,1], got {}", self.p)));
        }
        if self.elimination_interval == 0 {
            return Err(Error::Config("elimination interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Surviving candidate masks of one layer.
#[derive(Debug, Clone, PartialEq)]
struct LayerPopulation {
    masks: Vec<SparseMask>,
    /// Index into `masks` of the currently applied individual.
    chosen: usize,
}

/// Population state of the kstarts strategy, one population per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct KStartsState {
    config: KStartsConfig,
    layers: Vec<LayerPopulation>,
    grad_accumulator: Vec<Matrix>,
    last_gradient: Option<Vec<Matrix>>,
    eliminations: usize,
}

impl KStartsState {
    /// Draws `k` individuals. Individual `i` gets one mask per layer, drawn
    /// in layer order, so `k = 1` consumes the generator exactly like
    /// [`random_dropout`].
    pub fn new<R: Rng + ?Sized>(
        shapes: &[(usize, usize)],
        config: KStartsConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers: Vec<LayerPopulation> = shapes
            .iter()
            .map(|_| LayerPopulation {
                masks: Vec::with_capacity(config.k),
                chosen: 0,
            })
            .collect();
        for _ in 0..config.k {
            let individual = random_dropout(shapes, config.p, config.exact_count, rng)?;
            for (pop, mask) in layers.iter_mut().zip(individual) {
                pop.masks.push(mask);
            }
        }
        Ok(Self::from_populations(
            layers.into_iter().map(|p| p.masks).collect(),
            config,
        ))
    }

    /// Builds a state from explicit per-layer candidate masks.
    pub fn from_populations(populations: Vec<Vec<SparseMask>>, config: KStartsConfig) -> Self {
        let grad_accumulator = populations
            .iter()
            .map(|p| {
                let (r, c) = p.first().map_or((0, 0), |m| m.shape());
                Matrix::zeros(r, c)
            })
            .collect();
        Self {
            config,
            layers: populations
                .into_iter()
                .map(|masks| LayerPopulation { masks, chosen: 0 })
                .collect(),
            grad_accumulator,
            last_gradient: None,
            eliminations: 0,
        }
    }

    pub fn config(&self) -> &KStartsConfig {
        &self.config
    }

    /// Surviving individuals in `layer`.
    pub fn population_size(&self, layer: usize) -> usize {
        self.layers[layer].masks.len()
    }

    /// Number of elimination events so far (counted once per iteration).
    pub fn eliminations(&self) -> usize {
        self.eliminations
    }

    /// The masks currently applied, one per layer.
    pub fn current_masks(&self) -> Vec<&SparseMask> {
        self.layers.iter().map(|p| &p.masks[p.chosen]).collect()
    }

    pub fn current_masks_owned(&self) -> Vec<SparseMask> {
        self.current_masks().into_iter().cloned().collect()
    }

    /// Records the gradient of the iteration that is about to be stepped.
    pub fn observe_gradients(&mut self, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::InvalidValue(format!(
                "{} gradient layers for {} populations",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        match self.config.fitness {
            FitnessVariant::Magnitude => {}
            FitnessVariant::Gradient => {
                self.last_gradient = Some(grads.layers.iter().map(|g| g.weights.clone()).collect());
            }
            FitnessVariant::SumOfGradients => {
                for (i, (acc, g)) in self.grad_accumulator.iter_mut().zip(&grads.layers).enumerate() {
                    acc.add_assign(&g.weights).map_err(|e| e.in_layer(i))?;
                }
            }
        }
        Ok(())
    }

    fn fitness_source<'a>(&'a self, layer: usize, weights: &'a Matrix, initial: bool) -> &'a Matrix {
        if initial {
            return weights;
        }
        match self.config.fitness {
            FitnessVariant::Magnitude => weights,
            FitnessVariant::Gradient => self
                .last_gradient
                .as_ref()
                .map_or(weights, |g| &g[layer]),
            FitnessVariant::SumOfGradients => &self.grad_accumulator[layer],
        }
    }

    fn fitnesses(&self, layer: usize, source: &Matrix) -> Vec<f64> {
        self.layers[layer]
            .masks
            .iter()
            .map(|m| masked_fitness(source, m, self.config.fitness_sum))
            .collect()
    }

    /// Chooses the first mask for each layer by weight magnitude, before any
    /// gradient exists. No elimination happens here.
    pub fn select_initial(&mut self, layers: &[LayerParams]) -> Result<Vec<&SparseMask>> {
        self.check_layers(layers)?;
        for l in 0..self.layers.len() {
            let f = self.fitnesses(l, self.fitness_source(l, &layers[l].weights, true));
            self.layers[l].chosen = argmax_first(&f);
        }
        Ok(self.current_masks())
    }

    fn check_layers(&self, layers: &[LayerParams]) -> Result<()> {
        if layers.len() != self.layers.len() {
            return Err(Error::InvalidValue(format!(
                "{} weight layers for {} populations",
                layers.len(),
                self.layers.len()
            )));
        }
        for (i, (l, p)) in layers.iter().zip(&self.layers).enumerate() {
            if l.weights.shape() != p.masks[0].shape() {
                return Err(Error::shape("kstarts", l.weights.shape(), p.masks[0].shape()).in_layer(i));
            }
        }
        Ok(())
    }

    /// Selection after optimizer step `iteration` (1-based): picks the
    /// argmax-fitness mask per layer and, every `elimination_interval`
    /// iterations, drops the minimum-fitness mask while more than one
    /// survives. Returns the masks to apply.
    pub fn select(&mut self, layers: &[LayerParams], iteration: u64) -> Result<Vec<&SparseMask>> {
        self.check_layers(layers)?;
        let eliminate = iteration > 0 && iteration.is_multiple_of(self.config.elimination_interval);
        let mut eliminated = false;
        for l in 0..self.layers.len() {
            if self.layers[l].masks.len() == 1 {
                self.layers[l].chosen = 0;
                continue;
            }
            let f = self.fitnesses(l, self.fitness_source(l, &layers[l].weights, false));
            let best = argmax_first(&f);
            let pop = &mut self.layers[l];
            pop.chosen = best;
            if eliminate {
                let worst = argmin_last_excluding(&f, best);
                pop.masks.remove(worst);
                if worst < best {
                    pop.chosen -= 1;
                }
                eliminated = true;
            }
        }
        if eliminated {
            self.eliminations += 1;
        }
        if eliminate && self.config.fitness == FitnessVariant::SumOfGradients {
            for acc in &mut self.grad_accumulator {
                *acc = Matrix::zeros(acc.rows(), acc.cols());
            }
        }
        Ok(self.current_masks())
    }
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmin_last_excluding(values: &[f64], exclude: usize) -> usize {
    let mut worst: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if i == exclude {
            continue;
        }
        match worst {
            Some(w) if v > values[w] => {}
            _ => worst = Some(i),
        }
    }
    worst.expect("population has at least two members")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationConfig {
    /// Weights with `|Σ dW| < epsilon` over an epoch are pruned.
    pub epsilon: f64,
    /// Pruning fires only at the ends of the first `active_epochs` epochs.
    pub active_epochs: usize,
    /// Optional sparsity floor reached linearly over the active epochs by
    /// additionally pruning the smallest-|Σ dW| survivors. Zero disables it.
    pub target_sparsity: f64,
}

impl Default for DissipationConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            active_epochs: 2,
            target_sparsity: 0.0,
        }
    }
}

impl DissipationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.active_epochs == 0 {
            return Err(Error::Config("active_epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.target_sparsity) {
            return Err(Error::Config(format!(
                "target sparsity must be in [0,1], got {}",
                self.target_sparsity
            )));
        }
        Ok(())
    }
}

/// Per-epoch gradient accumulators and the masks pruned so far.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationState {
    config: DissipationConfig,
    accumulated: Vec<Matrix>,
    masks: Vec<SparseMask>,
    epochs_completed: usize,
}

impl DissipationState {
    pub fn new(shapes: &[(usize, usize)], config: DissipationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            accumulated: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            masks: shapes.iter().map(|&(r, c)| SparseMask::ones(r, c)).collect(),
            epochs_completed: 0,
        })
    }

    pub fn config(&self) -> &DissipationConfig {
        &self.config
    }

    pub fn accumulated(&self) -> &[Matrix] {
        &self.accumulated
    }

    pub fn masks(&self) -> &[SparseMask] {
        &self.masks
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    /// True while epoch boundaries still prune.
    pub fn is_active(&self) -> bool {
        self.epochs_completed < self.config.active_epochs
    }

    /// `accumulated += dW` for every layer.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.accumulated.len() {
            return Err(Error::InvalidValue(format!(
                "{} gradient layers for {} accumulators",
                grads.layers.len(),
                self.accumulated.len()
            )));
        }
        for (i, (acc, g)) in self.accumulated.iter_mut().zip(&grads.layers).enumerate() {
            acc.add_assign(&g.weights).map_err(|e| e.in_layer(i))?;
        }
        Ok(())
    }

    /// Closes the current epoch. Within the active window the masks shrink to
    /// exclude every weight with `|accumulated| < epsilon`; the accumulators
    /// are reset either way. Returns true if pruning ran.
    pub fn end_epoch(&mut self) -> bool {
        let fired = self.is_active();
        self.epochs_completed += 1;
        if fired {
            let floor = self.config.target_sparsity * self.epochs_completed as f64
                / self.config.active_epochs as f64;
            for (mask, acc) in self.masks.iter_mut().zip(&self.accumulated) {
                *mask = prune_mask(mask, acc, self.config.epsilon, floor);
            }
        }
        for acc in &mut self.accumulated {
            *acc = Matrix::zeros(acc.rows(), acc.cols());
        }
        fired
    }
}

/// `previous ∧ (|acc| >= epsilon)`, then further zeroes the smallest-|acc|
/// survivors until the zero fraction reaches `floor`.
fn prune_mask(previous: &SparseMask, acc: &Matrix, epsilon: f64, floor: f64) -> SparseMask {
    let mut bits: Vec<f64> = previous
        .bits()
        .data()
        .iter()
        .zip(acc.data())
        .map(|(&b, a)| if a.abs() < epsilon { 0.0 } else { b })
        .collect();
    let n = bits.len();
    let required = (floor * n as f64).ceil() as usize;
    let zeros = bits.iter().filter(|&&b| b == 0.0).count();
    if required > zeros {
        let mut survivors: Vec<usize> = (0..n).filter(|&i| bits[i] != 0.0).collect();
        survivors.sort_by(|&a, &b| acc.data()[a].abs().total_cmp(&acc.data()[b].abs()).then(a.cmp(&b)));
        for &i in survivors.iter().take(required - zeros) {
            bits[i] = 0.0;
        }
    }
    let matrix = Matrix::from_vec(acc.rows(), acc.cols(), bits).expect("same size");
    SparseMask::from_bits(matrix).expect("binary entries")
}

/// Strategy selector used by the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    None,
    Random,
    KStarts,
    Dissipating,
    Combination,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::None,
        StrategyKind::Random,
        StrategyKind::KStarts,
        StrategyKind::Dissipating,
        StrategyKind::Combination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::Random => "random",
            StrategyKind::KStarts => "kstarts",
            StrategyKind::Dissipating => "dissipating",
            StrategyKind::Combination => "combination",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?} (expected none, random, kstarts, dissipating or combination)"
                ))
            })
    }
}

/// Live strategy state for one trial.
#[derive(Debug, Clone)]
pub enum Pruner {
    None,
    Random(Vec<SparseMask>),
    KStarts(KStartsState),
    Dissipating(DissipationState),
    Combination {
        kstarts: KStartsState,
        dissipation: DissipationState,
    },
}

impl Pruner {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Pruner::None => StrategyKind::None,
            Pruner::Random(_) => StrategyKind::Random,
            Pruner::KStarts(_) => StrategyKind::KStarts,
            Pruner::Dissipating(_) => StrategyKind::Dissipating,
            Pruner::Combination { .. } => StrategyKind::Combination,
        }
    }

    /// Applies the starting masks before the first iteration.
    pub fn initialize(&mut self, layers: &mut [LayerParams], adam: &mut AdamState) -> Result<()> {
        match self {
            Pruner::None | Pruner::Dissipating(_) => Ok(()),
            Pruner::Random(masks) => adam.apply_masks(layers, masks),
            Pruner::KStarts(k) => {
                let masks: Vec<SparseMask> = k.select_initial(layers)?.into_iter().cloned().collect();
                adam.apply_masks(layers, &masks)
            }
            Pruner::Combination { kstarts, .. } => {
                let masks: Vec<SparseMask> =
                    kstarts.select_initial(layers)?.into_iter().cloned().collect();
                adam.apply_masks(layers, &masks)
            }
        }
    }

    /// Sees the raw gradient of the current iteration before the step.
    pub fn observe_gradients(&mut self, grads: &Gradients) -> Result<()> {
        match self {
            Pruner::None | Pruner::Random(_) => Ok(()),
            Pruner::KStarts(k) => k.observe_gradients(grads),
            Pruner::Dissipating(d) => d.accumulate(grads),
            Pruner::Combination {
                kstarts,
                dissipation,
            } => {
                kstarts.observe_gradients(grads)?;
                dissipation.accumulate(grads)
            }
        }
    }

    /// Runs after optimizer step `iteration` (1-based) and projects the
    /// weights onto the strategy's current masks. `epoch_end` marks the last
    /// step of an epoch.
    pub fn after_step(
        &mut self,
        layers: &mut [LayerParams],
        adam: &mut AdamState,
        iteration: u64,
        epoch_end: bool,
    ) -> Result<()> {
        match self {
            Pruner::None => Ok(()),
            Pruner::Random(masks) => adam.apply_masks(layers, masks),
            Pruner::KStarts(k) => {
                let masks: Vec<SparseMask> = k.select(layers, iteration)?.into_iter().cloned().collect();
                adam.apply_masks(layers, &masks)
            }
            Pruner::Dissipating(d) => {
                if epoch_end {
                    d.end_epoch();
                }
                adam.apply_masks(layers, d.masks())
            }
            Pruner::Combination {
                kstarts,
                dissipation,
            } => {
                if epoch_end {
                    dissipation.end_epoch();
                }
                let chosen = kstarts.select(layers, iteration)?;
                let masks = chosen
                    .into_iter()
                    .zip(dissipation.masks())
                    .map(|(k, d)| k.intersect(d))
                    .collect::<Result<Vec<_>>>()?;
                adam.apply_masks(layers, &masks)
            }
        }
    }

    /// The masks in force right now, if the strategy prunes at all.
    pub fn effective_masks(&self, shapes: &[(usize, usize)]) -> Vec<SparseMask> {
        match self {
            Pruner::None => shapes.iter().map(|&(r, c)| SparseMask::ones(r, c)).collect(),
            Pruner::Random(m) => m.clone(),
            Pruner::KStarts(k) => k.current_masks_owned(),
            Pruner::Dissipating(d) => d.masks().to_vec(),
            Pruner::Combination {
                kstarts,
                dissipation,
            } => kstarts
                .current_masks()
                .into_iter()
                .zip(dissipation.masks())
                .map(|(k, d)| k.intersect(d).expect("congruent masks"))
                .collect(),
        }
    }
}
