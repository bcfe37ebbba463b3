use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise nonlinearity applied after the (optional) batch normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    /// `ln(1 + e^{βx}) / β`.
    Softplus { beta: f64 },
    Sigmoid,
    Relu,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Softplus { beta } => {
                let bx = beta * x;
                (bx.max(0.0) + (-bx.abs()).exp().ln_1p()) / beta
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at pre-activation `x`, given the already computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus { beta } => sigmoid(beta * x),
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::Softplus { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Config(format!("softplus beta = {beta} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Train mode normalises with batch statistics; eval mode with running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalisation `γ·(z − μ)/sqrt(σ² + ε) + η` with running statistics for eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    /// Weight kept on the old running statistics at each update.
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.9,
            eps: 1e-5,
        }
    }
}

/// A dense layer `act(bn(x·W + b))`; the bias exists only when batch norm is absent,
/// since the normalisation would cancel it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in × out`.
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub batchnorm: Option<BatchNorm>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn param_count(&self) -> usize {
        self.weights.len()
            + self.bias.as_ref().map_or(0, |b| b.len())
            + self.batchnorm.as_ref().map_or(0, |bn| 2 * bn.gamma.len())
    }
}

/// Blueprint of one layer for [`MlpNetwork::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub batchnorm: bool,
}

/// Fixed per-feature standardisation applied to network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl InputScaler {
    pub fn identity(dim: usize) -> Self {
        Self { mean: Array1::zeros(dim), std: Array1::ones(dim) }
    }

    /// Column means and (population) standard deviations; near-constant columns get unit scale.
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Shape("cannot fit a scaler on zero rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Ok(Self { mean, std })
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }
}

/// Per-layer intermediate values of a forward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Batch-normalised values before `γ`, `η` (if batch norm is present).
    normalized: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    /// Input of the activation.
    pre_activation: Array2<f64>,
    output: Array2<f64>,
}

/// Everything [`MlpNetwork::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    mode: Mode,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("network has layers").output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradients for every trainable parameter, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Option<Array1<f64>>>,
    pub gamma: Vec<Option<Array1<f64>>>,
    pub shift: Vec<Option<Array1<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            bias: net.layers.iter().map(|l| l.bias.as_ref().map(|b| Array1::zeros(b.len()))).collect(),
            gamma: net.layers.iter().map(|l| l.batchnorm.as_ref().map(|bn| Array1::zeros(bn.gamma.len()))).collect(),
            shift: net.layers.iter().map(|l| l.batchnorm.as_ref().map(|bn| Array1::zeros(bn.shift.len()))).collect(),
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for group in [(&mut self.bias, &other.bias), (&mut self.gamma, &other.gamma), (&mut self.shift, &other.shift)] {
            for (a, b) in group.0.iter_mut().zip(group.1) {
                if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                    a.scaled_add(scale, b);
                }
            }
        }
    }

    /// Flattened in the same order as [`MlpNetwork::flat_params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend(self.weights[l].iter());
            if let Some(b) = &self.bias[l] {
                out.extend(b.iter());
            }
            if let (Some(g), Some(s)) = (&self.gamma[l], &self.shift[l]) {
                out.extend(g.iter());
                out.extend(s.iter());
            }
        }
        out
    }
}

/// Dense feed-forward network with a fixed input standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
    pub scaler: InputScaler,
    /// Bumped on every parameter change so stale caches are detected.
    #[serde(skip)]
    generation: u64,
}

impl MlpNetwork {
    /// Glorot-uniform weights from a seeded generator; γ = 1, η = 0, biases 0.
    pub fn new(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if input_dim == 0 || specs.is_empty() || specs.iter().any(|s| s.width == 0) {
            return Err(Error::Config("network needs a positive input size and non-empty layers".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for spec in specs {
            spec.activation.validate()?;
            let limit = (6.0 / (fan_in + spec.width) as f64).sqrt();
            let weights = Array2::from_shape_fn((fan_in, spec.width), |_| rng.random_range(-limit..limit));
            layers.push(Layer {
                weights,
                bias: (!spec.batchnorm).then(|| Array1::zeros(spec.width)),
                batchnorm: spec.batchnorm.then(|| BatchNorm::new(spec.width)),
                activation: spec.activation,
            });
            fan_in = spec.width;
        }
        Ok(Self { layers, scaler: InputScaler::identity(input_dim), generation: 0 })
    }

    /// Assembles a network from explicit layers; checks dimensions.
    pub fn from_layers(layers: Vec<Layer>, scaler: InputScaler) -> Result<Self> {
        let net = Self { layers, scaler, generation: 0 };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.layers.first().ok_or_else(|| Error::Config("network has no layers".into()))?;
        if self.scaler.mean.len() != first.input_dim() || self.scaler.std.len() != first.input_dim() {
            return Err(Error::Shape("input scaler does not match the first layer".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer widths {} and {} are incompatible",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        for layer in &self.layers {
            layer.activation.validate()?;
            if layer.bias.as_ref().is_some_and(|b| b.len() != layer.output_dim()) {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
            if let Some(bn) = &layer.batchnorm {
                let w = layer.output_dim();
                if [bn.gamma.len(), bn.shift.len(), bn.running_mean.len(), bn.running_var.len()].iter().any(|&n| n != w) {
                    return Err(Error::Shape("batch-norm vectors differ from layer width".into()));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("validated").output_dim()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| l.batchnorm.is_some())
    }

    pub fn set_scaler(&mut self, scaler: InputScaler) -> Result<()> {
        if scaler.mean.len() != self.input_dim() || scaler.std.len() != self.input_dim() {
            return Err(Error::Shape("scaler dimension differs from network input".into()));
        }
        self.scaler = scaler;
        self.generation += 1;
        Ok(())
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Forward pass returning the output and the cache for [`Self::backward`].
    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("batch has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        if mode == Mode::Train && self.has_batchnorm() && x.nrows() < 2 {
            return Err(Error::Shape("train-mode batch norm needs at least 2 rows".into()));
        }
        let mut current = self.scaler.apply(x);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = current.dot(&layer.weights);
            if let Some(b) = &layer.bias {
                z += b;
            }
            let (mut normalized, mut inv_std, mut batch_mean, mut batch_var) = (None, None, None, None);
            let pre = if let Some(bn) = &layer.batchnorm {
                let (mean, var) = match mode {
                    Mode::Train => {
                        let mean = z.mean_axis(Axis(0)).expect("rows > 0");
                        let var = z.var_axis(Axis(0), 0.0);
                        (mean, var)
                    }
                    Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                };
                let istd = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                let xhat = (&z - &mean) * &istd;
                let pre = &xhat * &bn.gamma + &bn.shift;
                normalized = Some(xhat);
                inv_std = Some(istd);
                if mode == Mode::Train {
                    batch_mean = Some(mean);
                    batch_var = Some(var);
                }
                pre
            } else {
                z
            };
            let act = layer.activation;
            let out = pre.mapv(|v| act.apply(v));
            caches.push(LayerCache {
                input: current,
                normalized,
                inv_std,
                batch_mean,
                batch_var,
                pre_activation: pre,
                output: out.clone(),
            });
            current = out;
        }
        Ok((current, ForwardCache { generation: self.generation, mode, layers: caches }))
    }

    /// Eval-mode forward without keeping a cache.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    /// Reverse pass: gradients of a scalar loss with respect to every parameter and the
    /// raw (unscaled) input batch, given `∂loss/∂output`.
    ///
    /// In train mode the batch statistics are differentiated through; in eval mode
    /// the running statistics are constants.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(Error::State("forward cache was produced before the last parameter update".into()));
        }
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::Shape(format!("upstream {:?} vs output {:?}", upstream.dim(), out.dim())));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.clone();
        for (l, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let act = layer.activation;
            // ∂/∂pre-activation
            Zip::from(&mut delta)
                .and(&c.pre_activation)
                .and(&c.output)
                .for_each(|d, &x, &y| *d *= act.derivative(x, y));
            let dz = if let Some(bn) = &layer.batchnorm {
                let xhat = c.normalized.as_ref().expect("batch-norm cache");
                let istd = c.inv_std.as_ref().expect("batch-norm cache");
                grads.gamma[l] = Some((&delta * xhat).sum_axis(Axis(0)));
                grads.shift[l] = Some(delta.sum_axis(Axis(0)));
                let dxhat = &delta * &bn.gamma;
                match cache.mode {
                    Mode::Eval => dxhat * istd,
                    Mode::Train => {
                        let n = delta.nrows() as f64;
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        let centred = dxhat * n - &sum_dxhat - xhat * &sum_dxhat_xhat;
                        centred * &(istd / n)
                    }
                }
            } else {
                delta
            };
            if layer.bias.is_some() {
                grads.bias[l] = Some(dz.sum_axis(Axis(0)));
            }
            grads.weights[l] = c.input.t().dot(&dz);
            delta = dz.dot(&layer.weights.t());
        }
        let dx = delta / &self.scaler.std;
        Ok((grads, dx))
    }

    /// Folds the batch statistics of a train-mode pass into the running statistics.
    pub fn absorb_batch_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        if cache.mode != Mode::Train || cache.layers.len() != self.layers.len() {
            return Err(Error::State("running statistics need a train-mode cache of this network".into()));
        }
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(mean), Some(var)) = (layer.batchnorm.as_mut(), &c.batch_mean, &c.batch_var) {
                let m = bn.momentum;
                bn.running_mean = &bn.running_mean * m + mean * (1.0 - m);
                bn.running_var = &bn.running_var * m + var * (1.0 - m);
            }
        }
        self.generation += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All trainable parameters: per layer `W` (row-major), bias, γ, η.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            if let Some(b) = &layer.bias {
                out.extend(b.iter());
            }
            if let Some(bn) = &layer.batchnorm {
                out.extend(bn.gamma.iter());
                out.extend(bn.shift.iter());
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!("{} parameters given, network has {}", params.len(), self.param_count())));
        }
        let mut it = params.iter().copied();
        let mut fill = |dst: ndarray::ArrayViewMut1<f64>| {
            for v in dst {
                *v = it.next().expect("length checked");
            }
        };
        for layer in &mut self.layers {
            for row in layer.weights.rows_mut() {
                fill(row);
            }
            if let Some(b) = layer.bias.as_mut() {
                fill(b.view_mut());
            }
            if let Some(bn) = layer.batchnorm.as_mut() {
                fill(bn.gamma.view_mut());
                fill(bn.shift.view_mut());
            }
        }
        self.generation += 1;
        Ok(())
    }
}
