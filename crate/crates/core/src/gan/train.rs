use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{make_noise_batch, Dataset, FeatureStats, Task};
use super::loss::{discriminator_input, discriminator_loss, generator_loss, probe_violations, LossSettings};
use crate::arbitrage::{ArbitrageReport, PenaltyWeights};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::metrics::mae_mape;
use crate::nn::{Activation, Adam, AdamConfig, InputScaler, LayerSpec, MlpNetwork};

/// Hyper-parameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    /// Hidden layers of the GAN generator (1 or 2).
    pub generator_depth: usize,
    pub hidden_width: usize,
    pub discriminator_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub weights: PenaltyWeights,
    pub seed: u64,
    pub probe_step: f64,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    pub softplus_beta: f64,
    pub batchnorm: bool,
    pub constraints_enabled: bool,
    pub mse_enabled: bool,
    /// Deep ReLU regressor without discriminator.
    pub baseline_mode: bool,
    pub baseline_depth: usize,
    pub baseline_width: usize,
    /// Run a full epoch of discriminator updates before each generator epoch.
    pub d_epochs_first: bool,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Implied,
            generator_depth: 2,
            hidden_width: 100,
            discriminator_width: 100,
            epochs: 50,
            batch_size: 128,
            weights: PenaltyWeights { lambda1: 1.0, lambda2: 1.0, lambda3: 1e-6, lambda4: 1e-4 },
            seed: 0,
            probe_step: 1e-3,
            generator_adam: AdamConfig::default(),
            discriminator_adam: AdamConfig::default(),
            softplus_beta: 1.0,
            batchnorm: false,
            constraints_enabled: true,
            mse_enabled: true,
            baseline_mode: false,
            baseline_depth: 4,
            baseline_width: 400,
            d_epochs_first: false,
            validation_fraction: 0.15,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "task",
    "generator_depth",
    "hidden_width",
    "discriminator_width",
    "epochs",
    "batch_size",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "seed",
    "probe_step",
    "learning_rate",
    "discriminator_learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "softplus_beta",
    "batchnorm",
    "constraints_enabled",
    "mse_enabled",
    "baseline_mode",
    "baseline_depth",
    "baseline_width",
    "d_epochs_first",
    "validation_fraction",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.generator_depth) {
            return Err(Error::Config(format!("generator_depth = {} (expected 1 or 2)", self.generator_depth)));
        }
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::Config("need epochs >= 1 and batch_size >= 2".into()));
        }
        if self.hidden_width == 0 || self.discriminator_width == 0 || self.baseline_width == 0 || self.baseline_depth == 0
        {
            return Err(Error::Config("layer widths and depths must be positive".into()));
        }
        if !(self.probe_step > 0.0 && self.probe_step < 0.1) {
            return Err(Error::Config(format!("probe_step = {} outside (0, 0.1)", self.probe_step)));
        }
        if !(self.softplus_beta > 0.0 && self.softplus_beta.is_finite()) {
            return Err(Error::Config(format!("softplus_beta = {} must be positive", self.softplus_beta)));
        }
        if !(0.0..0.9).contains(&self.validation_fraction) {
            return Err(Error::Config(format!("validation_fraction = {} outside [0, 0.9)", self.validation_fraction)));
        }
        self.weights.validate(self.constraints_enabled)?;
        self.generator_adam.validate()?;
        self.discriminator_adam.validate()
    }

    /// Reads a `key = value` file; absent keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let m = KvMap::parse(text)?;
        m.check_known(CONFIG_KEYS)?;
        let d = Self::default();
        let lr = m.get_or("learning_rate", d.generator_adam.lr)?;
        let adam = AdamConfig {
            lr,
            beta1: m.get_or("adam_beta1", d.generator_adam.beta1)?,
            beta2: m.get_or("adam_beta2", d.generator_adam.beta2)?,
            eps: m.get_or("adam_eps", d.generator_adam.eps)?,
        };
        let cfg = Self {
            task: m.get_or("task", d.task)?,
            generator_depth: m.get_or("generator_depth", d.generator_depth)?,
            hidden_width: m.get_or("hidden_width", d.hidden_width)?,
            discriminator_width: m.get_or("discriminator_width", d.discriminator_width)?,
            epochs: m.get_or("epochs", d.epochs)?,
            batch_size: m.get_or("batch_size", d.batch_size)?,
            weights: PenaltyWeights {
                lambda1: m.get_or("lambda1", d.weights.lambda1)?,
                lambda2: m.get_or("lambda2", d.weights.lambda2)?,
                lambda3: m.get_or("lambda3", d.weights.lambda3)?,
                lambda4: m.get_or("lambda4", d.weights.lambda4)?,
            },
            seed: m.get_or("seed", d.seed)?,
            probe_step: m.get_or("probe_step", d.probe_step)?,
            generator_adam: adam,
            discriminator_adam: AdamConfig { lr: m.get_or("discriminator_learning_rate", lr)?, ..adam },
            softplus_beta: m.get_or("softplus_beta", d.softplus_beta)?,
            batchnorm: m.get_or("batchnorm", d.batchnorm)?,
            constraints_enabled: m.get_or("constraints_enabled", d.constraints_enabled)?,
            mse_enabled: m.get_or("mse_enabled", d.mse_enabled)?,
            baseline_mode: m.get_or("baseline_mode", d.baseline_mode)?,
            baseline_depth: m.get_or("baseline_depth", d.baseline_depth)?,
            baseline_width: m.get_or("baseline_width", d.baseline_width)?,
            d_epochs_first: m.get_or("d_epochs_first", d.d_epochs_first)?,
            validation_fraction: m.get_or("validation_fraction", d.validation_fraction)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its current value, readable by [`Self::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("task", self.task.to_string());
        put("generator_depth", self.generator_depth.to_string());
        put("hidden_width", self.hidden_width.to_string());
        put("discriminator_width", self.discriminator_width.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lambda1", self.weights.lambda1.to_string());
        put("lambda2", self.weights.lambda2.to_string());
        put("lambda3", self.weights.lambda3.to_string());
        put("lambda4", self.weights.lambda4.to_string());
        put("seed", self.seed.to_string());
        put("probe_step", self.probe_step.to_string());
        put("learning_rate", self.generator_adam.lr.to_string());
        put("discriminator_learning_rate", self.discriminator_adam.lr.to_string());
        put("adam_beta1", self.generator_adam.beta1.to_string());
        put("adam_beta2", self.generator_adam.beta2.to_string());
        put("adam_eps", self.generator_adam.eps.to_string());
        put("softplus_beta", self.softplus_beta.to_string());
        put("batchnorm", self.batchnorm.to_string());
        put("constraints_enabled", self.constraints_enabled.to_string());
        put("mse_enabled", self.mse_enabled.to_string());
        put("baseline_mode", self.baseline_mode.to_string());
        put("baseline_depth", self.baseline_depth.to_string());
        put("baseline_width", self.baseline_width.to_string());
        put("d_epochs_first", self.d_epochs_first.to_string());
        put("validation_fraction", self.validation_fraction.to_string());
        s
    }

    pub fn loss_settings(&self) -> LossSettings {
        let mut weights = self.weights;
        if self.baseline_mode {
            weights.lambda4 = 0.0;
        }
        LossSettings {
            weights,
            probe_step: self.probe_step,
            mse_enabled: self.mse_enabled,
            constraints_enabled: self.constraints_enabled,
        }
    }
}

/// Untrained generator for `cfg`, scalar output through a softplus.
pub fn build_generator(cfg: &TrainConfig, seed: u64) -> Result<MlpNetwork> {
    let softplus = Activation::Softplus { beta: cfg.softplus_beta };
    let mut specs: Vec<LayerSpec> = if cfg.baseline_mode {
        (0..cfg.baseline_depth)
            .map(|_| LayerSpec { width: cfg.baseline_width, activation: Activation::Relu, batchnorm: false })
            .collect()
    } else {
        (0..cfg.generator_depth)
            .map(|_| LayerSpec { width: cfg.hidden_width, activation: softplus, batchnorm: cfg.batchnorm })
            .collect()
    };
    specs.push(LayerSpec { width: 1, activation: softplus, batchnorm: false });
    MlpNetwork::new(cfg.task.layout().dim, &specs, seed)
}

/// Untrained discriminator on features plus one volatility column.
pub fn build_discriminator(cfg: &TrainConfig, seed: u64) -> Result<MlpNetwork> {
    let specs = [
        LayerSpec {
            width: cfg.discriminator_width,
            activation: Activation::Softplus { beta: cfg.softplus_beta },
            batchnorm: cfg.batchnorm,
        },
        LayerSpec { width: 1, activation: Activation::Sigmoid, batchnorm: false },
    ];
    MlpNetwork::new(cfg.task.layout().dim + 1, &specs, seed)
}

/// Batch-averaged losses and validation error of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub generator_loss: f64,
    pub mse: f64,
    pub calendar: f64,
    pub butterfly: f64,
    pub large_moneyness: f64,
    pub adversarial: f64,
    /// `None` in baseline mode.
    pub discriminator_loss: Option<f64>,
    pub val_mae: f64,
    pub val_mape: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs: Vec<EpochStats>,
    pub train_mae: f64,
    pub train_mape: f64,
    pub val_mae: f64,
    pub val_mape: f64,
    /// Probe-based violation counts at the training rows.
    pub train_violations: ArbitrageReport,
    /// Probe-based violation counts at the validation rows.
    pub validation_violations: ArbitrageReport,
    /// Grid audit of an out-of-sample surface, when the caller supplies one.
    pub test_audit: Option<ArbitrageReport>,
    /// Probe points skipped because `ω ≤ 0`, summed over all generator steps.
    pub skipped_butterfly: usize,
    pub wall_clock_seconds: f64,
}

/// Trained networks together with their report.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: MlpNetwork,
    pub discriminator: Option<MlpNetwork>,
    pub feature_stats: FeatureStats,
    pub report: TrainReport,
}

fn take_rows(x: &Array2<f64>, y: &Array1<f64>, idx: &[usize]) -> (Array2<f64>, Array1<f64>) {
    (x.select(Axis(0), idx), y.select(Axis(0), idx))
}

fn mae_mape_of(gen: &MlpNetwork, x: &Array2<f64>, y: &Array1<f64>) -> Result<(f64, f64)> {
    if x.nrows() == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    let pred = gen.predict(x)?;
    mae_mape(pred.column(0).as_slice().expect("column of a 1-wide matrix"), y.as_slice().expect("contiguous"))
}

/// Alternating discriminator/generator training.
///
/// Each batch first takes one discriminator step with the generator frozen and
/// then one generator step with the discriminator frozen (or, with
/// `d_epochs_first`, a whole epoch of discriminator steps precedes the
/// generator epoch). Deterministic for a given seed.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.task != cfg.task {
        return Err(Error::Config(format!("dataset task {} differs from config task {}", dataset.task, cfg.task)));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_ds, val_ds) = dataset.split(cfg.validation_fraction, rng.next_u64())?;
    if train_ds.len() < 2 {
        return Err(Error::InvalidInput(format!("training split has {} rows", train_ds.len())));
    }
    let (x, y) = (train_ds.features()?, train_ds.targets());
    let (x_val, y_val) = (val_ds.features()?, val_ds.targets());
    let stats = FeatureStats::fit(&x)?;

    let mut gen = build_generator(cfg, rng.next_u64())?;
    gen.set_scaler(InputScaler::fit(&x)?)?;
    let disc_seed = rng.next_u64();
    let mut disc = if cfg.baseline_mode {
        None
    } else {
        let mut d = build_discriminator(cfg, disc_seed)?;
        d.set_scaler(InputScaler::fit(&discriminator_input(&x, &y.view())?)?)?;
        Some(d)
    };
    let mut adam_g = Adam::new(gen.param_count(), cfg.generator_adam);
    let mut adam_d = disc.as_ref().map(|d| Adam::new(d.param_count(), cfg.discriminator_adam));
    let settings = cfg.loss_settings();
    let use_noise = settings.weights.lambda4 > 0.0;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut skipped_total = 0;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).filter(|b| b.len() >= 2).collect();

        let mut d_sum = 0.0;
        let mut d_step = |disc: &mut MlpNetwork, adam: &mut Adam, gen: &MlpNetwork, idx: &[usize]| -> Result<()> {
            let (xb, yb) = take_rows(&x, &y, idx);
            let (loss, grads, cache) = discriminator_loss(gen, disc, cfg.task, &xb, &yb)?;
            d_sum += loss.total;
            disc.absorb_batch_stats(&cache)?;
            adam.step_network(disc, &grads)
        };
        if cfg.d_epochs_first {
            if let (Some(d), Some(a)) = (disc.as_mut(), adam_d.as_mut()) {
                for idx in &batches {
                    d_step(d, a, &gen, idx)?;
                }
            }
        }

        let mut sums = [0.0; 6];
        for (bi, idx) in batches.iter().enumerate() {
            if !cfg.d_epochs_first {
                if let (Some(d), Some(a)) = (disc.as_mut(), adam_d.as_mut()) {
                    d_step(d, a, &gen, idx)?;
                }
            }
            let (xb, yb) = take_rows(&x, &y, idx);
            let noise = if disc.is_some() && use_noise { Some(make_noise_batch(&stats, idx.len(), &mut rng)?) } else { None };
            let (loss, grads, cache) = generator_loss(&gen, disc.as_ref(), cfg.task, &xb, &yb, noise.as_ref(), &settings)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {bi}: {m}")),
                    other => other,
                })?;
            skipped_total += loss.skipped_butterfly;
            for (s, v) in sums
                .iter_mut()
                .zip([loss.total, loss.mse, loss.calendar, loss.butterfly, loss.large_moneyness, loss.adversarial])
            {
                *s += v;
            }
            gen.absorb_batch_stats(&cache)?;
            adam_g.step_network(&mut gen, &grads)?;
        }
        let nb = batches.len() as f64;
        let (val_mae, val_mape) = mae_mape_of(&gen, &x_val, &y_val)?;
        let stats = EpochStats {
            epoch,
            generator_loss: sums[0] / nb,
            mse: sums[1] / nb,
            calendar: sums[2] / nb,
            butterfly: sums[3] / nb,
            large_moneyness: sums[4] / nb,
            adversarial: sums[5] / nb,
            discriminator_loss: disc.as_ref().map(|_| d_sum / nb),
            val_mae,
            val_mape,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: L_G {:.4e} (mse {:.4e}) L_D {:?} val MAE {:.4e} MAPE {:.4e}",
            stats.generator_loss,
            stats.mse,
            stats.discriminator_loss,
            val_mae,
            val_mape
        );
        epochs.push(stats);
    }

    let (train_mae, train_mape) = mae_mape_of(&gen, &x, &y)?;
    let (val_mae, val_mape) = mae_mape_of(&gen, &x_val, &y_val)?;
    let train_violations = probe_violations(&gen, cfg.task, &x, cfg.probe_step)?;
    let validation_violations = probe_violations(&gen, cfg.task, &x_val, cfg.probe_step)?;
    let report = TrainReport {
        config: cfg.clone(),
        n_train: x.nrows(),
        n_validation: x_val.nrows(),
        epochs,
        train_mae,
        train_mape,
        val_mae,
        val_mape,
        train_violations,
        validation_violations,
        test_audit: None,
        skipped_butterfly: skipped_total,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { generator: gen, discriminator: disc, feature_stats: stats, report })
}
