//! Finite-difference checks of the generator and discriminator objectives,
//! shared by the gan integration tests and the acceptance suite.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volgan::gan::{
    build_discriminator, build_generator, discriminator_loss, generator_loss, make_noise_batch, Dataset, FeatureRow,
    FeatureStats, LossSettings, Task, TrainConfig,
};
use volgan::nn::{InputScaler, MlpNetwork};

/// Parameter step for plain network losses.
pub const FD_STEP: f64 = 1e-5;
/// Parameter step for objectives containing the probed penalties. Their second
/// differences in k divide round-off by h² = 1e-6, which a 1e-5 step cannot
/// resolve, so these checks use a wider step with Richardson extrapolation.
pub const FD_STEP_COMPOSITE: f64 = 3e-4;
/// Fallback step for the ReLU baseline's composite objective when a kink lies
/// within [`FD_STEP`] of the checked point.
pub const FD_STEP_NARROW: f64 = 1e-6;
/// Default spread of the uniform parameter jitter applied to fresh networks.
pub const JITTER: f64 = 0.05;

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Rows spread over the training domain with a smile-shaped target.
pub fn toy_dataset(task: Task, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let k = rng.random_range(0.6..1.8);
            let t = rng.random_range(0.3..2.0);
            let r = rng.random_range(0.0..0.05);
            let atm = rng.random_range(0.15..0.45);
            let iv = atm + 0.1 * (k - 1.0f64).powi(2);
            let (sigma_implied, target) = match task {
                Task::Implied => (None, iv),
                Task::Local => (Some(iv), 0.9 * iv + 0.02 * t),
            };
            FeatureRow::new(i % 3, k, atm, t, r, sigma_implied, target).unwrap()
        })
        .collect();
    Dataset::new(task, rows).unwrap()
}

/// Shifts every parameter by a uniform draw so that biases and affine
/// batch-norm terms are not at their initial values.
pub fn jitter(net: &mut MlpNetwork, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = net.flat_params().iter().map(|v| v + rng.random_range(-scale..scale)).collect();
    net.set_flat_params(&p).unwrap();
}

/// Generator and discriminator for `cfg`, with input scalers fitted on `x`.
pub fn networks(cfg: &TrainConfig, x: &Array2<f64>, y: &Array1<f64>, seed: u64) -> (MlpNetwork, MlpNetwork) {
    networks_jittered(cfg, x, y, seed, JITTER)
}

/// As [`networks`], with the generator jittered by `gen_jitter` instead of [`JITTER`].
pub fn networks_jittered(
    cfg: &TrainConfig,
    x: &Array2<f64>,
    y: &Array1<f64>,
    seed: u64,
    gen_jitter: f64,
) -> (MlpNetwork, MlpNetwork) {
    let mut gen = build_generator(cfg, seed).unwrap();
    gen.set_scaler(InputScaler::fit(x).unwrap()).unwrap();
    jitter(&mut gen, gen_jitter, seed + 1);
    let mut disc = build_discriminator(cfg, seed + 2).unwrap();
    let d_in = volgan::gan::discriminator_input(x, &y.view()).unwrap();
    disc.set_scaler(InputScaler::fit(&d_in).unwrap()).unwrap();
    jitter(&mut disc, JITTER, seed + 3);
    (gen, disc)
}

/// Indices of at most `max` parameters, evenly strided over the flat vector.
pub fn param_subset(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let stride = n as f64 / max as f64;
    (0..max).map(|i| (i as f64 * stride) as usize).collect()
}

/// How a finite-difference derivative is formed.
#[derive(Debug, Clone, Copy)]
pub enum Scheme {
    /// Plain central difference.
    Central(f64),
    /// Richardson extrapolation from steps `h` and `2h`.
    Richardson(f64),
    /// Central differences at `wide` and `narrow`. The wide one is used unless
    /// the two disagree by more than 1%, which in a piecewise-smooth loss means
    /// the wide step crossed a kink.
    KinkAware { wide: f64, narrow: f64 },
}

/// Finite differences of `loss` with respect to the listed parameters of `net`.
///
/// The floor of the relative error is `floor_frac` times the largest analytic
/// gradient magnitude among the checked entries.
pub fn check_params(
    net: &MlpNetwork,
    analytic: &[f64],
    idx: &[usize],
    floor_frac: f64,
    scheme: Scheme,
    loss: impl Fn(&MlpNetwork) -> f64,
) -> GradCheck {
    let base = net.flat_params();
    let scale = idx.iter().map(|&i| analytic[i].abs()).fold(0.0, f64::max);
    let floor = (floor_frac * scale).max(1e-12);
    let mut probe = net.clone();
    let mut max_rel: f64 = 0.0;
    let mut central = |i: usize, h: f64| {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat_params(&p).unwrap();
        let up = loss(&probe);
        p[i] = base[i] - h;
        probe.set_flat_params(&p).unwrap();
        (up - loss(&probe)) / (2.0 * h)
    };
    for &i in idx {
        let fd = match scheme {
            Scheme::Central(h) => central(i, h),
            Scheme::Richardson(h) => (4.0 * central(i, h) - central(i, 2.0 * h)) / 3.0,
            Scheme::KinkAware { wide, narrow } => {
                let (w, n) = (central(i, wide), central(i, narrow));
                if rel_err(w, n, floor) > 1e-2 {
                    n
                } else {
                    w
                }
            }
        };
        let e = rel_err(analytic[i], fd, floor);
        if e > 1e-4 && std::env::var("GRADCHECK_DEBUG").is_ok() {
            eprintln!("param {i}: analytic {} fd {fd} (floor {floor})", analytic[i]);
        }
        max_rel = max_rel.max(e);
    }
    GradCheck { max_rel, checked: idx.len() }
}

/// Loss settings with every term switched on at unit-scale weights, so the
/// penalty gradients are not drowned by the MSE.
pub fn composite_settings(cfg: &TrainConfig) -> LossSettings {
    let mut s = cfg.loss_settings();
    s.weights.lambda1 = 1.0;
    s.weights.lambda2 = 1.0;
    s.weights.lambda3 = 1e-3;
    if !cfg.baseline_mode {
        s.weights.lambda4 = 0.5;
    }
    s.constraints_enabled = true;
    s.mse_enabled = true;
    s
}

pub fn mse_only(cfg: &TrainConfig) -> LossSettings {
    let mut s = cfg.loss_settings();
    s.mse_enabled = true;
    s.constraints_enabled = false;
    s.weights.lambda4 = 0.0;
    s
}

/// Which penalty terms were active at the checked point.
#[derive(Debug, Clone, Copy)]
pub struct ActiveTerms {
    pub calendar: bool,
    pub butterfly: bool,
    pub adversarial: bool,
}

/// Finite-difference check of the generator objective under `settings`.
///
/// With `with_disc` the adversarial term runs on a fixed noise batch.
pub fn generator_check(
    cfg: &TrainConfig,
    settings: &LossSettings,
    rows: usize,
    max_params: usize,
    floor_frac: f64,
    seed: u64,
) -> (GradCheck, ActiveTerms) {
    generator_check_jittered(cfg, settings, rows, max_params, floor_frac, seed, JITTER)
}

/// As [`generator_check`], starting from a generator jittered by `gen_jitter`.
/// Larger jitter bends the random surface enough to trigger the arbitrage penalties.
pub fn generator_check_jittered(
    cfg: &TrainConfig,
    settings: &LossSettings,
    rows: usize,
    max_params: usize,
    floor_frac: f64,
    seed: u64,
    gen_jitter: f64,
) -> (GradCheck, ActiveTerms) {
    let ds = toy_dataset(cfg.task, rows, seed);
    let (x, y) = (ds.features().unwrap(), ds.targets());
    let (gen, disc) = networks_jittered(cfg, &x, &y, seed + 10, gen_jitter);
    let with_disc = !cfg.baseline_mode && settings.weights.lambda4 != 0.0;
    let stats = FeatureStats::fit(&x).unwrap();
    let noise = make_noise_batch(&stats, rows, &mut ChaCha8Rng::seed_from_u64(seed + 20)).unwrap();
    let (d, z) = if with_disc { (Some(&disc), Some(&noise)) } else { (None, None) };
    let (loss, grads, _) = generator_loss(&gen, d, cfg.task, &x, &y, z, settings).unwrap();
    let analytic = grads.to_flat();
    let idx = param_subset(analytic.len(), max_params);
    let composite = settings.constraints_enabled && (settings.weights.lambda1, settings.weights.lambda2, settings.weights.lambda3) != (0.0, 0.0, 0.0);
    // ReLU layers put kinks in the loss wherever a pre-activation of any probe row
    // crosses zero. A wide Richardson step would cross many of them, so the
    // baseline uses the kink-aware pair of narrow steps instead.
    let scheme = match (composite, cfg.baseline_mode) {
        (true, true) => Scheme::KinkAware { wide: FD_STEP, narrow: FD_STEP_NARROW },
        (true, false) => Scheme::Richardson(FD_STEP_COMPOSITE),
        (false, _) => Scheme::Central(FD_STEP),
    };
    let check = check_params(&gen, &analytic, &idx, floor_frac, scheme, |g| {
        generator_loss(g, d, cfg.task, &x, &y, z, settings).unwrap().0.total
    });
    let active = ActiveTerms {
        calendar: loss.calendar > 0.0,
        butterfly: loss.butterfly > 0.0,
        adversarial: with_disc && loss.adversarial > 0.0,
    };
    (check, active)
}

/// Finite-difference check of the discriminator BCE with respect to its parameters.
pub fn discriminator_check(cfg: &TrainConfig, rows: usize, floor_frac: f64, seed: u64) -> GradCheck {
    let ds = toy_dataset(cfg.task, rows, seed);
    let (x, y) = (ds.features().unwrap(), ds.targets());
    let (gen, disc) = networks(cfg, &x, &y, seed + 10);
    let (_, grads, _) = discriminator_loss(&gen, &disc, cfg.task, &x, &y).unwrap();
    let analytic = grads.to_flat();
    let idx = param_subset(analytic.len(), usize::MAX);
    check_params(&disc, &analytic, &idx, floor_frac, Scheme::Central(FD_STEP), |d| {
        discriminator_loss(&gen, d, cfg.task, &x, &y).unwrap().0.total
    })
}

pub fn gan_config(depth: usize) -> TrainConfig {
    TrainConfig { generator_depth: depth, ..TrainConfig::default() }
}

pub fn baseline_config() -> TrainConfig {
    TrainConfig { baseline_mode: true, ..TrainConfig::default() }
}
