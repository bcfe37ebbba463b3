//! Arbitrage-penalised GAN for implied and local volatility surfaces.
//!
//! The generator maps option features to a volatility; its loss combines the
//! regression error, finite-difference arbitrage penalties on `ω = G²·T` and an
//! adversarial term from a discriminator that sees features plus volatility.

mod features;
mod loss;
mod surface;
mod train;

pub use features::{
    adjusted_log_moneyness, make_noise_batch, Dataset, FeatureLayout, FeatureRow, FeatureStats, Task, NOISE_STD_FLOOR,
};
pub use loss::{
    discriminator_input, discriminator_loss, generator_loss, probe_violations, DiscriminatorLoss, GeneratorLoss,
    LossCoefficients, LossSettings, D_CLAMP,
};
pub use surface::{generate_surface, AtmCurve, SurfaceContext};
pub use train::{build_discriminator, build_generator, train, EpochStats, TrainConfig, TrainOutcome, TrainReport};
