pub mod arbitrage;
pub mod blackscholes;
pub mod datagen;
pub mod error;
pub mod gan;
pub mod heston;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod ssvi;
pub mod surfaces;

pub use error::{Error, Result};
