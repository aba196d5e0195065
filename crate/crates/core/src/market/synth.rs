//! Synthetic market generation.
//!
//! Prices follow a geometric random walk: each minute's log-return is a
//! deterministic drift given by the intraday shape plus Gaussian noise. The
//! noise scale is chosen so that the expected within-day standard deviation
//! of `p_t / p_mean` matches `daily_volatility_target`, after accounting for
//! the variance contributed by the drift path itself.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::bars::{AssetDay, TradingDayData};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntradayShape {
    /// No drift, flat mean volume.
    Flat,
    /// Prices drift from below the day mean early to above it by mid-day;
    /// mean volume stays flat.
    EarlyLowLateHigh,
    /// No price drift; volume follows a U-shaped curve.
    UShapeVolume,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticMarketConfig {
    pub n_assets: usize,
    pub days: usize,
    pub minutes_per_day: usize,
    pub base_price: f64,
    /// Target within-day std of p / p_mean, as a fraction (7.18e-3 = 7.18 per mille).
    pub daily_volatility_target: f64,
    /// Log-scale amplitude of the intraday drift pattern.
    pub momentum_strength: f64,
    pub intraday_shape: IntradayShape,
    pub rng_seed: u64,
    /// First calendar day of the generated series.
    pub start_date: NaiveDate,
    /// Mean day volume per asset, in shares.
    pub base_day_volume: f64,
}

impl Default for SyntheticMarketConfig {
    fn default() -> Self {
        SyntheticMarketConfig {
            n_assets: 4,
            days: 16,
            minutes_per_day: 240,
            base_price: 10.0,
            daily_volatility_target: 7.18e-3,
            momentum_strength: 0.0,
            intraday_shape: IntradayShape::Flat,
            rng_seed: 0,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            base_day_volume: 2.4e6,
        }
    }
}

impl SyntheticMarketConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.days == 0 {
            return Err(Error::validation("n_assets and days must be positive"));
        }
        if !(self.minutes_per_day == 240 || self.minutes_per_day == 390) {
            return Err(Error::validation(format!(
                "minutes_per_day must be 240 or 390, got {}",
                self.minutes_per_day
            )));
        }
        if !(self.daily_volatility_target > 0.0) {
            return Err(Error::validation("daily_volatility_target must be > 0"));
        }
        if !(self.base_price > 0.0) || !(self.base_day_volume > 0.0) {
            return Err(Error::validation("base_price and base_day_volume must be > 0"));
        }
        if self.momentum_strength < 0.0 {
            return Err(Error::validation("momentum_strength must be >= 0"));
        }
        Ok(())
    }

    /// A preset calibrated to the China A-share profile: 240-minute days,
    /// within-day volatility near 7.18 per mille, early-low-late-high drift.
    pub fn ch_profile(seed: u64) -> Self {
        SyntheticMarketConfig {
            n_assets: 4,
            days: 24,
            minutes_per_day: 240,
            base_price: 10.0,
            daily_volatility_target: 7.18e-3,
            momentum_strength: 8.0e-3,
            intraday_shape: IntradayShape::EarlyLowLateHigh,
            rng_seed: seed,
            ..SyntheticMarketConfig::default()
        }
    }
}

/// Drift shape value at `u` in [0,1]. Rises from -1 early to ~+1 past
/// mid-morning, so that (after centering) the mean price deviation is
/// negative in the first quarter of the day and positive in the middle.
fn drift_shape(shape: IntradayShape, u: f64) -> f64 {
    match shape {
        IntradayShape::EarlyLowLateHigh => ((u - 0.25) * 6.0).tanh(),
        IntradayShape::Flat | IntradayShape::UShapeVolume => 0.0,
    }
}

/// Mean volume multiplier at `u` in [0,1].
fn volume_shape(shape: IntradayShape, u: f64) -> f64 {
    match shape {
        IntradayShape::UShapeVolume => {
            let x = 2.0 * u - 1.0;
            0.5 + 1.5 * x * x
        }
        IntradayShape::Flat | IntradayShape::EarlyLowLateHigh => 1.0,
    }
}

/// Sample a standard normal via Box-Muller from two uniform draws.
fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generate a deterministic synthetic dataset from the config.
///
/// Determinism: every (day, asset) pair draws from its own RNG stream
/// derived from `(rng_seed, day_index, asset_index)`, so output is a pure
/// function of the config regardless of generation order.
pub fn generate_synthetic_market(config: &SyntheticMarketConfig) -> Result<Vec<TradingDayData>> {
    config.validate()?;
    let m = config.minutes_per_day;

    // Per-minute drift path and its variance over the day.
    let drift: Vec<f64> = (0..m)
        .map(|i| config.momentum_strength * drift_shape(config.intraday_shape, i as f64 / (m - 1) as f64))
        .collect();
    let drift_mean = drift.iter().sum::<f64>() / m as f64;
    let drift_var = drift.iter().map(|d| (d - drift_mean).powi(2)).sum::<f64>() / m as f64;

    // For a driftless walk w with per-minute std s, the expected variance of
    // w around its within-day mean is s^2 (m^2 - 1) / (6 m) ~ s^2 m / 6.
    let residual = (config.daily_volatility_target.powi(2) - drift_var).max(0.0);
    let noise_std = (residual * 6.0 * m as f64 / ((m * m - 1) as f64)).sqrt();

    let mut out = Vec::with_capacity(config.days);
    let mut date = config.start_date;
    for day_idx in 0..config.days {
        let mut day = TradingDayData {
            date,
            minutes_per_day: m,
            assets: BTreeMap::new(),
        };
        for asset_idx in 0..config.n_assets {
            let mut rng = stream(
                config.rng_seed,
                "synth",
                (day_idx as u64) << 24 | asset_idx as u64,
            );
            let asset_id = format!("SYN{asset_idx:03}");
            let mut prices = Vec::with_capacity(m);
            let mut volumes = Vec::with_capacity(m);
            let mut walk = 0.0;
            let base_minute_volume = config.base_day_volume / m as f64;
            for i in 0..m {
                walk += noise_std * normal(&mut rng);
                // Multiplicative form: with zero drift and zero noise the
                // price equals base_price bit for bit.
                let log_dev = drift[i] + walk;
                prices.push(config.base_price * log_dev.exp());
                let u = i as f64 / (m - 1) as f64;
                let vol_noise = (0.3 * normal(&mut rng)).exp();
                volumes.push(base_minute_volume * volume_shape(config.intraday_shape, u) * vol_noise);
            }
            day.assets.insert(
                asset_id.clone(),
                AssetDay {
                    asset_id,
                    prices,
                    volumes,
                },
            );
        }
        out.push(day);
        date = date.succ_opt().expect("date overflow");
    }
    Ok(out)
}
