//! Dataset statistics: average volatility and average strength of momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::bars::TradingDayData;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarketStats {
    /// Mean over asset-days of std(p_t / p_mean); a fraction (multiply by
    /// 1e3 for per-mille).
    pub av: f64,
    /// Mean over asset-days of sum_t |p_t - p_{t-1}| / p_mean; a fraction.
    pub asm: f64,
    pub asset_days: usize,
}

/// Compute AV and ASM over every asset-day in the dataset.
///
/// Both statistics normalize by the asset-day's mean price, which makes them
/// invariant under uniform price scaling. The std is the population standard
/// deviation over the day's minutes.
pub fn market_stats(dataset: &[TradingDayData]) -> Result<MarketStats> {
    let mut av_sum = 0.0;
    let mut asm_sum = 0.0;
    let mut n = 0usize;
    for day in dataset {
        for asset in day.assets.values() {
            let prices = &asset.prices;
            if prices.is_empty() {
                continue;
            }
            let mean = asset.day_average_price();
            let var = prices.iter().map(|p| (p / mean - 1.0).powi(2)).sum::<f64>()
                / prices.len() as f64;
            av_sum += var.sqrt();
            let momentum: f64 = prices.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            asm_sum += momentum / mean;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::validation("market_stats: empty dataset"));
    }
    Ok(MarketStats {
        av: av_sum / n as f64,
        asm: asm_sum / n as f64,
        asset_days: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::bars::AssetDay;
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn day_with_prices(prices: Vec<f64>) -> TradingDayData {
        let mut assets = BTreeMap::new();
        assets.insert(
            "A".to_string(),
            AssetDay {
                asset_id: "A".to_string(),
                volumes: vec![1.0; prices.len()],
                prices,
            },
        );
        TradingDayData {
            date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            minutes_per_day: 3,
            assets,
        }
    }

    #[test]
    fn constant_prices_give_zero() {
        let day = day_with_prices(vec![5.0, 5.0, 5.0]);
        let stats = market_stats(&[day]).unwrap();
        assert_eq!(stats.av, 0.0);
        assert_eq!(stats.asm, 0.0);
    }

    #[test]
    fn hand_computed_three_point_day() {
        // p = {1.0, 1.1, 0.9}, mean = 1.0
        // AV = population std of {1.0, 1.1, 0.9} = sqrt(0.02/3)
        // ASM = (0.1 + 0.2) / 1.0 = 0.3
        let day = day_with_prices(vec![1.0, 1.1, 0.9]);
        let stats = market_stats(&[day]).unwrap();
        let expected_av = (0.02f64 / 3.0).sqrt();
        assert!((stats.av - expected_av).abs() < 1e-12, "av={}", stats.av);
        assert!((stats.asm - 0.3).abs() < 1e-12, "asm={}", stats.asm);
    }

    #[test]
    fn scale_invariance() {
        let day1 = day_with_prices(vec![1.0, 1.1, 0.9]);
        let day2 = day_with_prices(vec![700.0, 770.0, 630.0]);
        let s1 = market_stats(&[day1]).unwrap();
        let s2 = market_stats(&[day2]).unwrap();
        assert!((s1.av - s2.av).abs() < 1e-12);
        assert!((s1.asm - s2.asm).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(market_stats(&[]).is_err());
    }
}
