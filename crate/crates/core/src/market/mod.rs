//! Market data: minute bars, synthetic generation, order sets, statistics
//! and chronological splits.

mod bars;
mod orders;
mod split;
mod stats;
mod synth;

pub use bars::{load_bars, write_bars_csv, AssetDay, MinuteBar, TradingDayData};
pub use orders::{
    generate_order_sets, load_order_sets, write_order_sets, OrderGenParams, OrderSet, OrderSpec,
};
pub use split::{split_dataset, DatasetSplit};
pub use stats::{market_stats, MarketStats};
pub use synth::{generate_synthetic_market, IntradayShape, SyntheticMarketConfig};
