//! Minute-bar types and CSV ingestion.
//!
//! Bar CSV schema: header `date,asset,minute,price,volume`, minute 0-based,
//! one file may hold many days. An asset-day must contain exactly
//! `minutes_per_day` bars to be usable; incomplete asset-days are dropped
//! with a warning count rather than failing the whole file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One minute of trade data for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteBar {
    pub asset_id: String,
    pub minute_index: usize,
    /// Price in currency per share; strictly positive.
    pub price: f64,
    /// Traded volume in shares; non-negative.
    pub volume: f64,
}

/// All minutes of one asset on one day, sorted by minute index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDay {
    pub asset_id: String,
    pub prices: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl AssetDay {
    /// Unweighted mean of the day's minute prices.
    pub fn day_average_price(&self) -> f64 {
        self.prices.iter().sum::<f64>() / self.prices.len() as f64
    }

    pub fn day_volume(&self) -> f64 {
        self.volumes.iter().sum::<f64>()
    }
}

/// Per-asset minute series for one trading day. All assets share the same
/// minute grid of length `minutes_per_day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingDayData {
    pub date: NaiveDate,
    pub minutes_per_day: usize,
    pub assets: BTreeMap<String, AssetDay>,
}

impl TradingDayData {
    pub fn asset(&self, id: &str) -> Option<&AssetDay> {
        self.assets.get(id)
    }
}

#[derive(Debug, Default)]
struct RawAssetDay {
    rows: Vec<(usize, f64, f64)>, // (minute, price, volume)
}

/// Load minute bars from a CSV file, grouping into one `TradingDayData` per
/// date. Asset-days with missing or duplicated minutes are dropped; the
/// number of dropped asset-days is returned alongside the data.
pub fn load_bars(path: &Path, minutes_per_day: usize) -> Result<(Vec<TradingDayData>, usize)> {
    if minutes_per_day == 0 {
        return Err(Error::validation("minutes_per_day must be positive"));
    }
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 0,
            msg: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let expect = ["date", "asset", "minute", "price", "volume"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expect {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: format!("expected header {:?}, got {:?}", expect, got),
        });
    }

    // date -> asset -> raw rows
    let mut days: BTreeMap<NaiveDate, BTreeMap<String, RawAssetDay>> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                path: display.clone(),
                line,
                msg: format!("missing column {}", expect[i]),
            })
        };
        let date: NaiveDate = field(0)?.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: format!("bad date: {e}"),
        })?;
        let asset = field(1)?.to_string();
        let minute: usize = field(2)?.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: format!("bad minute: {e}"),
        })?;
        let price: f64 = field(3)?.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: format!("bad price: {e}"),
        })?;
        let volume: f64 = field(4)?.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line,
            msg: format!("bad volume: {e}"),
        })?;
        if minute >= minutes_per_day {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("minute {minute} out of range [0,{minutes_per_day})"),
            });
        }
        if !(price > 0.0) || !price.is_finite() {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("price must be positive, got {price}"),
            });
        }
        if !(volume >= 0.0) || !volume.is_finite() {
            return Err(Error::Parse {
                path: display.clone(),
                line,
                msg: format!("volume must be non-negative, got {volume}"),
            });
        }
        days.entry(date)
            .or_default()
            .entry(asset)
            .or_default()
            .rows
            .push((minute, price, volume));
    }

    let mut out = Vec::new();
    let mut dropped = 0usize;
    for (date, assets) in days {
        let mut day = TradingDayData {
            date,
            minutes_per_day,
            assets: BTreeMap::new(),
        };
        for (asset_id, mut raw) in assets {
            raw.rows.sort_by_key(|r| r.0);
            let complete = raw.rows.len() == minutes_per_day
                && raw.rows.iter().enumerate().all(|(i, r)| r.0 == i);
            if !complete {
                dropped += 1;
                log::warn!(
                    "dropping {asset_id} on {date}: {} of {minutes_per_day} minutes",
                    raw.rows.len()
                );
                continue;
            }
            day.assets.insert(
                asset_id.clone(),
                AssetDay {
                    asset_id,
                    prices: raw.rows.iter().map(|r| r.1).collect(),
                    volumes: raw.rows.iter().map(|r| r.2).collect(),
                },
            );
        }
        if !day.assets.is_empty() {
            out.push(day);
        }
    }
    Ok((out, dropped))
}

/// Write a dataset back out in the bar CSV schema.
pub fn write_bars_csv(path: &Path, dataset: &[TradingDayData]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "date,asset,minute,price,volume")?;
    for day in dataset {
        for asset in day.assets.values() {
            for m in 0..day.minutes_per_day {
                writeln!(
                    file,
                    "{},{},{},{:.12e},{:.12e}",
                    day.date, asset.asset_id, m, asset.prices[m], asset.volumes[m]
                )?;
            }
        }
    }
    Ok(())
}
