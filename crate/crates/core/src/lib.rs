//! Desk-scale laboratory for cash-constrained multi-order execution.
//!
//! The crate is organised around one trading day: a set of acquisition and
//! liquidation orders shares a single cash account, a discrete-time
//! environment executes each agent's volume with an intra-step TWAP sub-policy
//! and enforces the non-negative-cash cutoff, and policies decide per-step
//! volume fractions after several rounds of intention exchange.
//!
//! Module map:
//! - [`market`]: minute-bar ingestion, synthetic market and order generation,
//!   dataset statistics and chronological splits.
//! - [`env`]: the multi-order execution environment (state, cash ledger,
//!   rewards, episode accounting).
//! - [`nn`]: a minimal 64-bit reverse-mode kernel (dense, GRU, attention,
//!   Adam) with finite-difference verification.
//! - [`policy`]: the intention-aware policy: extractor, communication
//!   channel, decision head and joint action-value estimator.
//! - [`training`]: PPO with per-round action-value attribution.
//! - [`baselines`]: TWAP / VWAP / Almgren-Chriss schedules run through the
//!   same environment.
//! - [`evaluation`]: EG / ARR / POS / GLR / TOC metrics, round-wise reports.
//! - [`runconfig`]: the single JSON run configuration shared by the CLI.

pub mod baselines;
pub mod numeric;
pub mod parallel;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod market;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod runconfig;
pub mod training;

pub use error::{Error, Result};
