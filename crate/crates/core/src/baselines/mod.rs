//! Rule-based execution schedules evaluated under the same environment as
//! learned policies: TWAP, VWAP, Almgren-Chriss.
//!
//! Baselines propose per-minute volumes directly rather than going through
//! the discrete action grid; the environment still applies the cash cutoff
//! at step granularity, so their conflict metrics are measured identically.

mod schedules;

pub use schedules::{
    ac_schedule, estimate_volume_profile, run_baseline_episode, twap_schedule, vwap_schedule,
    ACParams, BaselineKind, VolumeProfile,
};
