//! Metrics and evaluation: EG, ARR, POS, GLR, TOC, violation reporting,
//! round-wise intended-action evaluation and intention-convergence
//! diagnostics.

mod evaluate;
mod metrics;
mod report;

pub use evaluate::{
    evaluate_baseline, evaluate_policy, evaluate_rounds, quick_eval, round_convergence,
    run_policy_episode, select_episodes, RoundMetrics, RoundwiseReport,
};
pub use metrics::{
    aggregate_metrics, arr_from_eg, execution_gain, glr, pos, toc, MetricsReport, OrderResult,
};
pub use report::{write_orders_csv, write_summary_json};
