//! Experiment orchestration: training runs, evaluation episodes, the
//! dynamic-vs-fixed comparison, record files and plots.

pub mod episode;
pub mod experiments;
pub mod plots;
pub mod record;

pub use episode::{run_episode, EpisodeTrace};
pub use experiments::{
    compare_arms, run_dynamic_comparison, run_eval, run_training, summarize, verify_eta, ArmSummary, BucketStats,
    ComparisonReport, SeedComparison, TrainingOutcome,
};
pub use plots::{emit_plots, plot_bars, plot_convergence, BarMetric};
pub use record::{EpisodeRecord, RecordHeader, SlotRow, RECORD_FORMAT};
