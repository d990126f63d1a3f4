//! Task families, seeded benchmark runs and their metrics.

mod runner;
mod scenario;

pub use runner::{
    episode_specs, run_benchmark, verdict_counts, write_episode, BenchError, EpisodeSpec, EpisodeSummary, GroupMetrics,
    MetricsReport, EPISODE_FILE, REPORT_CSV, REPORT_JSON,
};

pub use scenario::{
    generate_scenario, Family, Mode, ScenarioConfig, ScenarioError, DRAWER_CLOSED_X, DRAWER_OPEN_X,
    PLACEMENT_GAP,
};
