//! Scenario generation and the closed-loop receding-horizon simulation.

mod episode;
mod output;
mod scenario;

pub use episode::{
    pursuit_nominal, run_episode, EpisodeError, EpisodeOptions, EpisodeTraceRow, EpochRecord, Outcome, RunLog,
    StepRecord, SubgraphRecord,
};
pub use output::{median, metrics, partition_json, states_csv, trace_csv, write_outputs, Metrics, VelocityHistogram};
pub use scenario::{generate_scenario, FleetMember, MapSource, ScenarioConfig};
