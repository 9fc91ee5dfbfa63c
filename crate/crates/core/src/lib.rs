//! Credibility-scored multi-agent coordination.
//!
//! Teams of synthetic (or remote) agents answer queries over configurable
//! communication topologies; their outputs are fused by credibility-aware
//! aggregation; per-agent credibility is learned online from Shapley- or
//! judge-derived contribution scores and round rewards. Everything is
//! deterministic given the experiment seed.

pub mod agents;
pub mod aggregation;
pub mod dataset;
mod error;
pub mod harness;
pub mod judge;
pub mod model;
pub mod remote;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod scoring;
pub mod topology;

pub use error::{Error, MalformedReply, Result};

pub use agents::{make_remote_agent, respond, revise, AgentProfile, AgentState, NeighborMessage};
pub use aggregation::{
    aggregate_with, coordinator_aggregate, cosine_distance, cosine_similarity, crs_centroid,
    crs_centroid_select, majority, select_nearest, similarity_ensemble, single_agent,
    weighted_majority, AggregationResult, Embedder, EmbeddingVector,
};
pub use dataset::{
    bundled_benchmark_dataset, bundled_smoke_dataset, dataset_to_jsonl, load_dataset,
    parse_dataset, synthetic_mc_dataset, DatasetEntry,
};
pub use harness::{
    apply_sweep_value, build_team, parse_records, records_to_jsonl, resolve_contribution_mode,
    run_experiment, run_round, sweep, ExperimentMetrics, ExperimentRun, ExperimentState,
    RoundRecord, SweepOutcome, SweepParameter, SweepRow, SweepValue,
};
pub use judge::{
    JudgeAggregateReply, JudgeAggregateRequest, JudgeCandidate, JudgeChannel,
    JudgeContributionReply, JudgeContributionRequest, JudgeOutputView, StaticJudge, SyntheticJudge,
};
pub use model::{
    normalize_answer, validate_config, AdversaryKind, AgentId, AgentOutput, AggregatorKind,
    ContributionModeChoice, ExperimentConfig, GoldAnswer, Query, RewardValue, TaskKind,
    TopologyKind,
};
pub use remote::{EndpointDescriptor, RemoteJudge};
pub use replay::{replay_file, replay_records, Divergence, ReplayReport};
pub use reward::{grade, GradeResult, GradingRubric, PartialBand, RubricKind};
pub use rng::SeedSplitter;
pub use scoring::{
    judge_contributions, shapley_contributions, update_credibility, ContributionMode,
    ContributionVector, CredibilityLedger, RoundView, MAX_EXACT_SHAPLEY_TEAM,
};
pub use topology::{
    crs_descending_order, generate_topology, run_interaction, MessageLogEntry, TopologyGraph,
};
