//! The iterative game loop: local inference, peer interaction, aggregation,
//! grading, contribution scoring, and the credibility update — one round per
//! query, with the ledger carried across rounds. Also the sweep driver and
//! the metrics/record emitters.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{respond, AgentProfile, AgentState};
use crate::aggregation::{aggregate_with, single_agent, AggregationResult, Embedder};
use crate::dataset::DatasetEntry;
use crate::error::{Error, Result};
use crate::judge::JudgeChannel;
use crate::model::{
    normalize_answer, validate_config, AgentId, AgentOutput, AggregatorKind,
    ContributionModeChoice, ExperimentConfig, TopologyKind,
};
use crate::reward::grade;
use crate::rng::SeedSplitter;
use crate::scoring::{
    judge_contributions, shapley_contributions, ContributionMode, CredibilityLedger, RoundView,
};
use crate::topology::{generate_topology, run_interaction, MessageLogEntry, TopologyGraph};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Instantiates the team implied by the config: faithful agents first, then
/// persuadable ones, adversaries at the highest indices.
pub fn build_team(config: &ExperimentConfig) -> Vec<AgentState> {
    let faithful = config.faithful_count();
    let persuadable = config.persuadable_count;
    (0..config.team_size)
        .map(|i| {
            let (profile, role) = if i < faithful {
                (
                    AgentProfile::Faithful {
                        accuracy: config.faithful_accuracy,
                    },
                    "faithful",
                )
            } else if i < faithful + persuadable {
                (
                    AgentProfile::Persuadable {
                        threshold: config.persuade_threshold,
                    },
                    "persuadable",
                )
            } else {
                match config.adversary_kind {
                    crate::model::AdversaryKind::Consistent => {
                        (AgentProfile::AdversarialConsistent, "adversary")
                    }
                    crate::model::AdversaryKind::Subtle => (
                        AgentProfile::AdversarialSubtle {
                            flip_prob: config.subtle_flip_prob,
                            numeric_offset: config.subtle_numeric_offset,
                        },
                        "adversary",
                    ),
                }
            };
            AgentState::new(AgentId::new(i, format!("{role}-{i}")), profile)
        })
        .collect()
}

/// Which contribution route a config resolves to: exact Shapley for
/// edgeless topologies with a non-judge aggregator, the judge otherwise.
pub fn resolve_contribution_mode(config: &ExperimentConfig) -> ContributionMode {
    match config.contribution_mode {
        ContributionModeChoice::Shapley => ContributionMode::Shapley,
        ContributionModeChoice::Judge => ContributionMode::Judge,
        ContributionModeChoice::Auto => {
            if config.topology_kind == TopologyKind::Edgeless
                && config.aggregator_kind != AggregatorKind::Coordinator
            {
                ContributionMode::Shapley
            } else {
                ContributionMode::Judge
            }
        }
    }
}

/// Mutable state carried across the rounds of one experiment.
pub struct ExperimentState {
    pub config: ExperimentConfig,
    pub agents: Vec<AgentState>,
    pub ledger: CredibilityLedger,
    pub round_index: usize,
    splitter: SeedSplitter,
    embedder: Embedder,
}

impl ExperimentState {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let config = validate_config(config)?;
        let agents = build_team(&config);
        let ledger =
            CredibilityLedger::new(config.team_size, config.initial_crs, config.crs_clamp)?;
        let splitter = SeedSplitter::new(config.rng_seed);
        let embedder = Embedder::new(config.embedding_dim, 0);
        Ok(ExperimentState {
            config,
            agents,
            ledger,
            round_index: 0,
            splitter,
            embedder,
        })
    }
}

/// Full transcript of one game iteration. Records embed the query, rubric,
/// and resolved config so a record stream can be replayed standalone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub schema_version: u32,
    pub round: usize,
    pub query_id: String,
    pub config: ExperimentConfig,
    pub entry: DatasetEntry,
    pub topology: TopologyGraph,
    pub realized_edge_count: usize,
    pub initial_outputs: Vec<AgentOutput>,
    pub final_outputs: Vec<AgentOutput>,
    pub messages: Vec<MessageLogEntry>,
    pub aggregation: AggregationResult,
    pub reward: f64,
    pub unparseable_numeric: bool,
    pub contribution_mode: ContributionMode,
    /// True when the judge consulted for this round (if any) is the
    /// deterministic in-process one, so replay can re-derive its outputs.
    pub deterministic_judge: bool,
    pub contributions: BTreeMap<usize, f64>,
    pub ledger_before: BTreeMap<usize, f64>,
    pub ledger_after: BTreeMap<usize, f64>,
}

/// Aggregator dispatch with the coalition-safe fallbacks used both for the
/// round itself and for Shapley subset evaluation: a single-agent aggregator
/// whose designated agent is absent from the coalition falls back to the
/// lowest-index member present.
fn aggregate_for_round(
    config: &ExperimentConfig,
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
    embedder: &Embedder,
    query_prompt: &str,
    judge: &dyn JudgeChannel,
) -> Result<AggregationResult> {
    match aggregate_with(
        config.aggregator_kind,
        outputs,
        ledger,
        embedder,
        query_prompt,
        judge,
        config.single_agent_index,
    ) {
        Err(Error::MissingAgent { .. })
            if config.aggregator_kind == AggregatorKind::SingleAgent =>
        {
            let lowest = outputs
                .iter()
                .map(|o| o.agent.index)
                .min()
                .ok_or(Error::NoOutputs)?;
            single_agent(outputs, lowest)
        }
        other => other,
    }
}

/// Executes one full round. Any failure leaves the ledger and round index
/// untouched.
pub fn run_round(
    state: &mut ExperimentState,
    entry: &DatasetEntry,
    judge: &dyn JudgeChannel,
) -> Result<RoundRecord> {
    entry.validate()?;
    let round = state.round_index;
    let n = state.config.team_size;

    for agent in &mut state.agents {
        agent.reset_round_memory();
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| state.splitter.agent_rng(round, i)).collect();

    let initial: Vec<AgentOutput> = state
        .agents
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .map(|(agent, rng)| respond(agent, &entry.query, rng))
        .collect::<Result<_>>()?;

    let mut topology_rng = state.splitter.topology_rng(round);
    let graph = generate_topology(
        state.config.topology_kind,
        n,
        state.config.edge_count,
        &state.ledger,
        &mut topology_rng,
    )?;

    let (final_outputs, messages) = run_interaction(
        &graph,
        &mut state.agents,
        &initial,
        state.config.interaction_phases,
        &mut rngs,
    )?;

    let aggregation = aggregate_for_round(
        &state.config,
        &final_outputs,
        &state.ledger,
        &state.embedder,
        &entry.query.prompt,
        judge,
    )?;

    let graded = grade(&aggregation.final_answer, &entry.query.gold, &entry.rubric);

    let mode = resolve_contribution_mode(&state.config);
    let contributions = match mode {
        ContributionMode::Shapley => {
            let config = &state.config;
            let ledger = &state.ledger;
            let embedder = &state.embedder;
            shapley_contributions(
                &final_outputs,
                |subset| {
                    aggregate_for_round(
                        config,
                        subset,
                        ledger,
                        embedder,
                        &entry.query.prompt,
                        judge,
                    )
                },
                |answer| grade(answer, &entry.query.gold, &entry.rubric).reward,
            )?
        }
        ContributionMode::Judge => {
            let view = RoundView {
                query_prompt: &entry.query.prompt,
                outputs: &final_outputs,
                messages: &messages,
            };
            judge_contributions(
                &view,
                &aggregation.final_answer,
                judge,
                state.config.signed_judge_csc,
            )?
        }
    };

    let next_ledger =
        state
            .ledger
            .updated(&contributions, graded.reward, state.config.learning_rate)?;

    let record = RoundRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        round,
        query_id: entry.query.id.clone(),
        config: state.config.clone(),
        entry: entry.clone(),
        realized_edge_count: graph.realized_edge_count(),
        topology: graph,
        initial_outputs: initial,
        final_outputs,
        messages,
        aggregation,
        reward: graded.reward.value(),
        unparseable_numeric: graded.unparseable_numeric,
        contribution_mode: mode,
        deterministic_judge: judge.is_deterministic(),
        contributions: contributions.per_agent.clone(),
        ledger_before: state.ledger.per_agent().clone(),
        ledger_after: next_ledger.per_agent().clone(),
    };

    state.ledger = next_ledger;
    state.round_index += 1;
    Ok(record)
}

/// Accuracy, credibility trajectories, and bookkeeping for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    /// Per-round correctness indicator (reward > 0).
    pub indicators: Vec<bool>,
    /// Running mean of the indicators.
    pub cumulative_accuracy: Vec<f64>,
    /// Per-round credibility snapshot, agent-indexed.
    pub crs_trajectory: Vec<Vec<f64>>,
    pub realized_edges: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Rounds in which each agent's final answer differed from its draft.
    pub flip_counts: Vec<usize>,
}

impl ExperimentMetrics {
    pub fn from_records(records: &[RoundRecord]) -> ExperimentMetrics {
        let n = records.first().map_or(0, |r| r.config.team_size);
        let mut metrics = ExperimentMetrics {
            indicators: Vec::with_capacity(records.len()),
            cumulative_accuracy: Vec::with_capacity(records.len()),
            crs_trajectory: Vec::with_capacity(records.len()),
            realized_edges: Vec::with_capacity(records.len()),
            rewards: Vec::with_capacity(records.len()),
            flip_counts: vec![0; n],
        };
        let mut hits = 0usize;
        for (t, record) in records.iter().enumerate() {
            let hit = record.reward > 0.0;
            hits += usize::from(hit);
            metrics.indicators.push(hit);
            metrics
                .cumulative_accuracy
                .push(hits as f64 / (t + 1) as f64);
            metrics
                .crs_trajectory
                .push((0..n).map(|i| record.ledger_after[&i]).collect());
            metrics.realized_edges.push(record.realized_edge_count);
            metrics.rewards.push(record.reward);
            for (initial, fin) in record.initial_outputs.iter().zip(&record.final_outputs) {
                if normalize_answer(&initial.answer) != normalize_answer(&fin.answer) {
                    metrics.flip_counts[initial.agent.index] += 1;
                }
            }
        }
        metrics
    }

    pub fn rounds(&self) -> usize {
        self.indicators.len()
    }

    pub fn accuracy(&self) -> f64 {
        if self.indicators.is_empty() {
            return 0.0;
        }
        self.indicators.iter().filter(|b| **b).count() as f64 / self.indicators.len() as f64
    }

    /// Accuracy over the rounds after the first `warmup` ones.
    pub fn accuracy_after(&self, warmup: usize) -> f64 {
        if warmup >= self.indicators.len() {
            return 0.0;
        }
        let tail = &self.indicators[warmup..];
        tail.iter().filter(|b| **b).count() as f64 / tail.len() as f64
    }

    pub fn mean_realized_edges(&self) -> f64 {
        if self.realized_edges.is_empty() {
            return 0.0;
        }
        self.realized_edges.iter().sum::<usize>() as f64 / self.realized_edges.len() as f64
    }

    /// CSV with header `round,accuracy,crs_0..crs_{N-1},realized_edges,reward`;
    /// `accuracy` is the cumulative accuracy through that round.
    pub fn to_csv(&self) -> String {
        let n = self.crs_trajectory.first().map_or(0, Vec::len);
        let mut out = String::from("round,accuracy");
        for i in 0..n {
            out.push_str(&format!(",crs_{i}"));
        }
        out.push_str(",realized_edges,reward\n");
        for t in 0..self.rounds() {
            out.push_str(&format!("{t},{}", self.cumulative_accuracy[t]));
            for crs in &self.crs_trajectory[t] {
                out.push_str(&format!(",{crs}"));
            }
            out.push_str(&format!(
                ",{},{}\n",
                self.realized_edges[t], self.rewards[t]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub records: Vec<RoundRecord>,
    pub metrics: ExperimentMetrics,
}

/// Folds [`run_round`] over the dataset in order, carrying the ledger.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &[DatasetEntry],
    judge: &dyn JudgeChannel,
) -> Result<ExperimentRun> {
    if dataset.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    let mut state = ExperimentState::new(config.clone())?;
    let mut records = Vec::with_capacity(dataset.len());
    for entry in dataset {
        records.push(run_round(&mut state, entry, judge)?);
    }
    let metrics = ExperimentMetrics::from_records(&records);
    Ok(ExperimentRun { records, metrics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    AdversaryCount,
    EdgeCount,
    AggregatorKind,
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SweepParameter::AdversaryCount => "adversary-count",
            SweepParameter::EdgeCount => "edge-count",
            SweepParameter::AggregatorKind => "aggregator-kind",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Count(usize),
    Aggregator(AggregatorKind),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Count(v) => write!(f, "{v}"),
            SweepValue::Aggregator(kind) => write!(f, "{kind}"),
        }
    }
}

/// The base config with one sweep value applied.
pub fn apply_sweep_value(
    base: &ExperimentConfig,
    parameter: SweepParameter,
    value: SweepValue,
) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    match (parameter, value) {
        (SweepParameter::AdversaryCount, SweepValue::Count(v)) => config.adversary_count = v,
        (SweepParameter::EdgeCount, SweepValue::Count(v)) => config.edge_count = v,
        (SweepParameter::AggregatorKind, SweepValue::Aggregator(kind)) => {
            config.aggregator_kind = kind
        }
        (parameter, value) => {
            return Err(Error::invalid_field(
                "sweep",
                format!("value {value} does not fit parameter {parameter}"),
            ))
        }
    }
    validate_config(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub rounds: usize,
    pub accuracy: f64,
    pub accuracy_post_warmup: f64,
    pub mean_realized_edges: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<ExperimentRun>,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "parameter,value,rounds,accuracy,accuracy_post_warmup,mean_realized_edges\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.parameter,
                row.value,
                row.rounds,
                row.accuracy,
                row.accuracy_post_warmup,
                row.mean_realized_edges
            ));
        }
        out
    }
}

/// Runs one experiment per sweep value with a fresh ledger each time. Every
/// point reuses the same master seed, so sweeping a parameter that does not
/// touch the agents (e.g. the aggregator) leaves their streams identical
/// across points.
pub fn sweep(
    parameter: SweepParameter,
    values: &[SweepValue],
    config: &ExperimentConfig,
    dataset: &[DatasetEntry],
    judge: &(dyn JudgeChannel + Sync),
) -> Result<SweepOutcome> {
    let runs: Vec<ExperimentRun> = values
        .par_iter()
        .map(|value| {
            let point = apply_sweep_value(config, parameter, *value)?;
            run_experiment(&point, dataset, judge)
        })
        .collect::<Result<_>>()?;
    let rows = values
        .iter()
        .zip(&runs)
        .map(|(value, run)| SweepRow {
            parameter: parameter.to_string(),
            value: value.to_string(),
            rounds: run.metrics.rounds(),
            accuracy: run.metrics.accuracy(),
            accuracy_post_warmup: run.metrics.accuracy_after(config.warmup_rounds),
            mean_realized_edges: run.metrics.mean_realized_edges(),
        })
        .collect();
    Ok(SweepOutcome { rows, runs })
}

/// One record per line, schema-versioned.
pub fn records_to_jsonl(records: &[RoundRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<RoundRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RoundRecord = serde_json::from_str(line)
            .map_err(|e| Error::Dataset(format!("record line {}: {e}", lineno + 1)))?;
        if record.schema_version != RECORD_SCHEMA_VERSION {
            return Err(Error::Dataset(format!(
                "record line {}: schema version {} unsupported",
                lineno + 1,
                record.schema_version
            )));
        }
        records.push(record);
    }
    Ok(records)
}
