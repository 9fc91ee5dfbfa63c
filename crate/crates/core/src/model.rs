//! Shared domain types: queries, agents' identities and outputs, rewards,
//! and the experiment configuration with its validation rules.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical answer normalization used everywhere answers are compared:
/// trim, collapse internal whitespace, case-fold.
pub fn normalize_answer(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    MultipleChoice,
    Numeric,
    FreeText,
}

/// Grading target for a query: the canonical answer plus optional
/// accepted alternates and numeric value/tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldAnswer {
    pub canonical: String,
    #[serde(default)]
    pub accepted_alternates: Vec<String>,
    #[serde(default)]
    pub numeric_value: Option<f64>,
    #[serde(default)]
    pub numeric_tolerance: Option<f64>,
}

impl GoldAnswer {
    pub fn exact(canonical: impl Into<String>) -> Self {
        GoldAnswer {
            canonical: canonical.into(),
            accepted_alternates: Vec::new(),
            numeric_value: None,
            numeric_tolerance: None,
        }
    }

    /// True when `normalized` equals the canonical answer or any accepted
    /// alternate, after normalization of both sides.
    pub fn matches(&self, normalized: &str) -> bool {
        if normalize_answer(&self.canonical) == normalized {
            return true;
        }
        self.accepted_alternates
            .iter()
            .any(|alt| normalize_answer(alt) == normalized)
    }

    pub fn validate(&self) -> Result<()> {
        if self.numeric_tolerance.is_some() && self.numeric_value.is_none() {
            return Err(Error::invalid_field(
                "numeric_tolerance",
                "present without numeric_value",
            ));
        }
        if let Some(tol) = self.numeric_tolerance {
            if !tol.is_finite() || tol < 0.0 {
                return Err(Error::invalid_field(
                    "numeric_tolerance",
                    "must be a nonnegative real",
                ));
            }
        }
        Ok(())
    }
}

/// One task instance. Multiple-choice queries list their options and the
/// gold answer must name one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub id: String,
    pub prompt: String,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub options: Vec<String>,
    pub gold: GoldAnswer,
}

impl Query {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid_field("id", "must be nonempty"));
        }
        self.gold.validate()?;
        match self.task_kind {
            TaskKind::MultipleChoice => {
                if self.options.is_empty() {
                    return Err(Error::invalid_field(
                        "options",
                        "multiple-choice query lists no options",
                    ));
                }
                let canonical = normalize_answer(&self.gold.canonical);
                if !self
                    .options
                    .iter()
                    .any(|opt| normalize_answer(opt) == canonical)
                {
                    return Err(Error::invalid_field(
                        "gold",
                        "multiple-choice gold must name one of the listed options",
                    ));
                }
            }
            TaskKind::Numeric => {
                if self.gold.numeric_value.is_none() {
                    return Err(Error::invalid_field(
                        "gold",
                        "numeric query requires gold.numeric_value",
                    ));
                }
            }
            TaskKind::FreeText => {}
        }
        Ok(())
    }

    /// Options that do not match the gold answer, in listed order.
    pub fn wrong_options(&self) -> Vec<&str> {
        self.options
            .iter()
            .map(|s| s.as_str())
            .filter(|opt| !self.gold.matches(&normalize_answer(opt)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub index: usize,
    pub label: String,
}

impl AgentId {
    pub fn new(index: usize, label: impl Into<String>) -> Self {
        AgentId {
            index,
            label: label.into(),
        }
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.label, self.index)
    }
}

/// One agent's candidate answer. The revision history starts with the
/// phase-0 draft and gains exactly one entry per revise call; the last
/// entry always equals `answer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub agent: AgentId,
    pub answer: String,
    pub revision_history: Vec<(usize, String)>,
}

impl AgentOutput {
    pub fn initial(agent: AgentId, text: impl Into<String>) -> Self {
        let text = text.into();
        AgentOutput {
            agent,
            answer: text.clone(),
            revision_history: vec![(0, text)],
        }
    }

    /// Extends the history by one entry and makes `text` the current answer.
    pub fn revised(&self, text: impl Into<String>) -> Self {
        let text = text.into();
        let phase = self.revision_history.last().map_or(0, |(p, _)| p + 1);
        let mut history = self.revision_history.clone();
        history.push((phase, text.clone()));
        AgentOutput {
            agent: self.agent.clone(),
            answer: text,
            revision_history: history,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.revision_history.last() {
            None => Err(Error::invalid_field("revision_history", "must be nonempty")),
            Some((_, last)) if *last != self.answer => Err(Error::invalid_field(
                "revision_history",
                "last entry must equal answer",
            )),
            Some(_) => Ok(()),
        }
    }
}

/// Round reward, always within [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RewardValue(f64);

impl RewardValue {
    pub const MIN: f64 = -1.0;
    pub const MAX: f64 = 1.0;

    /// Rejects non-finite values and values outside [-1, 1].
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(Self::MIN..=Self::MAX).contains(&value) {
            return Err(Error::invalid_field(
                "reward",
                format!("{value} outside [-1, 1]"),
            ));
        }
        Ok(RewardValue(value))
    }

    /// Clamps into [-1, 1]; non-finite values collapse to the wrong-answer
    /// extreme.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            return RewardValue(Self::MIN);
        }
        RewardValue(value.clamp(Self::MIN, Self::MAX))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RewardValue {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        RewardValue::new(value)
    }
}

impl From<RewardValue> for f64 {
    fn from(r: RewardValue) -> f64 {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Edgeless,
    SiaRandom,
    CrsChain,
    Ring,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    Majority,
    WeightedMajority,
    CrsCentroid,
    SimilarityEnsemble,
    Coordinator,
    SingleAgent,
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AggregatorKind::Majority => "majority",
            AggregatorKind::WeightedMajority => "weighted-majority",
            AggregatorKind::CrsCentroid => "crs-centroid",
            AggregatorKind::SimilarityEnsemble => "similarity-ensemble",
            AggregatorKind::Coordinator => "coordinator",
            AggregatorKind::SingleAgent => "single-agent",
        };
        f.write_str(name)
    }
}

/// How per-round contribution scores are computed. `Auto` picks Shapley for
/// edgeless topologies with a non-judge aggregator and the judge otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContributionModeChoice {
    Auto,
    Shapley,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    Consistent,
    Subtle,
}

fn default_persuadable_count() -> usize {
    0
}
fn default_faithful_accuracy() -> f64 {
    0.95
}
fn default_adversary_kind() -> AdversaryKind {
    AdversaryKind::Consistent
}
fn default_subtle_flip_prob() -> f64 {
    0.3
}
fn default_subtle_numeric_offset() -> f64 {
    0.1
}
fn default_persuade_threshold() -> usize {
    2
}
fn default_topology_kind() -> TopologyKind {
    TopologyKind::Edgeless
}
fn default_edge_count() -> usize {
    6
}
fn default_edge_cap() -> usize {
    16
}
fn default_interaction_phases() -> usize {
    1
}
fn default_aggregator_kind() -> AggregatorKind {
    AggregatorKind::WeightedMajority
}
fn default_single_agent_index() -> usize {
    0
}
fn default_contribution_mode() -> ContributionModeChoice {
    ContributionModeChoice::Auto
}
fn default_learning_rate() -> f64 {
    0.02
}
fn default_initial_crs() -> f64 {
    0.5
}
fn default_crs_clamp() -> bool {
    true
}
fn default_embedding_dim() -> usize {
    256
}

/// Experiment configuration. Parsed strictly: unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Team size N.
    pub team_size: usize,
    /// Number of adversarial agents, placed at the highest indices.
    pub adversary_count: usize,
    /// Number of persuadable agents, placed between faithful and adversarial.
    #[serde(default = "default_persuadable_count")]
    pub persuadable_count: usize,
    /// Accuracy p of each faithful agent.
    #[serde(default = "default_faithful_accuracy")]
    pub faithful_accuracy: f64,
    #[serde(default = "default_adversary_kind")]
    pub adversary_kind: AdversaryKind,
    #[serde(default = "default_subtle_flip_prob")]
    pub subtle_flip_prob: f64,
    #[serde(default = "default_subtle_numeric_offset")]
    pub subtle_numeric_offset: f64,
    /// Persuadable flip threshold k.
    #[serde(default = "default_persuade_threshold")]
    pub persuade_threshold: usize,
    #[serde(default = "default_topology_kind")]
    pub topology_kind: TopologyKind,
    /// Edge draws m for sia-random.
    #[serde(default = "default_edge_count")]
    pub edge_count: usize,
    /// Upper bound accepted for `edge_count`.
    #[serde(default = "default_edge_cap")]
    pub edge_cap: usize,
    #[serde(default = "default_interaction_phases")]
    pub interaction_phases: usize,
    #[serde(default = "default_aggregator_kind")]
    pub aggregator_kind: AggregatorKind,
    /// Designated agent for the single-agent baseline aggregator.
    #[serde(default = "default_single_agent_index")]
    pub single_agent_index: usize,
    #[serde(default = "default_contribution_mode")]
    pub contribution_mode: ContributionModeChoice,
    /// Accept signed judge contribution vectors instead of the default
    /// nonnegative sum-to-one contract.
    #[serde(default)]
    pub signed_judge_csc: bool,
    /// Learning rate eta for the credibility update.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_initial_crs")]
    pub initial_crs: f64,
    /// Clamp credibility scores into [0, 1] after each update.
    #[serde(default = "default_crs_clamp")]
    pub crs_clamp: bool,
    #[serde(default)]
    pub rng_seed: u64,
    /// Rounds excluded from the post-warmup accuracy metric.
    #[serde(default)]
    pub warmup_rounds: usize,
    /// Dimension D of the feature-hash embedding.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            team_size: 5,
            adversary_count: 3,
            persuadable_count: default_persuadable_count(),
            faithful_accuracy: default_faithful_accuracy(),
            adversary_kind: default_adversary_kind(),
            subtle_flip_prob: default_subtle_flip_prob(),
            subtle_numeric_offset: default_subtle_numeric_offset(),
            persuade_threshold: default_persuade_threshold(),
            topology_kind: default_topology_kind(),
            edge_count: default_edge_count(),
            edge_cap: default_edge_cap(),
            interaction_phases: default_interaction_phases(),
            aggregator_kind: default_aggregator_kind(),
            single_agent_index: default_single_agent_index(),
            contribution_mode: default_contribution_mode(),
            signed_judge_csc: false,
            learning_rate: default_learning_rate(),
            initial_crs: default_initial_crs(),
            crs_clamp: default_crs_clamp(),
            rng_seed: 0,
            warmup_rounds: 0,
            embedding_dim: default_embedding_dim(),
        }
    }
}

impl ExperimentConfig {
    /// Strict parse from JSON: unknown fields are rejected, then all
    /// invariants are checked.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::invalid_field("config", e.to_string()))?;
        validate_config(raw)
    }

    pub fn faithful_count(&self) -> usize {
        self.team_size - self.adversary_count - self.persuadable_count
    }
}

/// Checks every config invariant, reporting the first violated field.
pub fn validate_config(raw: ExperimentConfig) -> Result<ExperimentConfig> {
    if raw.team_size == 0 {
        return Err(Error::invalid_field("team_size", "must be positive"));
    }
    if raw.adversary_count > raw.team_size {
        return Err(Error::invalid_field(
            "adversary_count",
            format!(
                "{} exceeds team size {}",
                raw.adversary_count, raw.team_size
            ),
        ));
    }
    if raw.persuadable_count + raw.adversary_count > raw.team_size {
        return Err(Error::invalid_field(
            "persuadable_count",
            "persuadable + adversarial agents exceed team size",
        ));
    }
    if !raw.faithful_accuracy.is_finite() || !(0.0..=1.0).contains(&raw.faithful_accuracy) {
        return Err(Error::invalid_field(
            "faithful_accuracy",
            "must lie in [0, 1]",
        ));
    }
    if !raw.subtle_flip_prob.is_finite() || !(0.0..=1.0).contains(&raw.subtle_flip_prob) {
        return Err(Error::invalid_field(
            "subtle_flip_prob",
            "must lie in [0, 1]",
        ));
    }
    if !raw.subtle_numeric_offset.is_finite() || raw.subtle_numeric_offset <= 0.0 {
        return Err(Error::invalid_field(
            "subtle_numeric_offset",
            "must be positive",
        ));
    }
    if raw.persuade_threshold == 0 {
        return Err(Error::invalid_field(
            "persuade_threshold",
            "must be positive",
        ));
    }
    if raw.topology_kind == TopologyKind::SiaRandom {
        if raw.edge_count == 0 {
            return Err(Error::invalid_field("edge_count", "must be positive"));
        }
        if raw.edge_count > raw.edge_cap {
            return Err(Error::invalid_field(
                "edge_count",
                format!("{} exceeds edge cap {}", raw.edge_count, raw.edge_cap),
            ));
        }
    }
    if raw.interaction_phases == 0 || raw.interaction_phases > MAX_INTERACTION_PHASES {
        return Err(Error::invalid_field(
            "interaction_phases",
            format!("must lie in 1..={MAX_INTERACTION_PHASES}"),
        ));
    }
    if raw.aggregator_kind == AggregatorKind::SingleAgent && raw.single_agent_index >= raw.team_size
    {
        return Err(Error::invalid_field(
            "single_agent_index",
            "names an agent outside the team",
        ));
    }
    if !raw.learning_rate.is_finite() || raw.learning_rate <= 0.0 {
        return Err(Error::invalid_field("learning_rate", "must be positive"));
    }
    if !raw.initial_crs.is_finite() || !(0.0..=1.0).contains(&raw.initial_crs) {
        return Err(Error::invalid_field("initial_crs", "must lie in [0, 1]"));
    }
    if raw.embedding_dim == 0 {
        return Err(Error::invalid_field("embedding_dim", "must be positive"));
    }
    Ok(raw)
}

/// Cap on interaction phases per round.
pub const MAX_INTERACTION_PHASES: usize = 8;

/// Checks that a slice of ids has unique indices.
pub fn check_unique_indices(ids: &[AgentId]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.index) {
            return Err(Error::invalid_field(
                "agent_id",
                format!("duplicate agent index {}", id.index),
            ));
        }
    }
    Ok(())
}
