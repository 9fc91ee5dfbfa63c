//! Contribution scoring and the credibility ledger.
//!
//! Contribution scores (CSc) measure how much each agent's output moved the
//! team's reward. The exact route enumerates every coalition of recorded
//! outputs and computes Shapley values; the judge route asks a judge channel
//! to attribute shares. Credibility scores (CrS) then evolve multiplicatively:
//!
//! ```text
//! CrS_t = CrS_{t-1} * (1 + eta * CSc * r_t)
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationResult;
use crate::error::{Error, MalformedReply, Result};
use crate::judge::{JudgeChannel, JudgeContributionRequest, JudgeOutputView};
use crate::model::{AgentOutput, RewardValue};
use crate::topology::MessageLogEntry;

/// Exact coalition enumeration is capped at this team size.
pub const MAX_EXACT_SHAPLEY_TEAM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContributionMode {
    Shapley,
    Judge,
}

/// Per-agent contribution scores for one round, keyed by agent index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub per_agent: BTreeMap<usize, f64>,
    pub mode: ContributionMode,
}

impl ContributionVector {
    pub fn sum(&self) -> f64 {
        self.per_agent.values().sum()
    }

    /// Judge-mode vectors are nonnegative shares summing to one (unless the
    /// signed extension is in use); Shapley vectors satisfy efficiency
    /// against the value `expected_sum = R(full) - R(empty)`.
    pub fn validate(&self, expected_sum: Option<f64>) -> Result<()> {
        match self.mode {
            ContributionMode::Judge => {
                if let Some(bad) = self
                    .per_agent
                    .values()
                    .find(|v| !v.is_finite() || **v < -1.0 || **v > 1.0)
                {
                    return Err(Error::MalformedJudgeReply(MalformedReply::OutOfRange(
                        format!("contribution {bad} outside [-1, 1]"),
                    )));
                }
            }
            ContributionMode::Shapley => {
                if let Some(expected) = expected_sum {
                    if (self.sum() - expected).abs() > 1e-9 {
                        return Err(Error::invalid_field(
                            "contributions",
                            format!("sum {} != expected {}", self.sum(), expected),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-agent credibility scores carried across rounds, with one snapshot
/// appended per completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityLedger {
    per_agent: BTreeMap<usize, f64>,
    round_index: usize,
    history: Vec<BTreeMap<usize, f64>>,
    clamp: bool,
}

impl CredibilityLedger {
    pub fn new(agent_count: usize, initial: f64, clamp: bool) -> Result<Self> {
        if !initial.is_finite() || !(0.0..=1.0).contains(&initial) {
            return Err(Error::invalid_field("initial_crs", "must lie in [0, 1]"));
        }
        Ok(CredibilityLedger {
            per_agent: (0..agent_count).map(|i| (i, initial)).collect(),
            round_index: 0,
            history: Vec::new(),
            clamp,
        })
    }

    /// Rebuilds a ledger from a recorded snapshot (history elided).
    pub fn from_snapshot(per_agent: BTreeMap<usize, f64>, round_index: usize, clamp: bool) -> Self {
        CredibilityLedger {
            per_agent,
            round_index,
            history: Vec::new(),
            clamp,
        }
    }

    pub fn crs(&self, agent: usize) -> Option<f64> {
        self.per_agent.get(&agent).copied()
    }

    pub fn per_agent(&self) -> &BTreeMap<usize, f64> {
        &self.per_agent
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn history(&self) -> &[BTreeMap<usize, f64>] {
        &self.history
    }

    pub fn clamp_enabled(&self) -> bool {
        self.clamp
    }

    /// Applies the multiplicative update to every agent named in
    /// `contributions` and leaves the rest untouched. Returns the next
    /// ledger; the round index advances and a post-update snapshot is
    /// appended to the history.
    pub fn updated(
        &self,
        contributions: &ContributionVector,
        reward: RewardValue,
        eta: f64,
    ) -> Result<CredibilityLedger> {
        let mut next = self.per_agent.clone();
        for (&agent, &csc) in &contributions.per_agent {
            let old = *next
                .get(&agent)
                .ok_or(Error::MissingContribution { agent })?;
            let mut new = old * (1.0 + eta * csc * reward.value());
            if self.clamp {
                new = new.clamp(0.0, 1.0);
            }
            next.insert(agent, new);
        }
        let mut history = self.history.clone();
        history.push(next.clone());
        Ok(CredibilityLedger {
            per_agent: next,
            round_index: self.round_index + 1,
            history,
            clamp: self.clamp,
        })
    }
}

/// Multiplicative credibility update; see [`CredibilityLedger::updated`].
pub fn update_credibility(
    ledger: &CredibilityLedger,
    contributions: &ContributionVector,
    reward: RewardValue,
    eta: f64,
) -> Result<CredibilityLedger> {
    ledger.updated(contributions, reward, eta)
}

/// Exact Shapley contribution scores over the recorded outputs.
///
/// For each agent i, sums `|S|!(N-|S|-1)!/N! * (R(agg(S+i)) - R(agg(S)))`
/// over every coalition S of the other outputs, with the empty coalition
/// valued at zero. Coalitions are enumerated by ascending bitmask so results
/// are reproducible bit-for-bit.
pub fn shapley_contributions<A, R>(
    outputs: &[AgentOutput],
    aggregator: A,
    reward_fn: R,
) -> Result<ContributionVector>
where
    A: Fn(&[AgentOutput]) -> Result<AggregationResult>,
    R: Fn(&str) -> RewardValue,
{
    let n = outputs.len();
    if n == 0 {
        return Err(Error::NoOutputs);
    }
    if n > MAX_EXACT_SHAPLEY_TEAM {
        return Err(Error::TeamTooLarge {
            n,
            max: MAX_EXACT_SHAPLEY_TEAM,
        });
    }

    // coalition values, indexed by membership bitmask; v[0] = 0
    let mut values = vec![0.0f64; 1 << n];
    let mut subset: Vec<AgentOutput> = Vec::with_capacity(n);
    for (mask, value) in values.iter_mut().enumerate().skip(1) {
        subset.clear();
        for (i, output) in outputs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                subset.push(output.clone());
            }
        }
        let final_answer = aggregator(&subset)?.final_answer;
        *value = reward_fn(&final_answer).value();
    }

    let factorial: Vec<f64> = {
        let mut f = vec![1.0f64; n + 1];
        for k in 1..=n {
            f[k] = f[k - 1] * k as f64;
        }
        f
    };
    let weight = |s: usize| factorial[s] * factorial[n - 1 - s] / factorial[n];

    let mut per_agent = BTreeMap::new();
    for (i, output) in outputs.iter().enumerate() {
        let bit = 1usize << i;
        let mut total = 0.0;
        for mask in 0..(1usize << n) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            total += weight(s) * (values[mask | bit] - values[mask]);
        }
        per_agent.insert(output.agent.index, total);
    }

    Ok(ContributionVector {
        per_agent,
        mode: ContributionMode::Shapley,
    })
}

/// Everything the contribution judge is shown about a round.
#[derive(Debug, Clone, Copy)]
pub struct RoundView<'a> {
    pub query_prompt: &'a str,
    pub outputs: &'a [AgentOutput],
    pub messages: &'a [MessageLogEntry],
}

/// Judge-attributed contribution scores.
///
/// The reply vector must have one entry per agent; nonnegative vectors whose
/// sum lands in [0.5, 2.0] are renormalized to sum one, anything else is
/// rejected as malformed. With `signed` set, entries in [-1, 1] are accepted
/// verbatim and no renormalization happens.
pub fn judge_contributions(
    view: &RoundView<'_>,
    final_answer: &str,
    judge: &dyn JudgeChannel,
    signed: bool,
) -> Result<ContributionVector> {
    let request = JudgeContributionRequest {
        query: view.query_prompt.to_string(),
        final_answer: final_answer.to_string(),
        outputs: view.outputs.iter().map(JudgeOutputView::from).collect(),
        messages: view.messages.to_vec(),
    };
    let reply = judge.score_contributions(&request)?;
    let n = view.outputs.len();
    if reply.csc.len() != n {
        return Err(Error::MalformedJudgeReply(MalformedReply::LengthMismatch {
            expected: n,
            got: reply.csc.len(),
        }));
    }
    if reply.csc.iter().any(|v| !v.is_finite()) {
        return Err(Error::MalformedJudgeReply(MalformedReply::NonNumeric));
    }

    let scores: Vec<f64> = if signed {
        if let Some(bad) = reply.csc.iter().find(|v| **v < -1.0 || **v > 1.0) {
            return Err(Error::MalformedJudgeReply(MalformedReply::OutOfRange(
                format!("signed contribution {bad} outside [-1, 1]"),
            )));
        }
        reply.csc.clone()
    } else {
        if let Some(bad) = reply.csc.iter().find(|v| **v < 0.0) {
            return Err(Error::MalformedJudgeReply(MalformedReply::OutOfRange(
                format!("negative contribution {bad}"),
            )));
        }
        let sum: f64 = reply.csc.iter().sum();
        if !(0.5..=2.0).contains(&sum) {
            return Err(Error::MalformedJudgeReply(MalformedReply::OutOfRange(
                format!("vector sum {sum} outside [0.5, 2.0]"),
            )));
        }
        reply.csc.iter().map(|v| v / sum).collect()
    };

    let per_agent = view
        .outputs
        .iter()
        .zip(scores)
        .map(|(output, score)| (output.agent.index, score))
        .collect();
    Ok(ContributionVector {
        per_agent,
        mode: ContributionMode::Judge,
    })
}
