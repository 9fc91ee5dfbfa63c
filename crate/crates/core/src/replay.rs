//! Record-stream verification: re-derives every aggregation, reward,
//! contribution vector, and ledger transition from the recorded outputs and
//! confirms bit-equality with the stored values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_with, single_agent, Embedder};
use crate::error::{Error, Result};
use crate::harness::{parse_records, resolve_contribution_mode, RoundRecord};
use crate::judge::SyntheticJudge;
use crate::model::AggregatorKind;
use crate::reward::grade;
use crate::scoring::{
    judge_contributions, shapley_contributions, ContributionMode, CredibilityLedger, RoundView,
};

/// First mismatch between a record and its re-derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub round: usize,
    pub field: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rounds_verified: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }
}

fn diverge(round: usize, field: &str, detail: String) -> Divergence {
    Divergence {
        round,
        field: field.to_string(),
        detail,
    }
}

fn maps_equal(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|((ka, va), (kb, vb))| ka == kb && va.to_bits() == vb.to_bits())
}

fn check_record(record: &RoundRecord, previous: Option<&RoundRecord>) -> Option<Divergence> {
    let round = record.round;
    let config = &record.config;

    if let Some(prev) = previous {
        if !maps_equal(&prev.ledger_after, &record.ledger_before) {
            return Some(diverge(
                round,
                "ledger-continuity",
                "ledger_before does not extend the previous round".into(),
            ));
        }
    }

    if let Err(e) = record.topology.validate() {
        return Some(diverge(round, "topology", e.to_string()));
    }
    if record.realized_edge_count != record.topology.realized_edge_count() {
        return Some(diverge(
            round,
            "realized_edge_count",
            format!(
                "recorded {} but edge list has {}",
                record.realized_edge_count,
                record.topology.realized_edge_count()
            ),
        ));
    }

    let embedder = Embedder::new(config.embedding_dim, 0);
    let ledger_before =
        CredibilityLedger::from_snapshot(record.ledger_before.clone(), round, config.crs_clamp);

    // aggregation re-derivation; judge-backed rounds need the deterministic judge
    let can_rederive_aggregation =
        config.aggregator_kind != AggregatorKind::Coordinator || record.deterministic_judge;
    if can_rederive_aggregation {
        let rederived = aggregate_with(
            config.aggregator_kind,
            &record.final_outputs,
            &ledger_before,
            &embedder,
            &record.entry.query.prompt,
            &SyntheticJudge,
            config.single_agent_index,
        );
        match rederived {
            Ok(result) => {
                if result.final_answer != record.aggregation.final_answer {
                    return Some(diverge(
                        round,
                        "aggregation.final",
                        format!(
                            "recorded `{}`, re-derived `{}`",
                            record.aggregation.final_answer, result.final_answer
                        ),
                    ));
                }
                if result.chosen_agent != record.aggregation.chosen_agent {
                    return Some(diverge(round, "aggregation.chosen_agent", String::new()));
                }
                if !maps_equal(
                    &result.per_candidate_score,
                    &record.aggregation.per_candidate_score,
                ) {
                    return Some(diverge(
                        round,
                        "aggregation.per_candidate_score",
                        "scores differ".into(),
                    ));
                }
            }
            Err(e) => return Some(diverge(round, "aggregation", e.to_string())),
        }
    }

    let graded = grade(
        &record.aggregation.final_answer,
        &record.entry.query.gold,
        &record.entry.rubric,
    );
    if graded.reward.value().to_bits() != record.reward.to_bits() {
        return Some(diverge(
            round,
            "reward",
            format!(
                "recorded {}, re-derived {}",
                record.reward,
                graded.reward.value()
            ),
        ));
    }
    if graded.unparseable_numeric != record.unparseable_numeric {
        return Some(diverge(round, "unparseable_numeric", String::new()));
    }

    let expected_mode = resolve_contribution_mode(config);
    if expected_mode != record.contribution_mode {
        return Some(diverge(
            round,
            "contribution_mode",
            format!(
                "config resolves to {:?} but record says {:?}",
                expected_mode, record.contribution_mode
            ),
        ));
    }

    let rederived_contributions = match record.contribution_mode {
        ContributionMode::Shapley => {
            let result = shapley_contributions(
                &record.final_outputs,
                |subset| match aggregate_with(
                    config.aggregator_kind,
                    subset,
                    &ledger_before,
                    &embedder,
                    &record.entry.query.prompt,
                    &SyntheticJudge,
                    config.single_agent_index,
                ) {
                    Err(Error::MissingAgent { .. })
                        if config.aggregator_kind == AggregatorKind::SingleAgent =>
                    {
                        let lowest = subset
                            .iter()
                            .map(|o| o.agent.index)
                            .min()
                            .ok_or(Error::NoOutputs)?;
                        single_agent(subset, lowest)
                    }
                    other => other,
                },
                |answer| grade(answer, &record.entry.query.gold, &record.entry.rubric).reward,
            );
            Some(result)
        }
        ContributionMode::Judge if record.deterministic_judge => {
            let view = RoundView {
                query_prompt: &record.entry.query.prompt,
                outputs: &record.final_outputs,
                messages: &record.messages,
            };
            Some(judge_contributions(
                &view,
                &record.aggregation.final_answer,
                &SyntheticJudge,
                config.signed_judge_csc,
            ))
        }
        ContributionMode::Judge => None,
    };
    if let Some(result) = rederived_contributions {
        match result {
            Ok(contributions) => {
                if !maps_equal(&contributions.per_agent, &record.contributions) {
                    return Some(diverge(
                        round,
                        "contributions",
                        "re-derived contribution vector differs".into(),
                    ));
                }
            }
            Err(e) => return Some(diverge(round, "contributions", e.to_string())),
        }
    }

    // the ledger transition is verifiable for every record
    let contributions = crate::scoring::ContributionVector {
        per_agent: record.contributions.clone(),
        mode: record.contribution_mode,
    };
    let reward = match crate::model::RewardValue::new(record.reward) {
        Ok(r) => r,
        Err(e) => return Some(diverge(round, "reward", e.to_string())),
    };
    match ledger_before.updated(&contributions, reward, config.learning_rate) {
        Ok(next) => {
            if !maps_equal(next.per_agent(), &record.ledger_after) {
                return Some(diverge(
                    round,
                    "ledger_after",
                    "credibility update does not reproduce the recorded ledger".into(),
                ));
            }
        }
        Err(e) => return Some(diverge(round, "ledger_after", e.to_string())),
    }

    None
}

/// Verifies a parsed record stream, stopping at the first divergence.
pub fn replay_records(records: &[RoundRecord]) -> ReplayReport {
    let mut previous: Option<&RoundRecord> = None;
    for (i, record) in records.iter().enumerate() {
        if let Some(divergence) = check_record(record, previous) {
            return ReplayReport {
                rounds_verified: i,
                divergence: Some(divergence),
            };
        }
        previous = Some(record);
    }
    ReplayReport {
        rounds_verified: records.len(),
        divergence: None,
    }
}

/// Parses and verifies a JSONL record file.
pub fn replay_file(path: &Path) -> Result<ReplayReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let records = parse_records(&text)?;
    Ok(replay_records(&records))
}
