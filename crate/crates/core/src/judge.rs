//! The judge channel: an external evaluator that can pick a final answer
//! from credibility-annotated candidates and attribute per-agent
//! contribution scores. The deterministic [`SyntheticJudge`] stands in for a
//! remote judge so every offline path stays reproducible; both speak the
//! same JSON wire format.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{normalize_answer, AgentOutput};
use crate::topology::MessageLogEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeCandidate {
    pub agent: usize,
    pub answer: String,
    pub crs: f64,
}

/// Request for judge-backed aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeAggregateRequest {
    pub candidates: Vec<JudgeCandidate>,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeAggregateReply {
    #[serde(rename = "final")]
    pub final_answer: String,
    pub rationale: String,
}

/// One agent's outputs as shown to the contribution judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeOutputView {
    pub agent: usize,
    pub answer: String,
    pub revisions: Vec<(usize, String)>,
}

impl From<&AgentOutput> for JudgeOutputView {
    fn from(output: &AgentOutput) -> Self {
        JudgeOutputView {
            agent: output.agent.index,
            answer: output.answer.clone(),
            revisions: output.revision_history.clone(),
        }
    }
}

/// Request for judge-attributed contribution scores: the final answer, the
/// message log, and every agent's output history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeContributionRequest {
    pub query: String,
    #[serde(rename = "final")]
    pub final_answer: String,
    pub outputs: Vec<JudgeOutputView>,
    pub messages: Vec<MessageLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeContributionReply {
    pub csc: Vec<f64>,
}

pub trait JudgeChannel {
    fn aggregate(&self, request: &JudgeAggregateRequest) -> Result<JudgeAggregateReply>;
    fn score_contributions(
        &self,
        request: &JudgeContributionRequest,
    ) -> Result<JudgeContributionReply>;

    /// Whether replaying a transcript can re-derive this judge's replies.
    /// In-process judges are deterministic; remote ones are not.
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Deterministic in-process judge.
///
/// Aggregation: weighted majority over the candidates' CrS values, falling
/// back to the highest-CrS agent's answer when every answer is distinct.
/// Contributions: agents matching the final answer split a 0.8 share
/// equally, everyone else splits the remaining 0.2.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticJudge;

impl JudgeChannel for SyntheticJudge {
    fn aggregate(&self, request: &JudgeAggregateRequest) -> Result<JudgeAggregateReply> {
        use std::collections::BTreeMap;

        struct Group {
            weight: f64,
            min_agent: usize,
            representative: String,
            members: usize,
        }
        let mut groups: BTreeMap<String, Group> = BTreeMap::new();
        for candidate in &request.candidates {
            let key = normalize_answer(&candidate.answer);
            let entry = groups.entry(key).or_insert(Group {
                weight: 0.0,
                min_agent: candidate.agent,
                representative: candidate.answer.clone(),
                members: 0,
            });
            entry.weight += candidate.crs;
            entry.members += 1;
            if candidate.agent < entry.min_agent {
                entry.min_agent = candidate.agent;
                entry.representative = candidate.answer.clone();
            }
        }

        let all_distinct = groups.values().all(|g| g.members == 1);
        let (final_answer, rationale) = if all_distinct {
            let best =
                request
                    .candidates
                    .iter()
                    .fold(None::<&JudgeCandidate>, |best, c| match best {
                        None => Some(c),
                        Some(b) if c.crs > b.crs => Some(c),
                        Some(b) if c.crs == b.crs && c.agent < b.agent => Some(c),
                        Some(b) => Some(b),
                    });
            match best {
                Some(c) => (
                    c.answer.clone(),
                    format!("all answers distinct; took agent {} (highest CrS)", c.agent),
                ),
                None => (String::new(), "no candidates".to_string()),
            }
        } else {
            let winner = groups
                .values()
                .fold(None::<&Group>, |best, g| match best {
                    None => Some(g),
                    Some(b) if g.weight > b.weight => Some(g),
                    Some(b) if g.weight == b.weight && g.min_agent < b.min_agent => Some(g),
                    Some(b) => Some(b),
                })
                .expect("nonempty candidates");
            (
                winner.representative.clone(),
                "weighted majority over CrS".to_string(),
            )
        };

        Ok(JudgeAggregateReply {
            final_answer,
            rationale,
        })
    }

    fn score_contributions(
        &self,
        request: &JudgeContributionRequest,
    ) -> Result<JudgeContributionReply> {
        let n = request.outputs.len();
        if n == 0 {
            return Ok(JudgeContributionReply { csc: vec![] });
        }
        let target = normalize_answer(&request.final_answer);
        let matches: Vec<bool> = request
            .outputs
            .iter()
            .map(|o| normalize_answer(&o.answer) == target)
            .collect();
        let m = matches.iter().filter(|b| **b).count();
        let csc = if m == 0 || m == n {
            vec![1.0 / n as f64; n]
        } else {
            matches
                .iter()
                .map(|hit| {
                    if *hit {
                        0.8 / m as f64
                    } else {
                        0.2 / (n - m) as f64
                    }
                })
                .collect()
        };
        Ok(JudgeContributionReply { csc })
    }
}

/// Judge returning canned replies; used for contract and failure-mode tests.
#[derive(Debug, Clone, Default)]
pub struct StaticJudge {
    pub aggregate_reply: Option<JudgeAggregateReply>,
    pub contribution_reply: Option<JudgeContributionReply>,
}

impl StaticJudge {
    pub fn with_contributions(csc: Vec<f64>) -> Self {
        StaticJudge {
            aggregate_reply: None,
            contribution_reply: Some(JudgeContributionReply { csc }),
        }
    }

    pub fn with_final(final_answer: impl Into<String>) -> Self {
        StaticJudge {
            aggregate_reply: Some(JudgeAggregateReply {
                final_answer: final_answer.into(),
                rationale: "static".into(),
            }),
            contribution_reply: None,
        }
    }
}

impl JudgeChannel for StaticJudge {
    fn aggregate(&self, _request: &JudgeAggregateRequest) -> Result<JudgeAggregateReply> {
        self.aggregate_reply
            .clone()
            .ok_or_else(|| crate::error::Error::JudgeUnavailable("no canned aggregate".into()))
    }

    fn score_contributions(
        &self,
        _request: &JudgeContributionRequest,
    ) -> Result<JudgeContributionReply> {
        self.contribution_reply
            .clone()
            .ok_or_else(|| crate::error::Error::JudgeUnavailable("no canned contributions".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidates(entries: &[(&str, f64)]) -> Vec<JudgeCandidate> {
        entries
            .iter()
            .enumerate()
            .map(|(i, (answer, crs))| JudgeCandidate {
                agent: i,
                answer: answer.to_string(),
                crs: *crs,
            })
            .collect()
    }

    #[test]
    fn synthetic_judge_reduces_to_weighted_majority() {
        let request = JudgeAggregateRequest {
            candidates: candidates(&[("C", 0.1), ("C", 0.1), ("B", 0.9)]),
            query: "q".into(),
        };
        let reply = SyntheticJudge.aggregate(&request).unwrap();
        assert_eq!(reply.final_answer, "B");
    }

    #[test]
    fn synthetic_judge_distinct_fallback() {
        let request = JudgeAggregateRequest {
            candidates: candidates(&[("A", 0.3), ("B", 0.4), ("C", 0.8)]),
            query: "q".into(),
        };
        let reply = SyntheticJudge.aggregate(&request).unwrap();
        assert_eq!(reply.final_answer, "C");
    }

    #[test]
    fn wire_format_field_names() {
        let request = JudgeAggregateRequest {
            candidates: candidates(&[("B", 0.5)]),
            query: "pick".into(),
        };
        let json = serde_json::to_string(&request).unwrap();
        assert_eq!(
            json,
            r#"{"candidates":[{"agent":0,"answer":"B","crs":0.5}],"query":"pick"}"#
        );

        let reply: JudgeAggregateReply =
            serde_json::from_str(r#"{"final":"B","rationale":"ok"}"#).unwrap();
        assert_eq!(reply.final_answer, "B");

        let request = JudgeContributionRequest {
            query: "q".into(),
            final_answer: "B".into(),
            outputs: vec![JudgeOutputView {
                agent: 0,
                answer: "B".into(),
                revisions: vec![(0, "B".into())],
            }],
            messages: vec![MessageLogEntry {
                phase: 0,
                sender: 1,
                receiver: 0,
                content: "B".into(),
            }],
        };
        let json = serde_json::to_string(&request).unwrap();
        assert_eq!(
            json,
            concat!(
                r#"{"query":"q","final":"B","outputs":[{"agent":0,"answer":"B","revisions":[[0,"B"]]}],"#,
                r#""messages":[{"phase":0,"sender":1,"receiver":0,"content":"B"}]}"#
            )
        );

        let reply: JudgeContributionReply = serde_json::from_str(r#"{"csc":[0.5,0.5]}"#).unwrap();
        assert_eq!(reply.csc, vec![0.5, 0.5]);
    }

    #[test]
    fn contribution_shares_all_or_none_match() {
        let request = JudgeContributionRequest {
            query: "q".into(),
            final_answer: "Z".into(),
            outputs: (0..4)
                .map(|i| JudgeOutputView {
                    agent: i,
                    answer: "A".into(),
                    revisions: vec![(0, "A".into())],
                })
                .collect(),
            messages: vec![],
        };
        let reply = SyntheticJudge.score_contributions(&request).unwrap();
        assert_eq!(reply.csc, vec![0.25; 4], "no matches: uniform shares");
    }
}
