//! Reward oracles: map a team's final answer to a reward in [-1, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_answer, GoldAnswer, RewardValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RubricKind {
    Exact,
    Numeric,
    Tiered,
}

/// A named partial-credit band; rewards sit in [0.5, 1.0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialBand {
    pub name: String,
    pub reward: f64,
}

fn default_correct_reward() -> f64 {
    1.0
}
fn default_wrong_reward() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingRubric {
    pub kind: RubricKind,
    #[serde(default = "default_correct_reward")]
    pub correct_reward: f64,
    #[serde(default = "default_wrong_reward")]
    pub wrong_reward: f64,
    #[serde(default)]
    pub partial_bands: Vec<PartialBand>,
}

impl GradingRubric {
    pub fn exact() -> Self {
        GradingRubric {
            kind: RubricKind::Exact,
            correct_reward: 1.0,
            wrong_reward: -1.0,
            partial_bands: Vec::new(),
        }
    }

    pub fn numeric() -> Self {
        GradingRubric {
            kind: RubricKind::Numeric,
            ..GradingRubric::exact()
        }
    }

    pub fn tiered(band: PartialBand) -> Self {
        GradingRubric {
            kind: RubricKind::Tiered,
            partial_bands: vec![band],
            ..GradingRubric::exact()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("correct_reward", self.correct_reward),
            ("wrong_reward", self.wrong_reward),
        ] {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(Error::invalid_field(field, "must lie in [-1, 1]"));
            }
        }
        if self.kind == RubricKind::Tiered && self.partial_bands.is_empty() {
            return Err(Error::invalid_field(
                "partial_bands",
                "tiered rubric needs at least one band",
            ));
        }
        for band in &self.partial_bands {
            if !band.reward.is_finite() || !(0.5..1.0).contains(&band.reward) {
                return Err(Error::invalid_field(
                    "partial_bands",
                    format!("band `{}` reward outside [0.5, 1.0)", band.name),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of grading one final answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub reward: RewardValue,
    /// Set when a numeric rubric could not parse the answer; such answers
    /// grade as wrong instead of aborting the round.
    pub unparseable_numeric: bool,
}

impl GradeResult {
    fn plain(reward: RewardValue) -> Self {
        GradeResult {
            reward,
            unparseable_numeric: false,
        }
    }
}

/// Grades `final_answer` against the gold reference. Total over all text
/// inputs and deterministic.
pub fn grade(final_answer: &str, gold: &GoldAnswer, rubric: &GradingRubric) -> GradeResult {
    let correct = RewardValue::clamped(rubric.correct_reward);
    let wrong = RewardValue::clamped(rubric.wrong_reward);
    let normalized = normalize_answer(final_answer);
    match rubric.kind {
        RubricKind::Exact => {
            if gold.matches(&normalized) {
                GradeResult::plain(correct)
            } else {
                GradeResult::plain(wrong)
            }
        }
        RubricKind::Numeric => {
            let target = match gold.numeric_value {
                Some(v) => v,
                None => return GradeResult::plain(wrong),
            };
            match normalized.parse::<f64>() {
                Ok(value) => {
                    let tol = gold.numeric_tolerance.unwrap_or(0.0);
                    if (value - target).abs() <= tol {
                        GradeResult::plain(correct)
                    } else {
                        GradeResult::plain(wrong)
                    }
                }
                Err(_) => GradeResult {
                    reward: wrong,
                    unparseable_numeric: true,
                },
            }
        }
        RubricKind::Tiered => {
            if normalize_answer(&gold.canonical) == normalized {
                GradeResult::plain(correct)
            } else if gold
                .accepted_alternates
                .iter()
                .any(|alt| normalize_answer(alt) == normalized)
            {
                // alternates earn the first configured band
                let reward = rubric
                    .partial_bands
                    .first()
                    .map(|b| RewardValue::clamped(b.reward))
                    .unwrap_or(wrong);
                GradeResult::plain(reward)
            } else {
                GradeResult::plain(wrong)
            }
        }
    }
}
