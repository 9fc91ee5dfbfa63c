//! Dataset files: JSONL, one query with its grading rubric per line, plus
//! the deterministic synthetic generators behind the bundled datasets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GoldAnswer, Query, TaskKind};
use crate::reward::{GradingRubric, PartialBand, RubricKind};

/// One dataset line: the query and the rubric used to grade it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub query: Query,
    pub rubric: GradingRubric,
}

impl DatasetEntry {
    pub fn validate(&self) -> Result<()> {
        self.query.validate()?;
        self.rubric.validate()?;
        if self.rubric.kind == RubricKind::Numeric && self.query.gold.numeric_value.is_none() {
            return Err(Error::invalid_field(
                "rubric",
                "numeric rubric without gold.numeric_value",
            ));
        }
        Ok(())
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetEntry>> {
    let mut entries = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: DatasetEntry = serde_json::from_str(line)
            .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?;
        entry
            .validate()
            .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?;
        if !ids.insert(entry.query.id.clone()) {
            return Err(Error::Dataset(format!(
                "line {}: duplicate query id `{}`",
                lineno + 1,
                entry.query.id
            )));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    Ok(entries)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

pub fn dataset_to_jsonl(entries: &[DatasetEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("dataset entries serialize"));
        out.push('\n');
    }
    out
}

const OPTION_LETTERS: &[&str] = &["A", "B", "C", "D", "E", "F", "G", "H"];

fn mc_entry(id: usize, option_count: usize, gold_index: usize) -> DatasetEntry {
    let options: Vec<String> = OPTION_LETTERS[..option_count]
        .iter()
        .map(|s| s.to_string())
        .collect();
    DatasetEntry {
        query: Query {
            id: format!("q{id:04}"),
            prompt: format!(
                "Question {id}: choose the correct option among {}.",
                options.join(", ")
            ),
            task_kind: TaskKind::MultipleChoice,
            options: options.clone(),
            gold: GoldAnswer::exact(options[gold_index].clone()),
        },
        rubric: GradingRubric::exact(),
    }
}

/// Multiple-choice dataset with a controlled option-count profile.
///
/// The first `warmup_prefix` queries draw from `warmup_mix`, the remainder
/// from `post_mix`; each mix is a weighted list of option counts. Gold
/// positions are drawn from the seeded stream.
pub fn synthetic_mc_dataset(
    count: usize,
    warmup_prefix: usize,
    warmup_mix: &[(usize, u32)],
    post_mix: &[(usize, u32)],
    seed: u64,
) -> Vec<DatasetEntry> {
    assert!(!warmup_mix.is_empty() && !post_mix.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |mix: &[(usize, u32)], rng: &mut ChaCha8Rng| -> usize {
        let total: u32 = mix.iter().map(|(_, w)| w).sum();
        let mut draw = rng.gen_range(0..total);
        for (option_count, weight) in mix {
            if draw < *weight {
                return *option_count;
            }
            draw -= weight;
        }
        mix[0].0
    };
    (0..count)
        .map(|i| {
            let mix = if i < warmup_prefix {
                warmup_mix
            } else {
                post_mix
            };
            let option_count = pick(mix, &mut rng);
            let gold_index = rng.gen_range(0..option_count);
            mc_entry(i, option_count, gold_index)
        })
        .collect()
}

/// The bundled 200-query benchmark dataset (`data/synthetic_200.jsonl`).
///
/// A 40-query prefix of 4- and 6-option questions lets the credibility
/// ledger calibrate before the mixed tail (45% binary) arrives, where
/// adversaries line up on the same wrong answer and unweighted voting
/// collapses.
pub fn bundled_benchmark_dataset() -> Vec<DatasetEntry> {
    synthetic_mc_dataset(
        200,
        40,
        &[(4, 3), (6, 1)],
        &[(2, 45), (3, 10), (4, 30), (6, 15)],
        0x5eed_2025,
    )
}

/// The bundled 20-query smoke dataset (`data/synthetic_20.jsonl`): a small
/// mix of multiple-choice, numeric, and tiered free-text queries.
pub fn bundled_smoke_dataset() -> Vec<DatasetEntry> {
    let mut entries = synthetic_mc_dataset(14, 14, &[(4, 3), (6, 1)], &[(4, 1)], 0xbeef);
    for i in 0..3 {
        let value = 12.0 + 7.0 * i as f64;
        entries.push(DatasetEntry {
            query: Query {
                id: format!("n{i:04}"),
                prompt: format!("Compute the quantity for case {i}."),
                task_kind: TaskKind::Numeric,
                options: vec![],
                gold: GoldAnswer {
                    canonical: format!("{value}"),
                    accepted_alternates: vec![],
                    numeric_value: Some(value),
                    numeric_tolerance: Some(0.5),
                },
            },
            rubric: GradingRubric::numeric(),
        });
    }
    for i in 0..3 {
        entries.push(DatasetEntry {
            query: Query {
                id: format!("t{i:04}"),
                prompt: format!("Explain phenomenon {i} in one sentence."),
                task_kind: TaskKind::FreeText,
                options: vec![],
                gold: GoldAnswer {
                    canonical: format!("canonical explanation {i}"),
                    accepted_alternates: vec![format!("acceptable paraphrase {i}")],
                    numeric_value: None,
                    numeric_tolerance: None,
                },
            },
            rubric: GradingRubric::tiered(PartialBand {
                name: "partially-correct".into(),
                reward: 0.7,
            }),
        });
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_duplicates_and_unknown_fields() {
        let a = serde_json::to_string(&mc_entry(0, 4, 1)).unwrap();
        let b = serde_json::to_string(&mc_entry(0, 4, 2)).unwrap();
        let err = parse_dataset(&format!("{a}\n{b}\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));

        let err = parse_dataset(r#"{"query":{},"rubric":{},"extra":1}"#).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));

        assert!(parse_dataset("").is_err());
    }

    #[test]
    fn round_trips_through_jsonl() {
        let entries = bundled_smoke_dataset();
        let text = dataset_to_jsonl(&entries);
        let back = parse_dataset(&text).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(bundled_benchmark_dataset(), bundled_benchmark_dataset());
        let d = bundled_benchmark_dataset();
        assert_eq!(d.len(), 200);
        for entry in &d {
            entry.validate().unwrap();
        }
        // warmup prefix holds no binary queries
        for entry in &d[..40] {
            assert!(entry.query.options.len() >= 4);
        }
        // the tail mixes in a substantial binary share
        let binary = d[40..]
            .iter()
            .filter(|e| e.query.options.len() == 2)
            .count();
        assert!(binary > 50, "binary share {binary}");
    }

    #[test]
    fn smoke_dataset_covers_rubric_kinds() {
        let d = bundled_smoke_dataset();
        assert_eq!(d.len(), 20);
        for entry in &d {
            entry.validate().unwrap();
        }
        assert!(d.iter().any(|e| e.rubric.kind == RubricKind::Exact));
        assert!(d.iter().any(|e| e.rubric.kind == RubricKind::Numeric));
        assert!(d.iter().any(|e| e.rubric.kind == RubricKind::Tiered));
    }
}
