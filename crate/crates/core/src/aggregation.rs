//! Output fusion: majority votes (weighted and unweighted), the
//! credibility-weighted centroid with nearest-answer selection, the
//! pairwise-similarity ensemble, a single-agent baseline, and the
//! judge-backed coordinator.
//!
//! The centroid is `(1/N) * sum_i CrS_i * v(o_i)` with raw credibility
//! weights; selection by cosine distance makes the result invariant to
//! positive rescaling of the weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{JudgeAggregateRequest, JudgeCandidate, JudgeChannel};
use crate::model::{normalize_answer, AgentId, AgentOutput, AggregatorKind};
use crate::scoring::CredibilityLedger;

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Fixed-dimension embedding of an answer text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        EmbeddingVector { components }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Empty or punctuation-only texts embed to the zero vector; callers
    /// treat it as maximally distant from everything.
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }
}

/// Deterministic feature-hash embedder: tokens are hashed into one of `dim`
/// buckets with a signed contribution, then the vector is normalized to
/// unit length. Identical texts always map to identical vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedder {
    dim: usize,
    seed: u64,
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder {
            dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

impl Embedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Embedder { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn hash_token(&self, token: &str) -> u64 {
        // FNV-1a, offset perturbed by the hashing seed
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET ^ self.seed;
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(PRIME);
        }
        h
    }

    pub fn embed(&self, answer: &str) -> EmbeddingVector {
        let mut v = vec![0.0f64; self.dim];
        for token in answer
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = self.hash_token(token);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        EmbeddingVector { components: v }
    }

    /// Embedding of the normalized answer text, the form all aggregators
    /// compare by.
    pub fn embed_normalized(&self, answer: &str) -> EmbeddingVector {
        self.embed(&normalize_answer(answer))
    }
}

/// Cosine similarity; zero-norm vectors are treated as dissimilar to
/// everything (similarity 0).
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.components.iter().zip(&b.components) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    1.0 - cosine_similarity(a, b)
}

/// Result of fusing a round's outputs into one final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationResult {
    #[serde(rename = "final")]
    pub final_answer: String,
    pub chosen_agent: Option<AgentId>,
    /// Per-agent score in the sense of the aggregator that produced this
    /// result (group weight, distance, similarity sum, ...).
    pub per_candidate_score: BTreeMap<usize, f64>,
}

fn require_nonempty(outputs: &[AgentOutput]) -> Result<()> {
    if outputs.is_empty() {
        Err(Error::NoOutputs)
    } else {
        Ok(())
    }
}

/// Groups outputs by normalized answer, scores each group with the supplied
/// per-agent weight, and picks the heaviest group; ties go to the group
/// containing the lowest agent index.
fn grouped_vote<W>(outputs: &[AgentOutput], weight_of: W) -> Result<AggregationResult>
where
    W: Fn(usize) -> Result<f64>,
{
    require_nonempty(outputs)?;
    struct Group {
        weight: f64,
        min_index: usize,
        representative: String,
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for output in outputs {
        let idx = output.agent.index;
        let w = weight_of(idx)?;
        let key = normalize_answer(&output.answer);
        let entry = groups.entry(key).or_insert(Group {
            weight: 0.0,
            min_index: idx,
            representative: output.answer.clone(),
        });
        entry.weight += w;
        if idx < entry.min_index {
            entry.min_index = idx;
            entry.representative = output.answer.clone();
        }
    }

    let winner = groups
        .values()
        .fold(None::<&Group>, |best, g| match best {
            None => Some(g),
            Some(b) if g.weight > b.weight => Some(g),
            Some(b) if g.weight == b.weight && g.min_index < b.min_index => Some(g),
            Some(b) => Some(b),
        })
        .expect("nonempty outputs imply a group");

    let chosen = outputs
        .iter()
        .find(|o| o.agent.index == winner.min_index)
        .expect("winning group references an output");

    let per_candidate_score = outputs
        .iter()
        .map(|o| {
            let key = normalize_answer(&o.answer);
            (o.agent.index, groups[&key].weight)
        })
        .collect();

    Ok(AggregationResult {
        final_answer: winner.representative.clone(),
        chosen_agent: Some(chosen.agent.clone()),
        per_candidate_score,
    })
}

/// Unweighted plurality vote.
pub fn majority(outputs: &[AgentOutput]) -> Result<AggregationResult> {
    grouped_vote(outputs, |_| Ok(1.0))
}

/// Plurality vote with credibility weights: the answer backed by the largest
/// total CrS wins.
pub fn weighted_majority(
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
) -> Result<AggregationResult> {
    grouped_vote(outputs, |idx| {
        ledger.crs(idx).ok_or(Error::MissingCrs { agent: idx })
    })
}

/// Weighted mean of embeddings: `sum(weights[i] * embeddings[i]) / N`.
pub fn centroid_of(embeddings: &[EmbeddingVector], weights: &[f64]) -> EmbeddingVector {
    debug_assert_eq!(embeddings.len(), weights.len());
    let dim = embeddings.first().map_or(0, EmbeddingVector::dim);
    let mut acc = vec![0.0f64; dim];
    for (e, w) in embeddings.iter().zip(weights) {
        for (a, c) in acc.iter_mut().zip(e.components()) {
            *a += w * c;
        }
    }
    let n = embeddings.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    EmbeddingVector { components: acc }
}

/// Credibility-weighted centroid of the outputs' embeddings. Weights are the
/// raw CrS values of each output's agent, not normalized to sum one.
pub fn crs_centroid(
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
    embedder: &Embedder,
) -> Result<EmbeddingVector> {
    require_nonempty(outputs)?;
    let mut embeddings = Vec::with_capacity(outputs.len());
    let mut weights = Vec::with_capacity(outputs.len());
    for output in outputs {
        let idx = output.agent.index;
        weights.push(ledger.crs(idx).ok_or(Error::MissingCrs { agent: idx })?);
        embeddings.push(embedder.embed_normalized(&output.answer));
    }
    Ok(centroid_of(&embeddings, &weights))
}

/// Picks the output whose embedding lies nearest (cosine distance) to the
/// centroid; ties go to the lowest agent index.
pub fn select_nearest(
    outputs: &[AgentOutput],
    centroid: &EmbeddingVector,
    embedder: &Embedder,
) -> Result<AggregationResult> {
    require_nonempty(outputs)?;
    let mut per_candidate_score = BTreeMap::new();
    let mut best: Option<(f64, &AgentOutput)> = None;
    for output in outputs {
        let d = cosine_distance(&embedder.embed_normalized(&output.answer), centroid);
        per_candidate_score.insert(output.agent.index, d);
        best = match best {
            None => Some((d, output)),
            Some((bd, _)) if d < bd => Some((d, output)),
            Some((bd, bo)) if d == bd && output.agent.index < bo.agent.index => Some((d, output)),
            other => other,
        };
    }
    let (_, chosen) = best.expect("nonempty outputs");
    Ok(AggregationResult {
        final_answer: chosen.answer.clone(),
        chosen_agent: Some(chosen.agent.clone()),
        per_candidate_score,
    })
}

/// Centroid-based aggregation end to end: CrS-weighted centroid, then
/// nearest-answer selection.
pub fn crs_centroid_select(
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
    embedder: &Embedder,
) -> Result<AggregationResult> {
    let centroid = crs_centroid(outputs, ledger, embedder)?;
    select_nearest(outputs, &centroid, embedder)
}

/// Picks the output with the largest total pairwise cosine similarity to its
/// peers; ties go to the lowest agent index.
pub fn similarity_ensemble(
    outputs: &[AgentOutput],
    embedder: &Embedder,
) -> Result<AggregationResult> {
    if outputs.len() < 2 {
        return Err(Error::TooFewOutputs);
    }
    let embeddings: Vec<EmbeddingVector> = outputs
        .iter()
        .map(|o| embedder.embed_normalized(&o.answer))
        .collect();
    let mut per_candidate_score = BTreeMap::new();
    let mut best: Option<(f64, &AgentOutput)> = None;
    for (i, output) in outputs.iter().enumerate() {
        let mut total = 0.0;
        for (j, other) in embeddings.iter().enumerate() {
            if i != j {
                total += cosine_similarity(&embeddings[i], other);
            }
        }
        per_candidate_score.insert(output.agent.index, total);
        best = match best {
            None => Some((total, output)),
            Some((bt, _)) if total > bt => Some((total, output)),
            Some((bt, bo)) if total == bt && output.agent.index < bo.agent.index => {
                Some((total, output))
            }
            other => other,
        };
    }
    let (_, chosen) = best.expect("len >= 2");
    Ok(AggregationResult {
        final_answer: chosen.answer.clone(),
        chosen_agent: Some(chosen.agent.clone()),
        per_candidate_score,
    })
}

/// Single-agent baseline: the designated agent's answer is the team answer.
pub fn single_agent(outputs: &[AgentOutput], agent_index: usize) -> Result<AggregationResult> {
    require_nonempty(outputs)?;
    let chosen = outputs
        .iter()
        .find(|o| o.agent.index == agent_index)
        .ok_or(Error::MissingAgent { agent: agent_index })?;
    let per_candidate_score = outputs
        .iter()
        .map(|o| {
            (
                o.agent.index,
                if o.agent.index == agent_index {
                    1.0
                } else {
                    0.0
                },
            )
        })
        .collect();
    Ok(AggregationResult {
        final_answer: chosen.answer.clone(),
        chosen_agent: Some(chosen.agent.clone()),
        per_candidate_score,
    })
}

/// Sends the candidates with their credibility scores to the judge channel
/// and adopts its selection. When the reply matches a candidate's answer,
/// that agent is recorded as chosen and its verbatim answer is used.
pub fn coordinator_aggregate(
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
    query_prompt: &str,
    judge: &dyn JudgeChannel,
) -> Result<AggregationResult> {
    require_nonempty(outputs)?;
    let mut candidates = Vec::with_capacity(outputs.len());
    for output in outputs {
        let idx = output.agent.index;
        candidates.push(JudgeCandidate {
            agent: idx,
            answer: output.answer.clone(),
            crs: ledger.crs(idx).ok_or(Error::MissingCrs { agent: idx })?,
        });
    }
    let request = JudgeAggregateRequest {
        candidates,
        query: query_prompt.to_string(),
    };
    let reply = judge.aggregate(&request)?;

    let normalized_final = normalize_answer(&reply.final_answer);
    let chosen = outputs
        .iter()
        .filter(|o| normalize_answer(&o.answer) == normalized_final)
        .min_by_key(|o| o.agent.index);

    let per_candidate_score = outputs
        .iter()
        .map(|o| {
            let crs = ledger.crs(o.agent.index).unwrap_or(0.0);
            (o.agent.index, crs)
        })
        .collect();

    Ok(match chosen {
        Some(output) => AggregationResult {
            final_answer: output.answer.clone(),
            chosen_agent: Some(output.agent.clone()),
            per_candidate_score,
        },
        None => AggregationResult {
            final_answer: reply.final_answer,
            chosen_agent: None,
            per_candidate_score,
        },
    })
}

/// Dispatches one aggregator kind over a set of outputs. This is the single
/// fusion entry point used by the round harness and by Shapley coalition
/// evaluation.
pub fn aggregate_with(
    kind: AggregatorKind,
    outputs: &[AgentOutput],
    ledger: &CredibilityLedger,
    embedder: &Embedder,
    query_prompt: &str,
    judge: &dyn JudgeChannel,
    single_agent_index: usize,
) -> Result<AggregationResult> {
    match kind {
        AggregatorKind::Majority => majority(outputs),
        AggregatorKind::WeightedMajority => weighted_majority(outputs, ledger),
        AggregatorKind::CrsCentroid => crs_centroid_select(outputs, ledger, embedder),
        AggregatorKind::SimilarityEnsemble => {
            if outputs.len() == 1 {
                // a singleton coalition has no peers to compare against
                single_agent(outputs, outputs[0].agent.index)
            } else {
                similarity_ensemble(outputs, embedder)
            }
        }
        AggregatorKind::Coordinator => coordinator_aggregate(outputs, ledger, query_prompt, judge),
        AggregatorKind::SingleAgent => single_agent(outputs, single_agent_index),
    }
}
