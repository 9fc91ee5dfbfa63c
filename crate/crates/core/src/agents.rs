//! Agent behaviors: faithful, adversarial (consistent and subtle),
//! persuadable, scripted, and a remote-endpoint adapter. All synthetic
//! behaviors are deterministic given the profile, the query, and the seeded
//! stream they are handed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_answer, AgentId, AgentOutput, Query, TaskKind};
use crate::remote::{self, EndpointDescriptor};

/// What an agent does with a query and with its neighbors' messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentProfile {
    /// Answers the gold with probability `accuracy`, otherwise a uniformly
    /// random wrong answer. Never changes its mind.
    Faithful { accuracy: f64 },
    /// Always answers its designated wrong option and never budges.
    AdversarialConsistent,
    /// Answers a near-miss wrong option; during revision it may flip to the
    /// correct answer with probability `flip_prob` (and then stays flipped
    /// for the rest of the round).
    AdversarialSubtle { flip_prob: f64, numeric_offset: f64 },
    /// Drafts the gold answer, then adopts the modal neighbor answer once at
    /// least `threshold` neighbors disagree with it.
    Persuadable { threshold: usize },
    /// Replays a fixed sequence of answers across respond/revise calls.
    Scripted { script: Vec<String> },
    /// Delegates respond/revise to a chat-completion HTTP endpoint.
    Remote { endpoint: EndpointDescriptor },
}

impl AgentProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            AgentProfile::Faithful { accuracy } => {
                if !accuracy.is_finite() || !(0.0..=1.0).contains(accuracy) {
                    return Err(Error::invalid_field("accuracy", "must lie in [0, 1]"));
                }
            }
            AgentProfile::AdversarialSubtle {
                flip_prob,
                numeric_offset,
            } => {
                if !flip_prob.is_finite() || !(0.0..=1.0).contains(flip_prob) {
                    return Err(Error::invalid_field("flip_prob", "must lie in [0, 1]"));
                }
                if !numeric_offset.is_finite() || *numeric_offset <= 0.0 {
                    return Err(Error::invalid_field("numeric_offset", "must be positive"));
                }
            }
            AgentProfile::Persuadable { threshold } => {
                if *threshold == 0 {
                    return Err(Error::invalid_field("threshold", "must be positive"));
                }
            }
            AgentProfile::AdversarialConsistent
            | AgentProfile::Scripted { .. }
            | AgentProfile::Remote { .. } => {}
        }
        Ok(())
    }

    pub fn is_adversarial(&self) -> bool {
        matches!(
            self,
            AgentProfile::AdversarialConsistent | AgentProfile::AdversarialSubtle { .. }
        )
    }
}

/// An agent slot: identity, behavior, and behavior-private memory. The
/// round memory is wiped between queries; the script cursor persists for
/// the lifetime of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub profile: AgentProfile,
    script_pos: usize,
    round_memory: BTreeMap<String, String>,
}

impl AgentState {
    pub fn new(id: AgentId, profile: AgentProfile) -> Self {
        AgentState {
            id,
            profile,
            script_pos: 0,
            round_memory: BTreeMap::new(),
        }
    }

    /// Clears per-round memory; call at the start of every query.
    pub fn reset_round_memory(&mut self) {
        self.round_memory.clear();
    }
}

/// A neighbor's current answer, as delivered during one interaction phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborMessage {
    pub sender: AgentId,
    pub content: String,
    pub phase_index: usize,
}

const GOLD_MEMORY_KEY: &str = "gold";
const FLIPPED_MEMORY_KEY: &str = "flipped";

fn gold_text(query: &Query) -> String {
    match query.task_kind {
        TaskKind::MultipleChoice => query.gold.canonical.trim().to_uppercase(),
        _ => query.gold.canonical.trim().to_string(),
    }
}

/// A uniformly random wrong answer for the query.
fn random_wrong(query: &Query, rng: &mut impl Rng) -> String {
    match query.task_kind {
        TaskKind::MultipleChoice => {
            let wrongs = query.wrong_options();
            if wrongs.is_empty() {
                gold_text(query)
            } else {
                wrongs[rng.gen_range(0..wrongs.len())].trim().to_uppercase()
            }
        }
        TaskKind::Numeric => {
            let gold = query.gold.numeric_value.unwrap_or(0.0);
            let tol = query.gold.numeric_tolerance.unwrap_or(0.0);
            let magnitude = (0.25 + 0.5 * rng.gen::<f64>()) * gold.abs().max(1.0);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            format!("{}", gold + sign * (tol + magnitude))
        }
        TaskKind::FreeText => format!("uncertain guess {}", rng.gen_range(0..1_000_000)),
    }
}

/// The wrong option this agent is committed to. Agents spread across the
/// wrong options by index, so a query with several wrong options splits the
/// adversaries while a binary query lines them all up on the same answer.
fn designated_wrong(query: &Query, agent_index: usize) -> String {
    match query.task_kind {
        TaskKind::MultipleChoice => {
            let wrongs = query.wrong_options();
            if wrongs.is_empty() {
                gold_text(query)
            } else {
                wrongs[agent_index % wrongs.len()].trim().to_uppercase()
            }
        }
        TaskKind::Numeric => {
            let gold = query.gold.numeric_value.unwrap_or(0.0);
            let tol = query.gold.numeric_tolerance.unwrap_or(0.0);
            let scale = 0.1 * (agent_index + 1) as f64;
            let candidate = gold * (1.0 + scale);
            if (candidate - gold).abs() > tol {
                format!("{candidate}")
            } else {
                format!("{}", gold + (tol + 1.0) * (agent_index + 1) as f64)
            }
        }
        TaskKind::FreeText => format!("counterclaim {agent_index}"),
    }
}

/// A near-miss wrong answer: a fixed wrong letter for multiple choice, the
/// gold perturbed by a relative offset for numeric tasks.
fn near_miss(query: &Query, agent_index: usize, offset: f64) -> String {
    match query.task_kind {
        TaskKind::MultipleChoice | TaskKind::FreeText => designated_wrong(query, agent_index),
        TaskKind::Numeric => {
            let gold = query.gold.numeric_value.unwrap_or(0.0);
            let tol = query.gold.numeric_tolerance.unwrap_or(0.0);
            let sign = if agent_index.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            let candidate = gold * (1.0 + sign * offset);
            if (candidate - gold).abs() > tol {
                format!("{candidate}")
            } else {
                format!("{}", gold + sign * (tol + offset * gold.abs().max(1.0)))
            }
        }
    }
}

/// Drafts the agent's phase-0 answer for a query.
pub fn respond(state: &mut AgentState, query: &Query, rng: &mut impl Rng) -> Result<AgentOutput> {
    let text = match &state.profile {
        AgentProfile::Faithful { accuracy } => {
            if rng.gen_bool(*accuracy) {
                gold_text(query)
            } else {
                random_wrong(query, rng)
            }
        }
        AgentProfile::AdversarialConsistent => designated_wrong(query, state.id.index),
        AgentProfile::AdversarialSubtle { numeric_offset, .. } => {
            let text = near_miss(query, state.id.index, *numeric_offset);
            state
                .round_memory
                .insert(GOLD_MEMORY_KEY.to_string(), gold_text(query));
            text
        }
        AgentProfile::Persuadable { .. } => gold_text(query),
        AgentProfile::Scripted { script } => {
            let entry = script.get(state.script_pos).ok_or(Error::ScriptExhausted {
                agent: state.id.index,
            })?;
            state.script_pos += 1;
            entry.clone()
        }
        AgentProfile::Remote { endpoint } => remote::remote_respond(endpoint, query)?,
    };
    Ok(AgentOutput::initial(state.id.clone(), text))
}

/// Most frequent inbox answer; ties go to the earliest (lowest-index)
/// sender's answer.
fn modal_neighbor_answer(inbox: &[NeighborMessage]) -> Option<String> {
    use std::collections::BTreeMap;
    struct Tally {
        count: usize,
        min_sender: usize,
        representative: String,
    }
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    for msg in inbox {
        let key = normalize_answer(&msg.content);
        let entry = tallies.entry(key).or_insert(Tally {
            count: 0,
            min_sender: msg.sender.index,
            representative: msg.content.clone(),
        });
        entry.count += 1;
        if msg.sender.index < entry.min_sender {
            entry.min_sender = msg.sender.index;
            entry.representative = msg.content.clone();
        }
    }
    tallies
        .values()
        .fold(None::<&Tally>, |best, t| match best {
            None => Some(t),
            Some(b) if t.count > b.count => Some(t),
            Some(b) if t.count == b.count && t.min_sender < b.min_sender => Some(t),
            Some(b) => Some(b),
        })
        .map(|t| t.representative.clone())
}

/// Applies one revision phase: the returned output extends `own` by exactly
/// one history entry.
pub fn revise(
    state: &mut AgentState,
    own: &AgentOutput,
    inbox: &[NeighborMessage],
    rng: &mut impl Rng,
) -> Result<AgentOutput> {
    debug_assert_eq!(own.agent, state.id, "output must belong to this agent");
    let next = match &state.profile {
        AgentProfile::Faithful { .. } | AgentProfile::AdversarialConsistent => own.answer.clone(),
        AgentProfile::Persuadable { threshold } => {
            let own_norm = normalize_answer(&own.answer);
            let disagreeing = inbox
                .iter()
                .filter(|m| normalize_answer(&m.content) != own_norm)
                .count();
            if disagreeing >= *threshold {
                modal_neighbor_answer(inbox).unwrap_or_else(|| own.answer.clone())
            } else {
                own.answer.clone()
            }
        }
        AgentProfile::AdversarialSubtle { flip_prob, .. } => {
            let already_flipped = state.round_memory.contains_key(FLIPPED_MEMORY_KEY);
            if already_flipped {
                own.answer.clone()
            } else if rng.gen_bool(*flip_prob) {
                state
                    .round_memory
                    .insert(FLIPPED_MEMORY_KEY.to_string(), "1".to_string());
                state
                    .round_memory
                    .get(GOLD_MEMORY_KEY)
                    .cloned()
                    .unwrap_or_else(|| own.answer.clone())
            } else {
                own.answer.clone()
            }
        }
        AgentProfile::Scripted { script } => {
            // exhausted scripts hold the last answer instead of erroring
            match script.get(state.script_pos) {
                Some(entry) => {
                    state.script_pos += 1;
                    entry.clone()
                }
                None => own.answer.clone(),
            }
        }
        AgentProfile::Remote { endpoint } => remote::remote_revise(endpoint, own, inbox)?,
    };
    Ok(own.revised(next))
}

/// Wraps a remote chat endpoint in an agent slot.
pub fn make_remote_agent(id: AgentId, endpoint: EndpointDescriptor) -> AgentState {
    AgentState::new(id, AgentProfile::Remote { endpoint })
}
