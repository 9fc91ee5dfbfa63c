//! Communication graphs and the peer-interaction executor.
//!
//! Phases are synchronous: every agent reads its neighbors' answers from the
//! previous phase, then all revisions apply at once. The message log is
//! assembled in (phase, sender, receiver) order regardless of execution
//! order.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{revise, AgentState, NeighborMessage};
use crate::error::{Error, Result};
use crate::model::{AgentOutput, TopologyKind};
use crate::scoring::CredibilityLedger;

/// Undirected communication graph over agent indices `0..node_count`.
/// Edges are stored as ordered pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyGraph {
    pub node_count: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub kind: TopologyKind,
}

impl TopologyGraph {
    pub fn realized_edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor indices of `node`, ascending.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == node {
                    Some(b)
                } else if b == node {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.edges {
            if a >= b {
                return Err(Error::Topology(format!("edge ({a}, {b}) not ordered")));
            }
            if b >= self.node_count {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) outside {} nodes",
                    self.node_count
                )));
            }
        }
        match self.kind {
            TopologyKind::Edgeless => {
                if !self.edges.is_empty() {
                    return Err(Error::Topology("edgeless graph has edges".into()));
                }
            }
            TopologyKind::CrsChain => {
                if self.edges.len() != self.node_count.saturating_sub(1) {
                    return Err(Error::Topology("chain must have N-1 edges".into()));
                }
            }
            TopologyKind::Ring => {
                if self.edges.len() != self.node_count {
                    return Err(Error::Topology("ring must have N edges".into()));
                }
            }
            TopologyKind::Complete => {
                let want = self.node_count * (self.node_count - 1) / 2;
                if self.edges.len() != want {
                    return Err(Error::Topology("complete graph edge count wrong".into()));
                }
            }
            TopologyKind::SiaRandom => {}
        }
        Ok(())
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Agent indices sorted by strictly descending credibility, ties broken by
/// ascending index.
pub fn crs_descending_order(n: usize, ledger: &CredibilityLedger) -> Result<Vec<usize>> {
    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            ledger
                .crs(i)
                .map(|c| (i, c))
                .ok_or(Error::MissingCrs { agent: i })
        })
        .collect::<Result<_>>()?;
    order.sort_by(|(ia, ca), (ib, cb)| {
        cb.partial_cmp(ca)
            .expect("credibility scores are finite")
            .then(ia.cmp(ib))
    });
    Ok(order.into_iter().map(|(i, _)| i).collect())
}

/// Builds the round's communication graph.
///
/// `sia-random` draws `m` pairs with replacement from the N-choose-2 pair
/// set and collapses duplicates, so the realized edge count is at most `m`.
/// `crs-chain` is a path visiting agents in descending credibility order.
pub fn generate_topology(
    kind: TopologyKind,
    n: usize,
    m: usize,
    ledger: &CredibilityLedger,
    rng: &mut impl Rng,
) -> Result<TopologyGraph> {
    let min_nodes = match kind {
        TopologyKind::Edgeless => 1,
        TopologyKind::Ring => 3,
        _ => 2,
    };
    if n < min_nodes {
        return Err(Error::Topology(format!(
            "{kind:?} needs at least {min_nodes} agents, got {n}"
        )));
    }

    let edges: BTreeSet<(usize, usize)> = match kind {
        TopologyKind::Edgeless => BTreeSet::new(),
        TopologyKind::SiaRandom => {
            if m == 0 {
                return Err(Error::Topology("sia-random needs at least one draw".into()));
            }
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect();
            let mut set = BTreeSet::new();
            for _ in 0..m {
                set.insert(pairs[rng.gen_range(0..pairs.len())]);
            }
            set
        }
        TopologyKind::CrsChain => {
            let order = crs_descending_order(n, ledger)?;
            order.windows(2).map(|w| ordered(w[0], w[1])).collect()
        }
        TopologyKind::Ring => (0..n).map(|i| ordered(i, (i + 1) % n)).collect(),
        TopologyKind::Complete => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
    };

    let graph = TopologyGraph {
        node_count: n,
        edges,
        kind,
    };
    graph.validate()?;
    Ok(graph)
}

/// One delivered message, as recorded in the round transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLogEntry {
    pub phase: usize,
    pub sender: usize,
    pub receiver: usize,
    pub content: String,
}

/// Runs `phases` synchronous interaction rounds over the graph.
///
/// Each phase delivers every neighbor's current answer as a message, then
/// applies all revisions against the pre-phase snapshot. Agents with an
/// empty inbox are not revised, so an edgeless graph returns the initial
/// outputs untouched. `rngs` supplies each agent's private stream.
pub fn run_interaction<R: Rng>(
    graph: &TopologyGraph,
    agents: &mut [AgentState],
    initial: &[AgentOutput],
    phases: usize,
    rngs: &mut [R],
) -> Result<(Vec<AgentOutput>, Vec<MessageLogEntry>)> {
    let n = graph.node_count;
    if agents.len() != n || initial.len() != n || rngs.len() != n {
        return Err(Error::Topology(format!(
            "graph has {n} nodes but {} agents, {} outputs, {} rng streams",
            agents.len(),
            initial.len(),
            rngs.len()
        )));
    }

    let mut current: Vec<AgentOutput> = initial.to_vec();
    let mut log: Vec<MessageLogEntry> = Vec::new();

    for phase in 0..phases {
        let snapshot: Vec<String> = current.iter().map(|o| o.answer.clone()).collect();

        let mut inboxes: Vec<Vec<NeighborMessage>> = vec![Vec::new(); n];
        for sender in 0..n {
            for receiver in graph.neighbors(sender) {
                log.push(MessageLogEntry {
                    phase,
                    sender,
                    receiver,
                    content: snapshot[sender].clone(),
                });
                inboxes[receiver].push(NeighborMessage {
                    sender: agents[sender].id.clone(),
                    content: snapshot[sender].clone(),
                    phase_index: phase,
                });
            }
        }

        for i in 0..n {
            if inboxes[i].is_empty() {
                continue;
            }
            current[i] = revise(&mut agents[i], &current[i], &inboxes[i], &mut rngs[i])?;
        }
    }

    Ok((current, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentProfile;
    use crate::model::AgentId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_ledger(n: usize) -> CredibilityLedger {
        CredibilityLedger::new(n, 0.5, true).unwrap()
    }

    fn ledger_with(crs: &[f64]) -> CredibilityLedger {
        CredibilityLedger::from_snapshot(crs.iter().copied().enumerate().collect(), 0, true)
    }

    fn team(profiles: Vec<AgentProfile>) -> Vec<AgentState> {
        profiles
            .into_iter()
            .enumerate()
            .map(|(i, p)| AgentState::new(AgentId::new(i, format!("agent-{i}")), p))
            .collect()
    }

    fn rngs(n: usize) -> Vec<ChaCha8Rng> {
        (0..n)
            .map(|i| ChaCha8Rng::seed_from_u64(i as u64))
            .collect()
    }

    fn outputs(answers: &[&str]) -> Vec<AgentOutput> {
        answers
            .iter()
            .enumerate()
            .map(|(i, a)| AgentOutput::initial(AgentId::new(i, format!("agent-{i}")), *a))
            .collect()
    }

    #[test]
    fn edgeless_has_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g =
            generate_topology(TopologyKind::Edgeless, 5, 0, &uniform_ledger(5), &mut rng).unwrap();
        assert!(g.edges.is_empty());
        // single-agent teams are fine without communication
        assert!(
            generate_topology(TopologyKind::Edgeless, 1, 0, &uniform_ledger(1), &mut rng).is_ok()
        );
    }

    #[test]
    fn sia_draws_collapse_duplicates() {
        let ledger = uniform_ledger(5);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_topology(TopologyKind::SiaRandom, 5, 6, &ledger, &mut rng).unwrap();
            assert!(g.realized_edge_count() <= 6);
            assert!(g.realized_edge_count() >= 1);
            for &(a, b) in &g.edges {
                assert!(a < b && b < 5);
            }
        }
    }

    #[test]
    fn crs_chain_follows_descending_credibility() {
        let ledger = ledger_with(&[0.3, 0.9, 0.5, 0.5, 0.1]);
        let order = crs_descending_order(5, &ledger).unwrap();
        assert_eq!(order, vec![1, 2, 3, 0, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generate_topology(TopologyKind::CrsChain, 5, 0, &ledger, &mut rng).unwrap();
        let expected: BTreeSet<(usize, usize)> =
            [(1, 2), (2, 3), (0, 3), (0, 4)].into_iter().collect();
        assert_eq!(g.edges, expected);
    }

    #[test]
    fn ring_and_complete_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generate_topology(TopologyKind::Ring, 5, 0, &uniform_ledger(5), &mut rng).unwrap();
        assert_eq!(g.edges.len(), 5);
        assert!(g.neighbors(0).len() == 2);
        assert!(generate_topology(TopologyKind::Ring, 2, 0, &uniform_ledger(2), &mut rng).is_err());

        let g =
            generate_topology(TopologyKind::Complete, 5, 0, &uniform_ledger(5), &mut rng).unwrap();
        assert_eq!(g.edges.len(), 10);
    }

    #[test]
    fn edgeless_interaction_is_identity() {
        let g = TopologyGraph {
            node_count: 3,
            edges: BTreeSet::new(),
            kind: TopologyKind::Edgeless,
        };
        let mut agents = team(vec![AgentProfile::Persuadable { threshold: 1 }; 3]);
        let initial = outputs(&["A", "B", "C"]);
        let mut streams = rngs(3);
        let (finals, log) = run_interaction(&g, &mut agents, &initial, 3, &mut streams).unwrap();
        assert_eq!(finals, initial, "no messages, no revisions");
        assert!(log.is_empty());
    }

    #[test]
    fn single_link_persuades() {
        let g = TopologyGraph {
            node_count: 2,
            edges: [(0, 1)].into_iter().collect(),
            kind: TopologyKind::SiaRandom,
        };
        let mut agents = team(vec![
            AgentProfile::AdversarialConsistent,
            AgentProfile::Persuadable { threshold: 1 },
        ]);
        let initial = outputs(&["C", "B"]);
        let mut streams = rngs(2);
        let (finals, log) = run_interaction(&g, &mut agents, &initial, 1, &mut streams).unwrap();
        assert_eq!(finals[1].answer, "C");
        assert_eq!(finals[1].revision_history.len(), 2);
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn complete_graph_message_count() {
        let g = TopologyGraph {
            node_count: 5,
            edges: (0..5)
                .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
                .collect(),
            kind: TopologyKind::Complete,
        };
        let mut agents = team(vec![AgentProfile::Faithful { accuracy: 1.0 }; 5]);
        let initial = outputs(&["A", "B", "C", "D", "E"]);
        let mut streams = rngs(5);
        let (_, log) = run_interaction(&g, &mut agents, &initial, 2, &mut streams).unwrap();
        // phases * sum of degrees = 2 * 5 * 4
        assert_eq!(log.len(), 40);
        for phase in 0..2 {
            for receiver in 0..5 {
                let got = log
                    .iter()
                    .filter(|e| e.phase == phase && e.receiver == receiver)
                    .count();
                assert_eq!(got, 4);
            }
        }
    }

    #[test]
    fn delivery_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g =
            generate_topology(TopologyKind::SiaRandom, 5, 6, &uniform_ledger(5), &mut rng).unwrap();
        let mut agents = team(vec![AgentProfile::Faithful { accuracy: 1.0 }; 5]);
        let initial = outputs(&["A", "B", "C", "D", "E"]);
        let mut streams = rngs(5);
        let (_, log) = run_interaction(&g, &mut agents, &initial, 2, &mut streams).unwrap();
        for entry in &log {
            let mirrored = log.iter().any(|e| {
                e.phase == entry.phase && e.sender == entry.receiver && e.receiver == entry.sender
            });
            assert!(mirrored, "no mirror for {entry:?}");
            assert!(g.edges.contains(&ordered(entry.sender, entry.receiver)));
        }
    }

    #[test]
    fn log_is_ordered_by_phase_sender_receiver() {
        let g = TopologyGraph {
            node_count: 4,
            edges: [(0, 1), (0, 3), (1, 2)].into_iter().collect(),
            kind: TopologyKind::SiaRandom,
        };
        let mut agents = team(vec![AgentProfile::Faithful { accuracy: 1.0 }; 4]);
        let initial = outputs(&["A", "B", "C", "D"]);
        let mut streams = rngs(4);
        let (_, log) = run_interaction(&g, &mut agents, &initial, 2, &mut streams).unwrap();
        let keys: Vec<(usize, usize, usize)> = log
            .iter()
            .map(|e| (e.phase, e.sender, e.receiver))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
    }

    // Revisions must depend only on the previous phase's answers: a chain of
    // persuadables seeded with one dissenting answer moves exactly one hop
    // per phase.
    #[test]
    fn phase_synchrony_propagates_one_hop_per_phase() {
        let g = TopologyGraph {
            node_count: 4,
            edges: [(0, 1), (1, 2), (2, 3)].into_iter().collect(),
            kind: TopologyKind::SiaRandom,
        };
        let mut agents = team(vec![AgentProfile::Persuadable { threshold: 1 }; 4]);
        let initial = outputs(&["X", "Y", "Y", "Y"]);
        let mut streams = rngs(4);
        let (after_one, _) = run_interaction(&g, &mut agents, &initial, 1, &mut streams).unwrap();
        // agent 1 hears {X, Y}: tie on counts goes to the lower sender (0),
        // so it adopts X; agent 2 still heard only Y answers.
        assert_eq!(after_one[1].answer, "X");
        assert_eq!(after_one[2].answer, "Y");
        assert_eq!(after_one[3].answer, "Y");
    }

    #[test]
    fn chain_adjacent_crs_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let crs: Vec<f64> = (0..6)
                .map(|i| ((case * 7 + i * 3) % 11) as f64 / 10.0)
                .collect();
            let ledger = ledger_with(&crs);
            let g = generate_topology(TopologyKind::CrsChain, 6, 0, &ledger, &mut rng).unwrap();
            assert_eq!(g.edges.len(), 5);
            let order = crs_descending_order(6, &ledger).unwrap();
            for w in order.windows(2) {
                assert!(ledger.crs(w[0]).unwrap() >= ledger.crs(w[1]).unwrap());
                assert!(g.edges.contains(&ordered(w[0], w[1])));
            }
        }
    }
}
