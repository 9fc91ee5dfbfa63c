//! Cross-module invariants, mostly property-style over seeded streams.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use credsim_core::*;

fn mc_query(gold_idx: usize, options: &[&str]) -> Query {
    Query {
        id: "q".into(),
        prompt: "pick".into(),
        task_kind: TaskKind::MultipleChoice,
        options: options.iter().map(|s| s.to_string()).collect(),
        gold: GoldAnswer::exact(options[gold_idx]),
    }
}

fn outputs_from(answers: &[String]) -> Vec<AgentOutput> {
    answers
        .iter()
        .enumerate()
        .map(|(i, a)| AgentOutput::initial(AgentId::new(i, format!("agent-{i}")), a.clone()))
        .collect()
}

proptest! {
    #[test]
    fn config_serde_round_trip(
        team_size in 1usize..10,
        adversary_count in 0usize..10,
        eta in 1e-6f64..1.0,
        initial in 0.0f64..1.0,
        seed in any::<u64>(),
        clamp in any::<bool>(),
    ) {
        let config = ExperimentConfig {
            team_size,
            adversary_count: adversary_count.min(team_size),
            learning_rate: eta,
            initial_crs: initial,
            rng_seed: seed,
            crs_clamp: clamp,
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(config, back);
    }

    #[test]
    fn reward_never_escapes_unit_interval(v in -100.0f64..100.0) {
        let clamped = RewardValue::clamped(v).value();
        prop_assert!((-1.0..=1.0).contains(&clamped));
        match RewardValue::new(v) {
            Ok(r) => prop_assert!((-1.0..=1.0).contains(&r.value())),
            Err(_) => prop_assert!(!(-1.0..=1.0).contains(&v)),
        }
    }

    #[test]
    fn normalization_is_idempotent(s in "\\PC*") {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once);
    }
}

#[test]
fn faithful_agents_ignore_any_inbox() {
    let options = ["A", "B", "C", "D"];
    let query = mc_query(1, &options);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..200 {
        let mut agent = AgentState::new(
            AgentId::new(0, "faithful-0"),
            AgentProfile::Faithful { accuracy: 1.0 },
        );
        let own = respond(&mut agent, &query, &mut rng).unwrap();
        let inbox: Vec<NeighborMessage> = (1..=rng.gen_range(0..6))
            .map(|s| NeighborMessage {
                sender: AgentId::new(s, format!("agent-{s}")),
                content: options[rng.gen_range(0..4)].to_string(),
                phase_index: 0,
            })
            .collect();
        let revised = revise(&mut agent, &own, &inbox, &mut rng).unwrap();
        assert_eq!(revised.answer, own.answer, "trial {trial}");
    }
}

#[test]
fn revision_history_length_counts_revise_calls() {
    let query = mc_query(1, &["A", "B", "C", "D"]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for profile in [
        AgentProfile::Faithful { accuracy: 0.5 },
        AgentProfile::AdversarialConsistent,
        AgentProfile::AdversarialSubtle {
            flip_prob: 0.5,
            numeric_offset: 0.1,
        },
        AgentProfile::Persuadable { threshold: 1 },
    ] {
        let mut agent = AgentState::new(AgentId::new(0, "a"), profile);
        let mut output = respond(&mut agent, &query, &mut rng).unwrap();
        for k in 1..=5 {
            let inbox = [NeighborMessage {
                sender: AgentId::new(1, "b"),
                content: "C".into(),
                phase_index: k - 1,
            }];
            output = revise(&mut agent, &output, &inbox, &mut rng).unwrap();
            assert_eq!(output.revision_history.len(), 1 + k);
            output.validate().unwrap();
        }
    }
}

#[test]
fn shapley_efficiency_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let alphabet = ["A", "B", "C", "D"];
    for _ in 0..300 {
        let n = rng.gen_range(1..=6);
        let answers: Vec<String> = (0..n)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())].to_string())
            .collect();
        let gold = alphabet[rng.gen_range(0..alphabet.len())];
        let outputs = outputs_from(&answers);
        let reward_fn = |ans: &str| {
            if normalize_answer(ans) == normalize_answer(gold) {
                RewardValue::new(1.0).unwrap()
            } else {
                RewardValue::new(-1.0).unwrap()
            }
        };
        let csc = shapley_contributions(&outputs, majority, reward_fn).unwrap();
        let full = reward_fn(&majority(&outputs).unwrap().final_answer).value();
        assert!(
            (csc.per_agent.values().sum::<f64>() - full).abs() < 1e-9,
            "efficiency violated for {answers:?}"
        );
    }
}

#[test]
fn eq2_is_strictly_monotone_preclamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..500 {
        let crs = rng.gen_range(0.01..1.0);
        let csc = rng.gen_range(0.01..1.0);
        let eta = rng.gen_range(0.001..0.5);
        let ledger = CredibilityLedger::from_snapshot([(0, crs)].into_iter().collect(), 0, false);
        let contributions = ContributionVector {
            per_agent: [(0, csc)].into_iter().collect(),
            mode: ContributionMode::Shapley,
        };
        let down = ledger
            .updated(&contributions, RewardValue::new(-1.0).unwrap(), eta)
            .unwrap();
        assert!(down.crs(0).unwrap() < crs);
        let up = ledger
            .updated(&contributions, RewardValue::new(1.0).unwrap(), eta)
            .unwrap();
        assert!(up.crs(0).unwrap() > crs);
    }
}

// Phase synchrony: revisions read only the previous phase's answers, so an
// executor that visits agents in any order produces the same outcome. The
// reference here re-runs one phase in reverse index order.
#[test]
fn interaction_outcome_is_evaluation_order_independent() {
    let mut seed_rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..50 {
        let n = 6;
        let options = ["A", "B", "C", "D"];
        let query = mc_query(1, &options);
        let ledger = CredibilityLedger::new(n, 0.5, true).unwrap();
        let mut graph_rng = ChaCha8Rng::seed_from_u64(seed_rng.gen());
        let graph =
            generate_topology(TopologyKind::SiaRandom, n, 7, &ledger, &mut graph_rng).unwrap();

        let build_team = || -> Vec<AgentState> {
            (0..n)
                .map(|i| {
                    AgentState::new(
                        AgentId::new(i, format!("agent-{i}")),
                        AgentProfile::Persuadable { threshold: 1 },
                    )
                })
                .collect()
        };
        let mut team = build_team();
        let mut rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|i| ChaCha8Rng::seed_from_u64(i as u64))
            .collect();
        let initial: Vec<AgentOutput> = (0..n)
            .map(|i| {
                AgentOutput::initial(
                    team[i].id.clone(),
                    options[(trial + i) % options.len()].to_string(),
                )
            })
            .collect();
        let _ = query;

        let (forward, _) = run_interaction(&graph, &mut team, &initial, 1, &mut rngs).unwrap();

        // reverse-order executor with the same snapshot discipline
        let mut team2 = build_team();
        let mut rngs2: Vec<ChaCha8Rng> = (0..n)
            .map(|i| ChaCha8Rng::seed_from_u64(i as u64))
            .collect();
        let snapshot: Vec<String> = initial.iter().map(|o| o.answer.clone()).collect();
        let mut reversed = initial.clone();
        for i in (0..n).rev() {
            let inbox: Vec<NeighborMessage> = graph
                .neighbors(i)
                .into_iter()
                .map(|s| NeighborMessage {
                    sender: team2[s].id.clone(),
                    content: snapshot[s].clone(),
                    phase_index: 0,
                })
                .collect();
            if inbox.is_empty() {
                continue;
            }
            reversed[i] = revise(&mut team2[i], &initial[i], &inbox, &mut rngs2[i]).unwrap();
        }
        assert_eq!(
            forward.iter().map(|o| &o.answer).collect::<Vec<_>>(),
            reversed.iter().map(|o| &o.answer).collect::<Vec<_>>(),
            "trial {trial}"
        );
    }
}

#[test]
fn full_run_is_byte_identical_across_invocations() {
    let dataset = synthetic_mc_dataset(12, 4, &[(4, 1)], &[(2, 1), (4, 2)], 0x7777);
    let config = ExperimentConfig {
        team_size: 5,
        adversary_count: 2,
        persuadable_count: 1,
        topology_kind: TopologyKind::SiaRandom,
        edge_count: 6,
        faithful_accuracy: 0.9,
        rng_seed: 31,
        ..ExperimentConfig::default()
    };
    let a = run_experiment(&config, &dataset, &SyntheticJudge).unwrap();
    let b = run_experiment(&config, &dataset, &SyntheticJudge).unwrap();
    assert_eq!(records_to_jsonl(&a.records), records_to_jsonl(&b.records));
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
}

// Adding an agent must not perturb the streams of the agents already there.
#[test]
fn agent_streams_are_stable_under_team_growth() {
    let splitter = SeedSplitter::new(99);
    let query = mc_query(2, &["A", "B", "C", "D"]);
    let answers_with_team_size = |_n: usize| -> Vec<String> {
        (0..3)
            .map(|agent_idx| {
                let mut agent = AgentState::new(
                    AgentId::new(agent_idx, format!("agent-{agent_idx}")),
                    AgentProfile::Faithful { accuracy: 0.5 },
                );
                let mut rng = splitter.agent_rng(0, agent_idx);
                respond(&mut agent, &query, &mut rng).unwrap().answer
            })
            .collect()
    };
    assert_eq!(answers_with_team_size(3), answers_with_team_size(8));
}

#[test]
fn bundled_data_files_match_their_generators() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let smoke = std::fs::read_to_string(root.join("synthetic_20.jsonl")).unwrap();
    assert_eq!(smoke, dataset_to_jsonl(&bundled_smoke_dataset()));
    let benchmark = std::fs::read_to_string(root.join("synthetic_200.jsonl")).unwrap();
    assert_eq!(benchmark, dataset_to_jsonl(&bundled_benchmark_dataset()));
}

#[test]
fn sia_realized_edges_never_repeat_pairs() {
    let ledger = CredibilityLedger::new(5, 0.5, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let g = generate_topology(TopologyKind::SiaRandom, 5, 6, &ledger, &mut rng).unwrap();
        let set: BTreeSet<_> = g.edges.iter().collect();
        assert_eq!(set.len(), g.realized_edge_count());
    }
}
