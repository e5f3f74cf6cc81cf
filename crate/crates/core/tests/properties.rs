//! Property tests over randomly grown programs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsp::backend::MockRuleBackend;
use lsp::program::{Label, LlmModule, Program, Slot};
use lsp::tasks::{Example, SplitTag};

fn vocab(n: usize) -> Vec<Label> {
    ["foo", "bar", "baz", "qux"][..n]
        .iter()
        .map(|l| Label::new(l).unwrap())
        .collect()
}

/// Grow a random program by repeated expansion at random frontier slots.
fn random_program(seed: u64, vocab_size: usize, max_nodes: usize) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut program = Program::empty("random", vocab(vocab_size)).unwrap();
    let nodes = rng.gen_range(0..=max_nodes);
    for _ in 0..nodes {
        let slots = program.slots();
        let slot = &slots[rng.gen_range(0..slots.len())];
        let feature = format!("x{}", rng.gen_range(1..=3));
        let value = format!("{}{}", ['A', 'B', 'C'][rng.gen_range(0..3)], rng.gen_range(1..=3));
        let target = ["foo", "bar", "baz", "qux"][rng.gen_range(0..vocab_size)];
        let fallback = ["foo", "bar", "baz", "qux"][rng.gen_range(0..vocab_size)];
        let instruction = format!("on {feature}: {value}->{target}, *->{fallback}");
        program = program
            .expand(slot, LlmModule::new(&instruction).unwrap())
            .unwrap();
    }
    program
}

fn random_examples(seed: u64, n: usize, labels: &[Label]) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let input = format!(
                "x1=A{}; x2=B{}; x3=C{}",
                rng.gen_range(1..=3),
                rng.gen_range(1..=3),
                rng.gen_range(1..=3)
            );
            Example {
                input,
                output: labels[rng.gen_range(0..labels.len())].clone(),
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn serialization_round_trips(seed in any::<u64>(), vocab_size in 2usize..=4, nodes in 0usize..12) {
        let program = random_program(seed, vocab_size, nodes);
        let text = program.to_json();
        let back = Program::from_json(&text).unwrap();
        prop_assert!(program.same_structure(&back));
        prop_assert_eq!(text, back.to_json());
    }

    #[test]
    fn routing_partitions_the_dataset(seed in any::<u64>(), vocab_size in 2usize..=4, nodes in 0usize..10) {
        let program = random_program(seed, vocab_size, nodes);
        let backend = MockRuleBackend::new();
        let examples = random_examples(seed ^ 0xABCD, 40, program.label_vocab());
        let routed = program.route(&examples, &backend).unwrap();

        // multiset equality with the input
        let mut seen: Vec<&Example> = routed.iter().flat_map(|(_, l)| l.iter().map(|(e, _)| e)).collect();
        prop_assert_eq!(seen.len(), examples.len());
        for e in &examples {
            let pos = seen.iter().position(|s| *s == e);
            prop_assert!(pos.is_some());
            seen.swap_remove(pos.unwrap());
        }
        // every slot used is on the frontier or the Root pseudo-slot
        for (slot, list) in &routed {
            prop_assert!(!list.is_empty());
            if let Slot::At { node, branch } = slot {
                if let lsp::program::Outcome::Label(label) = branch {
                    prop_assert!(program.node(*node).children.get(label).is_none());
                }
            } else {
                prop_assert!(program.is_empty());
            }
        }
    }

    #[test]
    fn traversal_terminates_within_node_count(seed in any::<u64>(), nodes in 0usize..12) {
        let program = random_program(seed, 3, nodes);
        let backend = MockRuleBackend::new();
        for example in random_examples(seed ^ 0x77, 10, program.label_vocab()) {
            let (_, trace) = program.predict(&example.input, &backend).unwrap();
            prop_assert!(trace.steps.len() <= program.node_count());
        }
    }

    #[test]
    fn expansion_grows_by_exactly_one(seed in any::<u64>(), nodes in 0usize..10) {
        let program = random_program(seed, 3, nodes);
        let slots = program.slots();
        let valid: Vec<&Slot> = slots
            .iter()
            .filter(|s| !matches!(s, Slot::At { branch: lsp::program::Outcome::Unparsed, .. }))
            .collect();
        prop_assume!(!valid.is_empty());
        let slot = valid[(seed as usize) % valid.len()];
        let bigger = program
            .expand(slot, LlmModule::new("on x1: *->foo").unwrap())
            .unwrap();
        prop_assert_eq!(bigger.node_count(), program.node_count() + 1);
        prop_assert!(bigger.depth() <= program.depth() + 1);
        let stats = bigger.stats();
        prop_assert!(stats.sparsity >= 0.0 && stats.sparsity <= 1.0);
    }
}

#[test]
fn empty_program_prediction_is_constant() {
    let program = Program::empty("e", vocab(3)).unwrap();
    let backend = MockRuleBackend::new();
    let first = program.predict("x1=A1", &backend).unwrap().0;
    for e in random_examples(5, 25, program.label_vocab()) {
        assert_eq!(program.predict(&e.input, &backend).unwrap().0, first);
    }
    let _ = SplitTag::Train; // silence unused import on feature-combination builds
}
