//! Deterministic mock backend interpreting a closed rule mini-language.
//!
//! Grammar:
//!   instruction := "none" | "on " feature ": " mapping ("," " "? mapping)* (", *->" label)?
//!   mapping     := value "->" label
//! Inputs parse as "; "-separated feature=value pairs. A standalone
//! wildcard rule "on f: *->label" is also accepted.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Backend, BackendError, CallStats, ClassifyRequest, ClassifyResponse, StatsCell,
    SummarizeRequest, SummarizeResponse,
};
use crate::program::{Label, Outcome, UNINITIALIZED_INSTRUCTION};

/// A parsed depth-1 rule: one tested feature, value-to-label mappings, and
/// an optional wildcard fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub feature: String,
    pub mappings: Vec<(String, String)>,
    pub wildcard: Option<String>,
}

impl Rule {
    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .mappings
            .iter()
            .map(|(v, l)| format!("{v}->{l}"))
            .collect();
        if let Some(w) = &self.wildcard {
            parts.push(format!("*->{w}"));
        }
        format!("on {}: {}", self.feature, parts.join(", "))
    }

    /// Apply to a parsed input; None when neither a mapping nor the
    /// wildcard covers it.
    pub fn apply(&self, pairs: &[(String, String)]) -> Option<String> {
        let value = pairs
            .iter()
            .find(|(f, _)| *f == self.feature)
            .map(|(_, v)| v.clone());
        if let Some(v) = value {
            if let Some((_, label)) = self.mappings.iter().find(|(mv, _)| *mv == v) {
                return Some(label.clone());
            }
        }
        self.wildcard.clone()
    }
}

pub fn parse_rule(instruction: &str) -> Option<Rule> {
    let rest = instruction.strip_prefix("on ")?;
    let (feature, mapping_text) = rest.split_once(": ")?;
    if feature.is_empty() || feature.contains(' ') {
        return None;
    }
    let mut mappings = Vec::new();
    let mut wildcard = None;
    for (i, part) in mapping_text.split(',').enumerate() {
        let part = if i == 0 { part } else { part.trim_start_matches(' ') };
        let (value, label) = part.split_once("->")?;
        if value.is_empty() || label.is_empty() {
            return None;
        }
        if value == "*" {
            if wildcard.is_some() {
                return None;
            }
            wildcard = Some(label.to_string());
        } else {
            if wildcard.is_some() {
                return None; // wildcard must come last
            }
            mappings.push((value.to_string(), label.to_string()));
        }
    }
    if mappings.is_empty() && wildcard.is_none() {
        return None;
    }
    Some(Rule {
        feature: feature.to_string(),
        mappings,
        wildcard,
    })
}

/// Parse "x1=A1; x2=B2" into ordered (feature, value) pairs.
pub fn parse_input_pairs(input: &str) -> Vec<(String, String)> {
    input
        .split(';')
        .filter_map(|part| {
            let (f, v) = part.trim().split_once('=')?;
            Some((f.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Pure rule-engine stand-in for an LLM. Classification interprets the
/// instruction in the mini-language; summarization proposes the best
/// depth-1 majority rule over its demonstrations.
#[derive(Debug, Default)]
pub struct MockRuleBackend {
    exhaustive: bool,
    stats: StatsCell,
}

impl MockRuleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mode(exhaustive: bool) -> Self {
        MockRuleBackend {
            exhaustive,
            stats: StatsCell::default(),
        }
    }

    /// All candidate depth-1 rules for the demonstrations, best first:
    /// one majority rule per feature, ordered by (accuracy desc, feature
    /// order asc). Each carries its demonstration accuracy.
    pub fn enumerate_rules(demos: &[(String, Label)], vocab: &[Label]) -> Vec<(Rule, f64)> {
        let parsed: Vec<(Vec<(String, String)>, &Label)> = demos
            .iter()
            .map(|(input, label)| (parse_input_pairs(input), label))
            .collect();

        // features in order of first appearance
        let mut features: Vec<String> = Vec::new();
        for (pairs, _) in &parsed {
            for (f, _) in pairs {
                if !features.contains(f) {
                    features.push(f.clone());
                }
            }
        }
        let global_majority = majority_label(parsed.iter().map(|(_, l)| *l), vocab)
            .unwrap_or_else(|| vocab[0].clone());
        if features.is_empty() {
            // free-text inputs: only the constant rule is expressible
            let rule = Rule {
                feature: "x1".to_string(),
                mappings: Vec::new(),
                wildcard: Some(global_majority.as_str().to_string()),
            };
            let acc = rule_accuracy(&rule, &parsed);
            return vec![(rule, acc)];
        }

        let mut rules: Vec<(Rule, f64)> = Vec::new();
        for feature in &features {
            let mut by_value: BTreeMap<String, Vec<&Label>> = BTreeMap::new();
            for (pairs, label) in &parsed {
                if let Some((_, v)) = pairs.iter().find(|(f, _)| f == feature) {
                    by_value.entry(v.clone()).or_default().push(label);
                }
            }
            let mappings: Vec<(String, String)> = by_value
                .iter()
                .map(|(value, labels)| {
                    let majority = majority_label(labels.iter().copied(), vocab)
                        .unwrap_or_else(|| global_majority.clone());
                    (value.clone(), majority.as_str().to_string())
                })
                .collect();
            let rule = Rule {
                feature: feature.clone(),
                mappings,
                wildcard: Some(global_majority.as_str().to_string()),
            };
            let acc = rule_accuracy(&rule, &parsed);
            rules.push((rule, acc));
        }
        // stable sort keeps feature order among equal accuracies
        rules.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        rules
    }
}

fn majority_label<'a>(labels: impl Iterator<Item = &'a Label>, vocab: &[Label]) -> Option<Label> {
    let mut counts: Vec<(usize, usize)> = vocab.iter().enumerate().map(|(i, _)| (i, 0)).collect();
    let mut any = false;
    for label in labels {
        if let Some(idx) = vocab.iter().position(|l| l == label) {
            counts[idx].1 += 1;
            any = true;
        }
    }
    if !any {
        return None;
    }
    // ties resolve to the earliest vocab entry
    let (best_idx, _) = counts
        .iter()
        .copied()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    Some(vocab[best_idx].clone())
}

fn rule_accuracy(rule: &Rule, parsed: &[(Vec<(String, String)>, &Label)]) -> f64 {
    if parsed.is_empty() {
        return 0.0;
    }
    let correct = parsed
        .iter()
        .filter(|(pairs, label)| rule.apply(pairs).as_deref() == Some(label.as_str()))
        .count();
    correct as f64 / parsed.len() as f64
}

impl Backend for MockRuleBackend {
    fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError> {
        if req.label_vocab.len() < 2 {
            return Err(BackendError::InvalidRequest(
                "classification requires at least 2 labels".into(),
            ));
        }
        self.stats.record(false, 0, 0);
        let parsed = if req.instruction == UNINITIALIZED_INSTRUCTION {
            Outcome::Label(req.label_vocab[0].clone())
        } else {
            match parse_rule(&req.instruction) {
                Some(rule) => {
                    let pairs = parse_input_pairs(&req.input);
                    match rule.apply(&pairs) {
                        Some(text) => match req.label_vocab.iter().find(|l| l.as_str() == text) {
                            Some(label) => Outcome::Label(label.clone()),
                            None => Outcome::Unparsed,
                        },
                        None => Outcome::Unparsed,
                    }
                }
                None => Outcome::Unparsed,
            }
        };
        Ok(ClassifyResponse {
            raw_text: parsed.to_string(),
            parsed,
            prompt_tokens: 0,
            completion_tokens: 0,
            cached: false,
        })
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, BackendError> {
        if req.demonstrations.is_empty() {
            return Err(BackendError::InvalidRequest(
                "summarize requires at least one demonstration".into(),
            ));
        }
        self.stats.record(false, 0, 0);
        let rules = Self::enumerate_rules(&req.demonstrations, &req.label_vocab);
        let chosen = if self.exhaustive {
            &rules[req.proposal_index % rules.len()].0
        } else {
            let best = rules[0].1;
            let ties = rules.iter().take_while(|(_, acc)| *acc == best).count();
            let pick = if ties > 1 {
                ChaCha8Rng::seed_from_u64(req.rng_seed).gen_range(0..ties)
            } else {
                0
            };
            &rules[pick].0
        };
        Ok(SummarizeResponse {
            instruction: chosen.render(),
            prompt_tokens: 0,
            completion_tokens: 0,
            cached: false,
        })
    }

    fn stats(&self) -> CallStats {
        self.stats.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::CLASSIFY_TEMPLATE_ID;

    fn vocab(labels: &[&str]) -> Vec<Label> {
        labels.iter().map(|l| Label::new(l).unwrap()).collect()
    }

    fn classify(backend: &MockRuleBackend, instruction: &str, input: &str, v: &[&str]) -> Outcome {
        backend
            .classify(&ClassifyRequest {
                instruction: instruction.to_string(),
                input: input.to_string(),
                label_vocab: vocab(v),
                template_id: CLASSIFY_TEMPLATE_ID.to_string(),
            })
            .unwrap()
            .parsed
    }

    fn demos(pairs: &[(&str, &str)]) -> Vec<(String, Label)> {
        pairs
            .iter()
            .map(|(i, o)| (i.to_string(), Label::new(o).unwrap()))
            .collect()
    }

    fn summarize_with(backend: &MockRuleBackend, d: &[(&str, &str)], v: &[&str], seed: u64, idx: usize) -> String {
        backend
            .summarize(&SummarizeRequest {
                demonstrations: demos(d),
                label_vocab: vocab(v),
                existing_instruction: None,
                rng_seed: seed,
                proposal_index: idx,
                template_id: crate::backend::SUMMARIZE_TEMPLATE_ID.to_string(),
            })
            .unwrap()
            .instruction
    }

    #[test]
    fn rule_grammar_round_trips() {
        let rule = parse_rule("on x1: A1->foo, A2->bar, *->foo").unwrap();
        assert_eq!(rule.feature, "x1");
        assert_eq!(rule.mappings.len(), 2);
        assert_eq!(rule.wildcard.as_deref(), Some("foo"));
        assert_eq!(rule.render(), "on x1: A1->foo, A2->bar, *->foo");

        assert!(parse_rule("on x1: *->foo").is_some());
        assert!(parse_rule("none").is_none());
        assert!(parse_rule("on x1:").is_none());
        assert!(parse_rule("on x1: *->foo, A1->bar").is_none()); // wildcard must be last
    }

    #[test]
    fn classify_applies_rules() {
        let backend = MockRuleBackend::new();
        assert_eq!(
            classify(&backend, "on x1: A1->foo, *->bar", "x1=A2; x2=B1", &["foo", "bar"]),
            Outcome::Label(Label::new("bar").unwrap())
        );
        assert_eq!(
            classify(&backend, "none", "x1=A1", &["foo", "bar"]),
            Outcome::Label(Label::new("foo").unwrap())
        );
        // no mapping, no wildcard
        assert_eq!(
            classify(&backend, "on x1: A1->foo", "x1=A2", &["foo", "bar"]),
            Outcome::Unparsed
        );
        // rule label outside the vocabulary
        assert_eq!(
            classify(&backend, "on x1: *->zug", "x1=A1", &["foo", "bar"]),
            Outcome::Unparsed
        );
    }

    #[test]
    fn summarize_finds_best_depth1_rule() {
        let backend = MockRuleBackend::new();
        let instruction = summarize_with(
            &backend,
            &[("x1=A1; x2=B1", "foo"), ("x1=A2; x2=B1", "bar"), ("x1=A1; x2=B2", "foo")],
            &["foo", "bar"],
            0,
            0,
        );
        assert_eq!(instruction, "on x1: A1->foo, A2->bar, *->foo");
    }

    #[test]
    fn summarize_constant_dataset_yields_wildcard_rule() {
        let backend = MockRuleBackend::new();
        let instruction = summarize_with(
            &backend,
            &[("x1=A1; x2=B1", "bar"), ("x1=A2; x2=B2", "bar")],
            &["foo", "bar"],
            7,
            0,
        );
        let rule = parse_rule(&instruction).unwrap();
        assert_eq!(rule.wildcard.as_deref(), Some("bar"));
        for (_, label) in &rule.mappings {
            assert_eq!(label, "bar");
        }
    }

    #[test]
    fn summarize_matches_exhaustive_enumeration_on_xor() {
        // XOR of x1, x2: no depth-1 rule beats 0.5
        let xor = [
            ("x1=A1; x2=B1", "foo"),
            ("x1=A1; x2=B2", "bar"),
            ("x1=A2; x2=B1", "bar"),
            ("x1=A2; x2=B2", "foo"),
        ];
        let v = ["foo", "bar"];
        let backend = MockRuleBackend::new();
        let instruction = summarize_with(&backend, &xor, &v, 3, 0);
        let rule = parse_rule(&instruction).unwrap();

        // independent oracle: brute-force every (feature, mapping, wildcard) combo
        let parsed: Vec<(Vec<(String, String)>, Label)> = xor
            .iter()
            .map(|(i, o)| (parse_input_pairs(i), Label::new(o).unwrap()))
            .collect();
        let score = |r: &Rule| {
            parsed
                .iter()
                .filter(|(p, l)| r.apply(p).as_deref() == Some(l.as_str()))
                .count()
        };
        let mut best = 0;
        for feature in ["x1", "x2"] {
            let values = if feature == "x1" { ["A1", "A2"] } else { ["B1", "B2"] };
            for l1 in &v {
                for l2 in &v {
                    for w in &v {
                        let candidate = Rule {
                            feature: feature.to_string(),
                            mappings: vec![
                                (values[0].to_string(), l1.to_string()),
                                (values[1].to_string(), l2.to_string()),
                            ],
                            wildcard: Some(w.to_string()),
                        };
                        best = best.max(score(&candidate));
                    }
                }
            }
        }
        assert_eq!(best, 2, "XOR admits no depth-1 rule above 0.5");
        assert_eq!(score(&rule), best);
    }

    #[test]
    fn summarize_is_deterministic_given_seed() {
        let backend = MockRuleBackend::new();
        let d = [("x1=A1; x2=B1", "foo"), ("x1=A2; x2=B2", "bar")];
        let a = summarize_with(&backend, &d, &["foo", "bar"], 11, 0);
        let b = summarize_with(&backend, &d, &["foo", "bar"], 11, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustive_mode_walks_rules_best_first() {
        let backend = MockRuleBackend::with_mode(true);
        // x1 separates perfectly, x2 does not
        let d = [
            ("x1=A1; x2=B1", "foo"),
            ("x1=A2; x2=B1", "bar"),
            ("x1=A1; x2=B2", "foo"),
            ("x1=A2; x2=B2", "bar"),
        ];
        let first = summarize_with(&backend, &d, &["foo", "bar"], 0, 0);
        let second = summarize_with(&backend, &d, &["foo", "bar"], 0, 1);
        assert!(first.starts_with("on x1:"));
        assert!(second.starts_with("on x2:"));
        // indices past the family size wrap around
        let third = summarize_with(&backend, &d, &["foo", "bar"], 0, 2);
        assert_eq!(third, first);
    }
}
