//! Program growth: module proposal by rule summarization, error-count slot
//! selection, top-K expansion, and beam retention with exact or
//! bandit-approximated ranking.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ClassifyRequest, SummarizeRequest, CLASSIFY_TEMPLATE_ID, SUMMARIZE_TEMPLATE_ID};
use crate::program::{Label, LlmModule, Outcome, Program, ProgramError, Slot};
use crate::tasks::{Dataset, Example};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training set must be non-empty")]
    EmptyTrainSet,
    #[error("proposals must be non-empty")]
    NoProposals,
    #[error("no slot has any routed example")]
    NoRoutableSlot,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    ErrorCount,
    Accuracy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Ranking {
    Exact,
    Ucb {
        sample_size: usize,
        exploration_c: f64,
    },
}

impl Ranking {
    pub fn default_ucb() -> Self {
        Ranking::Ucb {
            sample_size: 32,
            exploration_c: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub beam_size: usize,
    pub iterations: usize,
    pub expand_ratio: usize,
    pub proposal_size: usize,
    pub batch_size: usize,
    pub demo_sample_size: usize,
    pub scoring: Scoring,
    pub ranking: Ranking,
    pub seed: u64,
    pub max_depth: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_size: 4,
            iterations: 4,
            expand_ratio: 4,
            proposal_size: 8,
            batch_size: 64,
            demo_sample_size: 32,
            scoring: Scoring::ErrorCount,
            ranking: Ranking::Exact,
            seed: 0,
            max_depth: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.beam_size == 0
            || self.expand_ratio == 0
            || self.proposal_size == 0
            || self.batch_size == 0
            || self.demo_sample_size == 0
        {
            return Err(LearnerError::NoProposals);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub batch_accuracy_best: f64,
    pub full_train_accuracy_best: f64,
    pub expanded_slots: usize,
    pub proposals_made: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CostReport {
    pub search_seconds: f64,
    pub live_calls: u64,
    pub cached_calls: u64,
    pub tokens: u64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub best_program: Program,
    pub best_train_accuracy: f64,
    pub per_iteration: Vec<IterationTrace>,
    pub cost: CostReport,
    pub config: SearchConfig,
    pub seed: u64,
    pub failed: bool,
    pub error: Option<String>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "best_program": serde_json::from_str::<serde_json::Value>(&self.best_program.to_json()).unwrap(),
            "best_train_accuracy": self.best_train_accuracy,
            "per_iteration": self.per_iteration,
            "cost": self.cost,
            "config": self.config,
            "seed": self.seed,
            "failed": self.failed,
            "error": self.error,
        });
        serde_json::to_string_pretty(&value).unwrap()
    }
}

/// splitmix64 step; stable seed derivation across platforms.
fn mix(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable content digest of a program's structure (instructions plus
/// child wiring), used to seed per-program draws.
fn structure_key(program: &Program) -> u64 {
    let mut state = 0xA5A5_5A5A_DEAD_BEEFu64;
    for byte in program.to_json().bytes() {
        state = mix(state ^ byte as u64);
    }
    state
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = mix(base);
    for &p in parts {
        state = mix(state ^ p);
    }
    state
}

/// Alg. 1: propose `m` candidate instructions, each summarized from an
/// independently drawn (seeded) demonstration sample.
pub fn learn_llm_module(
    subset: &[Example],
    vocab: &[Label],
    learner: &dyn Backend,
    m: usize,
    demo_sample_size: usize,
    seed: u64,
) -> Result<Vec<String>, LearnerError> {
    if subset.is_empty() {
        return Err(LearnerError::EmptyTrainSet);
    }
    let mut proposals = Vec::with_capacity(m);
    for i in 0..m {
        let call_seed = derive_seed(seed, &[i as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(call_seed);
        let take = demo_sample_size.min(subset.len());
        let mut indices: Vec<usize> = (0..subset.len()).collect();
        indices.shuffle(&mut rng);
        indices.truncate(take);
        indices.sort_unstable();
        let demonstrations: Vec<(String, Label)> = indices
            .iter()
            .map(|&idx| (subset[idx].input.clone(), subset[idx].output.clone()))
            .collect();
        let response = learner.summarize(&SummarizeRequest {
            demonstrations,
            label_vocab: vocab.to_vec(),
            existing_instruction: None,
            rng_seed: call_seed,
            proposal_index: i,
            template_id: SUMMARIZE_TEMPLATE_ID.to_string(),
        })?;
        proposals.push(response.instruction);
    }
    Ok(proposals)
}

/// Accuracy of a bare instruction on a subset, as a single-module classifier.
fn instruction_accuracy(
    instruction: &str,
    subset: &[Example],
    vocab: &[Label],
    inference: &dyn Backend,
) -> Result<f64, BackendError> {
    let mut correct = 0usize;
    for example in subset {
        let response = inference.classify(&ClassifyRequest {
            instruction: instruction.to_string(),
            input: example.input.clone(),
            label_vocab: vocab.to_vec(),
            template_id: CLASSIFY_TEMPLATE_ID.to_string(),
        })?;
        if response.parsed.as_label() == Some(&example.output) {
            correct += 1;
        }
    }
    Ok(correct as f64 / subset.len().max(1) as f64)
}

/// True when the module predicts `exit_label` for every subset example,
/// i.e. it changes neither the predictions nor the routing at its slot.
fn module_is_inert(
    instruction: &str,
    subset: &[Example],
    exit_label: &Label,
    vocab: &[Label],
    inference: &dyn Backend,
) -> Result<bool, BackendError> {
    for example in subset {
        let response = inference.classify(&ClassifyRequest {
            instruction: instruction.to_string(),
            input: example.input.clone(),
            label_vocab: vocab.to_vec(),
            template_id: CLASSIFY_TEMPLATE_ID.to_string(),
        })?;
        if response.parsed.as_label() != Some(exit_label) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Score proposals on the routed subset and keep the top-K, ties broken by
/// proposal index.
pub fn rank_modules(
    proposals: &[String],
    subset: &[Example],
    vocab: &[Label],
    inference: &dyn Backend,
    k: usize,
) -> Result<Vec<(String, f64)>, LearnerError> {
    if proposals.is_empty() {
        return Err(LearnerError::NoProposals);
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(proposals.len());
    for (idx, instruction) in proposals.iter().enumerate() {
        scored.push((idx, instruction_accuracy(instruction, subset, vocab, inference)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(idx, acc)| (proposals[idx].clone(), acc))
        .collect())
}

/// Pick the slot to expand. `routed` must be in the program's canonical slot
/// order; ties keep the first entry.
pub fn select_slot<'a>(
    routed: &'a [(Slot, Vec<(Example, bool)>)],
    scoring: Scoring,
    rng: &mut ChaCha8Rng,
) -> Result<&'a (Slot, Vec<(Example, bool)>), LearnerError> {
    let non_empty: Vec<&(Slot, Vec<(Example, bool)>)> =
        routed.iter().filter(|(_, list)| !list.is_empty()).collect();
    if non_empty.is_empty() {
        return Err(LearnerError::NoRoutableSlot);
    }
    let errors = |list: &[(Example, bool)]| list.iter().filter(|(_, e)| *e).count();
    // strictly-greater comparison keeps the first slot in canonical order on ties
    let pick_max = |score: &dyn Fn(&[(Example, bool)]) -> f64| {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (idx, (_, list)) in non_empty.iter().enumerate() {
            let s = score(list);
            if s > best_score {
                best_score = s;
                best = idx;
            }
        }
        non_empty[best]
    };
    Ok(match scoring {
        Scoring::ErrorCount => pick_max(&|list| errors(list) as f64),
        Scoring::Accuracy => pick_max(&|list| errors(list) as f64 / list.len() as f64),
        Scoring::Random => non_empty[rng.gen_range(0..non_empty.len())],
    })
}

/// Exact accuracy of a program on a dataset.
pub fn program_accuracy(
    program: &Program,
    dataset: &Dataset,
    inference: &dyn Backend,
) -> Result<f64, BackendError> {
    let mut correct = 0usize;
    for example in &dataset.examples {
        let (outcome, _) = program.predict(&example.input, inference)?;
        if outcome.as_label() == Some(&example.output) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len().max(1) as f64)
}

/// Retain the top-d candidates. Exact mode ranks by full-dataset accuracy;
/// UCB mode runs a UCB1 bandit with one-example pulls and ranks by
/// empirical mean. Ties keep insertion order.
pub fn rank_programs(
    candidates: Vec<Program>,
    dataset: &Dataset,
    inference: &dyn Backend,
    ranking: Ranking,
    d: usize,
    seed: u64,
) -> Result<Vec<(Program, f64)>, LearnerError> {
    if candidates.is_empty() {
        return Err(LearnerError::NoProposals);
    }
    let scores = match ranking {
        Ranking::Exact => {
            let mut scores = Vec::with_capacity(candidates.len());
            for program in &candidates {
                scores.push(program_accuracy(program, dataset, inference)?);
            }
            scores
        }
        Ranking::Ucb {
            sample_size,
            exploration_c,
        } => ucb_means(&candidates, dataset, inference, sample_size, exploration_c, seed)?,
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut ranked: Vec<(Program, f64)> = Vec::with_capacity(d.min(candidates.len()));
    let mut taken: Vec<bool> = vec![false; candidates.len()];
    for &idx in order.iter().take(d) {
        taken[idx] = true;
    }
    // consume candidates without cloning programs
    let mut picked: Vec<(usize, Program)> = candidates
        .into_iter()
        .enumerate()
        .filter(|(idx, _)| taken[*idx])
        .collect();
    for &idx in order.iter().take(d) {
        let pos = picked.iter().position(|(i, _)| *i == idx).unwrap();
        let (_, program) = picked.swap_remove(pos);
        ranked.push((program, scores[idx]));
    }
    Ok(ranked)
}

/// UCB1 with a round-robin warm start: total pulls = sample_size x arms,
/// one uniformly drawn example per pull, selection by mean + c sqrt(ln t / n).
fn ucb_means(
    candidates: &[Program],
    dataset: &Dataset,
    inference: &dyn Backend,
    sample_size: usize,
    exploration_c: f64,
    seed: u64,
) -> Result<Vec<f64>, LearnerError> {
    let arms = candidates.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pulls = vec![0usize; arms];
    let mut wins = vec![0f64; arms];
    let total_budget = sample_size * arms;
    let pull = |arm: usize, rng: &mut ChaCha8Rng, pulls: &mut Vec<usize>, wins: &mut Vec<f64>| -> Result<(), LearnerError> {
        let example = &dataset.examples[rng.gen_range(0..dataset.len())];
        let (outcome, _) = candidates[arm].predict(&example.input, inference)?;
        if outcome.as_label() == Some(&example.output) {
            wins[arm] += 1.0;
        }
        pulls[arm] += 1;
        Ok(())
    };
    let mut total = 0usize;
    for arm in 0..arms {
        if total >= total_budget {
            break;
        }
        pull(arm, &mut rng, &mut pulls, &mut wins)?;
        total += 1;
    }
    while total < total_budget {
        let mut best_arm = 0;
        let mut best_score = f64::NEG_INFINITY;
        for arm in 0..arms {
            let mean = wins[arm] / pulls[arm].max(1) as f64;
            let bonus = exploration_c * ((total as f64).ln() / pulls[arm].max(1) as f64).sqrt();
            let score = mean + bonus;
            if score > best_score {
                best_score = score;
                best_arm = arm;
            }
        }
        pull(best_arm, &mut rng, &mut pulls, &mut wins)?;
        total += 1;
    }
    Ok((0..arms)
        .map(|arm| wins[arm] / pulls[arm].max(1) as f64)
        .collect())
}

fn combined_stats(learner: &dyn Backend, inference: &dyn Backend) -> (u64, u64, u64) {
    let l = learner.stats();
    let i = inference.stats();
    (
        l.live_calls + i.live_calls,
        l.cached_calls + i.cached_calls,
        l.total_tokens() + i.total_tokens(),
    )
}

/// Alg. 2: grow programs by beam search. Each iteration, every beam member
/// routes a fresh batch and sweeps its erroneous frontier: the top-scored
/// slot is expanded with the top-K summarized modules (one variant each)
/// and the remaining slots with their single best module, after which the
/// union of old and new programs is pruned back to the top-d.
pub fn fit(
    train: &Dataset,
    cfg: &SearchConfig,
    learner: &dyn Backend,
    inference: &dyn Backend,
) -> Result<TrainReport, LearnerError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(LearnerError::EmptyTrainSet);
    }
    let vocab = train.label_vocab.clone();
    let started = Instant::now();
    let (live0, cached0, tokens0) = combined_stats(learner, inference);
    let empty = Program::empty(&format!("{}-lsp", train.name), vocab.clone())?;

    let mut beam: Vec<Program> = vec![empty];
    let mut per_iteration: Vec<IterationTrace> = Vec::new();

    let finish = |beam: &[Program],
                  per_iteration: Vec<IterationTrace>,
                  failed: Option<String>|
     -> Result<TrainReport, LearnerError> {
        // final selection is always by exact full-train accuracy
        let mut best_idx = 0;
        let mut best_acc = -1.0;
        if failed.is_none() {
            for (idx, program) in beam.iter().enumerate() {
                let acc = program_accuracy(program, train, inference)?;
                if acc > best_acc {
                    best_acc = acc;
                    best_idx = idx;
                }
            }
        } else {
            best_acc = 0.0;
        }
        let (live, cached, tokens) = combined_stats(learner, inference);
        Ok(TrainReport {
            best_program: beam[best_idx].clone(),
            best_train_accuracy: best_acc.max(0.0),
            per_iteration,
            cost: CostReport {
                search_seconds: started.elapsed().as_secs_f64(),
                live_calls: live - live0,
                cached_calls: cached - cached0,
                tokens: tokens - tokens0,
            },
            config: cfg.clone(),
            seed: cfg.seed,
            failed: failed.is_some(),
            error: failed,
        })
    };

    for t in 1..=cfg.iterations {
        let mut new_programs: Vec<Program> = Vec::new();
        let mut batch_accuracy_best = 0f64;
        let mut expanded_slots = 0usize;
        let mut proposals_made = 0usize;

        for program in beam.iter() {
            // keyed by program content, not beam position, so a program
            // draws the same batch no matter where ranking placed it
            let iter_seed = derive_seed(cfg.seed, &[t as u64, structure_key(program)]);
            let mut rng = ChaCha8Rng::seed_from_u64(iter_seed);

            // batch sampling without replacement
            let batch: Vec<Example> = if cfg.batch_size >= train.len() {
                train.examples.clone()
            } else {
                let mut indices: Vec<usize> = (0..train.len()).collect();
                indices.shuffle(&mut rng);
                indices.truncate(cfg.batch_size);
                indices.sort_unstable();
                indices.iter().map(|&i| train.examples[i].clone()).collect()
            };

            let routed = match program.route(&batch, inference) {
                Ok(routed) => routed,
                Err(e) => return finish(&beam, per_iteration, Some(e.to_string())),
            };
            let batch_errors: usize = routed
                .iter()
                .map(|(_, list)| list.iter().filter(|(_, e)| *e).count())
                .sum();
            let batch_accuracy = 1.0 - batch_errors as f64 / batch.len() as f64;
            batch_accuracy_best = batch_accuracy_best.max(batch_accuracy);

            // expansion skip rules per slot: all-correct subset, unparsed
            // branch, or depth budget exhausted
            let expandable = |slot: &Slot, list: &[(Example, bool)]| -> bool {
                if !list.iter().any(|(_, e)| *e) {
                    return false;
                }
                if matches!(slot, Slot::At { branch: Outcome::Unparsed, .. }) {
                    return false;
                }
                let new_depth = match slot {
                    Slot::Root => 1,
                    Slot::At { node, .. } => program.node_depth(*node) + 1,
                };
                cfg.max_depth.map_or(true, |max| new_depth <= max)
            };

            // one iteration sweeps the whole erroneous frontier, so each
            // tree level is learned against the full routed batch: the
            // slot picked by the scoring function receives the top-K module
            // variants and every other slot its single best module
            let targets: Vec<(usize, &(Slot, Vec<(Example, bool)>))> = routed
                .iter()
                .enumerate()
                .filter(|(_, (slot, list))| expandable(slot, list))
                .collect();
            if targets.is_empty() {
                continue;
            }
            let errors = |list: &[(Example, bool)]| list.iter().filter(|(_, e)| *e).count();
            // strictly-greater comparisons keep the first slot in canonical
            // order on ties
            let pick_max = |score: &dyn Fn(&[(Example, bool)]) -> f64| {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (idx, (_, (_, list))) in targets.iter().enumerate() {
                    let s = score(list);
                    if s > best_score {
                        best_score = s;
                        best = idx;
                    }
                }
                best
            };
            let primary = match cfg.scoring {
                Scoring::ErrorCount => pick_max(&|list| errors(list) as f64),
                Scoring::Accuracy => {
                    pick_max(&|list| errors(list) as f64 / list.len() as f64)
                }
                Scoring::Random => rng.gen_range(0..targets.len()),
            };

            // expansions at distinct frontier slots are independent, and
            // walking them in canonical order keeps node numbering (and so
            // batch draws) identical for identical structures regardless of
            // which slot the scoring function singled out
            let mut variants: Vec<Program> = vec![program.clone()];
            for (si, (slot_key, (slot, assigned))) in targets.iter().enumerate() {
                let subset: Vec<Example> = assigned.iter().map(|(e, _)| e.clone()).collect();
                let proposals = match learn_llm_module(
                    &subset,
                    &vocab,
                    learner,
                    cfg.proposal_size,
                    cfg.demo_sample_size,
                    derive_seed(iter_seed, &[1, *slot_key as u64]),
                ) {
                    Ok(p) => p,
                    Err(LearnerError::Backend(e)) => {
                        return finish(&beam, per_iteration, Some(e.to_string()))
                    }
                    Err(e) => return Err(e),
                };
                proposals_made += proposals.len();
                let k = if si == primary { cfg.expand_ratio } else { 1 };
                let mut top = match rank_modules(&proposals, &subset, &vocab, inference, k) {
                    Ok(r) => r,
                    Err(LearnerError::Backend(e)) => {
                        return finish(&beam, per_iteration, Some(e.to_string()))
                    }
                    Err(e) => return Err(e),
                };
                // an inert module repeats the slot's exit label on the whole
                // subset: attaching it neither corrects anything nor splits
                // the subset, so it would only burn depth
                let exit_label = match slot {
                    Slot::Root => Some(&vocab[0]),
                    Slot::At {
                        branch: Outcome::Label(label),
                        ..
                    } => Some(label),
                    Slot::At {
                        branch: Outcome::Unparsed,
                        ..
                    } => None,
                };
                if let Some(exit_label) = exit_label {
                    let mut kept = Vec::with_capacity(top.len());
                    for entry in top {
                        match module_is_inert(&entry.0, &subset, exit_label, &vocab, inference) {
                            Ok(true) => {}
                            Ok(false) => kept.push(entry),
                            Err(e) => return finish(&beam, per_iteration, Some(e.to_string())),
                        }
                    }
                    top = kept;
                }
                if top.is_empty() {
                    continue;
                }
                expanded_slots += 1;
                if si == primary {
                    let bases = std::mem::take(&mut variants);
                    for base in &bases {
                        for (instruction, _) in &top {
                            variants.push(base.expand(slot, LlmModule::new(instruction)?)?);
                        }
                    }
                } else {
                    let module = LlmModule::new(&top[0].0)?;
                    for variant in variants.iter_mut() {
                        *variant = variant.expand(slot, module.clone())?;
                    }
                }
            }
            new_programs.extend(variants);
        }

        // P <- P u P_new, distinct by structure; newly expanded programs
        // are inserted first so that on score ties a deeper refinement
        // displaces the parent it came from instead of stalling
        let mut candidates: Vec<Program> = Vec::new();
        for program in new_programs.into_iter().chain(beam.drain(..)) {
            if !candidates.iter().any(|c| c.same_structure(&program)) {
                candidates.push(program);
            }
        }
        let ranked = match rank_programs(
            candidates,
            train,
            inference,
            cfg.ranking,
            cfg.beam_size,
            derive_seed(cfg.seed, &[t as u64, 0xBAD1]),
        ) {
            Ok(r) => r,
            Err(LearnerError::Backend(e)) => {
                // beam was drained; rebuild a minimal one
                let empty = Program::empty(&format!("{}-lsp", train.name), vocab.clone())?;
                return finish(&[empty], per_iteration, Some(e.to_string()));
            }
            Err(e) => return Err(e),
        };

        let full_train_accuracy_best = match cfg.ranking {
            Ranking::Exact => ranked[0].1,
            Ranking::Ucb { .. } => match program_accuracy(&ranked[0].0, train, inference) {
                Ok(acc) => acc,
                Err(e) => {
                    let programs: Vec<Program> = ranked.into_iter().map(|(p, _)| p).collect();
                    return finish(&programs, per_iteration, Some(e.to_string()));
                }
            },
        };
        beam = ranked.into_iter().map(|(p, _)| p).collect();
        per_iteration.push(IterationTrace {
            iteration: t,
            batch_accuracy_best,
            full_train_accuracy_best,
            expanded_slots,
            proposals_made,
        });
    }

    finish(&beam, per_iteration, None)
}
