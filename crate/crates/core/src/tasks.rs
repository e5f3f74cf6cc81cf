//! Synthetic decision-tree task generation, JSONL dataset ingestion and
//! persistence, and stratified splits.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{Label, LlmModule, Outcome, Program, ProgramError, Slot};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("infeasible task configuration: {0}")]
    Config(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dataset file {0} is empty")]
    EmptyFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// One labeled data point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: String,
    pub output: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
    Ood,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Train => f.write_str("train"),
            SplitTag::Test => f.write_str("test"),
            SplitTag::Ood => f.write_str("ood"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub label_vocab: Vec<Label>,
    pub examples: Vec<Example>,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Ground-truth decision tree behind a synthetic task. Internal nodes test
/// one feature and branch per value; leaves carry labels.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf(Label),
    Test {
        feature: String,
        branches: Vec<(String, OracleNode)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTree {
    pub root: OracleNode,
    pub feature_names: Vec<String>,
    pub feature_values: Vec<Vec<String>>,
    pub label_vocab: Vec<Label>,
}

/// Canonical label vocabulary for synthetic tasks, by prefix.
pub const SYNTHETIC_LABELS: [&str; 4] = ["foo", "bar", "baz", "qux"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtTaskConfig {
    pub num_features: usize,
    pub values_per_feature: Vec<usize>,
    pub num_labels: usize,
    pub depth: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Force the root to test this feature index (used by presets that fix
    /// the root branching factor).
    pub root_feature: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtPreset {
    Easy,
    Medium,
    Hard,
}

impl DtPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "dt-easy" => Some(DtPreset::Easy),
            "dt-medium" => Some(DtPreset::Medium),
            "dt-hard" => Some(DtPreset::Hard),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DtPreset::Easy => "dt-easy",
            DtPreset::Medium => "dt-medium",
            DtPreset::Hard => "dt-hard",
        }
    }

    pub fn config(&self, seed: u64) -> DtTaskConfig {
        let (num_features, values, num_labels, depth, root) = match self {
            DtPreset::Easy => (2, vec![2, 2], 2, 2, None),
            DtPreset::Medium => (2, vec![3, 2], 2, 2, Some(0)),
            DtPreset::Hard => (3, vec![3, 2, 2], 4, 3, None),
        };
        DtTaskConfig {
            num_features,
            values_per_feature: values,
            num_labels,
            depth,
            n_train: 256,
            n_test: 200,
            seed,
            root_feature: root,
        }
    }
}

/// Feature names x1..xF; feature i's values are Li1..Livi with Li the i-th
/// uppercase letter.
pub fn feature_name(index: usize) -> String {
    format!("x{}", index + 1)
}

pub fn feature_value(feature_index: usize, value_index: usize) -> String {
    let letter = (b'A' + feature_index as u8) as char;
    format!("{letter}{}", value_index + 1)
}

fn synthetic_vocab(num_labels: usize) -> Result<Vec<Label>, TaskError> {
    if !(2..=SYNTHETIC_LABELS.len()).contains(&num_labels) {
        return Err(TaskError::Config(format!(
            "num_labels must be between 2 and {}, got {num_labels}",
            SYNTHETIC_LABELS.len()
        )));
    }
    Ok(SYNTHETIC_LABELS[..num_labels]
        .iter()
        .map(|l| Label::new(l).unwrap())
        .collect())
}

/// Generate a synthetic decision-tree task: a uniformly random full oracle
/// tree of the given depth with distinct features per path, plus seeded
/// train/test samples labeled by it.
pub fn gen_dt_task(cfg: &DtTaskConfig) -> Result<(Dataset, Dataset, OracleTree), TaskError> {
    if cfg.values_per_feature.len() != cfg.num_features {
        return Err(TaskError::Config(
            "values_per_feature length must equal num_features".into(),
        ));
    }
    if cfg.depth == 0 || cfg.depth > cfg.num_features {
        return Err(TaskError::Config(format!(
            "depth must be in 1..=num_features, got {}",
            cfg.depth
        )));
    }
    if cfg.values_per_feature.iter().any(|&v| v < 2) {
        return Err(TaskError::Config("every feature needs >= 2 values".into()));
    }
    if let Some(root) = cfg.root_feature {
        if root >= cfg.num_features {
            return Err(TaskError::Config(format!(
                "root_feature {root} out of range"
            )));
        }
    }
    let vocab = synthetic_vocab(cfg.num_labels)?;
    let feature_names: Vec<String> = (0..cfg.num_features).map(feature_name).collect();
    let feature_values: Vec<Vec<String>> = (0..cfg.num_features)
        .map(|f| (0..cfg.values_per_feature[f]).map(|v| feature_value(f, v)).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut leaf_slots = Vec::new();
    let root = build_structure(cfg, &mut rng, &Vec::new(), 0, &mut leaf_slots);
    if leaf_slots.len() < cfg.num_labels {
        return Err(TaskError::Config(format!(
            "tree has {} leaves but {} labels must all appear",
            leaf_slots.len(),
            cfg.num_labels
        )));
    }
    let mut root = root;
    // resample leaf labels until every label appears
    loop {
        let mut labels = Vec::new();
        assign_leaves(&mut root, &vocab, &mut rng, &mut labels);
        if vocab.iter().all(|l| labels.contains(l)) {
            break;
        }
    }
    let oracle = OracleTree {
        root,
        feature_names,
        feature_values,
        label_vocab: vocab.clone(),
    };

    let draw = |rng: &mut ChaCha8Rng, n: usize, tag: SplitTag, name: &str| {
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let assignment: Vec<(String, String)> = (0..cfg.num_features)
                .map(|f| {
                    let v = rng.gen_range(0..cfg.values_per_feature[f]);
                    (feature_name(f), feature_value(f, v))
                })
                .collect();
            let input = render_input(&assignment);
            let output = eval_oracle(&oracle.root, &assignment).expect("full assignment");
            examples.push(Example { input, output });
        }
        Dataset {
            name: name.to_string(),
            label_vocab: vocab.clone(),
            examples,
            split_tag: tag,
        }
    };
    let train = draw(&mut rng, cfg.n_train, SplitTag::Train, "train");
    let test = draw(&mut rng, cfg.n_test, SplitTag::Test, "test");
    Ok((train, test, oracle))
}

fn build_structure(
    cfg: &DtTaskConfig,
    rng: &mut ChaCha8Rng,
    used: &[usize],
    level: usize,
    leaf_slots: &mut Vec<()>,
) -> OracleNode {
    if level == cfg.depth {
        leaf_slots.push(());
        // placeholder; leaves are labeled afterwards
        return OracleNode::Leaf(Label::new(SYNTHETIC_LABELS[0]).unwrap());
    }
    let available: Vec<usize> = (0..cfg.num_features).filter(|f| !used.contains(f)).collect();
    let feature = if level == 0 {
        cfg.root_feature
            .unwrap_or_else(|| available[rng.gen_range(0..available.len())])
    } else {
        available[rng.gen_range(0..available.len())]
    };
    let mut next_used = used.to_vec();
    next_used.push(feature);
    let branches = (0..cfg.values_per_feature[feature])
        .map(|v| {
            (
                feature_value(feature, v),
                build_structure(cfg, rng, &next_used, level + 1, leaf_slots),
            )
        })
        .collect();
    OracleNode::Test {
        feature: feature_name(feature),
        branches,
    }
}

fn assign_leaves(
    node: &mut OracleNode,
    vocab: &[Label],
    rng: &mut ChaCha8Rng,
    seen: &mut Vec<Label>,
) {
    match node {
        OracleNode::Leaf(label) => {
            *label = vocab[rng.gen_range(0..vocab.len())].clone();
            seen.push(label.clone());
        }
        OracleNode::Test { branches, .. } => {
            for (_, child) in branches {
                assign_leaves(child, vocab, rng, seen);
            }
        }
    }
}

pub fn render_input(assignment: &[(String, String)]) -> String {
    assignment
        .iter()
        .map(|(f, v)| format!("{f}={v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn eval_oracle(node: &OracleNode, assignment: &[(String, String)]) -> Result<Label, TaskError> {
    match node {
        OracleNode::Leaf(label) => Ok(label.clone()),
        OracleNode::Test { feature, branches } => {
            let value = assignment
                .iter()
                .find(|(f, _)| f == feature)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| TaskError::Input(format!("missing feature {feature}")))?;
            let (_, child) = branches
                .iter()
                .find(|(v, _)| *v == value)
                .ok_or_else(|| TaskError::Input(format!("unknown value {value} for {feature}")))?;
            eval_oracle(child, assignment)
        }
    }
}

/// Evaluate the oracle on a rendered input string.
pub fn oracle_label(oracle: &OracleTree, input: &str) -> Result<Label, TaskError> {
    let pairs = crate::backend::parse_input_pairs(input);
    if pairs.is_empty() {
        return Err(TaskError::Input(format!(
            "input {input:?} has no feature=value pairs"
        )));
    }
    eval_oracle(&oracle.root, &pairs)
}

/// Encode the oracle as a runnable program over the mock rule backend.
/// Multi-way branching unrolls into a chain of depth-1 rules on the same
/// feature, so the encoding works for any vocabulary of >= 2 labels.
pub fn oracle_to_program(oracle: &OracleTree, name: &str) -> Result<Program, TaskError> {
    let program = Program::empty(name, oracle.label_vocab.clone())?;
    Ok(attach(program, &Slot::Root, &oracle.root, &oracle.label_vocab)?)
}

fn attach(
    program: Program,
    slot: &Slot,
    node: &OracleNode,
    vocab: &[Label],
) -> Result<Program, ProgramError> {
    match node {
        OracleNode::Leaf(label) => {
            let module = LlmModule::new(&format!("on x1: *->{label}"))?;
            program.expand(slot, module)
        }
        OracleNode::Test { feature, branches } => {
            attach_chain(program, slot, feature, branches, vocab)
        }
    }
}

fn attach_chain(
    program: Program,
    slot: &Slot,
    feature: &str,
    branches: &[(String, OracleNode)],
    vocab: &[Label],
) -> Result<Program, ProgramError> {
    if branches.len() == 1 {
        // every input reaching this slot carries the remaining value
        return attach(program, slot, &branches[0].1, vocab);
    }
    let (value, sub) = &branches[0];
    match sub {
        OracleNode::Leaf(label) => {
            let fallback = vocab
                .iter()
                .find(|l| *l != label)
                .expect("vocab has >= 2 labels")
                .clone();
            let module =
                LlmModule::new(&format!("on {feature}: {value}->{label}, *->{fallback}"))?;
            let program = program.expand(slot, module)?;
            let node_id = program.nodes().last().unwrap().id;
            let rest_slot = Slot::At {
                node: node_id,
                branch: Outcome::Label(fallback),
            };
            attach_chain(program, &rest_slot, feature, &branches[1..], vocab)
        }
        OracleNode::Test { .. } => {
            let descend = vocab[0].clone();
            let fallback = vocab[1].clone();
            let module =
                LlmModule::new(&format!("on {feature}: {value}->{descend}, *->{fallback}"))?;
            let program = program.expand(slot, module)?;
            let node_id = program.nodes().last().unwrap().id;
            let program = attach(
                program,
                &Slot::At {
                    node: node_id,
                    branch: Outcome::Label(descend),
                },
                sub,
                vocab,
            )?;
            let rest_slot = Slot::At {
                node: node_id,
                branch: Outcome::Label(fallback),
            };
            attach_chain(program, &rest_slot, feature, &branches[1..], vocab)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExampleWire {
    input: String,
    output: String,
}

/// Load a JSONL dataset. The vocabulary comes from a `<stem>.labels.json`
/// sidecar when present, otherwise from the sorted distinct outputs.
pub fn load_jsonl(path: &Path) -> Result<Dataset, TaskError> {
    let display = path.display().to_string();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: ExampleWire =
            serde_json::from_str(&line).map_err(|e| TaskError::Parse {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        let output = Label::new(&wire.output).map_err(|e| TaskError::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        examples.push(Example {
            input: wire.input,
            output,
        });
    }
    if examples.is_empty() {
        return Err(TaskError::EmptyFile(display));
    }

    let mut sidecar = path.with_extension("labels.json");
    if !sidecar.exists() {
        // fall back to a task-level labels.json next to the dataset
        if let Some(dir) = path.parent() {
            let shared = dir.join("labels.json");
            if shared.exists() {
                sidecar = shared;
            }
        }
    }
    let label_vocab = if sidecar.exists() {
        let raw: Vec<String> = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
            .map_err(|e| TaskError::Parse {
                path: sidecar.display().to_string(),
                line: 1,
                message: e.to_string(),
            })?;
        raw.iter()
            .map(|l| Label::new(l))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let mut distinct: Vec<Label> = Vec::new();
        for e in &examples {
            if !distinct.contains(&e.output) {
                distinct.push(e.output.clone());
            }
        }
        distinct.sort();
        distinct
    };
    for e in &examples {
        if !label_vocab.contains(&e.output) {
            return Err(TaskError::Input(format!(
                "output {:?} is not in the label vocabulary",
                e.output.as_str()
            )));
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(Dataset {
        name,
        label_vocab,
        examples,
        split_tag: SplitTag::Train,
    })
}

/// Write one JSON object per line, keys in the order input, output.
pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<(), TaskError> {
    let mut file = std::fs::File::create(path)?;
    for example in &dataset.examples {
        let wire = ExampleWire {
            input: example.input.clone(),
            output: example.output.as_str().to_string(),
        };
        writeln!(file, "{}", serde_json::to_string(&wire).unwrap())?;
    }
    Ok(())
}

pub fn save_labels(dataset: &Dataset, path: &Path) -> Result<(), TaskError> {
    let labels: Vec<&str> = dataset.label_vocab.iter().map(|l| l.as_str()).collect();
    std::fs::write(path, serde_json::to_string_pretty(&labels).unwrap())?;
    Ok(())
}

/// Stratified split: per label, a seeded shuffle and a `fraction` cut.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), TaskError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(TaskError::Config(format!(
            "split fraction must be in [0,1], got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for label in &dataset.label_vocab {
        let mut group: Vec<&Example> = dataset
            .examples
            .iter()
            .filter(|e| e.output == *label)
            .collect();
        group.shuffle(&mut rng);
        let cut = (fraction * group.len() as f64).ceil() as usize;
        for (i, e) in group.into_iter().enumerate() {
            if i < cut {
                first.push(e.clone());
            } else {
                second.push(e.clone());
            }
        }
    }
    let make = |examples: Vec<Example>, suffix: &str, tag: SplitTag| Dataset {
        name: format!("{}-{suffix}", dataset.name),
        label_vocab: dataset.label_vocab.clone(),
        examples,
        split_tag: tag,
    };
    Ok((
        make(first, "a", SplitTag::Train),
        make(second, "b", SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockRuleBackend;

    #[test]
    fn presets_match_expected_shapes() {
        let (train, test, _) = gen_dt_task(&DtPreset::Easy.config(0)).unwrap();
        assert_eq!(train.len(), 256);
        assert_eq!(test.len(), 200);
        for e in &train.examples {
            assert!(e.input.starts_with("x1=A"));
            assert!(e.input.contains("; x2=B"));
            assert!(["foo", "bar"].contains(&e.output.as_str()));
        }

        let (train, _, oracle) = gen_dt_task(&DtPreset::Hard.config(1)).unwrap();
        assert_eq!(oracle.label_vocab.len(), 4);
        // Table-format inputs: three features, in order
        let parts: Vec<&str> = train.examples[0].input.split("; ").collect();
        assert_eq!(parts.len(), 3);
        assert!(parts[0].starts_with("x1="));
        assert!(parts[2].starts_with("x3="));

        let (_, _, medium) = gen_dt_task(&DtPreset::Medium.config(5)).unwrap();
        match &medium.root {
            OracleNode::Test { feature, branches } => {
                assert_eq!(feature, "x1");
                assert_eq!(branches.len(), 3);
            }
            OracleNode::Leaf(_) => panic!("medium oracle root must branch"),
        }
    }

    #[test]
    fn generated_examples_agree_with_oracle() {
        for preset in [DtPreset::Easy, DtPreset::Medium, DtPreset::Hard] {
            let (train, test, oracle) = gen_dt_task(&preset.config(3)).unwrap();
            for e in train.examples.iter().chain(&test.examples) {
                assert_eq!(oracle_label(&oracle, &e.input).unwrap(), e.output);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_dt_task(&DtPreset::Hard.config(9)).unwrap();
        let b = gen_dt_task(&DtPreset::Hard.config(9)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn oracle_label_reports_bad_inputs() {
        let (_, _, oracle) = gen_dt_task(&DtPreset::Easy.config(0)).unwrap();
        assert!(matches!(
            oracle_label(&oracle, "x1=Z9"),
            Err(TaskError::Input(_))
        ));
        assert!(matches!(
            oracle_label(&oracle, "no pairs here"),
            Err(TaskError::Input(_))
        ));
    }

    #[test]
    fn depth2_oracle_partitions_assignments_into_leaf_classes() {
        // exhaustively walk the full product space of a depth-2 oracle
        let cfg = DtPreset::Easy.config(4);
        let (_, _, oracle) = gen_dt_task(&cfg).unwrap();
        let mut leaf_count = 0;
        fn count_leaves(node: &OracleNode, acc: &mut usize) {
            match node {
                OracleNode::Leaf(_) => *acc += 1,
                OracleNode::Test { branches, .. } => {
                    for (_, c) in branches {
                        count_leaves(c, acc);
                    }
                }
            }
        }
        count_leaves(&oracle.root, &mut leaf_count);
        assert_eq!(leaf_count, 4);
        let mut classes = 0;
        for a in 0..2 {
            for b in 0..2 {
                let input = format!("x1=A{}; x2=B{}", a + 1, b + 1);
                oracle_label(&oracle, &input).unwrap();
                classes += 1;
            }
        }
        assert_eq!(classes, leaf_count);
    }

    #[test]
    fn oracle_program_encoding_matches_oracle_exhaustively() {
        let backend = MockRuleBackend::new();
        for preset in [DtPreset::Easy, DtPreset::Medium, DtPreset::Hard] {
            for seed in 0..5u64 {
                let cfg = preset.config(seed);
                let (_, _, oracle) = gen_dt_task(&cfg).unwrap();
                let program = oracle_to_program(&oracle, "oracle").unwrap();
                // walk the full product space
                let mut assignments = vec![Vec::new()];
                for f in 0..cfg.num_features {
                    let mut next = Vec::new();
                    for partial in &assignments {
                        for v in 0..cfg.values_per_feature[f] {
                            let mut a: Vec<(String, String)> = partial.clone();
                            a.push((feature_name(f), feature_value(f, v)));
                            next.push(a);
                        }
                    }
                    assignments = next;
                }
                for assignment in assignments {
                    let input = render_input(&assignment);
                    let expected = oracle_label(&oracle, &input).unwrap();
                    let (outcome, _) = program.predict(&input, &backend).unwrap();
                    assert_eq!(
                        outcome,
                        crate::program::Outcome::Label(expected),
                        "preset {:?} seed {seed} input {input}",
                        preset
                    );
                }
            }
        }
    }

    #[test]
    fn jsonl_round_trip_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let (train, _, _) = gen_dt_task(&DtPreset::Easy.config(0)).unwrap();
        save_jsonl(&train, &path).unwrap();
        save_labels(&train, &dir.path().join("train.labels.json")).unwrap();

        let loaded = load_jsonl(&path).unwrap();
        assert_eq!(loaded.examples, train.examples);
        assert_eq!(loaded.label_vocab, train.label_vocab);

        // canonical save is byte-stable
        let bytes_a = std::fs::read(&path).unwrap();
        save_jsonl(&loaded, &path).unwrap();
        assert_eq!(bytes_a, std::fs::read(&path).unwrap());
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"input\": \"x1=A1\", \"output\": \"foo\"}\nnope\n").unwrap();
        match load_jsonl(&path) {
            Err(TaskError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(load_jsonl(&empty), Err(TaskError::EmptyFile(_))));
    }

    #[test]
    fn split_is_stratified_and_sized() {
        let (train, _, _) = gen_dt_task(&DtTaskConfig {
            n_train: 100,
            ..DtPreset::Easy.config(1)
        })
        .unwrap();
        let (a, b) = split(&train, 0.8, 0).unwrap();
        assert_eq!(a.len() + b.len(), 100);
        let expected = (0.8f64 * 100.0).ceil() as usize;
        let slack = train.label_vocab.len();
        assert!(
            a.len() >= expected - slack && a.len() <= expected + slack,
            "got {} expected about {expected}",
            a.len()
        );
    }
}
