//! The LSP data model: tree-structured programs whose internal nodes are
//! instruction-carrying LLM modules, plus traversal, routing, expansion,
//! statistics, serialization, and rendering.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::backend::{Backend, BackendError, ClassifyRequest, CLASSIFY_TEMPLATE_ID};
use crate::tasks::Example;

/// Sentinel instruction for a module that has not been trained yet.
pub const UNINITIALIZED_INSTRUCTION: &str = "none";

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("invalid label {0:?}: labels must be non-empty with no surrounding whitespace")]
    InvalidLabel(String),
    #[error("label vocabulary must contain at least 2 distinct labels")]
    InvalidVocab,
    #[error("invalid expansion slot: {0}")]
    InvalidSlot(String),
    #[error("malformed program JSON: {0}")]
    Malformed(String),
    #[error("unsupported program schema version {0}")]
    UnsupportedVersion(u32),
    #[error("node {node} child id {child} does not reference an existing node")]
    DanglingChild { node: usize, child: usize },
    #[error("node {node} has duplicate child key {label:?}")]
    DuplicateChildLabel { node: usize, label: String },
    #[error("node {node} child key {label:?} is not in the label vocabulary")]
    UnknownChildLabel { node: usize, label: String },
    #[error("node id {found} at position {expected}: ids must follow creation order")]
    IdOutOfOrder { expected: usize, found: usize },
    #[error("cycle through node {0}")]
    Cycle(usize),
    #[error("node {0} has multiple parents")]
    MultipleParents(usize),
    #[error("node {0} is unreachable from the root")]
    Unreachable(usize),
    #[error("root must be present exactly when the program has nodes")]
    RootMismatch,
    #[error("module instruction must be non-empty (use \"none\" for uninitialized)")]
    EmptyInstruction,
}

/// A class label. Normalized to Unicode NFC and trimmed at construction;
/// comparison is plain byte equality afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(token: &str) -> Result<Self, ProgramError> {
        let normalized: String = token.nfc().collect();
        if normalized.is_empty() || normalized.trim() != normalized {
            return Err(ProgramError::InvalidLabel(token.to_string()));
        }
        Ok(Label(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Index of a node within its program; assigned in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One LLM module: a natural-language instruction executed against an input
/// to produce a label from the program's vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmModule {
    pub instruction: String,
}

impl LlmModule {
    pub fn new(instruction: &str) -> Result<Self, ProgramError> {
        if instruction.is_empty() {
            return Err(ProgramError::EmptyInstruction);
        }
        Ok(LlmModule {
            instruction: instruction.to_string(),
        })
    }

    pub fn uninitialized() -> Self {
        LlmModule {
            instruction: UNINITIALIZED_INSTRUCTION.to_string(),
        }
    }
}

/// The result of one module call: a vocabulary label, or the reserved
/// unparsed token when the reply named zero or several labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Label(Label),
    Unparsed,
}

impl Outcome {
    pub fn as_label(&self) -> Option<&Label> {
        match self {
            Outcome::Label(l) => Some(l),
            Outcome::Unparsed => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Label(l) => f.write_str(l.as_str()),
            Outcome::Unparsed => f.write_str("<unparsed>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub module: LlmModule,
    pub children: BTreeMap<Label, NodeId>,
}

/// An expansion slot: a branch of the frontier where a new node may be
/// attached. The empty program owns a single Root pseudo-slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    Root,
    At { node: NodeId, branch: Outcome },
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Root => f.write_str("ROOT"),
            Slot::At { node, branch } => write!(f, "({node}, {branch})"),
        }
    }
}

/// The per-call record of one traversal: which node fired, what it predicted,
/// and the label the program finally returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePath {
    pub steps: Vec<(NodeId, Outcome)>,
    pub final_label: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgramStats {
    pub depth: usize,
    pub node_count: usize,
    pub slot_count: usize,
    pub sparsity: f64,
}

/// A tree of LLM modules with label-keyed branching. Immutable after
/// construction; expansion copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    label_vocab: Vec<Label>,
    nodes: Vec<Node>,
    root: Option<NodeId>,
}

impl Program {
    /// The empty program p0.
    pub fn empty(name: &str, label_vocab: Vec<Label>) -> Result<Self, ProgramError> {
        if label_vocab.len() < 2 {
            return Err(ProgramError::InvalidVocab);
        }
        let mut seen = std::collections::HashSet::new();
        for l in &label_vocab {
            if !seen.insert(l.clone()) {
                return Err(ProgramError::InvalidVocab);
            }
        }
        Ok(Program {
            name: name.to_string(),
            label_vocab,
            nodes: Vec::new(),
            root: None,
        })
    }

    pub fn label_vocab(&self) -> &[Label] {
        &self.label_vocab
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn vocab_index(&self, label: &Label) -> Option<usize> {
        self.label_vocab.iter().position(|l| l == label)
    }

    /// Default prediction of the empty program and of untrained branches.
    pub fn default_label(&self) -> &Label {
        &self.label_vocab[0]
    }

    /// Structural equality ignoring the program name.
    pub fn same_structure(&self, other: &Program) -> bool {
        self.label_vocab == other.label_vocab
            && self.root == other.root
            && self.nodes == other.nodes
    }

    /// All frontier slots, in canonical order: Root for the empty program,
    /// otherwise (node id, vocab index) pairs without a child.
    pub fn slots(&self) -> Vec<Slot> {
        if self.is_empty() {
            return vec![Slot::Root];
        }
        let mut out = Vec::new();
        for node in &self.nodes {
            for label in &self.label_vocab {
                if !node.children.contains_key(label) {
                    out.push(Slot::At {
                        node: node.id,
                        branch: Outcome::Label(label.clone()),
                    });
                }
            }
        }
        out
    }

    /// Canonical ordering key for slots: Root first, then node id, then
    /// label index within the vocabulary, with unparsed branches last.
    pub fn slot_order_key(&self, slot: &Slot) -> (usize, usize, usize) {
        match slot {
            Slot::Root => (0, 0, 0),
            Slot::At { node, branch } => {
                let branch_key = match branch {
                    Outcome::Label(l) => self.vocab_index(l).unwrap_or(usize::MAX - 1),
                    Outcome::Unparsed => usize::MAX,
                };
                (1, node.0, branch_key)
            }
        }
    }

    /// Depth of the node: number of modules on the path from the root to it,
    /// inclusive.
    pub fn node_depth(&self, id: NodeId) -> usize {
        let mut depth = 1;
        let mut current = id;
        loop {
            match self.parent_of(current) {
                Some(parent) => {
                    depth += 1;
                    current = parent;
                }
                None => return depth,
            }
        }
    }

    fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.children.values().any(|&c| c == id))
            .map(|n| n.id)
    }

    /// Maximum number of modules on any root-to-exit path; 0 when empty.
    pub fn depth(&self) -> usize {
        fn walk(prog: &Program, id: NodeId) -> usize {
            1 + prog
                .node(id)
                .children
                .values()
                .map(|&c| walk(prog, c))
                .max()
                .unwrap_or(0)
        }
        match self.root {
            Some(root) => walk(self, root),
            None => 0,
        }
    }

    pub fn stats(&self) -> ProgramStats {
        let node_count = self.nodes.len();
        let edges: usize = self.nodes.iter().map(|n| n.children.len()).sum();
        let sparsity = if node_count == 0 {
            0.0
        } else {
            edges as f64 / (node_count * self.label_vocab.len()) as f64
        };
        ProgramStats {
            depth: self.depth(),
            node_count,
            slot_count: self.slots().len(),
            sparsity,
        }
    }

    /// Top-down traversal: each node's module classifies the input; descend
    /// through the child registered under the prediction, or exit with it.
    /// The empty program deterministically returns the first vocab label.
    pub fn predict(
        &self,
        input: &str,
        backend: &dyn Backend,
    ) -> Result<(Outcome, TracePath), BackendError> {
        let mut steps = Vec::new();
        let mut current = match self.root {
            Some(root) => root,
            None => {
                let label = Outcome::Label(self.default_label().clone());
                return Ok((
                    label.clone(),
                    TracePath {
                        steps,
                        final_label: label,
                    },
                ));
            }
        };
        loop {
            let node = self.node(current);
            let response = backend.classify(&ClassifyRequest {
                instruction: node.module.instruction.clone(),
                input: input.to_string(),
                label_vocab: self.label_vocab.clone(),
                template_id: CLASSIFY_TEMPLATE_ID.to_string(),
            })?;
            let outcome = response.parsed;
            steps.push((current, outcome.clone()));
            match &outcome {
                Outcome::Label(label) => match node.children.get(label) {
                    Some(&child) => current = child,
                    None => {
                        return Ok((
                            outcome.clone(),
                            TracePath {
                                steps,
                                final_label: outcome,
                            },
                        ))
                    }
                },
                Outcome::Unparsed => {
                    return Ok((
                        outcome.clone(),
                        TracePath {
                            steps,
                            final_label: outcome,
                        },
                    ))
                }
            }
        }
    }

    /// The frontier slot where a traversal exits.
    pub fn exit_slot(&self, trace: &TracePath) -> Slot {
        match trace.steps.last() {
            None => Slot::Root,
            Some((node, outcome)) => Slot::At {
                node: *node,
                branch: outcome.clone(),
            },
        }
    }

    /// Assign each example to the frontier slot where its traversal exits,
    /// flagging it as an error when the exit label differs from its true
    /// label. The result is a partition of the input, in canonical slot order.
    pub fn route(
        &self,
        examples: &[Example],
        backend: &dyn Backend,
    ) -> Result<Vec<(Slot, Vec<(Example, bool)>)>, BackendError> {
        let mut by_slot: Vec<(Slot, Vec<(Example, bool)>)> = Vec::new();
        for example in examples {
            let (outcome, trace) = self.predict(&example.input, backend)?;
            let slot = self.exit_slot(&trace);
            let is_error = outcome.as_label() != Some(&example.output);
            match by_slot.iter_mut().find(|(s, _)| *s == slot) {
                Some((_, list)) => list.push((example.clone(), is_error)),
                None => by_slot.push((slot, vec![(example.clone(), is_error)])),
            }
        }
        by_slot.sort_by_key(|(slot, _)| self.slot_order_key(slot));
        Ok(by_slot)
    }

    /// Return a new program with one new node holding `module` attached at
    /// `slot`. The input program is untouched.
    pub fn expand(&self, slot: &Slot, module: LlmModule) -> Result<Program, ProgramError> {
        let mut next = self.clone();
        let new_id = NodeId(next.nodes.len());
        match slot {
            Slot::Root => {
                if !self.is_empty() {
                    return Err(ProgramError::InvalidSlot(
                        "ROOT slot is only valid for the empty program".into(),
                    ));
                }
                next.root = Some(new_id);
            }
            Slot::At { node, branch } => {
                let label = match branch {
                    Outcome::Label(l) => l.clone(),
                    Outcome::Unparsed => {
                        return Err(ProgramError::InvalidSlot(
                            "cannot attach a child under the unparsed branch".into(),
                        ))
                    }
                };
                if node.0 >= self.nodes.len() {
                    return Err(ProgramError::InvalidSlot(format!(
                        "node {node} does not exist"
                    )));
                }
                if self.vocab_index(&label).is_none() {
                    return Err(ProgramError::InvalidSlot(format!(
                        "label {label:?} is not in the vocabulary"
                    )));
                }
                if self.node(*node).children.contains_key(&label) {
                    return Err(ProgramError::InvalidSlot(format!(
                        "slot ({node}, {label}) already has a child"
                    )));
                }
                next.nodes[node.0].children.insert(label, new_id);
            }
        }
        next.nodes.push(Node {
            id: new_id,
            module,
            children: BTreeMap::new(),
        });
        Ok(next)
    }

    pub fn to_json(&self) -> String {
        let doc = ProgramJson {
            version: 1,
            name: self.name.clone(),
            labels: self.label_vocab.iter().map(|l| l.0.clone()).collect(),
            root: self.root.map(|r| r.0),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id.0,
                    instruction: n.module.instruction.clone(),
                    children: Children(
                        // vocab order, for byte-stable output
                        self.label_vocab
                            .iter()
                            .filter_map(|l| n.children.get(l).map(|c| (l.0.clone(), c.0)))
                            .collect(),
                    ),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("program serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Program, ProgramError> {
        let doc: ProgramJson =
            serde_json::from_str(text).map_err(|e| ProgramError::Malformed(e.to_string()))?;
        if doc.version != 1 {
            return Err(ProgramError::UnsupportedVersion(doc.version));
        }
        let mut vocab = Vec::new();
        for raw in &doc.labels {
            vocab.push(Label::new(raw)?);
        }
        let mut program = Program::empty(&doc.name, vocab)?;
        let n = doc.nodes.len();
        match (doc.root, n) {
            (None, 0) => return Ok(program),
            (None, _) | (Some(_), 0) => return Err(ProgramError::RootMismatch),
            (Some(root), _) if root >= n => {
                return Err(ProgramError::DanglingChild { node: root, child: root })
            }
            _ => {}
        }
        program.root = doc.root.map(NodeId);
        let mut in_degree = vec![0usize; n];
        for (pos, node) in doc.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(ProgramError::IdOutOfOrder {
                    expected: pos,
                    found: node.id,
                });
            }
            let mut children = BTreeMap::new();
            for (raw_label, child) in &node.children.0 {
                let label = Label::new(raw_label)?;
                if program.vocab_index(&label).is_none() {
                    return Err(ProgramError::UnknownChildLabel {
                        node: pos,
                        label: raw_label.clone(),
                    });
                }
                if *child >= n {
                    return Err(ProgramError::DanglingChild {
                        node: pos,
                        child: *child,
                    });
                }
                if children.insert(label, NodeId(*child)).is_some() {
                    return Err(ProgramError::DuplicateChildLabel {
                        node: pos,
                        label: raw_label.clone(),
                    });
                }
                in_degree[*child] += 1;
            }
            program.nodes.push(Node {
                id: NodeId(pos),
                module: LlmModule::new(&node.instruction)?,
                children,
            });
        }
        let root = program.root.unwrap();
        if in_degree[root.0] > 0 {
            return Err(ProgramError::Cycle(root.0));
        }
        for (idx, &deg) in in_degree.iter().enumerate() {
            if deg > 1 {
                return Err(ProgramError::MultipleParents(idx));
            }
        }
        // In-degrees are now 0 or 1 with the root at 0, so any remaining
        // cycle is unreachable from the root.
        let mut visited = vec![false; n];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if visited[id.0] {
                return Err(ProgramError::Cycle(id.0));
            }
            visited[id.0] = true;
            stack.extend(program.node(id).children.values().copied());
        }
        if let Some(idx) = visited.iter().position(|v| !v) {
            return Err(ProgramError::Unreachable(idx));
        }
        Ok(program)
    }

    /// Indented one-line-per-node text rendering.
    pub fn render_text(&self) -> String {
        let root = match self.root {
            Some(root) => root,
            None => return "(empty program)".to_string(),
        };
        let mut out = String::new();
        self.render_node(root, 0, None, &mut out);
        out
    }

    fn render_node(&self, id: NodeId, indent: usize, via: Option<&Label>, out: &mut String) {
        let node = self.node(id);
        let pad = "  ".repeat(indent);
        match via {
            Some(label) => out.push_str(&format!(
                "{pad}{label} -> [{id}] {}\n",
                node.module.instruction
            )),
            None => out.push_str(&format!("{pad}[{id}] {}\n", node.module.instruction)),
        }
        for label in &self.label_vocab {
            if let Some(&child) = node.children.get(label) {
                self.render_node(child, indent + 1, Some(label), out);
            }
        }
    }

    /// DOT digraph with one vertex per node and one labeled edge per child.
    pub fn render_dot(&self) -> String {
        fn escape(s: &str) -> String {
            s.replace('\\', "\\\\").replace('"', "\\\"")
        }
        let mut out = String::from("digraph program {\n  rankdir=TB;\n  node [shape=box];\n");
        for node in &self.nodes {
            out.push_str(&format!(
                "  n{} [label=\"[{}] {}\"];\n",
                node.id, node.id,
                escape(&node.module.instruction)
            ));
        }
        for node in &self.nodes {
            for label in &self.label_vocab {
                if let Some(&child) = node.children.get(label) {
                    out.push_str(&format!(
                        "  n{} -> n{} [label=\"{}\"];\n",
                        node.id,
                        child,
                        escape(label.as_str())
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ProgramJson {
    version: u32,
    name: String,
    labels: Vec<String>,
    root: Option<usize>,
    nodes: Vec<NodeJson>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: usize,
    instruction: String,
    children: Children,
}

/// Children as an ordered pair list so duplicate JSON keys are detectable.
struct Children(Vec<(String, usize)>);

impl Serialize for Children {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Children {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairVisitor;
        impl<'de> Visitor<'de> for PairVisitor {
            type Value = Children;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from label to node id")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Children, A::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, usize>()? {
                    pairs.push((k, v));
                }
                Ok(Children(pairs))
            }
        }
        deserializer.deserialize_map(PairVisitor)
    }
}
