//! LSP: tree-structured classifiers whose internal nodes are
//! natural-language-instructed LLM modules, grown by divide-and-conquer
//! beam search over summarized rules.

pub mod backend;
pub mod eval;
pub mod learner;
pub mod program;
pub mod tasks;

pub use backend::{Backend, BackendConfig, BackendError, BackendKind};
pub use eval::{evaluate, ood_retention, run_seeds, EvalReport};
pub use learner::{fit, SearchConfig, TrainReport};
pub use program::{Label, LlmModule, Outcome, Program, Slot};
pub use tasks::{gen_dt_task, load_jsonl, oracle_label, save_jsonl, Dataset, DtPreset, Example};
