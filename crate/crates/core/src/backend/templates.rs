//! Fixed prompt templates, versioned by template id. The template text is
//! part of the cache key, so any edit here must bump the id.

use super::{ClassifyRequest, SummarizeRequest};

/// Chat message as sent over the wire.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

pub fn render_classify(req: &ClassifyRequest) -> Vec<Message> {
    let labels = req
        .label_vocab
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    vec![
        Message {
            role: "system",
            content: "You are a precise classifier. Answer with exactly one of the \
                      allowed labels and nothing else."
                .to_string(),
        },
        Message {
            role: "user",
            content: format!(
                "Instruction: {}\n\nInput: {}\n\nAllowed labels: {}\n\nAnswer with one label only.",
                req.instruction, req.input, labels
            ),
        },
    ]
}

pub fn render_summarize(req: &SummarizeRequest) -> Vec<Message> {
    let labels = req
        .label_vocab
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let mut demos = String::new();
    for (input, output) in &req.demonstrations {
        demos.push_str(&format!("Input: {input}\nLabel: {output}\n\n"));
    }
    vec![
        Message {
            role: "system",
            content: "You summarize classification rules from labeled examples."
                .to_string(),
        },
        Message {
            role: "user",
            content: format!(
                "Below are labeled examples of a classification task with labels: {labels}.\n\n\
                 {demos}\
                 Write one concise instruction that tells a reader how to pick the correct \
                 label for a new input. State the rule directly. Reply with the instruction \
                 text only."
            ),
        },
    ]
}
