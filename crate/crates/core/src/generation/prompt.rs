//! Prompt templates, digests, and prompt rendering.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::chat::{ChatError, ChatMessage, ChatModel};
use crate::clustering::Cluster;
use crate::corpus::ResearchQuestion;
use crate::retrieval::{score_order, ScoredChunk};

/// Model output meaning "this cluster holds nothing relevant".
pub const EMPTY_SENTINEL: &str = "NO RELEVANT EVIDENCE";

/// Passage block used when every digest was empty-marked.
pub const NO_EVIDENCE_NOTICE: &str = "No relevant evidence was found in the retrieved studies.";

/// Passage block used when no retrieval is performed at all.
pub const NO_PASSAGES_NOTICE: &str = "No study passages are provided. Answer from your own knowledge.";

pub const DEFAULT_PASSAGE_BUDGET: usize = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Extraction,
    Answer,
}

impl TemplateName {
    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Extraction => &["question", "passages"],
            TemplateName::Answer => &["question", "left", "right", "passages"],
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateName::Extraction => "extraction",
            TemplateName::Answer => "answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: String,
    pub user_text_pattern: String,
}

const EXTRACTION_SYSTEM: &str = "You are a careful assistant for systematic reviews of randomized controlled trials.";

const EXTRACTION_USER: &str = "Research question: {question}
Comparison: {left} versus {right}

Passages from the included studies:
{passages}

Extract the evidence relevant to the research question, including numerical outcomes and confidence intervals. \
Cite the study id for every finding. If the passages contain nothing relevant, reply with exactly: NO RELEVANT EVIDENCE";

const ANSWER_SYSTEM: &str = "You are an expert in evidence synthesis for medical systematic reviews.";

const ANSWER_USER: &str = "Research question: {question}
Comparison: {left} versus {right}

Evidence extracted from the included studies:
{passages}

Based on this evidence, decide whether the outcome favours {left}, favours {right}, or shows no difference between them.";

impl PromptTemplate {
    pub fn default_extraction() -> Self {
        Self {
            name: TemplateName::Extraction,
            system_text: EXTRACTION_SYSTEM.into(),
            user_text_pattern: EXTRACTION_USER.into(),
        }
    }

    pub fn default_answer() -> Self {
        Self {
            name: TemplateName::Answer,
            system_text: ANSWER_SYSTEM.into(),
            user_text_pattern: ANSWER_USER.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let missing: Vec<&str> = self
            .name
            .required_placeholders()
            .iter()
            .copied()
            .filter(|p| !self.user_text_pattern.contains(&format!("{{{p}}}")))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(format!("{} template is missing placeholders: {}", self.name, missing.join(", ")))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| e.to_string())?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("template serializes")
    }

    fn render(&self, q: &ResearchQuestion, passages: &str) -> Vec<ChatMessage> {
        let user = substitute(&self.user_text_pattern, |key| match key {
            "question" => Some(q.text.as_str()),
            "left" => Some(q.left_intervention.as_str()),
            "right" => Some(q.right_intervention.as_str()),
            "passages" => Some(passages),
            _ => None,
        });
        vec![ChatMessage::system(self.system_text.clone()), ChatMessage::user(user)]
    }
}

/// Git-style blob hash (`sha256("blob {len}\0" ++ content)`) over the
/// concatenated TOML renderings of the templates.
pub fn templates_hash(templates: &[&PromptTemplate]) -> String {
    let content: String = templates.iter().map(|t| t.to_toml()).collect();
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Single-pass `{name}` substitution; substituted text is never rescanned and
/// unknown placeholders are left as written.
fn substitute<'a>(pattern: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if lookup(&after[..close]).is_some() => {
                out.push_str(lookup(&after[..close]).unwrap_or_default());
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digest {
    pub cluster_id: usize,
    pub text: String,
    pub source_chunk_ids: Vec<String>,
    pub is_empty_marker: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub messages: Vec<ChatMessage>,
    /// Chunk ids that made it into the passage block, in prompt order.
    pub included_chunk_ids: Vec<String>,
    pub dropped: usize,
}

/// Keeps the highest-scoring chunks whose combined text fits in `budget`
/// characters. The top chunk is always kept so a prompt is never empty.
fn fit_budget(chunks: &[ScoredChunk], budget: usize) -> (Vec<&ScoredChunk>, usize) {
    let mut sorted: Vec<&ScoredChunk> = chunks.iter().collect();
    sorted.sort_by(|a, b| score_order(a, b));
    let mut used = 0usize;
    let mut kept = Vec::with_capacity(sorted.len());
    for (i, c) in sorted.iter().enumerate() {
        let len = c.chunk.text.chars().count();
        if i > 0 && used + len > budget {
            break;
        }
        used += len;
        kept.push(*c);
    }
    let dropped = sorted.len() - kept.len();
    (kept, dropped)
}

fn passages_block(chunks: &[&ScoredChunk], numbered: bool) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let entry = format!("[{}] {}", c.chunk.paper_id, c.chunk.text);
            if numbered {
                format!("{}. {entry}", i + 1)
            } else {
                entry
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn answer_instruction(q: &ResearchQuestion) -> String {
    format!(
        "End your reply with exactly one final line, chosen from:\nANSWER: {}\nANSWER: {}\nANSWER: no difference",
        q.left_intervention, q.right_intervention
    )
}

fn with_instruction(mut messages: Vec<ChatMessage>, q: &ResearchQuestion) -> Vec<ChatMessage> {
    if let Some(user) = messages.last_mut() {
        user.content.push_str("\n\n");
        user.content.push_str(&answer_instruction(q));
    }
    messages
}

fn expect_name(template: &PromptTemplate, name: TemplateName) {
    assert_eq!(template.name, name, "expected an {name} template, got {}", template.name);
}

pub fn render_extraction_prompt(
    q: &ResearchQuestion,
    cluster: &Cluster,
    template: &PromptTemplate,
    char_budget: usize,
) -> RenderedPrompt {
    expect_name(template, TemplateName::Extraction);
    let (kept, dropped) = fit_budget(&cluster.members, char_budget);
    RenderedPrompt {
        messages: template.render(q, &passages_block(&kept, false)),
        included_chunk_ids: kept.iter().map(|c| c.chunk.id.clone()).collect(),
        dropped,
    }
}

/// Runs one extraction call. Returns the digest and the rendered prompt.
pub fn extract_cluster_knowledge(
    model: &dyn ChatModel,
    q: &ResearchQuestion,
    cluster: &Cluster,
    template: &PromptTemplate,
    char_budget: usize,
) -> Result<(Digest, RenderedPrompt), ChatError> {
    if cluster.members.is_empty() {
        return Err(ChatError::EmptyCluster);
    }
    let prompt = render_extraction_prompt(q, cluster, template, char_budget);
    let text = model.complete(&prompt.messages)?;
    let trimmed = text.trim();
    let digest = Digest {
        cluster_id: cluster.id,
        is_empty_marker: trimmed == EMPTY_SENTINEL || trimmed.is_empty(),
        text,
        source_chunk_ids: prompt.included_chunk_ids.clone(),
    };
    Ok((digest, prompt))
}

/// Final prompt over ordered digests. Empty-marked digests are skipped.
pub fn render_answer_prompt(q: &ResearchQuestion, digests: &[Digest], template: &PromptTemplate) -> Vec<ChatMessage> {
    expect_name(template, TemplateName::Answer);
    let live: Vec<&Digest> = digests.iter().filter(|d| !d.is_empty_marker).collect();
    let block = if live.is_empty() {
        NO_EVIDENCE_NOTICE.to_string()
    } else {
        live.iter()
            .enumerate()
            .map(|(i, d)| format!("{}. {}", i + 1, d.text.trim()))
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    with_instruction(template.render(q, &block), q)
}

/// Final prompt over raw retrieved chunks, for variants without extraction.
/// An empty slice produces the no-passages notice.
pub fn render_passage_answer_prompt(
    q: &ResearchQuestion,
    chunks: &[ScoredChunk],
    template: &PromptTemplate,
    char_budget: usize,
) -> RenderedPrompt {
    expect_name(template, TemplateName::Answer);
    let (kept, dropped) = fit_budget(chunks, char_budget);
    let block = if kept.is_empty() {
        NO_PASSAGES_NOTICE.to_string()
    } else {
        passages_block(&kept, true)
    };
    RenderedPrompt {
        messages: with_instruction(template.render(q, &block), q),
        included_chunk_ids: kept.iter().map(|c| c.chunk.id.clone()).collect(),
        dropped,
    }
}
