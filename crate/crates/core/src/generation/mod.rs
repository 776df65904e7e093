//! Chat models, prompt templates, digests, and cluster ordering.

pub mod chat;
pub mod ordering;
pub mod prompt;

pub use chat::{fingerprint, ChatConfig, ChatError, ChatKind, ChatMessage, ChatModel, RemoteChat, Script, ScriptRule, ScriptedChat};
pub use ordering::{order_clusters, OrderingKind, OrderingStrategy};
pub use prompt::{
    extract_cluster_knowledge, render_answer_prompt, render_extraction_prompt, render_passage_answer_prompt,
    templates_hash, Digest, PromptTemplate, RenderedPrompt, TemplateName, DEFAULT_PASSAGE_BUDGET, EMPTY_SENTINEL,
    NO_EVIDENCE_NOTICE, NO_PASSAGES_NOTICE,
};
