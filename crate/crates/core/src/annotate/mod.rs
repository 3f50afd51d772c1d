//! LLM-assisted attribute annotation: few-shot prompts, answer parsing,
//! cleaning against the query, and a review pass.

mod client;
mod parse;
mod pipeline;
mod prompt;

use thiserror::Error;

pub use client::{
    complete_with_retry, request_body, request_hash, ChatClient, HttpClient, LlmEndpointConfig, ReplayClient,
    ReplayEntry,
};
pub use parse::{clean, parse_llm_answer, parse_review, Cleaned};
pub use pipeline::{annotate_corpus, AnnotateConfig, AnnotationRunReport};
pub use prompt::{build_extraction_prompt, build_review_prompt, render_pairs, ChatMessage, PromptTemplate, Role};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("empty query")]
    EmptyQuery,
    #[error("no pairs to review")]
    EmptyPairs,
    #[error("malformed answer: {0}")]
    Format(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("no replay response for request {0}")]
    ReplayMiss(String),
    #[error("invalid annotation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
