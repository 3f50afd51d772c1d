use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::corpus::Pair;

const EXTRACTION_ASSUMPTION: &str = "You are an excellent e-commerce attribute extractor. You will be asked to identify the attributes appearing in a query from a customer. Give the most accurate answer you can come up with. Give short answers, not long answers. Those attributes should strictly and only be selected from \"Brand\", \"Color\", \"Size\", \"Material\", \"Price Range\", \"Gender\", \"Age Group\", \"Condition\", \"Location\", \"Ingredients\", \"Dietary Preferences\", \"Cuisine Type\", \"Flavor\", \"Nutritional Information\", \"Deal\", \"Product Type\", \"Package\".";

const EXTRACTION_EXAMPLES: [(&str, &str); 2] = [
    (
        "Please extract the attributes from the query 'a large red woman t-shirt'",
        "[\"Size: large\", \"Color: red\", \"Gender: woman\", \"Product Type: t-shirt\"]",
    ),
    (
        "Please extract the attributes from the query 'zatrains frozen meal blackened chicken alfredo'",
        "[\"Brand:zatrains\", \"Flavor: blackened chicken alfredo\", \"Product Type: frozen meal\"]",
    ),
];

const EXTRACTION_QUESTION: &str =
    "Please extract the existing attributes from the query {query} and only answer with formats exactly like [\"attribute: value\"].";

const REVIEW_ASSUMPTION: &str = "You are an excellent e-commerce expert. You will be asked to examine the attributes given in a query from a customer. Those attributes should strictly and only select from \"Brand\", \"Color\", \"Material\", \"Price Range\", \"Gender\", \"Age Group\", \"Condition\", \"Location\", \"Ingredients\", \"Dietary Preferences\", \"Cuisine Type\", \"Flavor\", \"Nutritional Information\", \"Size\", \"Deal\", \"Product Type\", \"Package\".";

const REVIEW_EXAMPLES: [(&str, &str); 2] = [
    (
        "Please examine the attributes:{\"Size\": \"large\", \"Color\": \"red\", \"Gender\": \"woman\", \"Product Type\": \"t-shirt\"} for the query 'a large red woman t-shirt'",
        "True",
    ),
    (
        "Please examine the attributes:{\"Flavor\": \"spicy\", \"Material\": \"ground\", \"Ingredients\": \"beef\"} for the query 'spicy ground beef'",
        "False",
    ),
];

const REVIEW_QUESTION: &str = "Please examine the attributes {answer} for the query {query}.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// Three-part few-shot prompt: a standing assumption, worked
/// (human, answer) turns, and a question with `{query}` / `{answer}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub assumption: String,
    pub examples: Vec<(String, String)>,
    pub question: String,
}

impl PromptTemplate {
    fn from_parts(assumption: &str, examples: &[(&str, &str)], question: &str) -> Self {
        PromptTemplate {
            assumption: assumption.into(),
            examples: examples.iter().map(|&(h, a)| (h.into(), a.into())).collect(),
            question: question.into(),
        }
    }

    /// Asks for the attributes of one query.
    pub fn extraction() -> Self {
        Self::from_parts(EXTRACTION_ASSUMPTION, &EXTRACTION_EXAMPLES, EXTRACTION_QUESTION)
    }

    /// Asks whether a set of extracted attributes is right.
    pub fn review() -> Self {
        Self::from_parts(REVIEW_ASSUMPTION, &REVIEW_EXAMPLES, REVIEW_QUESTION)
    }

    /// Fills the question's slots in a single left-to-right pass, so slot
    /// text inside `query` or `answer` is never substituted again.
    pub fn question_for(&self, query: &str, answer: &str) -> String {
        let mut out = String::with_capacity(self.question.len() + query.len() + answer.len());
        let mut rest = self.question.as_str();
        while let Some(i) = rest.find('{') {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            if let Some(t) = tail.strip_prefix("{query}") {
                out.push_str(query);
                rest = t;
            } else if let Some(t) = tail.strip_prefix("{answer}") {
                out.push_str(answer);
                rest = t;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }

    /// Plain-text form with `Assumption:`, `Example:` and `Question:` sections.
    pub fn render(&self, query: &str, answer: &str) -> String {
        let mut out = format!("Assumption:\n{}\n\nExample:\n", self.assumption);
        for (human, reply) in &self.examples {
            out.push_str(&format!("Human: {human}\nYour answer: {reply}\n"));
        }
        out.push_str(&format!("\nQuestion:\n{}\n", self.question_for(query, answer)));
        out
    }

    /// Chat form: the assumption as system message, each example as a
    /// user/assistant exchange, and the question as the final user turn.
    pub fn to_messages(&self, query: &str, answer: &str) -> Vec<ChatMessage> {
        let mut msgs = vec![ChatMessage::new(Role::System, &self.assumption)];
        for (human, reply) in &self.examples {
            msgs.push(ChatMessage::new(Role::User, human));
            msgs.push(ChatMessage::new(Role::Assistant, reply));
        }
        msgs.push(ChatMessage::new(Role::User, self.question_for(query, answer)));
        msgs
    }
}

/// `{"Kind": "value", ...}` in pair order.
pub fn render_pairs(pairs: &[Pair]) -> String {
    let items: Vec<String> = pairs
        .iter()
        .map(|p| {
            let k = serde_json::to_string(&p.kind).expect("strings serialize");
            let v = serde_json::to_string(&p.value).expect("strings serialize");
            format!("{k}: {v}")
        })
        .collect();
    format!("{{{}}}", items.join(", "))
}

pub fn build_extraction_prompt(query: &str) -> Result<String, AnnotateError> {
    if query.trim().is_empty() {
        return Err(AnnotateError::EmptyQuery);
    }
    Ok(PromptTemplate::extraction().render(query, ""))
}

pub fn build_review_prompt(query: &str, pairs: &[Pair]) -> Result<String, AnnotateError> {
    if query.trim().is_empty() {
        return Err(AnnotateError::EmptyQuery);
    }
    if pairs.is_empty() {
        return Err(AnnotateError::EmptyPairs);
    }
    Ok(PromptTemplate::review().render(query, &render_pairs(pairs)))
}
