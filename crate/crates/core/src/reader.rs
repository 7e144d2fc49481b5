//! Answer generation from a rendered context.

use crate::backends::{ChatBackend, ChatRequest};
use crate::corpus::Document;
use crate::error::Result;
use crate::prompts::PromptTemplate;

/// `Title: …\nText: …` blocks separated by blank lines, in the given order.
pub fn documents_context<'a>(docs: impl IntoIterator<Item = &'a Document>) -> String {
    docs.into_iter()
        .map(|d| format!("Title: {}\nText: {}", d.title, d.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_reader_prompt(template: &PromptTemplate, context: &str, question: &str) -> String {
    template.render(&[("context", context), ("question", question)])
}

/// One chat call; the completion is returned trimmed.
pub fn generate_answer(
    chat: &dyn ChatBackend,
    template: &PromptTemplate,
    context: &str,
    question: &str,
    max_tokens: u32,
) -> Result<String> {
    let prompt = render_reader_prompt(template, context, question);
    let response = chat.complete(&ChatRequest::user(prompt, max_tokens))?;
    Ok(response.text.trim().to_string())
}
