//! Prompt templates for comment generation.

use super::{NetgenError, NewsArticle};
use crate::llm::{ChatRequest, PromptClass};

fn require_persona(persona: &str) -> Result<(), NetgenError> {
    if persona.trim().is_empty() {
        return Err(NetgenError::Precondition("persona text must not be empty".into()));
    }
    Ok(())
}

fn push_chain(out: &mut String, chain: &[&str]) {
    for (i, c) in chain.iter().enumerate() {
        out.push_str(&format!("Comment {}: {c}\n", i + 1));
    }
}

/// Comment directly on the news.
pub fn make_comment_prompt(article: &NewsArticle, persona: &str) -> Result<ChatRequest, NetgenError> {
    require_persona(persona)?;
    let user = format!(
        "{persona}\n\
         You view a piece of news with the following content.\n\
         News: {}\n\
         Task: Please comment on this news on social media. Your comment is limited to 40 words.\n\
         Your comment:",
        article.text
    );
    Ok(ChatRequest::new(PromptClass::Comment, user)?)
}

/// Reply to the last comment of `chain` (ordered from the news outward).
pub fn make_reply_prompt(article: &NewsArticle, persona: &str, chain: &[&str]) -> Result<ChatRequest, NetgenError> {
    require_persona(persona)?;
    if chain.is_empty() {
        return Err(NetgenError::Precondition("reply chain must not be empty".into()));
    }
    let mut user = format!(
        "{persona}\n\
         You view a piece of news and a related comment chain on social media, and their contents are as follows.\n\
         News: {}\n",
        article.text
    );
    push_chain(&mut user, chain);
    user.push_str(&format!(
        "Task: Please reply to the last comment(comment {}) on social media. Your reply is limited to 40 words.\n\
         Your reply:",
        chain.len()
    ));
    Ok(ChatRequest::new(PromptClass::Reply, user)?)
}

/// Ask the user which of `chains` they would reply to. Comment numbering
/// restarts at 1 inside every chain.
pub fn make_select_prompt(
    article: &NewsArticle,
    persona: &str,
    chains: &[Vec<&str>],
) -> Result<ChatRequest, NetgenError> {
    require_persona(persona)?;
    if chains.is_empty() || chains.iter().any(Vec::is_empty) {
        return Err(NetgenError::Precondition("select prompt needs non-empty chains".into()));
    }
    let mut user = format!(
        "{persona}\n\
         You view a piece of news and related comment chains on social media, and their contents are as follows.\n\
         News: {}\n",
        article.text
    );
    for (i, chain) in chains.iter().enumerate() {
        user.push_str(&format!("Comment Chain {}:\n", i + 1));
        push_chain(&mut user, chain);
    }
    user.push_str(
        "Task: Please select a comment chain that you would most like to comment on. \
         Answer the selected number and explain the reason.\n\
         Answer:",
    );
    Ok(ChatRequest::new(PromptClass::ChainSelect, user)?)
}
