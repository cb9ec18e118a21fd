//! Prompt templates.
//!
//! Few-shot layout (single `\n` line endings, one blank line between blocks,
//! no trailing newline):
//!
//! ```text
//! Given the context and the specified target in English, provide a simpler alternative word.
//!
//! Context: ...
//! Target Word: ...
//! Alternative Word: ...
//!
//! (four more example blocks)
//!
//! Context: {context}
//! Target Word: {target}
//! Alternative Word:
//! ```
//!
//! Everything before the query's `Context:` line is the cacheable prefix.
//! The fine-tune template is three lines ending in `Simplified:`; in training
//! mode ` {alternative}` follows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

pub const SHOTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub language: String,
    pub context: String,
    pub target: String,
    pub alternative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub prefix: String,
    pub suffix: String,
    pub full: String,
}

impl PromptBundle {
    fn new(prefix: String, suffix: String) -> Self {
        let full = format!("{prefix}{suffix}");
        Self { prefix, suffix, full }
    }

    /// Stable digest of the cacheable prefix.
    pub fn prefix_hash(&self) -> String {
        io::sha256_hex(self.prefix.as_bytes())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("few-shot template needs exactly {SHOTS} examples, got {0}")]
    ExampleCount(usize),
    #[error("example {index}: {message}")]
    BadExample { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Human-readable language name for the instruction line; unknown codes are
/// passed through unchanged.
pub fn language_name(code: &str) -> &str {
    match code {
        "en" => "English",
        "es" => "Spanish",
        "ca" => "Catalan",
        "de" => "German",
        "ja" => "Japanese",
        "fr" => "French",
        "it" => "Italian",
        "pt" => "Portuguese",
        "fil" => "Filipino",
        "si" => "Sinhala",
        other => other,
    }
}

fn validate(examples: &[FewShotExample]) -> Result<(), PromptError> {
    if examples.len() != SHOTS {
        return Err(PromptError::ExampleCount(examples.len()));
    }
    for (index, ex) in examples.iter().enumerate() {
        if ex.alternative.trim().is_empty() {
            return Err(PromptError::BadExample {
                index,
                message: "empty alternative".into(),
            });
        }
        if !ex.context.contains(&ex.target) {
            return Err(PromptError::BadExample {
                index,
                message: format!("target {:?} not in context", ex.target),
            });
        }
    }
    Ok(())
}

pub fn render_fewshot(
    language: &str,
    examples: &[FewShotExample],
    context: &str,
    target: &str,
) -> Result<PromptBundle, PromptError> {
    validate(examples)?;
    let mut prefix =
        format!("Given the context and the specified target in {language}, provide a simpler alternative word.\n\n");
    for ex in examples {
        prefix.push_str(&format!(
            "Context: {}\nTarget Word: {}\nAlternative Word: {}\n\n",
            ex.context, ex.target, ex.alternative
        ));
    }
    let suffix = format!("Context: {context}\nTarget Word: {target}\nAlternative Word:");
    Ok(PromptBundle::new(prefix, suffix))
}

/// Fine-tune template. `None` gives the inference prompt, `Some` the
/// training text.
pub fn render_finetune(context: &str, target: &str, alternative: Option<&str>) -> String {
    let mut out = format!("Context: {context}\nTarget Word: {target}\nSimplified:");
    if let Some(alt) = alternative {
        out.push(' ');
        out.push_str(alt);
    }
    out
}

/// The fine-tune template has no shared prefix.
pub fn finetune_bundle(context: &str, target: &str) -> PromptBundle {
    PromptBundle::new(String::new(), render_finetune(context, target, None))
}

/// Load the example file and keep the examples for `language`, in file order.
pub fn load_examples(path: &Path, language: &str) -> Result<Vec<FewShotExample>, PromptError> {
    let all: Vec<FewShotExample> = io::read_jsonl(path)?;
    let mine: Vec<_> = all.into_iter().filter(|e| e.language == language).collect();
    validate(&mine)?;
    Ok(mine)
}
