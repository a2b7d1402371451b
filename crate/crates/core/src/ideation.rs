//! Sound ideation: the "What do I hear?" brainstorm, emoji tagging,
//! similar-sound expansion and designer-typed custom sounds.

use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::adapters::{self, AdapterError, LanguageModel, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "base", rename_all = "snake_case")]
pub enum SuggestionOrigin {
    Llm,
    Custom,
    SimilarOf(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSuggestion {
    pub id: String,
    pub text: String,
    pub emoji: String,
    pub origin: SuggestionOrigin,
    pub selected: bool,
    /// Custom entry whose text repeats an existing suggestion.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub duplicate: bool,
}

#[derive(Debug, Error)]
pub enum IdeationError {
    #[error(transparent)]
    Llm(#[from] AdapterError),
    #[error("completion contains no sound list: {raw:?}")]
    Parse { raw: String },
    #[error("needed 2 similar sounds, the model offered {got}: {raw:?}")]
    InsufficientSuggestions { got: usize, raw: String },
    #[error("sound description is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdeationConfig {
    pub suggestion_count: usize,
    pub trigger: String,
    /// `{count}` is replaced by `suggestion_count`.
    pub list_instruction: String,
    /// `{text}` is replaced by the sound description.
    pub emoji_prompt: String,
    /// `{text}` is replaced by the base sound description.
    pub similar_prompt: String,
    pub fallback_emoji: String,
    pub retry: RetryPolicy,
}

impl Default for IdeationConfig {
    fn default() -> Self {
        Self {
            suggestion_count: 5,
            trigger: "What do I hear?".into(),
            list_instruction: "Answer with a numbered list of exactly {count} short sound descriptions, \
                               one per line, and nothing else."
                .into(),
            emoji_prompt: "Reply with the single emoji that best represents this sound: {text}".into(),
            similar_prompt: "Name 2 more sounds that are similar to \"{text}\". Answer with a numbered list, \
                             one per line, and nothing else."
                .into(),
            fallback_emoji: "🔊".into(),
            retry: RetryPolicy::default(),
        }
    }
}

impl IdeationConfig {
    pub fn brainstorm_prompt(&self, scene_prompt: &str) -> String {
        let instruction = self.list_instruction.replace("{count}", &self.suggestion_count.to_string());
        format!("{}\n\n{}\n{}", scene_prompt.trim(), self.trigger, instruction)
    }

    pub fn emoji_prompt_for(&self, text: &str) -> String {
        self.emoji_prompt.replace("{text}", text)
    }

    pub fn similar_prompt_for(&self, text: &str) -> String {
        self.similar_prompt.replace("{text}", text)
    }
}

fn list_item(line: &str) -> Option<&str> {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
        return rest.starts_with(char::is_whitespace).then(|| rest.trim());
    }
    for bullet in ['-', '•', '*'] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.starts_with(char::is_whitespace).then(|| rest.trim());
        }
    }
    None
}

fn clean_item(item: &str) -> &str {
    let item = item.trim().trim_matches(|c: char| c == '"' || c == '*' || c == '“' || c == '”');
    let item = item.strip_prefix("and ").unwrap_or(item);
    item.trim().trim_end_matches('.').trim_end()
}

/// Extracts sound descriptions from a completion: numbered or bulleted
/// lines, or a single comma-separated line. Order is kept and repeats are
/// dropped case-insensitively.
pub fn parse_sound_list(completion: &str) -> Vec<String> {
    let lines: Vec<&str> = completion.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let marked: Vec<&str> = lines.iter().filter_map(|l| list_item(l)).collect();
    let raw: Vec<&str> = if !marked.is_empty() {
        marked
    } else if lines.len() == 1 && lines[0].contains(',') {
        lines[0].split(',').collect()
    } else {
        Vec::new()
    };

    let mut out: Vec<String> = Vec::new();
    for item in raw.into_iter().map(clean_item) {
        if !item.is_empty() && !out.iter().any(|o| o.to_lowercase() == item.to_lowercase()) {
            out.push(item.to_string());
        }
    }
    out
}

/// First emoji grapheme in `text`, if any.
pub fn extract_emoji(text: &str) -> Option<String> {
    text.graphemes(true)
        .find(|g| {
            let first = g.chars().next().unwrap_or(' ');
            !first.is_ascii() && (emojis::get(g).is_some() || emojis::get(g.trim_end_matches('\u{fe0f}')).is_some())
        })
        .map(str::to_string)
}

/// Emoji closest to `text`. Falls back to the configured default (and logs)
/// when the model fails or answers without an emoji.
pub fn assign_emoji(text: &str, llm: &dyn LanguageModel, config: &IdeationConfig) -> String {
    let prompt = config.emoji_prompt_for(text);
    match config.retry.run(|| adapters::complete(llm, &prompt)) {
        Ok(reply) => extract_emoji(&reply).unwrap_or_else(|| config.fallback_emoji.clone()),
        Err(err) => {
            log::warn!("emoji lookup for {text:?} failed: {err}; using fallback");
            config.fallback_emoji.clone()
        }
    }
}

/// Assigns emoji to every suggestion, one concurrent request each.
pub fn assign_emojis(suggestions: &mut [SoundSuggestion], llm: &dyn LanguageModel, config: &IdeationConfig) {
    let emojis: Vec<String> = thread::scope(|s| {
        let handles: Vec<_> = suggestions
            .iter()
            .map(|sug| {
                let text = sug.text.as_str();
                s.spawn(move || assign_emoji(text, llm, config))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| config.fallback_emoji.clone()))
            .collect()
    });
    for (sug, emoji) in suggestions.iter_mut().zip(emojis) {
        sug.emoji = emoji;
    }
}

/// Asks the model what the scene sounds like. Suggestions come back
/// unselected, with the fallback emoji until [`assign_emojis`] runs.
pub fn brainstorm(
    scene_prompt: &str,
    llm: &dyn LanguageModel,
    config: &IdeationConfig,
    next_id: &mut dyn FnMut() -> String,
) -> Result<Vec<SoundSuggestion>, IdeationError> {
    if scene_prompt.trim().is_empty() {
        return Err(IdeationError::EmptyText);
    }
    let prompt = config.brainstorm_prompt(scene_prompt);
    let raw = config.retry.run(|| adapters::complete(llm, &prompt))?;
    let items = parse_sound_list(&raw);
    if items.is_empty() {
        return Err(IdeationError::Parse { raw });
    }
    Ok(items
        .into_iter()
        .map(|text| SoundSuggestion {
            id: next_id(),
            text,
            emoji: config.fallback_emoji.clone(),
            origin: SuggestionOrigin::Llm,
            selected: false,
            duplicate: false,
        })
        .collect())
}

/// Two new sounds similar to `base`, or an error. Extra offers are dropped;
/// offers repeating the base text are ignored.
pub fn expand_similar(
    base: &SoundSuggestion,
    llm: &dyn LanguageModel,
    config: &IdeationConfig,
    next_id: &mut dyn FnMut() -> String,
) -> Result<[SoundSuggestion; 2], IdeationError> {
    let prompt = config.similar_prompt_for(&base.text);
    let raw = config.retry.run(|| adapters::complete(llm, &prompt))?;
    let base_text = base.text.trim().to_lowercase();
    let offers: Vec<String> = parse_sound_list(&raw)
        .into_iter()
        .filter(|t| t.to_lowercase() != base_text)
        .collect();
    let [first, second] = match offers.as_slice() {
        [a, b, ..] => [a.clone(), b.clone()],
        _ => {
            return Err(IdeationError::InsufficientSuggestions {
                got: offers.len(),
                raw,
            })
        }
    };
    let make = |text: String, id: String| SoundSuggestion {
        emoji: assign_emoji(&text, llm, config),
        id,
        text,
        origin: SuggestionOrigin::SimilarOf(base.id.clone()),
        selected: false,
        duplicate: false,
    };
    let a = make(first, next_id());
    let b = make(second, next_id());
    Ok([a, b])
}

/// A designer-typed sound, selected on creation. Repeats of an existing
/// text are allowed but flagged.
pub fn add_custom(
    text: &str,
    existing: &[SoundSuggestion],
    llm: &dyn LanguageModel,
    config: &IdeationConfig,
    next_id: &mut dyn FnMut() -> String,
) -> Result<SoundSuggestion, IdeationError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(IdeationError::EmptyText);
    }
    let duplicate = existing.iter().any(|s| s.text.to_lowercase() == text.to_lowercase());
    Ok(SoundSuggestion {
        id: next_id(),
        text: text.to_string(),
        emoji: assign_emoji(text, llm, config),
        origin: SuggestionOrigin::Custom,
        selected: true,
        duplicate,
    })
}
