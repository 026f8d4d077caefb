use serde::{Deserialize, Serialize};

/// Characters that end a sentence by default: `.`, `!`, `?`, `…` and newline.
pub const DEFAULT_TERMINATORS: [char; 5] = ['.', '!', '?', '…', '\n'];

/// Splits query text into the sentences rules are matched against.
///
/// A sentence runs up to and including a maximal run of terminator
/// characters. Sentences are trimmed of surrounding whitespace and empty ones
/// are dropped; text without any sentence content is one (possibly empty)
/// sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSplitter {
    terminators: Vec<char>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter { terminators: DEFAULT_TERMINATORS.to_vec() }
    }
}

impl SentenceSplitter {
    pub fn new(terminators: impl IntoIterator<Item = char>) -> Self {
        SentenceSplitter { terminators: terminators.into_iter().collect() }
    }

    pub fn terminators(&self) -> &[char] {
        &self.terminators
    }

    fn is_terminator(&self, c: char) -> bool {
        self.terminators.contains(&c)
    }

    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut sentences = Vec::new();
        let mut start = 0;
        let mut in_terminators = false;
        for (i, c) in text.char_indices() {
            let term = self.is_terminator(c);
            if in_terminators && !term {
                push_trimmed(&mut sentences, &text[start..i]);
                start = i;
            }
            in_terminators = term;
        }
        push_trimmed(&mut sentences, &text[start..]);
        if sentences.is_empty() {
            sentences.push(text.trim());
        }
        sentences
    }
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}
