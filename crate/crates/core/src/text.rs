//! Small text utilities shared by scoring and prompt handling.

/// Lowercases and splits on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

const ABBREVIATIONS: [&str; 8] = ["mr", "mrs", "ms", "dr", "st", "jr", "vs", "no"];

/// Splits prose into sentences at `.`, `!` or `?` runs followed by whitespace.
///
/// A period after a single letter or a common abbreviation does not end a
/// sentence, so "U.S. Government" stays intact.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '!' | '?' | '"' | '\'' | ')') {
                end += 1;
            }
            let at_boundary = end == chars.len() || chars[end].is_whitespace();
            if at_boundary && !(chars[i] == '.' && is_abbreviation(&chars[start..i])) {
                let sentence: String = chars[start..end].iter().collect();
                let sentence = sentence.trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = end;
            }
            i = end;
        } else {
            i += 1;
        }
    }
    let rest: String = chars[start..].iter().collect();
    let rest = rest.trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

fn is_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| c.is_alphanumeric() || **c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let last = word.rsplit('.').next().unwrap_or("");
    (last.chars().count() == 1 && last.chars().all(|c| c.is_alphabetic()))
        || ABBREVIATIONS.contains(&last.to_lowercase().as_str())
}

/// Keeps at most `max` sentences.
pub fn truncate_sentences(text: &str, max: usize) -> String {
    let sentences = split_sentences(text);
    if sentences.len() <= max {
        return collapse_whitespace(text);
    }
    sentences[..max].join(" ")
}

pub fn first_sentence(text: &str) -> String {
    split_sentences(text).into_iter().next().unwrap_or_default()
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased, punctuation-stripped, whitespace-collapsed form used to detect
/// repeated questions.
pub fn normalize_question(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Truncates to at most `max` characters on a char boundary.
pub fn clip_chars(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}
