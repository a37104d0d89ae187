use serde::{Deserialize, Serialize};

/// Lowercased tokens of one text; never contains empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '`')
}

/// Splits on whitespace, emits each punctuation character as its own token
/// and splits contractions in front of the apostrophe (`can't` -> `can`, `'t`).
pub fn tokenize(text: &str) -> TokenSequence {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        if !cur.is_empty() {
            out.push(std::mem::take(cur));
        }
    };
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            flush(&mut cur, &mut out);
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            flush(&mut cur, &mut out);
            cur.push('\'');
        } else {
            flush(&mut cur, &mut out);
            out.push(if is_apostrophe(c) { "'".to_string() } else { c.to_string() });
        }
        i += 1;
    }
    flush(&mut cur, &mut out);
    TokenSequence(out)
}
