//! Message tokenizer.
//!
//! Token counts treat words, punctuation, and emoticons as separate tokens,
//! so the rules below are the published contract for every count in this
//! crate. The input is Unicode-lowercased first; the text is then scanned
//! left to right and at each position the first matching rule wins:
//!
//! 1. whitespace — skipped
//! 2. emoticon — emitted as one token (pattern table below)
//! 3. word — maximal run of alphanumeric characters, extended across a
//!    single apostrophe (`'` or `’`) flanked by alphanumerics ("i'm",
//!    "don't")
//! 4. punctuation — maximal run of one repeated non-alphanumeric character
//!    ("!!!!" is one token, "?!" is two)
//!
//! Emoticon patterns, matched on the lowercased text and only when not
//! immediately followed by an alphanumeric character:
//!
//! - literals: `<3` `</3` `^_^` `^-^` `-_-` `o_o` `0_0` `t_t` `>_<` `:'(` `:')`
//! - eyes `[:;=8]` + optional nose `[-'^o*]` + mouth `[)(\[\]{}dpb/\\|os3*@]`
//! - eyes `x` + optional nose `-` + mouth `[dp]` ("xd", "x-p")
//! - mouth `[)(\[\]]` + eyes `[:;=8]` ("(:", "]:")

const EMOTICON_LITERALS: &[&str] = &[
    "</3", ":'(", ":')", "<3", "^_^", "^-^", "-_-", "o_o", "0_0", "t_t", ">_<",
];

fn is_eyes(c: char) -> bool {
    matches!(c, ':' | ';' | '=' | '8')
}

fn is_nose(c: char) -> bool {
    matches!(c, '-' | '\'' | '^' | 'o' | '*')
}

fn is_mouth(c: char) -> bool {
    matches!(
        c,
        ')' | '(' | '[' | ']' | '{' | '}' | 'd' | 'p' | 'b' | '/' | '\\' | '|' | 'o' | 's' | '3'
            | '*' | '@'
    )
}

/// Length in chars of an emoticon starting at `i`, if any.
fn match_emoticon(chars: &[char], i: usize) -> Option<usize> {
    let rest = &chars[i..];
    let followed_ok = |len: usize| {
        rest.get(len).map_or(true, |c| !c.is_alphanumeric())
    };

    for lit in EMOTICON_LITERALS {
        let lit_chars: Vec<char> = lit.chars().collect();
        if rest.starts_with(&lit_chars[..]) && followed_ok(lit_chars.len()) {
            return Some(lit_chars.len());
        }
    }

    // forward face: eyes [nose] mouth
    if let Some(&c0) = rest.first() {
        if is_eyes(c0) {
            if let Some(&c1) = rest.get(1) {
                if is_mouth(c1) && followed_ok(2) {
                    return Some(2);
                }
                if is_nose(c1) {
                    if let Some(&c2) = rest.get(2) {
                        if is_mouth(c2) && followed_ok(3) {
                            return Some(3);
                        }
                    }
                }
            }
        }
        // x-eyed faces limited to d/p mouths so words like "xo" stay words
        if c0 == 'x' {
            match (rest.get(1), rest.get(2)) {
                (Some('d' | 'p'), _) if followed_ok(2) => return Some(2),
                (Some('-'), Some('d' | 'p')) if followed_ok(3) => return Some(3),
                _ => {}
            }
        }
        // reverse face: mouth then eyes
        if matches!(c0, ')' | '(' | '[' | ']') {
            if let Some(&c1) = rest.get(1) {
                if is_eyes(c1) && followed_ok(2) {
                    return Some(2);
                }
            }
        }
    }
    None
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Split `text` into lowercased word, punctuation, and emoticon tokens.
///
/// Deterministic; empty or whitespace-only input yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if let Some(len) = match_emoticon(&chars, i) {
            tokens.push(chars[i..i + len].iter().collect());
            i += len;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            loop {
                while j < chars.len() && is_word_char(chars[j]) {
                    j += 1;
                }
                // absorb an inner apostrophe with letters on both sides
                if j < chars.len()
                    && is_apostrophe(chars[j])
                    && j + 1 < chars.len()
                    && is_word_char(chars[j + 1])
                {
                    j += 2;
                } else {
                    break;
                }
            }
            tokens.push(chars[i..j].iter().collect());
            i = j;
            continue;
        }
        // punctuation: run of the same character
        let mut j = i + 1;
        while j < chars.len() && chars[j] == c {
            j += 1;
        }
        tokens.push(chars[i..j].iter().collect());
        i = j;
    }
    tokens
}
