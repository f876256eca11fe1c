use std::fmt;

use serde::{Deserialize, Serialize};

/// Multiple-choice answer letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
}

impl Letter {
    pub const ALL: [Letter; 5] = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Letter> {
        Self::ALL.get(i).copied()
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            'E' => Some(Letter::E),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

fn opens(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | '[' | '"' | '\'' | '*')
}

fn closes(c: char) -> bool {
    matches!(c, '.' | ')' | ']' | ':' | ',' | '"' | '\'' | '*')
}

/// First standalone A-E token in `text`, case-insensitive.
///
/// A token may be wrapped in brackets or quotes and followed by closing
/// punctuation (`B.`, `(d)`, `"C":`). A lowercase `a` followed by another
/// word is read as the article and skipped.
pub fn extract_answer_letter(text: &str) -> Option<Letter> {
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let Some(letter) = Letter::from_char(c) else { continue };
        if i > 0 && !opens(chars[i - 1]) {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && closes(chars[j]) {
            j += 1;
        }
        if j < chars.len() && !chars[j].is_whitespace() {
            continue;
        }
        if c == 'a' && j == i + 1 {
            let next_word = chars[j..].iter().find(|c| !c.is_whitespace());
            if next_word.is_some_and(|c| c.is_alphabetic()) {
                continue;
            }
        }
        return Some(letter);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(extract_answer_letter("B"), Some(Letter::B));
        assert_eq!(
            extract_answer_letter("The answer is (d) because the man left."),
            Some(Letter::D)
        );
        assert_eq!(
            extract_answer_letter("I am not sure. Guess: A. I need…"),
            Some(Letter::A)
        );
    }

    #[test]
    fn article_and_words_skipped() {
        assert_eq!(extract_answer_letter("It is a cat, so C."), Some(Letter::C));
        assert_eq!(extract_answer_letter("e.g. nothing here"), None);
        assert_eq!(extract_answer_letter("Each dog barks"), None);
        assert_eq!(extract_answer_letter("answer: a"), Some(Letter::A));
        assert_eq!(extract_answer_letter("\"E\""), Some(Letter::E));
        assert_eq!(extract_answer_letter("**B**"), Some(Letter::B));
        assert_eq!(extract_answer_letter(""), None);
        assert_eq!(extract_answer_letter("F"), None);
    }

    #[test]
    fn letter_conversions() {
        for (i, l) in Letter::ALL.into_iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Letter::from_index(i), Some(l));
            assert_eq!(Letter::from_char(l.as_char()), Some(l));
        }
        assert_eq!(serde_json::to_string(&Letter::C).unwrap(), "\"C\"");
    }
}
