//! `key=value` line encoding shared by the activity and activation logs.
//!
//! Values made only of "plain" characters are written bare; anything else
//! is double-quoted with `\\`, `\"`, `\n`, `\r` and `\t` escapes. Keys must
//! be non-empty and plain.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogfmtError {
    #[error("empty key at byte {0}")]
    EmptyKey(usize),
    #[error("missing '=' after key at byte {0}")]
    MissingEquals(usize),
    #[error("unterminated quoted value")]
    Unterminated,
    #[error("bad escape sequence at byte {0}")]
    BadEscape(usize),
    #[error("unexpected character at byte {0}")]
    Unexpected(usize),
}

fn is_plain(c: char) -> bool {
    !c.is_whitespace() && !c.is_control() && c != '"' && c != '=' && c != '\\'
}

pub fn encode_value(value: &str, out: &mut String) {
    if !value.is_empty() && value.chars().all(is_plain) {
        out.push_str(value);
        return;
    }
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Encodes pairs into one line without the trailing newline.
pub fn encode<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (i, (key, value)) in pairs.into_iter().enumerate() {
        debug_assert!(!key.is_empty() && key.chars().all(is_plain));
        if i > 0 {
            out.push(' ');
        }
        out.push_str(key);
        out.push('=');
        encode_value(value, &mut out);
    }
    out
}

/// Parses one line back into ordered pairs.
pub fn parse(line: &str) -> Result<Vec<(String, String)>, LogfmtError> {
    let bytes: Vec<(usize, char)> = line.char_indices().collect();
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].1 == ' ' {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let key_start = i;
        while i < bytes.len() && is_plain(bytes[i].1) {
            i += 1;
        }
        if i == key_start {
            return Err(LogfmtError::EmptyKey(bytes[key_start].0));
        }
        let key: String = bytes[key_start..i].iter().map(|(_, c)| c).collect();
        if i >= bytes.len() || bytes[i].1 != '=' {
            let at = bytes.get(i).map(|b| b.0).unwrap_or(line.len());
            return Err(LogfmtError::MissingEquals(at));
        }
        i += 1;
        let mut value = String::new();
        if i < bytes.len() && bytes[i].1 == '"' {
            i += 1;
            let mut closed = false;
            while i < bytes.len() {
                match bytes[i].1 {
                    '"' => {
                        closed = true;
                        i += 1;
                        break;
                    }
                    '\\' => {
                        let Some(&(at, next)) = bytes.get(i + 1) else {
                            return Err(LogfmtError::Unterminated);
                        };
                        value.push(match next {
                            '"' => '"',
                            '\\' => '\\',
                            'n' => '\n',
                            'r' => '\r',
                            't' => '\t',
                            _ => return Err(LogfmtError::BadEscape(at)),
                        });
                        i += 2;
                    }
                    c => {
                        value.push(c);
                        i += 1;
                    }
                }
            }
            if !closed {
                return Err(LogfmtError::Unterminated);
            }
        } else {
            while i < bytes.len() && is_plain(bytes[i].1) {
                value.push(bytes[i].1);
                i += 1;
            }
        }
        if i < bytes.len() && bytes[i].1 != ' ' {
            return Err(LogfmtError::Unexpected(bytes[i].0));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}
