//! Java-flavored tokenizer for focal tests and assertions.
//!
//! The corpus mixes real source fragments with noisy text, so the lexer is
//! deliberately forgiving: anything it does not recognize becomes a
//! single-character token instead of an error. The only hard failures are
//! unterminated string and character literals, which would otherwise swallow
//! the rest of the input.
//!
//! Guarantees that the rest of the pipeline relies on:
//! * no token is empty,
//! * no token contains whitespace,
//! * re-lexing the space-joined token stream reproduces the same tokens.

use std::collections::BTreeSet;

use thiserror::Error;

/// A tokenized source fragment, in source order, duplicates preserved.
pub type TokenSeq = Vec<String>;

/// A deduplicated, ordered set of tokens used for bag similarity.
pub type TokenBag = BTreeSet<String>;

/// Two-character operators recognized as single tokens (maximal munch).
const TWO_CHAR_OPS: [&str; 16] = [
    "==", "!=", "<=", ">=", "&&", "||", "++", "--", "->", "::", "<<", ">>", "+=", "-=", "*=", "/=",
];

/// Lexing failure; `offset` is the byte position of the offending literal's
/// opening quote.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("unterminated char literal starting at byte {offset}")]
    UnterminatedChar { offset: usize },
}

/// Splits `source` into tokens: identifiers, numeric/string/char literals,
/// operators, and single-character symbols. Comments and whitespace are
/// dropped.
pub fn tokenize(source: &str) -> Result<TokenSeq, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;

        // Whitespace (including non-ASCII) separates tokens and is discarded.
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_ascii() {
            let ch = source[i..].chars().next().expect("in-bounds char");
            if ch.is_whitespace() {
                i += ch.len_utf8();
                continue;
            }
            // Unknown non-ASCII character: keep it as its own token.
            tokens.push(ch.to_string());
            i += ch.len_utf8();
            continue;
        }

        // Comments.
        if c == '/' && i + 1 < bytes.len() {
            match bytes[i + 1] {
                b'/' => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                    continue;
                }
                b'*' => {
                    // An unterminated block comment silently runs to EOF.
                    let mut j = i + 2;
                    while j + 1 < bytes.len() && !(bytes[j] == b'*' && bytes[j + 1] == b'/') {
                        j += 1;
                    }
                    i = if j + 1 < bytes.len() { j + 2 } else { bytes.len() };
                    continue;
                }
                _ => {}
            }
        }

        if is_ident_start(c) {
            let start = i;
            while i < bytes.len() && is_ident_part(bytes[i] as char) {
                i += 1;
            }
            tokens.push(source[start..i].to_string());
            continue;
        }

        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            let end = scan_number(bytes, i);
            tokens.push(source[i..end].to_string());
            i = end;
            continue;
        }

        if c == '"' {
            let end = scan_string(bytes, i)?;
            tokens.push(source[i..end].to_string());
            i = end;
            continue;
        }

        if c == '\'' {
            let end = scan_char(bytes, i)?;
            tokens.push(source[i..end].to_string());
            i = end;
            continue;
        }

        if i + 1 < bytes.len() {
            let pair = &source[i..i + 2];
            if TWO_CHAR_OPS.contains(&pair) {
                tokens.push(pair.to_string());
                i += 2;
                continue;
            }
        }

        // Any other ASCII character stands alone: punctuation, operators,
        // and unknown symbols alike.
        tokens.push(c.to_string());
        i += 1;
    }
    Ok(tokens)
}

/// Collapses a token sequence into its deduplicated bag.
pub fn dedup_bag(tokens: &[String]) -> TokenBag {
    tokens.iter().cloned().collect()
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_part(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Scans a Java-style numeric literal starting at `start`; returns the byte
/// index one past its end. Handles hex/binary prefixes, underscores, decimal
/// points, exponents, and type suffixes.
fn scan_number(bytes: &[u8], start: usize) -> usize {
    let mut i = start;
    let n = bytes.len();
    if bytes[i] == b'0' && i + 1 < n && matches!(bytes[i + 1], b'x' | b'X' | b'b' | b'B') {
        i += 2;
        while i < n && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
            i += 1;
        }
        if i < n && matches!(bytes[i], b'l' | b'L') {
            i += 1;
        }
        return i;
    }
    while i < n && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    if i + 1 < n && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        while i < n && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
    }
    if i < n && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < n && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < n && bytes[j].is_ascii_digit() {
            i = j;
            while i < n && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    if i < n && matches!(bytes[i], b'f' | b'F' | b'd' | b'D' | b'l' | b'L') {
        i += 1;
    }
    i
}

/// Scans a double-quoted string literal; newlines inside are tolerated so
/// noisy corpus text survives, but EOF before the closing quote is an error.
fn scan_string(bytes: &[u8], start: usize) -> Result<usize, LexError> {
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if i + 1 < bytes.len() => i += 2,
            b'"' => return Ok(i + 1),
            _ => i += 1,
        }
    }
    Err(LexError::UnterminatedString { offset: start })
}

/// Scans a single-quoted char literal: one (possibly escaped) character
/// followed by the closing quote.
fn scan_char(bytes: &[u8], start: usize) -> Result<usize, LexError> {
    let err = || LexError::UnterminatedChar { offset: start };
    let mut i = start + 1;
    if i >= bytes.len() {
        return Err(err());
    }
    if bytes[i] == b'\\' {
        i += 2;
    } else if !bytes[i].is_ascii() {
        // A single non-ASCII character payload.
        let tail = std::str::from_utf8(&bytes[i..]).expect("input was a str");
        i += tail.chars().next().map(char::len_utf8).unwrap_or(1);
    } else {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'\'' {
        Ok(i + 1)
    } else {
        Err(err())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<String> {
        tokenize(src).expect("lexes")
    }

    #[test]
    fn splits_statement_into_expected_tokens() {
        assert_eq!(
            toks("assertEquals(4, list.size());"),
            ["assertEquals", "(", "4", ",", "list", ".", "size", "(", ")", ")", ";"]
        );
    }

    #[test]
    fn maximal_munch_on_operator_runs() {
        assert_eq!(toks("a+++b"), ["a", "++", "+", "b"]);
        assert_eq!(toks("x<=y"), ["x", "<=", "y"]);
        // ">>>" is not in the operator table, so it splits as ">>" then ">".
        assert_eq!(toks("a>>>b"), ["a", ">>", ">", "b"]);
        assert_eq!(toks("p->q::r"), ["p", "->", "q", "::", "r"]);
    }

    #[test]
    fn numeric_literals_stay_whole() {
        assert_eq!(toks("1.5e-3f"), ["1.5e-3f"]);
        assert_eq!(toks("0xFF_EC"), ["0xFF_EC"]);
        assert_eq!(toks("42L"), ["42L"]);
        assert_eq!(toks(".5d"), [".5d"]);
        // A trailing dot is member access, not part of the number.
        assert_eq!(toks("1.toString"), ["1", ".", "toString"]);
    }

    #[test]
    fn string_and_char_literals_keep_quotes() {
        assert_eq!(toks(r#"assertEquals("a b", s)"#)[1..3], ["(", "\"a b\""]);
        assert_eq!(toks(r"'\n'"), [r"'\n'"]);
        assert_eq!(toks("'x'"), ["'x'"]);
        assert_eq!(toks(r#""say \"hi\"""#), [r#""say \"hi\"""#]);
    }

    #[test]
    fn comments_are_dropped() {
        assert_eq!(toks("a // trailing\nb"), ["a", "b"]);
        assert_eq!(toks("a /* inner */ b"), ["a", "b"]);
        // Unterminated block comment swallows the rest of the input.
        assert_eq!(toks("a /* open"), ["a"]);
    }

    #[test]
    fn unknown_characters_become_single_tokens() {
        assert_eq!(toks("@Test #x ß"), ["@", "Test", "#", "x", "ß"]);
    }

    #[test]
    fn unterminated_literals_report_offset() {
        assert_eq!(
            tokenize("ab \"open"),
            Err(LexError::UnterminatedString { offset: 3 })
        );
        assert_eq!(tokenize("x 'y"), Err(LexError::UnterminatedChar { offset: 2 }));
        assert_eq!(tokenize("'ab'"), Err(LexError::UnterminatedChar { offset: 0 }));
    }

    #[test]
    fn dedup_bag_sorts_and_dedups() {
        let bag = dedup_bag(&toks("b a b c a"));
        assert_eq!(bag.into_iter().collect::<Vec<_>>(), ["a", "b", "c"]);
    }
}
