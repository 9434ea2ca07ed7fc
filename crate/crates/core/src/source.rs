//! Solidity source normalization and source fingerprints.
//!
//! The scanner is lexical only. It knows about comments, string literals
//! (single or double quoted, backslash escapes; `hex"…"` and `unicode"…"` are
//! ordinary literals behind an identifier prefix) and brace depth. That is
//! enough to strip comments, collapse whitespace, find `pragma solidity`
//! directives and list top-level contract names for the compiler versions
//! found in the corpus.

use crate::model::Digest;

/// Result of [`normalize_source`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedSource {
    /// Comment-free text; whitespace runs outside string literals collapsed to one space.
    pub text: String,
    /// Constraint text of every `pragma solidity …;` directive, in source order.
    pub pragma_versions: Vec<String>,
    /// Top-level `contract`/`library`/`interface` names in declaration order.
    pub contract_names: Vec<String>,
    /// Set when the input ended inside a block comment.
    pub unterminated_comment: bool,
}

/// The pair of fingerprints computed for every source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceFingerprints {
    pub source_fp: Digest,
    pub source_fp_nopragma: Digest,
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Byte span of a string literal starting at `start` (which holds the quote).
/// Unterminated literals run to end of input.
fn string_end(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

/// Strips comments and collapses whitespace. Returns the text and the unterminated-comment flag.
fn strip_and_collapse(input: &str) -> (String, bool) {
    let bytes = input.as_bytes();
    let mut out = String::with_capacity(input.len());
    let mut pending_space = false;
    let mut unterminated = false;
    let mut i = 0;

    // Pushes a non-whitespace slice, materializing a pending separator first.
    fn emit(out: &mut String, pending: &mut bool, s: &str) {
        if *pending && !out.is_empty() {
            out.push(' ');
        }
        *pending = false;
        out.push_str(s);
    }

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'"' || b == b'\'' {
            let end = string_end(bytes, i);
            emit(&mut out, &mut pending_space, &input[i..end]);
            i = end;
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' && bytes[i] != b'\r' {
                i += 1;
            }
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let close = input[i + 2..].find("*/");
            let after = match close {
                Some(off) => i + 2 + off + 2,
                None => {
                    unterminated = true;
                    bytes.len()
                }
            };
            // A comment glued between two identifier characters still separates them.
            let prev_ident = !pending_space && out.chars().last().is_some_and(is_ident);
            let next_ident = input[after..].chars().next().is_some_and(is_ident);
            if prev_ident && next_ident {
                pending_space = true;
            }
            i = after;
        } else {
            let c = input[i..].chars().next().expect("char boundary");
            if c.is_whitespace() {
                pending_space = true;
            } else {
                let mut buf = [0u8; 4];
                emit(&mut out, &mut pending_space, c.encode_utf8(&mut buf));
            }
            i += c.len_utf8();
        }
    }
    (out, unterminated)
}

/// Lexical tokens of already-normalized text that the directive scanners care about.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Str,
    Punct(u8),
}

/// Tokenizes normalized text, yielding `(start, end, token)` triples.
fn tokens(text: &str) -> Vec<(usize, usize, Tok<'_>)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'"' || b == b'\'' {
            let end = string_end(bytes, i);
            out.push((i, end, Tok::Str));
            i = end;
        } else if (b as char).is_ascii_whitespace() {
            i += 1;
        } else if is_ident(b as char) {
            let start = i;
            while i < bytes.len() && is_ident(bytes[i] as char) {
                i += 1;
            }
            out.push((start, i, Tok::Word(&text[start..i])));
        } else {
            let c = text[i..].chars().next().expect("char boundary");
            out.push((i, i + c.len_utf8(), Tok::Punct(b)));
            i += c.len_utf8();
        }
    }
    out
}

/// Byte spans `(start, end)` of each `pragma solidity …;` directive plus its constraint text.
fn pragma_directives(text: &str) -> Vec<(usize, usize, String)> {
    let toks = tokens(text);
    let mut out = Vec::new();
    let mut k = 0;
    while k + 1 < toks.len() {
        if toks[k].2 == Tok::Word("pragma") && toks[k + 1].2 == Tok::Word("solidity") {
            let start = toks[k].0;
            let body_start = toks[k + 1].1;
            let mut j = k + 2;
            while j < toks.len() && toks[j].2 != Tok::Punct(b';') {
                j += 1;
            }
            let (body_end, end) = match toks.get(j) {
                Some(&(s, e, _)) => (s, e),
                None => (text.len(), text.len()),
            };
            out.push((start, end, text[body_start..body_end].trim().to_string()));
            k = j + 1;
        } else {
            k += 1;
        }
    }
    out
}

fn declared_contracts(text: &str) -> Vec<String> {
    let toks = tokens(text);
    let mut depth = 0usize;
    let mut names = Vec::new();
    for (k, &(_, _, tok)) in toks.iter().enumerate() {
        match tok {
            Tok::Punct(b'{') => depth += 1,
            Tok::Punct(b'}') => depth = depth.saturating_sub(1),
            Tok::Word("contract" | "library" | "interface") if depth == 0 => {
                if let Some(&(_, _, Tok::Word(name))) = toks.get(k + 1) {
                    names.push(name.to_string());
                }
            }
            _ => {}
        }
    }
    names
}

/// Normalizes Solidity text: comments removed, whitespace collapsed, directives recorded.
///
/// Never fails. Invalid UTF-8 should be decoded lossily by the caller
/// (see [`normalize_source_bytes`]).
///
/// ```
/// let n = scgt::source::normalize_source("pragma solidity ^0.4.24;\ncontract  C { } // note");
/// assert_eq!(n.text, "pragma solidity ^0.4.24; contract C { }");
/// assert_eq!(n.pragma_versions, ["^0.4.24"]);
/// assert_eq!(n.contract_names, ["C"]);
/// ```
pub fn normalize_source(solidity_text: &str) -> NormalizedSource {
    let (text, unterminated_comment) = strip_and_collapse(solidity_text);
    let pragma_versions = pragma_directives(&text)
        .into_iter()
        .map(|(_, _, v)| v)
        .collect();
    let contract_names = declared_contracts(&text);
    NormalizedSource {
        text,
        pragma_versions,
        contract_names,
        unterminated_comment,
    }
}

/// [`normalize_source`] over raw bytes, replacing invalid UTF-8 sequences.
pub fn normalize_source_bytes(bytes: &[u8]) -> NormalizedSource {
    normalize_source(&String::from_utf8_lossy(bytes))
}

/// Normalized text with every `pragma solidity` directive deleted and whitespace re-collapsed.
pub fn strip_pragmas(norm: &NormalizedSource) -> String {
    let directives = pragma_directives(&norm.text);
    if directives.is_empty() {
        return norm.text.clone();
    }
    let mut cut = String::with_capacity(norm.text.len());
    let mut last = 0;
    for (start, end, _) in directives {
        cut.push_str(&norm.text[last..start]);
        // keep a separator so neighbouring tokens cannot merge
        cut.push(' ');
        last = end;
    }
    cut.push_str(&norm.text[last..]);
    strip_and_collapse(&cut).0
}

/// MD5 of the normalized text and of its pragma-free variant.
pub fn fingerprint_source(norm: &NormalizedSource) -> SourceFingerprints {
    SourceFingerprints {
        source_fp: Digest::of(norm.text.as_bytes()),
        source_fp_nopragma: Digest::of(strip_pragmas(norm).as_bytes()),
    }
}

/// Version constraints declared by `pragma solidity`, in source order.
pub fn extract_solidity_versions(norm: &NormalizedSource) -> Vec<String> {
    norm.pragma_versions.clone()
}

/// `major.minor` of the first version number in a constraint, e.g. `^0.4.24` → `0.4`.
pub fn minor_version(constraint: &str) -> Option<String> {
    let start = constraint.find(|c: char| c.is_ascii_digit())?;
    let mut parts = constraint[start..]
        .split(|c: char| !c.is_ascii_digit() && c != '.')
        .next()?
        .split('.');
    let major = parts.next().filter(|s| !s.is_empty())?;
    let minor = parts.next().filter(|s| !s.is_empty())?;
    Some(format!("{major}.{minor}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_comments() {
        assert_eq!(normalize_source("contract C { } // note").text, "contract C { }");
        assert_eq!(
            normalize_source("/* header */\ncontract C {\n  /** doc */ uint x; // x\n}").text,
            "contract C { uint x; }"
        );
        assert_eq!(normalize_source("a/*x*/b").text, "a b");
        assert_eq!(normalize_source("a/*x*/+b").text, "a+b");
        assert_eq!(normalize_source("a+/*x*/b").text, "a+b");
    }

    #[test]
    fn collapses_whitespace() {
        let a = normalize_source("contract  C\n{\n}");
        let b = normalize_source("contract C { }");
        assert_eq!(a.text, b.text);
        assert_eq!(normalize_source("  \t\n x \r\n ").text, "x");
        assert_eq!(normalize_source("").text, "");
    }

    #[test]
    fn string_literals_are_preserved() {
        let src = "string s = \"//not a comment\";";
        assert_eq!(normalize_source(src).text, src);
        let src = "string s = '/* nor this */  twice';";
        assert_eq!(normalize_source(src).text, src);
        let src = r#"string s = "esc \" // still string"; // gone"#;
        assert_eq!(
            normalize_source(src).text,
            r#"string s = "esc \" // still string";"#
        );
        let src = r#"bytes b = hex"00ff"; string u = unicode"é  x";"#;
        assert_eq!(normalize_source(src).text, src);
    }

    #[test]
    fn unterminated_block_comment_runs_to_end() {
        let n = normalize_source("contract C {} /* open");
        assert_eq!(n.text, "contract C {}");
        assert!(n.unterminated_comment);
        assert!(!normalize_source("contract C {}").unterminated_comment);
    }

    #[test]
    fn lossy_bytes() {
        let n = normalize_source_bytes(b"contract C { } \xff\xfe");
        assert!(n.text.starts_with("contract C { }"));
    }

    #[test]
    fn pragmas() {
        let n = normalize_source("pragma solidity ^0.4.24; contract C{}");
        assert_eq!(extract_solidity_versions(&n), vec!["^0.4.24"]);
        assert!(extract_solidity_versions(&normalize_source("contract C{}")).is_empty());
        let n = normalize_source(
            "pragma solidity >=0.4.22 <0.6.0;\npragma experimental ABIEncoderV2;\ncontract A{}\npragma solidity ^0.5.0;",
        );
        assert_eq!(n.pragma_versions, vec![">=0.4.22 <0.6.0", "^0.5.0"]);
        assert_eq!(
            strip_pragmas(&n),
            "pragma experimental ABIEncoderV2; contract A{}"
        );
        // a pragma inside a string is not a directive
        let n = normalize_source("string s = \"pragma solidity 0.4.0;\";");
        assert!(n.pragma_versions.is_empty());
    }

    #[test]
    fn pragma_only_changes_source_fp() {
        let a = fingerprint_source(&normalize_source("pragma solidity ^0.4.24; contract C{}"));
        let b = fingerprint_source(&normalize_source("pragma solidity ^0.5.0; contract C{}"));
        assert_ne!(a.source_fp, b.source_fp);
        assert_eq!(a.source_fp_nopragma, b.source_fp_nopragma);
        let c = fingerprint_source(&normalize_source("contract C{}"));
        assert_eq!(a.source_fp_nopragma, c.source_fp_nopragma);
        assert_eq!(c.source_fp, c.source_fp_nopragma);
    }

    #[test]
    fn comments_do_not_change_fingerprints() {
        let a = fingerprint_source(&normalize_source("contract C { uint x; }"));
        let b = fingerprint_source(&normalize_source(
            "// SPDX\ncontract C { /* storage */ uint x; // counter\n}",
        ));
        assert_eq!(a, b);
    }

    #[test]
    fn golden_md5() {
        // md5 of the bytes `contract C { }`, computed with coreutils md5sum
        let n = normalize_source("contract C { }");
        assert_eq!(n.text.as_bytes(), b"contract C { }");
        assert_eq!(
            fingerprint_source(&n).source_fp.to_hex(),
            "802d162c579f6a4df84e5d4c1db02bf3"
        );
    }

    #[test]
    fn contract_names_at_top_level_only() {
        let n = normalize_source(
            "library SafeMath { } interface I { function f() external; } contract Token is I { string s = \"contract Fake\"; } contract Sale { }",
        );
        assert_eq!(n.contract_names, vec!["SafeMath", "I", "Token", "Sale"]);
    }

    #[test]
    fn minor_versions() {
        assert_eq!(minor_version("^0.4.24").as_deref(), Some("0.4"));
        assert_eq!(minor_version(">=0.4.22 <0.6.0").as_deref(), Some("0.4"));
        assert_eq!(minor_version("0.5.1").as_deref(), Some("0.5"));
        assert_eq!(minor_version("*"), None);
    }
}
