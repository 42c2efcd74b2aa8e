//! Tolerant JSON-like parsing for LLM answers.
//!
//! Accepts what chat models actually emit around a JSON payload: Markdown
//! code fences, prose before and after, single or typographic quotes,
//! unquoted keys, trailing commas and answers cut off mid-stream. Object
//! entries keep their order of appearance.
//!
//! A quote character only terminates a string when the next non-blank
//! character is structural (`:` `,` `}` `]`) or the input ends, so
//! apostrophes inside single-quoted strings survive.

use alloc::string::String;
use alloc::vec::Vec;

/// A parsed value. Objects keep entry order and duplicate keys.
#[derive(Debug, Clone, PartialEq)]
pub enum Loose {
    /// `null` / `None`.
    Null,
    /// `true` / `false`.
    Bool(bool),
    /// Any number.
    Number(f64),
    /// A string.
    Str(String),
    /// An array.
    Array(Vec<Loose>),
    /// An object, entries in order of appearance.
    Object(Vec<(String, Loose)>),
}

impl Loose {
    /// The string payload, if this is a string.
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Loose::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Numeric value of a number, or of a string that starts with a number
    /// (`"4"`, `"4.5"`, `"4/5"`).
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Loose::Number(n) => Some(*n),
            Loose::Str(s) => leading_number(s),
            _ => None,
        }
    }

    /// First value stored under `key` in an object.
    pub fn get(&self, key: &str) -> Option<&Loose> {
        match self {
            Loose::Object(entries) => entries.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(s.len(), |(i, _)| i);
    s[..end].parse().ok()
}

/// Removes Markdown code fences (and a language tag right after the opening fence).
pub fn strip_code_fences(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find("```") {
        out.push_str(&rest[..i]);
        rest = &rest[i + 3..];
        let tag = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(rest.len());
        rest = &rest[tag..];
    }
    out.push_str(rest);
    out
}

/// Finds the first position in `raw` where a value opening with `open`
/// (`[` or `{`) parses; if none does, retries with code fences stripped.
/// Truncated input yields the complete elements and entries seen before the
/// cut.
pub fn extract(raw: &str, open: char) -> Option<Loose> {
    scan(raw, open).or_else(|| scan(&strip_code_fences(raw), open))
}

fn scan(text: &str, open: char) -> Option<Loose> {
    let chars: Vec<char> = text.chars().collect();
    chars
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c == open)
        .find_map(|(i, _)| Parser { chars: &chars, pos: i }.value().ok())
}

/// Encodes `s` as a JSON string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str("\\u00");
                out.push(hex_digit((c as u32) >> 4));
                out.push(hex_digit(c as u32 & 0xf));
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn hex_digit(n: u32) -> char {
    char::from_digit(n, 16).unwrap_or('0')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Halt {
    /// Input ended inside a value.
    Eof,
    /// Something that cannot be read as a value.
    Syntax,
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
}

const STRUCTURAL: [char; 4] = [':', ',', '}', ']'];

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}')
}

fn closes(open: char, c: char) -> bool {
    match open {
        '"' => c == '"',
        '\'' => c == '\'',
        '\u{201c}' | '\u{201d}' => matches!(c, '"' | '\u{201d}' | '\u{201c}'),
        _ => matches!(c, '\'' | '\u{2019}' | '\u{2018}'),
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn next_significant(&self, from: usize) -> Option<char> {
        self.chars[from..].iter().copied().find(|c| !c.is_whitespace())
    }

    fn value(&mut self) -> Result<Loose, Halt> {
        self.skip_ws();
        match self.peek() {
            None => Err(Halt::Eof),
            Some('[') => self.array(),
            Some('{') => self.object(),
            Some(c) if is_quote(c) => self.string().map(Loose::Str),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_alphabetic() => self.bareword(),
            Some(_) => Err(Halt::Syntax),
        }
    }

    fn array(&mut self) -> Result<Loose, Halt> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(Loose::Array(items)),
                Some(']') => {
                    self.pos += 1;
                    return Ok(Loose::Array(items));
                }
                Some(',') => self.pos += 1,
                Some(_) => match self.value() {
                    Ok(v) => items.push(v),
                    Err(Halt::Eof) => return Ok(Loose::Array(items)),
                    Err(Halt::Syntax) => return Err(Halt::Syntax),
                },
            }
        }
    }

    fn object(&mut self) -> Result<Loose, Halt> {
        self.pos += 1;
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            let key = match self.peek() {
                None => return Ok(Loose::Object(entries)),
                Some('}') => {
                    self.pos += 1;
                    return Ok(Loose::Object(entries));
                }
                Some(',') => {
                    self.pos += 1;
                    continue;
                }
                Some(c) if is_quote(c) => match self.string() {
                    Ok(k) => k,
                    Err(Halt::Eof) => return Ok(Loose::Object(entries)),
                    Err(e) => return Err(e),
                },
                Some(_) => match self.bare_key() {
                    Ok(k) => k,
                    Err(Halt::Eof) => return Ok(Loose::Object(entries)),
                    Err(e) => return Err(e),
                },
            };
            self.skip_ws();
            match self.peek() {
                None => return Ok(Loose::Object(entries)),
                Some(':') => self.pos += 1,
                Some(_) => return Err(Halt::Syntax),
            }
            match self.value() {
                Ok(v) => entries.push((key, v)),
                Err(Halt::Eof) => return Ok(Loose::Object(entries)),
                Err(e) => return Err(e),
            }
        }
    }

    fn bare_key(&mut self) -> Result<String, Halt> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            match c {
                ':' => {
                    let key: String = self.chars[start..self.pos].iter().collect();
                    let key = key.trim();
                    return if key.is_empty() { Err(Halt::Syntax) } else { Ok(key.into()) };
                }
                '{' | '}' | '[' | ']' | ',' | '\n' => return Err(Halt::Syntax),
                _ => self.pos += 1,
            }
        }
        Err(Halt::Eof)
    }

    fn string(&mut self) -> Result<String, Halt> {
        let open = self.chars[self.pos];
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = self.peek().ok_or(Halt::Eof)?;
            self.pos += 1;
            if c == '\\' {
                let e = self.peek().ok_or(Halt::Eof)?;
                self.pos += 1;
                match e {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'b' => out.push('\u{8}'),
                    'f' => out.push('\u{c}'),
                    'u' => out.push(self.unicode_escape()?),
                    other => out.push(other),
                }
            } else if closes(open, c) {
                match self.next_significant(self.pos) {
                    None => return Ok(out),
                    Some(n) if STRUCTURAL.contains(&n) => return Ok(out),
                    Some(_) => out.push(c),
                }
            } else {
                out.push(c);
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, Halt> {
        if self.pos + 4 > self.chars.len() {
            return Err(Halt::Eof);
        }
        let mut v = 0;
        for _ in 0..4 {
            let d = self.chars[self.pos].to_digit(16).ok_or(Halt::Syntax)?;
            v = v * 16 + d;
            self.pos += 1;
        }
        Ok(v)
    }

    fn unicode_escape(&mut self) -> Result<char, Halt> {
        let hi = self.hex4()?;
        if (0xd800..0xdc00).contains(&hi)
            && self.chars.get(self.pos) == Some(&'\\')
            && self.chars.get(self.pos + 1) == Some(&'u')
        {
            let save = self.pos;
            self.pos += 2;
            let lo = self.hex4()?;
            if (0xdc00..0xe000).contains(&lo) {
                let code = 0x10000 + ((hi - 0xd800) << 10) + (lo - 0xdc00);
                return Ok(char::from_u32(code).unwrap_or('\u{fffd}'));
            }
            self.pos = save;
        }
        Ok(char::from_u32(hi).unwrap_or('\u{fffd}'))
    }

    fn number(&mut self) -> Result<Loose, Halt> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
        {
            self.pos += 1;
        }
        if self.pos == self.chars.len() {
            return Err(Halt::Eof);
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map(Loose::Number).map_err(|_| Halt::Syntax)
    }

    fn bareword(&mut self) -> Result<Loose, Halt> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        match word.as_str() {
            "true" | "True" => Ok(Loose::Bool(true)),
            "false" | "False" => Ok(Loose::Bool(false)),
            "null" | "None" => Ok(Loose::Null),
            _ if self.pos == self.chars.len() => Err(Halt::Eof),
            _ => Err(Halt::Syntax),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn s(x: &str) -> Loose {
        Loose::Str(x.to_string())
    }

    #[test]
    fn fences_and_language_tags_are_removed() {
        assert_eq!(strip_code_fences("```json\n[1]\n```"), "\n[1]\n");
        assert_eq!(strip_code_fences("no fences"), "no fences");
    }

    #[test]
    fn plain_json_parses() {
        let v = extract(r#"{"a": [1, 2.5, true, null], "b": "x"}"#, '{').unwrap();
        assert_eq!(
            v,
            Loose::Object(vec![
                (
                    "a".into(),
                    Loose::Array(vec![Loose::Number(1.0), Loose::Number(2.5), Loose::Bool(true), Loose::Null])
                ),
                ("b".into(), s("x")),
            ])
        );
    }

    #[test]
    fn object_order_is_preserved() {
        let v = extract(r#"{"z": "1", "a": "2", "m": "3"}"#, '{').unwrap();
        let Loose::Object(entries) = v else { panic!() };
        let keys: Vec<_> = entries.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["z", "a", "m"]);
    }

    #[test]
    fn apostrophes_inside_single_quoted_strings() {
        let v = extract("[{'the patient's pain': 'Medical problem'}]", '[').unwrap();
        assert_eq!(
            v,
            Loose::Array(vec![Loose::Object(vec![("the patient's pain".into(), s("Medical problem"))])])
        );
    }

    #[test]
    fn typographic_quotes() {
        let v = extract("{\u{201c}(Clinical finding, Pustule)\u{201d}: \u{201c}pimple\u{201d}}", '{').unwrap();
        assert_eq!(v.get("(Clinical finding, Pustule)"), Some(&s("pimple")));
    }

    #[test]
    fn truncated_arrays_keep_complete_elements() {
        let v = extract(r#"[{"a": "b"}, {"c": "d"#, '[').unwrap();
        assert_eq!(
            v,
            Loose::Array(vec![Loose::Object(vec![("a".into(), s("b"))]), Loose::Object(vec![])])
        );
    }

    #[test]
    fn escapes_decode() {
        let v = extract(r#"["a\"b", "é😀", "x\ny"]"#, '[').unwrap();
        assert_eq!(v, Loose::Array(vec![s("a\"b"), s("é😀"), s("x\ny")]));
    }

    #[test]
    fn skips_bracketed_prose_before_the_payload() {
        let v = extract("Entities [see below]: [{\"a\": \"b\"}]", '[').unwrap();
        assert_eq!(v, Loose::Array(vec![Loose::Object(vec![("a".into(), s("b"))])]));
    }

    #[test]
    fn unquoted_keys_and_trailing_commas() {
        let v = extract("{idx: 1, score: '4',}", '{').unwrap();
        assert_eq!(v.get("idx").and_then(Loose::as_number), Some(1.0));
        assert_eq!(v.get("score").and_then(Loose::as_number), Some(4.0));
    }

    #[test]
    fn leading_numbers_in_strings() {
        assert_eq!(s("4/5").as_number(), Some(4.0));
        assert_eq!(s(" 4.5 ").as_number(), Some(4.5));
        assert_eq!(s("high").as_number(), None);
    }

    #[test]
    fn quote_escapes_controls() {
        assert_eq!(quote("a\"b\\c\n\u{1}"), "\"a\\\"b\\\\c\\n\\u0001\"");
        let v = extract(&alloc::format!("[{}]", quote("a\"b\\c\n\u{1}")), '[').unwrap();
        assert_eq!(v, Loose::Array(vec![s("a\"b\\c\n\u{1}")]));
    }

    #[test]
    fn nothing_to_find() {
        assert_eq!(extract("no payload here", '['), None);
        assert_eq!(extract("", '{'), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn extract_is_total(input in any::<String>()) {
                let _ = extract(&input, '[');
                let _ = extract(&input, '{');
            }

            #[test]
            fn quoted_strings_round_trip(text in any::<String>()) {
                let v = extract(&alloc::format!("[{}]", quote(&text)), '[').unwrap();
                prop_assert_eq!(v, Loose::Array(vec![Loose::Str(text)]));
            }
        }
    }
}
