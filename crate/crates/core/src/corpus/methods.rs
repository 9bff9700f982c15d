//! Method extraction for Java-family source text.
//!
//! The extractor tokenizes the source (skipping comments and literals), then
//! walks type bodies recognizing member declarations by shape: a header
//! ending in `name(...)` optionally followed by `throws ...`, then a
//! brace-balanced body. Nested and anonymous classes inside a method body
//! are folded into the enclosing method. Static and instance initializers
//! are not reported.

use serde::{Deserialize, Serialize};

/// One extracted method or constructor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpan {
    pub name: String,
    pub signature: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    pub body: String,
}

impl MethodSpan {
    pub fn line_count(&self) -> usize {
        self.end_line - self.start_line + 1
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start_line <= end && start <= self.end_line
    }
}

/// Result of running the extractor over one document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub methods: Vec<MethodSpan>,
    /// Set when the content could not be tokenized or its braces do not
    /// balance. `methods` is empty in that case.
    pub parse_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ident,
    Number,
    Literal,
    Punct(char),
}

#[derive(Debug, Clone, Copy)]
struct Tok {
    kind: Kind,
    start: usize,
    end: usize,
    line: usize,
}

#[derive(Debug)]
struct Unbalanced;

fn lex(src: &str) -> Result<Vec<Tok>, Unbalanced> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut chars = src.char_indices().peekable();

    // Advances past the closing delimiter of a quoted literal. Returns the
    // byte offset just after the literal.
    fn close_quote(
        chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>,
        quote: char,
        line: &mut usize,
    ) -> Result<usize, Unbalanced> {
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => {
                    if let Some((_, '\n')) = chars.next() {
                        *line += 1;
                    }
                }
                '\n' => return Err(Unbalanced),
                c if c == quote => return Ok(i + c.len_utf8()),
                _ => {}
            }
        }
        Err(Unbalanced)
    }

    while let Some((i, c)) = chars.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            '/' if bytes.get(i + 1) == Some(&b'/') => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '/' if bytes.get(i + 1) == Some(&b'*') => {
                chars.next();
                let mut closed = false;
                while let Some((j, c)) = chars.next() {
                    if c == '\n' {
                        line += 1;
                    } else if c == '*' && bytes.get(j + 1) == Some(&b'/') {
                        chars.next();
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(Unbalanced);
                }
            }
            '"' if src[i..].starts_with("\"\"\"") => {
                let start_line = line;
                chars.next();
                chars.next();
                let mut end = None;
                while let Some((j, c)) = chars.next() {
                    match c {
                        '\\' => {
                            if let Some((_, '\n')) = chars.next() {
                                line += 1;
                            }
                        }
                        '\n' => line += 1,
                        '"' if src[j..].starts_with("\"\"\"") => {
                            chars.next();
                            chars.next();
                            end = Some(j + 3);
                            break;
                        }
                        _ => {}
                    }
                }
                let end = end.ok_or(Unbalanced)?;
                toks.push(Tok { kind: Kind::Literal, start: i, end, line: start_line });
            }
            '"' | '\'' => {
                let end = close_quote(&mut chars, c, &mut line)?;
                toks.push(Tok { kind: Kind::Literal, start: i, end, line });
            }
            c if c.is_alphabetic() || c == '_' || c == '$' => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, c)) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '$' {
                        end = j + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                toks.push(Tok { kind: Kind::Ident, start: i, end, line });
            }
            c if c.is_ascii_digit() => {
                let mut end = i + 1;
                while let Some(&(j, c)) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' {
                        end = j + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                toks.push(Tok { kind: Kind::Number, start: i, end, line });
            }
            c => toks.push(Tok { kind: Kind::Punct(c), start: i, end: i + c.len_utf8(), line }),
        }
    }
    Ok(toks)
}

const TYPE_KEYWORDS: [&str; 4] = ["class", "interface", "enum", "record"];
const NOT_A_METHOD_NAME: [&str; 14] = [
    "if",
    "for",
    "while",
    "switch",
    "catch",
    "synchronized",
    "new",
    "return",
    "throw",
    "else",
    "do",
    "try",
    "assert",
    "super",
];

enum Header {
    Type { is_enum: bool },
    Method { name_tok: usize, decl_start: usize },
    Initializer,
    Expression,
    Unknown,
}

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Tok>,
    pos: usize,
    found: Vec<(usize, usize, usize, usize, usize)>, // (first tok incl. annotations, decl_start tok, name tok, header end tok, close tok)
}

impl<'s> Parser<'s> {
    fn text(&self, t: usize) -> &'s str {
        let tok = self.toks[t];
        &self.src[tok.start..tok.end]
    }

    fn is_punct(&self, t: usize, c: char) -> bool {
        self.toks.get(t).map(|t| t.kind == Kind::Punct(c)).unwrap_or(false)
    }

    fn is_ident(&self, t: usize) -> bool {
        self.toks.get(t).map(|t| t.kind == Kind::Ident).unwrap_or(false)
    }

    /// `pos` is at `open`; returns the index of the matching `close` and
    /// leaves `pos` just past it. Brackets of the other kind nest freely.
    fn skip_balanced(&mut self) -> Result<usize, Unbalanced> {
        let mut depth = 0usize;
        while let Some(tok) = self.toks.get(self.pos) {
            match tok.kind {
                Kind::Punct('{') | Kind::Punct('(') => depth += 1,
                Kind::Punct('}') | Kind::Punct(')') => {
                    depth = depth.checked_sub(1).ok_or(Unbalanced)?;
                    if depth == 0 {
                        let close = self.pos;
                        self.pos += 1;
                        return Ok(close);
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(Unbalanced)
    }

    fn parse_members(&mut self, nested: bool) -> Result<(), Unbalanced> {
        let mut header_start = self.pos;
        loop {
            let Some(tok) = self.toks.get(self.pos) else {
                return if nested { Err(Unbalanced) } else { Ok(()) };
            };
            match tok.kind {
                Kind::Punct('}') => {
                    if nested {
                        self.pos += 1;
                        return Ok(());
                    }
                    return Err(Unbalanced);
                }
                Kind::Punct(';') => {
                    self.pos += 1;
                    header_start = self.pos;
                }
                Kind::Punct('(') => {
                    self.skip_balanced()?;
                }
                Kind::Punct(')') => return Err(Unbalanced),
                Kind::Punct('{') => {
                    let header_end = self.pos;
                    match self.classify(header_start, header_end) {
                        Header::Type { is_enum } => {
                            self.pos += 1;
                            if is_enum {
                                self.skip_enum_constants()?;
                            }
                            self.parse_members(true)?;
                            header_start = self.pos;
                        }
                        Header::Method { name_tok, decl_start } => {
                            let close = self.skip_balanced()?;
                            self.found.push((header_start, decl_start, name_tok, header_end, close));
                            header_start = self.pos;
                        }
                        Header::Initializer | Header::Unknown => {
                            self.skip_balanced()?;
                            header_start = self.pos;
                        }
                        Header::Expression => {
                            // Field initializer with an anonymous class or array
                            // literal; the declaration continues up to `;`.
                            self.skip_balanced()?;
                        }
                    }
                }
                _ => self.pos += 1,
            }
        }
    }

    /// Skips enum constants (with their arguments and bodies) up to the `;`
    /// that opens the member section, or up to the closing brace.
    fn skip_enum_constants(&mut self) -> Result<(), Unbalanced> {
        while let Some(tok) = self.toks.get(self.pos) {
            match tok.kind {
                Kind::Punct(';') => {
                    self.pos += 1;
                    return Ok(());
                }
                Kind::Punct('}') => return Ok(()),
                Kind::Punct('(') | Kind::Punct('{') => {
                    self.skip_balanced()?;
                }
                Kind::Punct(')') => return Err(Unbalanced),
                _ => self.pos += 1,
            }
        }
        Err(Unbalanced)
    }

    /// Skips leading annotations in `[from, to)` and returns the first
    /// token index after them.
    fn skip_annotations(&self, mut at: usize, to: usize) -> usize {
        while at + 1 < to && self.is_punct(at, '@') && self.is_ident(at + 1) {
            if self.text(at + 1) == "interface" {
                break;
            }
            at += 2;
            while at + 1 < to && self.is_punct(at, '.') && self.is_ident(at + 1) {
                at += 2;
            }
            if at < to && self.is_punct(at, '(') {
                let mut depth = 0usize;
                while at < to {
                    match self.toks[at].kind {
                        Kind::Punct('(') | Kind::Punct('{') => depth += 1,
                        Kind::Punct(')') | Kind::Punct('}') => {
                            depth = depth.saturating_sub(1);
                            if depth == 0 {
                                at += 1;
                                break;
                            }
                        }
                        _ => {}
                    }
                    at += 1;
                }
            }
        }
        at
    }

    fn classify(&self, start: usize, end: usize) -> Header {
        let decl = self.skip_annotations(start, end);
        if decl == end || (decl + 1 == end && self.is_ident(decl) && self.text(decl) == "static") {
            return Header::Initializer;
        }

        // Depth-0 scan: assignment means a field initializer.
        let mut depth = 0usize;
        let mut first_paren = None;
        for t in decl..end {
            match self.toks[t].kind {
                Kind::Punct('(') | Kind::Punct('{') => {
                    if depth == 0 && first_paren.is_none() && self.is_punct(t, '(') {
                        first_paren = Some(t);
                    }
                    depth += 1;
                }
                Kind::Punct(')') | Kind::Punct('}') => depth = depth.saturating_sub(1),
                Kind::Punct('=') if depth == 0 => return Header::Expression,
                Kind::Punct('-') if depth == 0 && self.is_punct(t + 1, '>') => return Header::Expression,
                _ => {}
            }
        }

        for t in decl..end {
            if self.is_ident(t)
                && TYPE_KEYWORDS.contains(&self.text(t))
                && self.is_ident(t + 1)
                && t + 1 < end
                && !(t > decl && self.is_punct(t - 1, '.'))
                && first_paren.is_none_or(|p| t < p)
            {
                return Header::Type { is_enum: self.text(t) == "enum" };
            }
        }

        let Some(open) = first_paren else {
            return Header::Unknown;
        };
        if open == decl || !self.is_ident(open - 1) {
            return Header::Unknown;
        }
        let name = self.text(open - 1);
        if NOT_A_METHOD_NAME.contains(&name) || TYPE_KEYWORDS.contains(&name) && name != "record" {
            return Header::Unknown;
        }
        if open - 1 > decl && self.is_punct(open - 2, '.') {
            return Header::Unknown;
        }

        // Find the matching `)` and validate the tail.
        let mut depth = 0usize;
        let mut close = None;
        for t in open..end {
            match self.toks[t].kind {
                Kind::Punct('(') | Kind::Punct('{') => depth += 1,
                Kind::Punct(')') | Kind::Punct('}') => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(t);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(close) = close else {
            return Header::Unknown;
        };
        let mut t = close + 1;
        while t + 1 < end && self.is_punct(t, '[') && self.is_punct(t + 1, ']') {
            t += 2;
        }
        if t < end {
            if !(self.is_ident(t) && self.text(t) == "throws") {
                return Header::Unknown;
            }
            let tail_ok = (t + 1..end)
                .all(|u| matches!(self.toks[u].kind, Kind::Ident | Kind::Punct('.' | ',' | '<' | '>' | '?')));
            if !tail_ok || t + 1 == end {
                return Header::Unknown;
            }
        }
        Header::Method { name_tok: open - 1, decl_start: decl }
    }

    /// Header text with comments dropped and inter-token whitespace collapsed.
    fn signature(&self, from: usize, to: usize) -> String {
        let mut out = String::new();
        for t in from..to {
            if t > from && self.toks[t].start > self.toks[t - 1].end {
                out.push(' ');
            }
            out.push_str(self.text(t));
        }
        out
    }
}

/// Extracts method and constructor spans from Java-family source text.
///
/// Spans start at the first annotation of the declaration, are sorted by
/// start line and never overlap. When two methods share
/// a line (e.g. `void a() {} void b() {}`), the later one is folded into the
/// earlier span.
pub fn extract_methods(content: &str) -> Extraction {
    let Ok(toks) = lex(content) else {
        return Extraction { methods: Vec::new(), parse_failed: true };
    };
    let mut parser = Parser { src: content, toks, pos: 0, found: Vec::new() };
    if parser.parse_members(false).is_err() {
        return Extraction { methods: Vec::new(), parse_failed: true };
    }

    let lines: Vec<&str> = content.lines().collect();
    let mut found = std::mem::take(&mut parser.found);
    found.sort_by_key(|&(start, ..)| parser.toks[start].line);

    let mut methods: Vec<MethodSpan> = Vec::with_capacity(found.len());
    for (first, decl_start, name_tok, header_end, close) in found {
        let start_line = parser.toks[first].line;
        let end_line = parser.toks[close].line;
        if let Some(prev) = methods.last_mut() {
            if start_line <= prev.end_line {
                prev.end_line = prev.end_line.max(end_line);
                prev.body = lines[prev.start_line - 1..prev.end_line].join("\n");
                continue;
            }
        }
        methods.push(MethodSpan {
            name: parser.text(name_tok).to_string(),
            signature: parser.signature(decl_start, header_end),
            start_line,
            end_line,
            body: lines[start_line - 1..end_line].join("\n"),
        });
    }
    Extraction { methods, parse_failed: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(src: &str) -> Vec<String> {
        extract_methods(src).methods.into_iter().map(|m| m.name).collect()
    }

    #[test]
    fn single_method_on_one_line() {
        let ex = extract_methods("class A { void f() { int x=1; } }");
        assert!(!ex.parse_failed);
        assert_eq!(ex.methods.len(), 1);
        let f = &ex.methods[0];
        assert_eq!(f.name, "f");
        assert_eq!(f.signature, "void f()");
        assert_eq!((f.start_line, f.end_line), (1, 1));
    }

    #[test]
    fn fields_only() {
        let ex = extract_methods("class A {\n  int x = 1;\n  String s;\n}\n");
        assert!(!ex.parse_failed);
        assert!(ex.methods.is_empty());
    }

    #[test]
    fn constructors_and_default_methods_count() {
        let src = "interface I {\n  default int size() { return 0; }\n  void abs();\n}\n\
                   class C implements I {\n  public C(int x) {\n    super();\n  }\n}\n";
        assert_eq!(names(src), ["size", "C"]);
    }

    #[test]
    fn initializers_are_skipped() {
        let src = "class C {\n  static { load(); }\n  { init(); }\n  void run() {}\n}\n";
        assert_eq!(names(src), ["run"]);
    }

    #[test]
    fn anonymous_classes_fold_into_enclosing_method() {
        let src = r#"class C {
  void outer() {
    Runnable r = new Runnable() {
      public void run() { System.out.println("}"); }
    };
  }
  Comparator<String> cmp = new Comparator<String>() {
    public int compare(String a, String b) { return 0; }
  };
  void after() {}
}
"#;
        let ex = extract_methods(src);
        let got: Vec<_> = ex.methods.iter().map(|m| (m.name.as_str(), m.start_line, m.end_line)).collect();
        assert_eq!(got, [("outer", 2, 6), ("after", 10, 10)]);
    }

    #[test]
    fn nested_types_enums_and_annotations() {
        let src = r#"package p;
import java.util.List;

@Entity(name = "x")
public class Outer<T extends Comparable<T>> {
  enum Color { RED("r") { void paint() {} }, GREEN("g"); Color(String s) {} String code() { return ""; } }
  static class Inner {
    @Override
    public String toString() { return "/* not a comment */"; }
  }
  @SuppressWarnings({"unchecked", "rawtypes"})
  <R> List<R> map(java.util.function.Function<T, R> f) throws java.io.IOException, IllegalStateException {
    // { unbalanced in comment
    return null;
  }
}
"#;
        let ex = extract_methods(src);
        assert!(!ex.parse_failed);
        let got: Vec<_> = ex.methods.iter().map(|m| (m.name.as_str(), m.start_line, m.end_line)).collect();
        assert_eq!(got, [("Color", 6, 6), ("toString", 8, 9), ("map", 11, 15)]);
        assert_eq!(
            ex.methods[2].signature,
            "<R> List<R> map(java.util.function.Function<T, R> f) throws java.io.IOException, IllegalStateException"
        );
    }

    #[test]
    fn unbalanced_input_flags_failure() {
        for src in ["class A { void f() {", "class A { } }", "/* open", "class A { String s = \"x; }"] {
            let ex = extract_methods(src);
            assert!(ex.parse_failed, "{src}");
            assert!(ex.methods.is_empty());
        }
    }

    #[test]
    fn text_blocks_and_char_literals() {
        let src =
            "class A {\n  String t = \"\"\"\n   { \n   \"\"\";\n  char c = '{';\n  void g() { char d = '}'; }\n}\n";
        assert_eq!(names(src), ["g"]);
    }

    #[test]
    fn body_matches_document_lines() {
        let src = "class A {\n  void f() {\n    a();\n  }\n}\n";
        let m = &extract_methods(src).methods[0];
        assert_eq!(m.body, "  void f() {\n    a();\n  }");
    }
}
