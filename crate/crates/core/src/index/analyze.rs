use serde::{Deserialize, Serialize};

/// Text analysis mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzerMode {
    /// Word segmentation and lowercasing only.
    Standard,
    /// Standard, plus camelCase / snake_case sub-tokens after each compound.
    #[default]
    Code,
}

impl std::str::FromStr for AnalyzerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(AnalyzerMode::Standard),
            "code" => Ok(AnalyzerMode::Code),
            other => Err(format!("unknown analyzer mode `{other}` (expected standard|code)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzedToken {
    pub term: String,
    pub position: usize,
}

/// Words are maximal runs of alphanumerics and `_`, with leading and
/// trailing underscores trimmed.
fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).map(|w| w.trim_matches('_')).filter(|w| !w.is_empty())
}

/// Splits an identifier at underscores, lower→upper transitions and the
/// end of an acronym (`HTTPServer` → `HTTP`, `Server`).
pub fn split_identifier(word: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    for chunk in word.split('_').filter(|c| !c.is_empty()) {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (at, cur) = chars[i];
            let prev = chars[i - 1].1;
            let next_lower = chars.get(i + 1).is_some_and(|&(_, n)| n.is_lowercase());
            let boundary = (cur.is_uppercase() && (prev.is_lowercase() || prev.is_numeric()))
                || (cur.is_uppercase() && prev.is_uppercase() && next_lower);
            if boundary {
                parts.push(&chunk[start..at]);
                start = at;
            }
        }
        parts.push(&chunk[start..]);
    }
    parts
}

pub fn analyze(text: &str, mode: AnalyzerMode) -> Vec<AnalyzedToken> {
    let mut out = Vec::new();
    let mut push = |term: String| {
        let position = out.len();
        out.push(AnalyzedToken { term, position });
    };
    for word in words(text) {
        push(word.to_lowercase());
        if mode == AnalyzerMode::Code {
            let parts = split_identifier(word);
            if parts.len() > 1 {
                for part in parts {
                    push(part.to_lowercase());
                }
            }
        }
    }
    out
}

/// Convenience wrapper returning only the terms.
pub fn analyze_terms(text: &str, mode: AnalyzerMode) -> Vec<String> {
    analyze(text, mode).into_iter().map(|t| t.term).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(s: &str) -> Vec<String> {
        analyze_terms(s, AnalyzerMode::Code)
    }

    #[test]
    fn lowercase_split() {
        assert_eq!(terms("Flow Execution"), ["flow", "execution"]);
    }

    #[test]
    fn camel_case_keeps_compound() {
        assert_eq!(terms("FlowExecution"), ["flowexecution", "flow", "execution"]);
        assert_eq!(analyze_terms("FlowExecution", AnalyzerMode::Standard), ["flowexecution"]);
    }

    #[test]
    fn empty_input() {
        assert!(terms("").is_empty());
        assert!(terms(" .;, ").is_empty());
    }

    #[test]
    fn snake_case_and_acronyms() {
        assert_eq!(terms("max_snapshots"), ["max_snapshots", "max", "snapshots"]);
        assert_eq!(terms("HTTPServer"), ["httpserver", "http", "server"]);
        assert_eq!(terms("getUTF8String"), ["getutf8string", "get", "utf8", "string"]);
        assert_eq!(terms("__init__"), ["init"]);
    }

    #[test]
    fn punctuation_separates() {
        assert_eq!(terms("foo.bar(baz);"), ["foo", "bar", "baz"]);
        let toks = analyze("a-b", AnalyzerMode::Code);
        assert_eq!(toks[1].position, 1);
    }
}
