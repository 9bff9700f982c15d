//! Unified diff parsing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: malformed hunk header `{text}`")]
pub struct DiffError {
    pub line: usize,
    pub text: String,
}

/// `(start, len)` as written in a hunk header. A missing length means 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    /// Path of the pre-fix file, `a/` prefix stripped. Falls back to the
    /// post-fix path for added files.
    pub path: String,
    pub old: LineRange,
    pub new: LineRange,
    /// Context lines, in order.
    #[serde(default)]
    pub context: Vec<String>,
    pub removed: Vec<String>,
    pub added: Vec<String>,
    /// Hunk body lines with their ` `, `-`, `+` markers, for rendering.
    #[serde(default)]
    pub lines: Vec<String>,
}

fn strip_prefix(path: &str) -> Option<String> {
    let path = path.split('\t').next().unwrap_or(path).trim_end();
    if path == "/dev/null" {
        return None;
    }
    Some(path.strip_prefix("a/").or_else(|| path.strip_prefix("b/")).unwrap_or(path).to_string())
}

fn parse_range(s: &str) -> Option<LineRange> {
    let (start, len) = match s.split_once(',') {
        Some((a, b)) => (a.parse().ok()?, b.parse().ok()?),
        None => (s.parse().ok()?, 1),
    };
    Some(LineRange { start, len })
}

fn parse_header(line: &str) -> Option<(LineRange, LineRange)> {
    let rest = line.strip_prefix("@@ -")?;
    let (old, rest) = rest.split_once(" +")?;
    let (new, _) = rest.split_once(" @@")?;
    Some((parse_range(old)?, parse_range(new)?))
}

/// Parses a (possibly multi-file) unified diff into hunks, in file order.
pub fn parse_unified_diff(text: &str) -> Result<Vec<DiffHunk>, DiffError> {
    let mut hunks: Vec<DiffHunk> = Vec::new();
    let mut old_path: Option<String> = None;
    let mut path = String::new();
    let mut current: Option<(DiffHunk, usize, usize)> = None; // (hunk, old lines left, new lines left)

    for (i, line) in text.lines().enumerate() {
        if let Some((hunk, old_left, new_left)) = current.as_mut() {
            if *old_left > 0 || *new_left > 0 {
                let (marker, body) = match line.chars().next() {
                    Some(c @ (' ' | '-' | '+')) => (c, &line[1..]),
                    Some('\\') => continue,
                    None => (' ', ""),
                    Some(_) => {
                        return Err(DiffError { line: i + 1, text: line.to_string() });
                    }
                };
                match marker {
                    ' ' => {
                        *old_left = old_left.saturating_sub(1);
                        *new_left = new_left.saturating_sub(1);
                        hunk.context.push(body.to_string());
                    }
                    '-' => {
                        *old_left = old_left.saturating_sub(1);
                        hunk.removed.push(body.to_string());
                    }
                    _ => {
                        *new_left = new_left.saturating_sub(1);
                        hunk.added.push(body.to_string());
                    }
                }
                hunk.lines.push(format!("{marker}{body}"));
                continue;
            }
            if line.starts_with('\\') {
                continue;
            }
            hunks.push(current.take().unwrap().0);
        }

        if let Some(p) = line.strip_prefix("--- ") {
            old_path = strip_prefix(p);
        } else if let Some(p) = line.strip_prefix("+++ ") {
            path = old_path.take().or_else(|| strip_prefix(p)).unwrap_or_default();
        } else if line.starts_with("@@") {
            let (old, new) = parse_header(line).ok_or_else(|| DiffError { line: i + 1, text: line.to_string() })?;
            let hunk = DiffHunk {
                path: path.clone(),
                old,
                new,
                context: Vec::new(),
                removed: Vec::new(),
                added: Vec::new(),
                lines: Vec::new(),
            };
            current = Some((hunk, old.len, new.len));
        }
    }
    if let Some((hunk, ..)) = current {
        hunks.push(hunk);
    }
    Ok(hunks)
}

fn render_range(r: LineRange) -> String {
    if r.len == 1 {
        r.start.to_string()
    } else {
        format!("{},{}", r.start, r.len)
    }
}

/// Renders hunks back to unified diff text, one `---`/`+++` header per run
/// of hunks sharing a path.
pub fn render_unified_diff(hunks: &[DiffHunk]) -> String {
    let mut out = String::new();
    let mut last_path: Option<&str> = None;
    for h in hunks {
        if last_path != Some(h.path.as_str()) {
            out.push_str(&format!("--- a/{}\n+++ b/{}\n", h.path, h.path));
            last_path = Some(&h.path);
        }
        out.push_str(&format!("@@ -{} +{} @@\n", render_range(h.old), render_range(h.new)));
        for l in &h.lines {
            out.push_str(l);
            out.push('\n');
        }
    }
    out
}

/// Groups hunks by path, preserving first-seen path order.
pub fn group_by_path(hunks: &[DiffHunk]) -> Vec<(&str, Vec<&DiffHunk>)> {
    let mut groups: Vec<(&str, Vec<&DiffHunk>)> = Vec::new();
    for h in hunks {
        match groups.iter_mut().find(|(p, _)| *p == h.path) {
            Some((_, v)) => v.push(h),
            None => groups.push((&h.path, vec![h])),
        }
    }
    groups
}
