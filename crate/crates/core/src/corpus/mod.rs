//! Source corpora and bug reports.

mod methods;

pub use methods::{extract_methods, Extraction, MethodSpan};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: invalid bug report: {message}")]
    Report { path: PathBuf, line: usize, message: String },
    #[error("corpus is empty: no source documents could be loaded")]
    Empty,
}

/// Bug report categories by content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReportClass {
    /// Contains a stack trace.
    ST,
    /// Mentions program elements but carries no stack trace.
    PE,
    /// Natural language only.
    NL,
}

impl ReportClass {
    pub const ALL: [ReportClass; 3] = [ReportClass::ST, ReportClass::PE, ReportClass::NL];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportClass::ST => "ST",
            ReportClass::PE => "PE",
            ReportClass::NL => "NL",
        }
    }
}

impl fmt::Display for ReportClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub project: String,
    pub version: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub created_at: DateTime<Utc>,
    /// Repository-relative paths changed by the fix. Empty for reports
    /// submitted for prediction only.
    #[serde(default)]
    pub fixed_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_class: Option<ReportClass>,
}

impl BugReport {
    /// Title and description joined by a space.
    pub fn text(&self) -> String {
        if self.description.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.description)
        }
    }
}

/// Identifies a document across projects and versions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DocKey {
    pub project: String,
    pub version: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub path: String,
    pub project: String,
    pub version: String,
    pub content: String,
    pub methods: Vec<MethodSpan>,
}

impl SourceDocument {
    /// Builds a document and extracts its methods. The returned flag is set
    /// when method extraction failed.
    pub fn new(project: &str, version: &str, path: &str, content: String) -> (Self, bool) {
        let Extraction { methods, parse_failed } = extract_methods(&content);
        let doc = SourceDocument {
            path: path.to_string(),
            project: project.to_string(),
            version: version.to_string(),
            content,
            methods,
        };
        (doc, parse_failed)
    }

    pub fn key(&self) -> DocKey {
        DocKey { project: self.project.clone(), version: self.version.clone(), path: self.path.clone() }
    }

    pub fn line_count(&self) -> usize {
        self.content.lines().count()
    }
}

/// One entry of `corpus.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub project: String,
    pub version: String,
    pub files: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Many(Vec<ManifestEntry>),
    One(ManifestEntry),
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let raw = std::fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let parsed: ManifestFile =
        serde_json::from_slice(&raw).map_err(|source| CorpusError::Manifest { path: path.to_path_buf(), source })?;
    Ok(match parsed {
        ManifestFile::Many(v) => v,
        ManifestFile::One(e) => vec![e],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum IssueKind {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadIssue {
    pub kind: IssueKind,
    pub file: String,
    pub message: String,
}

/// Per-file problems collected while loading a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub issues: Vec<LoadIssue>,
}

impl LoadReport {
    pub fn errors(&self) -> impl Iterator<Item = &LoadIssue> {
        self.issues.iter().filter(|i| i.kind == IssueKind::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &LoadIssue> {
        self.issues.iter().filter(|i| i.kind == IssueKind::Warning)
    }
}

/// An immutable, path-sorted set of source documents.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<SourceDocument>,
    lookup: HashMap<DocKey, usize>,
}

impl Corpus {
    /// Sorts by (path, project, version). Later duplicates of a key are dropped.
    pub fn new(mut docs: Vec<SourceDocument>) -> Self {
        docs.sort_by(|a, b| (&a.path, &a.project, &a.version).cmp(&(&b.path, &b.project, &b.version)));
        docs.dedup_by(|b, a| a.key() == b.key());
        let lookup = docs.iter().enumerate().map(|(i, d)| (d.key(), i)).collect();
        Corpus { docs, lookup }
    }

    pub fn documents(&self) -> &[SourceDocument] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, project: &str, version: &str, path: &str) -> Option<&SourceDocument> {
        let key = DocKey { project: project.to_string(), version: version.to_string(), path: path.to_string() };
        self.lookup.get(&key).map(|&i| &self.docs[i])
    }

    /// Distinct project names in sorted order.
    pub fn projects(&self) -> Vec<&str> {
        let mut p: Vec<&str> = self.docs.iter().map(|d| d.project.as_str()).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

/// Loads every file listed in the manifest, resolving paths against `root`.
///
/// Missing or unreadable files are recorded in the [`LoadReport`] and do not
/// stop the load. Invalid UTF-8 is decoded lossily with a warning.
pub fn load_corpus(root: &Path, manifest: &Path) -> Result<(Corpus, LoadReport), CorpusError> {
    let entries = read_manifest(manifest)?;
    let mut seen = HashSet::new();
    let mut jobs = Vec::new();
    let mut report = LoadReport::default();
    for entry in &entries {
        for file in &entry.files {
            if seen.insert((entry.project.clone(), entry.version.clone(), file.clone())) {
                jobs.push((entry.project.as_str(), entry.version.as_str(), file.as_str()));
            } else {
                report.issues.push(LoadIssue {
                    kind: IssueKind::Warning,
                    file: file.clone(),
                    message: format!("duplicate manifest entry in {}@{}", entry.project, entry.version),
                });
            }
        }
    }

    let loaded: Vec<(Option<SourceDocument>, Vec<LoadIssue>)> =
        jobs.par_iter().map(|&(project, version, file)| load_one(root, project, version, file)).collect();

    let mut docs = Vec::with_capacity(loaded.len());
    for (doc, issues) in loaded {
        docs.extend(doc);
        report.issues.extend(issues);
    }
    if docs.is_empty() {
        return Err(CorpusError::Empty);
    }
    report.issues.sort_by(|a, b| (&a.file, &a.message).cmp(&(&b.file, &b.message)));
    Ok((Corpus::new(docs), report))
}

fn load_one(root: &Path, project: &str, version: &str, file: &str) -> (Option<SourceDocument>, Vec<LoadIssue>) {
    let mut issues = Vec::new();
    let bytes = match std::fs::read(root.join(file)) {
        Ok(b) => b,
        Err(e) => {
            issues.push(LoadIssue { kind: IssueKind::Error, file: file.to_string(), message: e.to_string() });
            return (None, issues);
        }
    };
    let content = match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => {
            issues.push(LoadIssue {
                kind: IssueKind::Warning,
                file: file.to_string(),
                message: "invalid UTF-8, decoded with replacement characters".to_string(),
            });
            String::from_utf8_lossy(e.as_bytes()).into_owned()
        }
    };
    let (doc, parse_failed) = SourceDocument::new(project, version, file, content);
    if parse_failed {
        issues.push(LoadIssue {
            kind: IssueKind::Warning,
            file: file.to_string(),
            message: "method extraction failed; document indexed as a whole".to_string(),
        });
    }
    (Some(doc), issues)
}

/// Reads bug reports from JSONL. Blank lines are skipped.
pub fn load_bug_reports(path: &Path) -> Result<Vec<BugReport>, CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    parse_bug_reports(&raw).map_err(|(line, message)| CorpusError::Report { path: path.to_path_buf(), line, message })
}

/// Parses JSONL bug reports, returning `(line, message)` on the first bad record.
pub fn parse_bug_reports(raw: &str) -> Result<Vec<BugReport>, (usize, String)> {
    let mut reports = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let report: BugReport = serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
        if report.id.trim().is_empty() {
            return Err((i + 1, "empty id".to_string()));
        }
        if !ids.insert((report.project.clone(), report.id.clone())) {
            return Err((i + 1, format!("duplicate id {} in project {}", report.id, report.project)));
        }
        reports.push(report);
    }
    Ok(reports)
}
