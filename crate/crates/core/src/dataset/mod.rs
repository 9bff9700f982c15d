//! Training and evaluation data: diff-based method labels, relevance pairs,
//! report classification and train/validation/test splits.

mod diff;

pub use diff::{group_by_path, parse_unified_diff, render_unified_diff, DiffError, DiffHunk, LineRange};

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugReport, Corpus, MethodSpan, ReportClass, SourceDocument};
use crate::keywords::fnv1a;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("negative sampling needs at least two subject systems, corpus has {0}")]
    SingleSystem(usize),
    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    Ratios((f64, f64, f64)),
    #[error("invalid classification patterns: {0}")]
    Patterns(String),
    #[error("diff for report {report}: {source}")]
    Diff {
        report: String,
        #[source]
        source: DiffError,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Methods of `doc` whose line span intersects a hunk's pre-fix range.
///
/// A zero-length range (pure insertion after line `s`) touches the methods
/// that contain both line `s` and line `s + 1`.
pub fn buggy_methods<'a>(doc: &'a SourceDocument, hunks: &[&DiffHunk]) -> Vec<&'a MethodSpan> {
    doc.methods
        .iter()
        .filter(|m| {
            hunks.iter().any(|h| {
                if h.old.len == 0 {
                    m.start_line <= h.old.start && h.old.start < m.end_line
                } else {
                    m.overlaps(h.old.start, h.old.start + h.old.len - 1)
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRef {
    pub project: String,
    pub version: String,
    pub path: String,
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl MethodRef {
    fn new(doc: &SourceDocument, m: &MethodSpan) -> Self {
        MethodRef {
            project: doc.project.clone(),
            version: doc.version.clone(),
            path: doc.path.clone(),
            name: m.name.clone(),
            start_line: m.start_line,
            end_line: m.end_line,
        }
    }
}

/// A labeled (report, method) instance. `label` is 1 for a method changed by
/// the report's fix, 0 for a method sampled from another subject system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevancePair {
    pub report_id: String,
    pub report_project: String,
    pub method: MethodRef,
    pub label: u8,
    /// Report title and description, as scored.
    pub context: String,
    /// Method body, as scored.
    pub candidate: String,
}

/// A report with the unified diff of its fix.
#[derive(Debug, Clone)]
pub struct ReportWithDiff {
    pub report: BugReport,
    pub hunks: Vec<DiffHunk>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PairStats {
    pub positives: usize,
    pub negatives: usize,
    pub skipped_reports: Vec<String>,
    /// Reports whose negative pool was smaller than requested.
    pub short_pools: Vec<String>,
}

fn report_seed(seed: u64, report_id: &str) -> u64 {
    seed ^ fnv1a(report_id.as_bytes())
}

/// Builds positive pairs from fix diffs and `negatives_per_positive` seeded
/// negatives for each, drawn without replacement (per report) from methods
/// of other subject systems.
pub fn build_pairs(
    reports: &[ReportWithDiff],
    corpus: &Corpus,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<(Vec<RelevancePair>, PairStats), DatasetError> {
    let projects = corpus.projects();
    if projects.len() < 2 {
        return Err(DatasetError::SingleSystem(projects.len()));
    }

    let mut pools: BTreeMap<&str, Vec<(&SourceDocument, &MethodSpan)>> = BTreeMap::new();
    for doc in corpus.documents() {
        for m in &doc.methods {
            pools.entry(doc.project.as_str()).or_default().push((doc, m));
        }
    }

    let mut pairs = Vec::new();
    let mut stats = PairStats::default();
    for item in reports {
        let report = &item.report;
        let mut positives: Vec<(&SourceDocument, &MethodSpan)> = Vec::new();
        for (path, hunks) in group_by_path(&item.hunks) {
            let Some(doc) = corpus.get(&report.project, &report.version, path) else {
                continue;
            };
            for m in buggy_methods(doc, &hunks) {
                if !positives.iter().any(|(d, p)| d.path == doc.path && p.start_line == m.start_line) {
                    positives.push((doc, m));
                }
            }
        }
        if positives.is_empty() {
            warn!("report {}: no buggy method resolvable, skipped", report.id);
            stats.skipped_reports.push(report.id.clone());
            continue;
        }

        let pool: Vec<(&SourceDocument, &MethodSpan)> =
            pools.iter().filter(|(p, _)| **p != report.project).flat_map(|(_, v)| v.iter().copied()).collect();
        let wanted = positives.len() * negatives_per_positive;
        let mut rng = ChaCha8Rng::seed_from_u64(report_seed(seed, &report.id));
        let drawn: Vec<usize> = if pool.len() >= wanted {
            index::sample(&mut rng, pool.len(), wanted).into_vec()
        } else {
            warn!("report {}: negative pool has {} methods, wanted {}", report.id, pool.len(), wanted);
            stats.short_pools.push(report.id.clone());
            let mut all: Vec<usize> = (0..pool.len()).collect();
            all.shuffle(&mut rng);
            all
        };

        let context = report.text();
        let mut negatives = drawn.chunks(negatives_per_positive.max(1));
        for (doc, m) in positives {
            pairs.push(RelevancePair {
                report_id: report.id.clone(),
                report_project: report.project.clone(),
                method: MethodRef::new(doc, m),
                label: 1,
                context: context.clone(),
                candidate: m.body.clone(),
            });
            stats.positives += 1;
            for &i in negatives.next().unwrap_or(&[]) {
                let (ndoc, nm) = pool[i];
                pairs.push(RelevancePair {
                    report_id: report.id.clone(),
                    report_project: report.project.clone(),
                    method: MethodRef::new(ndoc, nm),
                    label: 0,
                    context: context.clone(),
                    candidate: nm.body.clone(),
                });
                stats.negatives += 1;
            }
        }
    }
    Ok((pairs, stats))
}

/// Reads `<diff_dir>/<report_id>.diff` for each report. Reports without a
/// diff file get no hunks.
pub fn attach_diffs(reports: Vec<BugReport>, diff_dir: &Path) -> Result<Vec<ReportWithDiff>, DatasetError> {
    reports
        .into_iter()
        .map(|report| {
            let path = diff_dir.join(format!("{}.diff", report.id));
            let hunks = match std::fs::read_to_string(&path) {
                Ok(text) => parse_unified_diff(&text)
                    .map_err(|source| DatasetError::Diff { report: report.id.clone(), source })?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(source) => return Err(DatasetError::Io { path, source }),
            };
            Ok(ReportWithDiff { report, hunks })
        })
        .collect()
}

pub const PATTERNS_JSON: &str = include_str!("../../data/patterns.json");

#[derive(Debug, Deserialize)]
struct PatternFile {
    version: u32,
    stack_trace: Vec<String>,
    program_element: Vec<String>,
}

/// Regex sets deciding ST and PE membership.
#[derive(Debug, Clone)]
pub struct ReportPatterns {
    pub version: u32,
    stack_trace: Vec<Regex>,
    program_element: Vec<Regex>,
}

impl ReportPatterns {
    pub fn from_json(raw: &str) -> Result<Self, DatasetError> {
        let file: PatternFile = serde_json::from_str(raw).map_err(|e| DatasetError::Patterns(e.to_string()))?;
        let compile = |v: &[String]| -> Result<Vec<Regex>, DatasetError> {
            v.iter().map(|p| Regex::new(p).map_err(|e| DatasetError::Patterns(e.to_string()))).collect()
        };
        Ok(ReportPatterns {
            version: file.version,
            stack_trace: compile(&file.stack_trace)?,
            program_element: compile(&file.program_element)?,
        })
    }

    pub fn builtin() -> &'static ReportPatterns {
        static BUILTIN: LazyLock<ReportPatterns> =
            LazyLock::new(|| ReportPatterns::from_json(PATTERNS_JSON).expect("shipped patterns.json is valid"));
        &BUILTIN
    }

    /// ST if a stack-trace pattern matches, else PE if a program-element
    /// pattern matches, else NL.
    pub fn classify_text(&self, text: &str) -> ReportClass {
        if self.stack_trace.iter().any(|r| r.is_match(text)) {
            ReportClass::ST
        } else if self.program_element.iter().any(|r| r.is_match(text)) {
            ReportClass::PE
        } else {
            ReportClass::NL
        }
    }
}

pub fn classify_report(report: &BugReport) -> ReportClass {
    ReportPatterns::builtin().classify_text(&format!("{}\n{}", report.title, report.description))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Random,
    Timewise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { ratios: (0.7, 0.1, 0.2), mode: SplitMode::Random, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (a, b, c) = self.ratios;
        if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(self.ratios));
        }
        Ok(())
    }

    /// `(floor(r0 * n), floor(r1 * n), remainder)`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let cut = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let train = cut(self.ratios.0).min(n);
        let val = cut(self.ratios.1).min(n - train);
        (train, val, n - train - val)
    }
}

/// Report ids per partition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    fn extend_from(&mut self, ids: Vec<String>, (train, val, _): (usize, usize, usize)) {
        let mut it = ids.into_iter();
        self.train.extend(it.by_ref().take(train));
        self.validation.extend(it.by_ref().take(val));
        self.test.extend(it);
    }
}

/// Seeded global shuffle, then a ratio cut.
pub fn split_random(reports: &[BugReport], spec: &SplitSpec) -> Result<Splits, DatasetError> {
    spec.validate()?;
    let mut ids: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut splits = Splits::default();
    let sizes = spec.sizes(ids.len());
    splits.extend_from(ids, sizes);
    Ok(splits)
}

pub const MIN_REPORTS_FOR_TIMEWISE: usize = 10;

/// Per-system chronological cut (earliest reports train), merged across
/// systems in project-name order. Systems with fewer than
/// [`MIN_REPORTS_FOR_TIMEWISE`] reports go wholly to train.
pub fn split_timewise(reports: &[BugReport], spec: &SplitSpec) -> Result<Splits, DatasetError> {
    spec.validate()?;
    let mut by_project: BTreeMap<&str, Vec<&BugReport>> = BTreeMap::new();
    for r in reports {
        by_project.entry(r.project.as_str()).or_default().push(r);
    }
    let mut splits = Splits::default();
    for (project, mut group) in by_project {
        group.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let ids: Vec<String> = group.iter().map(|r| r.id.clone()).collect();
        if ids.len() < MIN_REPORTS_FOR_TIMEWISE {
            warn!("project {project}: {} reports, all assigned to train", ids.len());
            splits.train.extend(ids);
            continue;
        }
        let sizes = spec.sizes(ids.len());
        splits.extend_from(ids, sizes);
    }
    Ok(splits)
}

pub fn split(reports: &[BugReport], spec: &SplitSpec) -> Result<Splits, DatasetError> {
    match spec.mode {
        SplitMode::Random => split_random(reports, spec),
        SplitMode::Timewise => split_timewise(reports, spec),
    }
}

/// True when every report id lands in exactly one partition.
pub fn is_partition(reports: &[BugReport], splits: &Splits) -> bool {
    let all: Vec<&String> = splits.train.iter().chain(&splits.validation).chain(&splits.test).collect();
    let unique: HashSet<&String> = all.iter().copied().collect();
    let input: HashSet<&String> = reports.iter().map(|r| &r.id).collect();
    all.len() == unique.len() && unique == input && all.len() == reports.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn report(id: &str, project: &str, day: i64) -> BugReport {
        BugReport {
            id: id.into(),
            project: project.into(),
            version: "1".into(),
            title: format!("title {id}"),
            description: String::new(),
            created_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + Duration::days(day),
            fixed_files: vec![],
            report_class: None,
        }
    }

    fn methods_doc(lines: &[(usize, usize)]) -> SourceDocument {
        let total = lines.iter().map(|l| l.1).max().unwrap_or(1) + 1;
        let content = (1..=total).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n");
        let methods = lines
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| MethodSpan {
                name: format!("m{i}"),
                signature: String::new(),
                start_line: s,
                end_line: e,
                body: String::new(),
            })
            .collect();
        SourceDocument { path: "X.java".into(), project: "P".into(), version: "1".into(), content, methods }
    }

    fn hunk(start: usize, len: usize) -> DiffHunk {
        DiffHunk {
            path: "X.java".into(),
            old: LineRange { start, len },
            new: LineRange { start, len },
            context: vec![],
            removed: vec![],
            added: vec![],
            lines: vec![],
        }
    }

    #[test]
    fn buggy_method_intersections() {
        let doc = methods_doc(&[(5, 20)]);
        assert_eq!(buggy_methods(&doc, &[&hunk(10, 3)]).len(), 1);
        assert!(buggy_methods(&doc, &[&hunk(1, 1)]).is_empty());

        let doc = methods_doc(&[(3, 7), (9, 14)]);
        let names: Vec<_> = buggy_methods(&doc, &[&hunk(6, 5)]).iter().map(|m| m.name.clone()).collect();
        assert_eq!(names, ["m0", "m1"]);
        // insertion after line 7 (end of m0) touches nothing; after line 10 touches m1
        assert!(buggy_methods(&doc, &[&hunk(7, 0)]).is_empty());
        assert_eq!(buggy_methods(&doc, &[&hunk(10, 0)])[0].name, "m1");
        // each method once even when several hunks hit it
        assert_eq!(buggy_methods(&doc, &[&hunk(10, 1), &hunk(12, 1)]).len(), 1);
    }

    #[test]
    fn classification_examples() {
        let mut r = report("1", "P", 0);
        r.description = "Crash:\njava.lang.NullPointerException\n\tat com.foo.Bar.baz(Bar.java:42)".into();
        assert_eq!(classify_report(&r), ReportClass::ST);
        r.description = "Happens at com.foo.Bar.baz(Bar.java:42) every time".into();
        assert_eq!(classify_report(&r), ReportClass::ST);
        r.description = "Serializing FlowExecution breaks some PersistenceContext providers".into();
        assert_eq!(classify_report(&r), ReportClass::PE);
        r.title = "Crash".into();
        r.description = "The app crashes when I click save.".into();
        assert_eq!(classify_report(&r), ReportClass::NL);
    }

    #[test]
    fn stack_trace_takes_precedence() {
        let mut r = report("1", "P", 0);
        r.description = "FlowExecution fails in snapshotFactory.create()\n\
                         java.lang.IllegalStateException: boom\n    at org.x.Flow.run(Flow.java:10)"
            .into();
        assert_eq!(classify_report(&r), ReportClass::ST);
    }

    #[test]
    fn split_sizes_floor_then_remainder() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(10), (7, 1, 2));
        assert_eq!(spec.sizes(7), (4, 0, 3));
        assert_eq!(spec.sizes(0), (0, 0, 0));
        assert!(SplitSpec { ratios: (0.5, 0.5, 0.5), ..spec }.validate().is_err());
    }

    #[test]
    fn random_split_is_seeded_partition() {
        let reports: Vec<_> = (0..10).map(|i| report(&format!("R{i}"), "P", i)).collect();
        let spec = SplitSpec { seed: 7, ..Default::default() };
        let a = split_random(&reports, &spec).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (7, 1, 2));
        assert!(is_partition(&reports, &a));
        assert_eq!(a, split_random(&reports, &spec).unwrap());
    }

    #[test]
    fn timewise_orders_per_system() {
        let mut reports: Vec<_> = (0..20).map(|i| report(&format!("A{i}"), "A", (i * 7 % 20) as i64)).collect();
        reports.extend((0..5).map(|i| report(&format!("B{i}"), "B", i)));
        let s = split_timewise(&reports, &SplitSpec { mode: SplitMode::Timewise, ..Default::default() }).unwrap();
        assert!(is_partition(&reports, &s));
        let date = |id: &String| reports.iter().find(|r| &r.id == id).unwrap().created_at;
        let latest_train = s.train.iter().filter(|id| id.starts_with('A')).map(date).max().unwrap();
        assert!(s.test.iter().map(date).all(|d| d >= latest_train));
        assert!((0..5).all(|i| s.train.contains(&format!("B{i}"))));
        assert_eq!((s.validation.len(), s.test.len()), (2, 4));
    }
}
