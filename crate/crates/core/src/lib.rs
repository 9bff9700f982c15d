//! Bug localization engine.
//!
//! A bug report is turned into a BM25 query over the source files of its
//! project version. Methods of the retrieved files are scored for relevance
//! to the report, keywords are extracted by maximal marginal relevance from
//! both the report and the relevant methods, and the fused keyword query
//! reranks the retrieved files.

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod index;
pub mod keywords;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod reformulate;
pub mod relevance;
