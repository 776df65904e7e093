//! Questions, studies, papers and chunks; JSON-lines ingestion and
//! sliding-window chunking.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::ConclusionLabel;

/// Studies with more papers than this are accepted with a warning.
pub const PAPERS_PER_STUDY_WARNING: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchQuestion {
    pub id: String,
    pub text: String,
    pub left_intervention: String,
    pub right_intervention: String,
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub id: String,
    pub title: String,
    pub body: String,
    pub is_abstract_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub gold_conclusion: Option<ConclusionLabel>,
    pub papers: Vec<Paper>,
}

/// One question paired with one study of a forest plot: the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub review_id: String,
    pub forest_plot_id: String,
    pub question: ResearchQuestion,
    pub study: Study,
    /// Inverts the CI side mapping for outcomes where lower is worse.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub direction_flipped: bool,
}

/// A contiguous character window of one paper body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub paper_id: String,
    pub study_id: String,
    pub text: String,
    /// Half-open `[start, end)` offsets in characters (not bytes).
    pub char_span: (usize, usize),
}

/// A single violated invariant, addressed by field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationError(pub Vec<Violation>);

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate (question {question_id}, study {study_id}), first seen on line {first_line}")]
    Duplicate {
        line: usize,
        first_line: usize,
        question_id: String,
        study_id: String,
    },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ValidationError,
    },
    #[error("overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    BadChunking { chunk_size: usize, overlap: usize },
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::Duplicate { line, .. }
            | CorpusError::Invalid { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn check(violations: &mut Vec<Violation>, ok: bool, path: impl Into<String>, message: &str) {
    if !ok {
        violations.push(Violation {
            path: path.into(),
            message: message.to_string(),
        });
    }
}

/// Checks every record-level invariant, reporting all violations at once.
pub fn validate_record(record: &EvidenceRecord) -> Result<(), ValidationError> {
    let mut v = Vec::new();
    check(&mut v, !record.review_id.trim().is_empty(), "review_id", "must be non-empty");
    check(
        &mut v,
        !record.forest_plot_id.trim().is_empty(),
        "forest_plot_id",
        "must be non-empty",
    );
    let q = &record.question;
    check(&mut v, !q.id.trim().is_empty(), "question.id", "must be non-empty");
    check(&mut v, !q.text.trim().is_empty(), "question.text", "must be non-empty");
    check(
        &mut v,
        !q.left_intervention.trim().is_empty(),
        "question.left_intervention",
        "must be non-empty",
    );
    check(
        &mut v,
        !q.right_intervention.trim().is_empty(),
        "question.right_intervention",
        "must be non-empty",
    );
    check(
        &mut v,
        q.left_intervention.trim().to_lowercase() != q.right_intervention.trim().to_lowercase(),
        "question.right_intervention",
        "must differ from left_intervention (case-insensitive)",
    );
    let s = &record.study;
    check(&mut v, !s.id.trim().is_empty(), "study.id", "must be non-empty");
    check(&mut v, !s.papers.is_empty(), "study.papers", "must contain at least one paper");
    let mut seen = HashSet::new();
    for (i, paper) in s.papers.iter().enumerate() {
        check(&mut v, !paper.id.trim().is_empty(), format!("study.papers[{i}].id"), "must be non-empty");
        check(
            &mut v,
            seen.insert(paper.id.as_str()),
            format!("study.papers[{i}].id"),
            "must be unique within the study",
        );
        check(
            &mut v,
            !paper.body.is_empty(),
            format!("study.papers[{i}].body"),
            "must be non-empty",
        );
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(ValidationError(v))
    }
}

/// Non-fatal observations about a record.
pub fn record_warnings(record: &EvidenceRecord) -> Vec<String> {
    let mut out = Vec::new();
    let n = record.study.papers.len();
    if n > PAPERS_PER_STUDY_WARNING {
        out.push(format!(
            "study {} has {n} papers (more than {PAPERS_PER_STUDY_WARNING})",
            record.study.id
        ));
    }
    out
}

/// Checks that a chunk's span lies inside its paper and matches its text.
pub fn validate_chunk(chunk: &Chunk, paper: &Paper) -> Result<(), ValidationError> {
    let mut v = Vec::new();
    let (start, end) = chunk.char_span;
    let len = paper.body.chars().count();
    check(&mut v, chunk.paper_id == paper.id, "chunk.paper_id", "must name the paper");
    check(&mut v, start < end, "chunk.char_span", "start must be below end");
    check(&mut v, end <= len, "chunk.char_span", "end exceeds body length");
    if v.is_empty() {
        let slice: String = paper.body.chars().skip(start).take(end - start).collect();
        check(&mut v, slice == chunk.text, "chunk.text", "must equal the body slice");
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(ValidationError(v))
    }
}

/// Outcome of reading one non-blank dataset line.
pub type LineResult = (usize, Result<EvidenceRecord, CorpusError>);

/// Reads every line, keeping per-line failures instead of stopping at the
/// first one. Line numbers are 1-based; blank lines are skipped. A repeated
/// `(question.id, study.id)` pair fails on its later occurrence.
pub fn read_dataset_lines(reader: impl BufRead) -> io::Result<Vec<LineResult>> {
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<EvidenceRecord>(&line)
            .map_err(|source| CorpusError::Malformed { line: line_no, source })
            .and_then(|rec| {
                validate_record(&rec)
                    .map(|_| rec)
                    .map_err(|source| CorpusError::Invalid { line: line_no, source })
            })
            .and_then(|rec| {
                let key = (rec.question.id.clone(), rec.study.id.clone());
                match first_seen.get(&key) {
                    Some(&first_line) => Err(CorpusError::Duplicate {
                        line: line_no,
                        first_line,
                        question_id: key.0,
                        study_id: key.1,
                    }),
                    None => {
                        first_seen.insert(key, line_no);
                        Ok(rec)
                    }
                }
            });
        out.push((line_no, parsed));
    }
    Ok(out)
}

/// Loads a JSON-lines dataset, failing on the first bad line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvidenceRecord>, CorpusError> {
    let file = File::open(path)?;
    read_dataset_lines(BufReader::new(file))?
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

pub fn write_dataset(mut out: impl Write, records: &[EvidenceRecord]) -> io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Character-window chunking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: 1600,
            overlap: 200,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(CorpusError::BadChunking {
                chunk_size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Splits a paper body into windows of `chunk_size` characters advancing by
/// `chunk_size - overlap`. The final window may be shorter.
pub fn chunk_paper(study_id: &str, paper: &Paper, config: ChunkingConfig) -> Result<Vec<Chunk>, CorpusError> {
    config.validate()?;
    let chars: Vec<char> = paper.body.chars().collect();
    let len = chars.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + config.chunk_size).min(len);
        chunks.push(Chunk {
            id: format!("{}#{:04}", paper.id, chunks.len()),
            paper_id: paper.id.clone(),
            study_id: study_id.to_string(),
            text: chars[start..end].iter().collect(),
            char_span: (start, end),
        });
        if end == len {
            break;
        }
        start += config.stride();
    }
    Ok(chunks)
}

/// Chunks every paper of a study in paper order.
pub fn chunk_study(study: &Study, config: ChunkingConfig) -> Result<Vec<Chunk>, CorpusError> {
    let mut out = Vec::new();
    for paper in &study.papers {
        out.extend(chunk_paper(&study.id, paper, config)?);
    }
    Ok(out)
}
