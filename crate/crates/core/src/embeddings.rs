//! Precomputed embedding matrix and exact cosine top-k retrieval.
//!
//! File format: UTF-8 JSON lines. The first line is a header
//! `{"dimension": d, "model": tag}`, every following line a row
//! `{"surface": s, "term_id": id, "vector": [d floats]}`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{normalize_label, TermId};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vectors must have at least one component")]
    EmptyVector,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub surface: String,
    pub term_id: TermId,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dimension: usize,
    model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub term_id: TermId,
    pub surface: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dimension: usize,
    model: String,
    rows: Vec<EmbeddingRow>,
    norms: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dimension: usize, model: impl Into<String>, rows: Vec<EmbeddingRow>) -> Result<Self> {
        if dimension == 0 {
            return Err(EmbeddingError::EmptyVector);
        }
        let mut seen = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            validate_vector(&row.vector, dimension).map_err(|m| EmbeddingError::Format {
                line: i + 2,
                message: m,
            })?;
            if !seen.insert((row.surface.as_str(), row.term_id.as_str())) {
                return Err(EmbeddingError::Format {
                    line: i + 2,
                    message: format!("duplicate row ({}, {})", row.surface, row.term_id),
                });
            }
        }
        let norms = rows.iter().map(|r| norm(&r.vector)).collect();
        Ok(EmbeddingMatrix {
            dimension,
            model: model.into(),
            rows,
            norms,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Vector of the first row whose surface matches case-insensitively.
    pub fn vector_for_surface(&self, surface: &str) -> Option<&[f64]> {
        let key = normalize_label(surface);
        self.rows
            .iter()
            .find(|r| normalize_label(&r.surface) == key)
            .map(|r| r.vector.as_slice())
    }

    /// Best cosine score of any row belonging to `term`.
    pub fn best_score_for(&self, term: &TermId, query: &[f64]) -> Result<Option<f64>> {
        self.check_query(query)?;
        let qn = norm(query);
        Ok(self
            .rows
            .iter()
            .zip(&self.norms)
            .filter(|(r, _)| &r.term_id == term)
            .map(|(r, n)| cosine_with_norms(query, qn, &r.vector, *n))
            .max_by(|a, b| a.total_cmp(b)))
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                actual: query.len(),
            });
        }
        Ok(())
    }

    /// Exhaustive cosine ranking keeping the best row per term.
    ///
    /// Ties are broken by term id, then surface, both ascending.
    pub fn top_k_dedup(&self, query: &[f64], k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(EmbeddingError::ZeroK);
        }
        self.check_query(query)?;
        let qn = norm(query);

        let mut best: HashMap<&TermId, (f64, &str)> = HashMap::new();
        for (row, n) in self.rows.iter().zip(&self.norms) {
            let score = cosine_with_norms(query, qn, &row.vector, *n);
            best.entry(&row.term_id)
                .and_modify(|cur| {
                    if score > cur.0 || (score == cur.0 && row.surface.as_str() < cur.1) {
                        *cur = (score, row.surface.as_str());
                    }
                })
                .or_insert((score, row.surface.as_str()));
        }
        let mut ranked: Vec<Candidate> = best
            .into_iter()
            .map(|(id, (score, surface))| Candidate {
                term_id: id.clone(),
                surface: surface.to_string(),
                score,
            })
            .collect();
        ranked.sort_by(rank_order);
        ranked.truncate(k);
        Ok(ranked)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = Header {
            dimension: self.dimension,
            model: self.model.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for row in &self.rows {
            writeln!(out, "{}", serde_json::to_string(row).expect("row serializes"))?;
        }
        Ok(())
    }
}

fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.term_id.cmp(&b.term_id))
        .then_with(|| a.surface.cmp(&b.surface))
}

fn validate_vector(v: &[f64], dimension: usize) -> std::result::Result<(), String> {
    if v.len() != dimension {
        return Err(format!("vector has dimension {}, expected {dimension}", v.len()));
    }
    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
        return Err(format!("non-finite component at index {pos}"));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine_with_norms(u: &[f64], un: f64, v: &[f64], vn: f64) -> f64 {
    if un == 0.0 || vn == 0.0 {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (un * vn)).clamp(-1.0, 1.0)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    if u.is_empty() {
        return Err(EmbeddingError::EmptyVector);
    }
    Ok(cosine_with_norms(u, norm(u), v, norm(v)))
}

fn read_lines<R: BufRead, T>(
    reader: R,
    mut on_row: impl FnMut(usize, &str, &Header) -> Result<T>,
) -> Result<(Header, Vec<T>)> {
    let mut header: Option<Header> = None;
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: Header = serde_json::from_str(&line).map_err(|e| EmbeddingError::Format {
                    line: lineno,
                    message: format!("bad header: {e}"),
                })?;
                if h.dimension == 0 {
                    return Err(EmbeddingError::Format {
                        line: lineno,
                        message: "dimension must be positive".into(),
                    });
                }
                header = Some(h);
            }
            Some(h) => rows.push(on_row(lineno, &line, h)?),
        }
    }
    let header = header.ok_or(EmbeddingError::Format {
        line: 1,
        message: "missing header record".into(),
    })?;
    Ok((header, rows))
}

/// Loads and validates an embedding matrix.
pub fn load_matrix(reader: impl BufRead) -> Result<EmbeddingMatrix> {
    let (header, rows) = read_lines(reader, |lineno, line, h| {
        let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| EmbeddingError::Format {
            line: lineno,
            message: e.to_string(),
        })?;
        validate_vector(&row.vector, h.dimension)
            .map_err(|message| EmbeddingError::Format { line: lineno, message })?;
        Ok(row)
    })?;
    EmbeddingMatrix::new(header.dimension, header.model, rows)
}

pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    load_matrix(BufReader::new(std::fs::File::open(path)?))
}

/// Per-surface query vectors, keyed case-insensitively.
///
/// Uses the matrix file format; rows may omit `term_id`.
#[derive(Debug, Clone, Default)]
pub struct QueryVectors {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct QueryRow {
    surface: String,
    vector: Vec<f64>,
}

impl QueryVectors {
    pub fn new(dimension: usize) -> Self {
        QueryVectors {
            dimension,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, surface: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        self.vectors.insert(normalize_label(surface), vector);
        Ok(())
    }

    pub fn load(reader: impl BufRead) -> Result<Self> {
        let (header, rows) = read_lines(reader, |lineno, line, h| {
            let row: QueryRow = serde_json::from_str(line).map_err(|e| EmbeddingError::Format {
                line: lineno,
                message: e.to_string(),
            })?;
            validate_vector(&row.vector, h.dimension)
                .map_err(|message| EmbeddingError::Format { line: lineno, message })?;
            Ok(row)
        })?;
        let mut out = QueryVectors::new(header.dimension);
        for row in rows {
            out.vectors.insert(normalize_label(&row.surface), row.vector);
        }
        Ok(out)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::load(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, surface: &str) -> Option<&[f64]> {
        self.vectors.get(&normalize_label(surface)).map(Vec::as_slice)
    }
}
