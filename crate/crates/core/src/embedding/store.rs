//! Immutable store of template source-OA embeddings and exact top-k scan.
//!
//! File layout (little endian): magic `OAES`, u32 version, u32 dim,
//! u32 count, `count * dim` f32 values row-major, then per row three
//! length-prefixed UTF-8 strings (template_id, topic_id, source_oa_id), then
//! the length-prefixed provider tag.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{segment_and_pool, Embedding, EmbeddingError, EmbeddingProvider};
use crate::valuation::TemplateRecord;

const MAGIC: &[u8; 4] = b"OAES";
const VERSION: u32 = 1;

fn malformed(m: &str) -> EmbeddingError {
    EmbeddingError::MalformedStore(m.to_string())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self.pos.checked_add(n).ok_or_else(|| malformed("size overflow"))?;
        let s = self.buf.get(self.pos..end).ok_or_else(|| malformed("truncated"))?;
        self.pos = end;
        Ok(s)
    }

    fn array(&mut self) -> Result<[u8; 4], EmbeddingError> {
        Ok(self.take(4)?.try_into().expect("4 bytes"))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, EmbeddingError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("invalid utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub template_id: String,
    pub topic_id: String,
    pub source_oa_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    provider_tag: String,
    dim: usize,
    entries: Vec<StoreEntry>,
    vectors: Vec<Embedding>,
}

impl EmbeddingStore {
    pub fn new(provider_tag: String, dim: usize, rows: Vec<(StoreEntry, Embedding)>) -> Result<Self, EmbeddingError> {
        let mut seen = HashSet::new();
        for (entry, e) in &rows {
            if e.dim() != dim {
                return Err(EmbeddingError::DimMismatch(e.dim(), dim));
            }
            if e.provider_tag != provider_tag {
                return Err(EmbeddingError::ProviderMismatch(e.provider_tag.clone(), provider_tag));
            }
            if !seen.insert(entry.template_id.clone()) {
                return Err(EmbeddingError::InvalidArgument(format!(
                    "duplicate template_id {:?}",
                    entry.template_id
                )));
            }
        }
        let (entries, vectors) = rows.into_iter().unzip();
        Ok(EmbeddingStore {
            provider_tag,
            dim,
            entries,
            vectors,
        })
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StoreEntry, &Embedding)> {
        self.entries.iter().zip(&self.vectors)
    }

    pub fn get(&self, template_id: &str) -> Option<&Embedding> {
        self.entries
            .iter()
            .position(|e| e.template_id == template_id)
            .map(|i| &self.vectors[i])
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for n in [VERSION, self.dim as u32, self.len() as u32] {
            w.write_all(&n.to_le_bytes())?;
        }
        for v in &self.vectors {
            for x in &v.values {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
        let put = |w: &mut dyn Write, s: &str| -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        };
        for e in &self.entries {
            put(&mut w, &e.template_id)?;
            put(&mut w, &e.topic_id)?;
            put(&mut w, &e.source_oa_id)?;
        }
        put(&mut w, &self.provider_tag)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, EmbeddingError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| EmbeddingError::MalformedStore(e.to_string()))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(malformed(&format!("unsupported version {version}")));
        }
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let row = (0..dim)
                .map(|_| Ok(f32::from_le_bytes(cur.array()?) as f64))
                .collect::<Result<Vec<f64>, EmbeddingError>>()?;
            rows.push(row);
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            entries.push(StoreEntry {
                template_id: cur.string()?,
                topic_id: cur.string()?,
                source_oa_id: cur.string()?,
            });
        }
        let tag = cur.string()?;
        if cur.pos != buf.len() {
            return Err(malformed("trailing bytes"));
        }
        let rows = entries
            .into_iter()
            .zip(rows)
            .map(|(entry, values)| Ok((entry, Embedding::normalized(values, tag.clone())?)))
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        Self::new(tag, dim, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let path = path.as_ref();
        let io = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Embed the source OA of every template. `source_text` resolves a template
/// to its OA text; templates it cannot resolve are skipped and returned.
pub fn build_store<F>(
    provider: &dyn EmbeddingProvider,
    templates: &[TemplateRecord],
    source_text: F,
) -> Result<(EmbeddingStore, Vec<String>), EmbeddingError>
where
    F: Fn(&TemplateRecord) -> Option<String> + Sync,
{
    let limit = provider.token_limit();
    let results: Vec<Option<Result<(StoreEntry, Embedding), EmbeddingError>>> = templates
        .par_iter()
        .map(|t| {
            let text = source_text(t)?;
            Some(segment_and_pool(provider, &text, limit).map(|p| {
                for w in &p.warnings {
                    log::warn!("{}: {w}", t.template_id);
                }
                (
                    StoreEntry {
                        template_id: t.template_id.clone(),
                        topic_id: t.topic_id.clone(),
                        source_oa_id: t.source_oa_id.clone(),
                    },
                    p.embedding,
                )
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (t, r) in templates.iter().zip(results) {
        match r {
            Some(Ok(row)) => rows.push(row),
            Some(Err(EmbeddingError::EmptyText)) | None => skipped.push(t.template_id.clone()),
            Some(Err(e)) => return Err(e),
        }
    }
    Ok((EmbeddingStore::new(provider.tag(), provider.dim(), rows)?, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbTuple {
    pub topic_id: String,
    pub template_id: String,
    pub source_oa_id: String,
    pub similarity: f64,
}

/// Content-based stage output: the ranked tuples, their unique topics in
/// first-appearance order and the set of retrieved templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbResult {
    pub tuples: Vec<CbTuple>,
    pub topics: Vec<String>,
    pub cb_templates: Vec<String>,
}

impl CbResult {
    pub fn from_tuples(tuples: Vec<CbTuple>) -> Self {
        let mut topics: Vec<String> = Vec::new();
        for t in &tuples {
            if !topics.contains(&t.topic_id) {
                topics.push(t.topic_id.clone());
            }
        }
        let cb_templates = tuples.iter().map(|t| t.template_id.clone()).collect();
        CbResult {
            tuples,
            topics,
            cb_templates,
        }
    }

    pub fn similarity_of(&self, template_id: &str) -> Option<f64> {
        self.tuples.iter().find(|t| t.template_id == template_id).map(|t| t.similarity)
    }
}

/// Exact scan: cosine descending, ties by template_id.
pub fn top_k_similar(query: &Embedding, store: &EmbeddingStore, k: usize) -> Result<CbResult, EmbeddingError> {
    if store.is_empty() {
        return Err(EmbeddingError::EmptyStore);
    }
    if k == 0 {
        return Err(EmbeddingError::InvalidArgument("k must be >= 1".into()));
    }
    let mut scored = store
        .entries
        .par_iter()
        .zip(store.vectors.par_iter())
        .map(|(entry, v)| Ok((super::cosine(query, v)?, entry)))
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.template_id.cmp(&b.1.template_id)));
    scored.truncate(k);
    Ok(CbResult::from_tuples(
        scored
            .into_iter()
            .map(|(similarity, e)| CbTuple {
                topic_id: e.topic_id.clone(),
                template_id: e.template_id.clone(),
                source_oa_id: e.source_oa_id.clone(),
                similarity,
            })
            .collect(),
    ))
}
