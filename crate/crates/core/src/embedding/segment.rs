//! Sentence segmentation and pooling for documents longer than a provider's
//! token limit.

use super::{Embedding, EmbeddingError, EmbeddingProvider};

/// Tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al", "appl", "art", "cf", "co", "col", "corp", "dr", "e.g", "eq", "fig", "figs", "i.e", "inc", "ltd", "mr",
    "mrs", "ms", "no", "nos", "para", "pat", "pub", "ref", "sec", "ser", "u.s", "u.s.c", "v", "vs",
];

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    let w = w.trim_end_matches('.');
    (w.chars().count() == 1 && w.chars().all(char::is_alphabetic)) || ABBREVIATIONS.contains(&w)
}

/// Split at `.`, `?` or `!` followed by whitespace and an uppercase letter,
/// unless the word before a period is a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == i + 1 || j >= chars.len() || !chars[j].1.is_uppercase() {
            continue;
        }
        let end = pos + c.len_utf8();
        if c == '.' {
            let word = text[start..pos].split_whitespace().last().unwrap_or("");
            if is_abbreviation(word) {
                continue;
            }
        }
        let sentence = text[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence);
        }
        start = chars[j].0;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Pack whole sentences greedily into chunks of at most `limit` words. A
/// sentence longer than `limit` is hard-split and reported in the warnings.
pub fn chunk_text(text: &str, limit: usize) -> (Vec<String>, Vec<String>) {
    let mut chunks = Vec::new();
    let mut warnings = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for sentence in split_sentences(text) {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        if words.len() > limit {
            warnings.push(format!(
                "sentence of {} tokens exceeds limit {limit}; hard-split",
                words.len()
            ));
            if !current.is_empty() {
                chunks.push(current.join(" "));
                current.clear();
            }
            chunks.extend(words.chunks(limit).map(|c| c.join(" ")));
            continue;
        }
        if current.len() + words.len() > limit {
            chunks.push(current.join(" "));
            current.clear();
        }
        current.extend(words);
    }
    if !current.is_empty() {
        chunks.push(current.join(" "));
    }
    (chunks, warnings)
}

/// Token-count weighted mean of chunk embeddings, renormalized.
pub fn pool(parts: &[(Embedding, usize)]) -> Result<Embedding, EmbeddingError> {
    let (first, _) = parts
        .first()
        .ok_or_else(|| EmbeddingError::InvalidArgument("nothing to pool".into()))?;
    let total: usize = parts.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(EmbeddingError::InvalidArgument("chunks have no tokens".into()));
    }
    let mut acc = vec![0.0; first.dim()];
    for (e, n) in parts {
        if e.dim() != first.dim() {
            return Err(EmbeddingError::DimMismatch(e.dim(), first.dim()));
        }
        if e.provider_tag != first.provider_tag {
            return Err(EmbeddingError::ProviderMismatch(e.provider_tag.clone(), first.provider_tag.clone()));
        }
        let w = *n as f64 / total as f64;
        acc.iter_mut().zip(&e.values).for_each(|(a, v)| *a += w * v);
    }
    Embedding::normalized(acc, first.provider_tag.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub embedding: Embedding,
    pub chunks: usize,
    pub warnings: Vec<String>,
}

/// Embed `text`, chunking it first when it exceeds `limit` words
/// (`None` = unbounded).
pub fn segment_and_pool(
    provider: &dyn EmbeddingProvider,
    text: &str,
    limit: Option<usize>,
) -> Result<Pooled, EmbeddingError> {
    if limit == Some(0) {
        return Err(EmbeddingError::InvalidArgument("limit must be >= 1".into()));
    }
    let limit = match limit {
        Some(l) if word_count(text) > l => l,
        _ => {
            return Ok(Pooled {
                embedding: provider.embed(text)?,
                chunks: 1,
                warnings: Vec::new(),
            })
        }
    };
    let (chunks, mut warnings) = chunk_text(text, limit);
    let refs: Vec<&str> = chunks.iter().map(String::as_str).collect();
    let embedded = match provider.embed_batch(&refs) {
        Ok(all) => all.into_iter().map(Some).collect(),
        // some chunk may be all stopwords; embed one by one and skip those
        Err(EmbeddingError::EmptyText | EmbeddingError::ZeroVector) => refs
            .iter()
            .map(|c| match provider.embed(c) {
                Ok(e) => Ok(Some(e)),
                Err(EmbeddingError::EmptyText | EmbeddingError::ZeroVector) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Err(e) => return Err(e),
    };
    let parts: Vec<(Embedding, usize)> = embedded
        .into_iter()
        .zip(&chunks)
        .filter_map(|(e, c)| e.map(|e| (e, word_count(c))))
        .collect();
    if parts.len() < chunks.len() {
        warnings.push(format!("{} empty chunk(s) skipped", chunks.len() - parts.len()));
    }
    if parts.is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    Ok(Pooled {
        embedding: pool(&parts)?,
        chunks: chunks.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedTfIdf;

    #[test]
    fn sentence_boundaries() {
        let s = split_sentences("Claim 1 is rejected. See Fig. 3 of Jin et al. The art. is old! Why? because");
        assert_eq!(s, vec!["Claim 1 is rejected.", "See Fig. 3 of Jin et al. The art. is old!", "Why? because"]);
        assert_eq!(split_sentences("Under 35 U.S.C. 102 it fails. Next."), vec!["Under 35 U.S.C. 102 it fails.", "Next."]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn chunking_respects_limit() {
        let (chunks, warnings) = chunk_text("One two three. Four five. Six seven eight nine ten eleven.", 5);
        assert_eq!(chunks, vec!["One two three. Four five.", "Six seven eight nine ten", "eleven."]);
        assert_eq!(warnings.len(), 1);
        assert!(chunks.iter().all(|c| word_count(c) <= 5));
    }

    fn e(v: &[f64]) -> Embedding {
        Embedding::normalized(v.to_vec(), "t").unwrap()
    }

    #[test]
    fn equal_chunks_average() {
        let (e1, e2) = (e(&[1.0, 0.0]), e(&[0.0, 1.0]));
        let pooled = pool(&[(e1, 10), (e2, 10)]).unwrap();
        let h = 0.5f64.sqrt();
        assert!((pooled.values[0] - h).abs() < 1e-12 && (pooled.values[1] - h).abs() < 1e-12);
    }

    #[test]
    fn weights_follow_token_counts() {
        let pooled = pool(&[(e(&[1.0, 0.0]), 30), (e(&[0.0, 1.0]), 10)]).unwrap();
        // mean (0.75, 0.25) before renormalization
        let n = (0.75f64 * 0.75 + 0.25 * 0.25).sqrt();
        assert!((pooled.values[0] - 0.75 / n).abs() < 1e-12);
        assert!((pooled.values[1] - 0.25 / n).abs() < 1e-12);
    }

    #[test]
    fn short_text_passes_through() {
        let p = HashedTfIdf::new(64).unwrap();
        let text = "Claims are rejected over the antenna reference. The reference shows a dipole.";
        let direct = p.embed(text).unwrap();
        assert_eq!(segment_and_pool(&p, text, Some(100)).unwrap().embedding, direct);
        assert_eq!(segment_and_pool(&p, text, None).unwrap().embedding, direct);
        let chunked = segment_and_pool(&p, text, Some(8)).unwrap();
        assert_eq!(chunked.chunks, 2);
        assert!((chunked.embedding.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stopword_chunks_are_skipped() {
        let p = HashedTfIdf::new(64).unwrap();
        let out = segment_and_pool(&p, "Antenna dipole array. It is. It was.", Some(3)).unwrap();
        assert_eq!(out.embedding, p.embed("Antenna dipole array.").unwrap());
        assert!(!out.warnings.is_empty());
    }
}
