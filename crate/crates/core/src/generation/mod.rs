//! Prompt assembly under a token budget and pluggable text generation.

mod assemble;
mod backend;
mod relevant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{alnum_tokens, RawDocument};
use crate::parser::{render_claims, BiblioInfo, TechKeywords};

pub use assemble::{assemble, build_prompt, optimize_tokens, PromptBundle};
pub use backend::{generate, Generation, GenerationBackend, MockBackend, RemoteBackend, RemoteGenConfig, TokenUsage};
pub use relevant::{match_relevant_docs, RelevantDoc, RelevantDocs};

/// Default preamble placed before every prompt.
pub const DEFAULT_ROLE: &str = "Take on the role of a patent attorney representing the applicant. \
Write the remarks section of a reply to the examiner, arguing from the draft, templates, keywords and \
references below. Keep the remarks brief and tied to the rejected claims.";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("draft required")]
    DraftRequired,
    #[error("role instruction required")]
    RoleRequired,
    #[error("expected exactly one {0:?} cluster")]
    DuplicateCluster(ClusterKind),
    #[error("{kind:?} segment priority {priority} outside (0, 1) or not below the draft")]
    InvalidPriority { kind: ClusterKind, priority: f64 },
    #[error("empty {0:?} segment")]
    EmptySegment(ClusterKind),
    #[error("budget too small for mandatory content (need {required}, budget {budget})")]
    BudgetTooSmall { required: usize, budget: usize },
    #[error("prompt of {tokens} tokens exceeds the {limit}-token limit of {backend}")]
    OverLimit { backend: String, tokens: usize, limit: usize },
    #[error("generation backend {backend} failed: {message}")]
    Remote { backend: String, retryable: bool, message: String },
    #[error("remote generation is disabled by configuration")]
    RemoteDisabled,
}

impl GenError {
    pub fn retryable(&self) -> bool {
        matches!(self, GenError::Remote { retryable: true, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClusterKind {
    RoleInstruction,
    ResponseDraft,
    TemplateCluster,
    KeywordCluster,
    RelevantDocs,
}

impl ClusterKind {
    fn is_mandatory(self) -> bool {
        matches!(self, ClusterKind::RoleInstruction | ClusterKind::ResponseDraft)
    }

    /// Tie-break among equal priorities.
    fn rank(self) -> u8 {
        match self {
            ClusterKind::RoleInstruction => 0,
            ClusterKind::ResponseDraft => 1,
            ClusterKind::TemplateCluster => 2,
            ClusterKind::KeywordCluster => 3,
            ClusterKind::RelevantDocs => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClusterKind::RoleInstruction => "ROLE",
            ClusterKind::ResponseDraft => "RESPONSE DRAFT",
            ClusterKind::TemplateCluster => "TEMPLATES",
            ClusterKind::KeywordCluster => "KEYWORDS",
            ClusterKind::RelevantDocs => "RELEVANT DOCUMENTS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSegment {
    pub text: String,
    pub priority: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCluster {
    pub kind: ClusterKind,
    pub segments: Vec<ClusterSegment>,
}

impl SegmentCluster {
    pub fn new<S: Into<String>>(kind: ClusterKind, priority: f64, texts: impl IntoIterator<Item = S>) -> Self {
        SegmentCluster {
            kind,
            segments: texts.into_iter().map(|t| ClusterSegment { text: t.into(), priority }).collect(),
        }
    }

    pub fn role(text: impl Into<String>) -> Self {
        Self::new(ClusterKind::RoleInstruction, 1.0, [text.into()])
    }

    pub fn draft(text: impl Into<String>) -> Self {
        Self::new(ClusterKind::ResponseDraft, 1.0, [text.into()])
    }
}

/// A segment placed in prompt order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: ClusterKind,
    pub text: String,
    pub priority: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priorities {
    pub templates: f64,
    pub keywords: f64,
    /// Scale applied to the normalized retrieval score; 0.1 is added on top.
    pub relevant_docs: f64,
}

impl Default for Priorities {
    fn default() -> Self {
        Priorities { templates: 0.6, keywords: 0.5, relevant_docs: 0.3 }
    }
}

/// Word and punctuation pieces times a safety ratio, rounded up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenCounter {
    pub ratio: f64,
}

impl Default for TokenCounter {
    fn default() -> Self {
        TokenCounter { ratio: 1.3 }
    }
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> usize {
        let words = alnum_tokens(text).len();
        let punct = text.chars().filter(|c| !c.is_alphanumeric() && !c.is_whitespace()).count();
        ((words + punct) as f64 * self.ratio).ceil() as usize
    }
}

/// Legal and technical keyword segments for the prompt.
pub fn keyword_cluster(biblio: &BiblioInfo, keywords: &TechKeywords, top_n: usize, priority: f64) -> SegmentCluster {
    let mut texts = Vec::new();
    let mut legal = Vec::new();
    if !biblio.claims.is_empty() {
        legal.push(format!("Rejected claims: {}.", render_claims(&biblio.claims)));
    }
    if !biblio.statutes.is_empty() {
        let s: Vec<String> = biblio.statutes.iter().map(|s| s.render()).collect();
        legal.push(format!("Statutory basis: {}.", s.join(", ")));
    }
    if !biblio.citations.is_empty() || !biblio.parties.is_empty() {
        let mut cited = biblio.parties.clone();
        cited.extend(biblio.citations.iter().cloned());
        legal.push(format!("Cited art: {}.", cited.join(", ")));
    }
    if !legal.is_empty() {
        texts.push(legal.join(" "));
    }
    let tech: Vec<&str> = keywords.keywords.iter().take(top_n).map(|k| k.phrase.as_str()).collect();
    if !tech.is_empty() {
        texts.push(format!("Technical keywords: {}.", tech.join(", ")));
    }
    SegmentCluster::new(ClusterKind::KeywordCluster, priority, texts)
}

/// Everything that goes into one prompt besides the budget.
#[derive(Debug, Clone)]
pub struct PromptSources<'a> {
    pub role: &'a str,
    pub draft: &'a str,
    /// filled template bodies, in selection order
    pub templates: Vec<String>,
    /// parsed OA, when the request is tied to one
    pub oa: Option<(&'a BiblioInfo, &'a TechKeywords)>,
    pub external: &'a [RawDocument],
    pub keyword_top_n: usize,
    pub relevant_top_n: usize,
    pub priorities: Priorities,
}

/// Clusters for [`assemble`]: role and draft always, the rest only when
/// they have content.
pub fn prompt_clusters(src: &PromptSources<'_>) -> Vec<SegmentCluster> {
    let mut clusters = vec![SegmentCluster::role(src.role), SegmentCluster::draft(src.draft)];
    let templates: Vec<&String> = src.templates.iter().filter(|t| !t.trim().is_empty()).collect();
    if !templates.is_empty() {
        clusters.push(SegmentCluster::new(ClusterKind::TemplateCluster, src.priorities.templates, templates));
    }
    if let Some((biblio, keywords)) = src.oa {
        let kw = keyword_cluster(biblio, keywords, src.keyword_top_n, src.priorities.keywords);
        if !kw.segments.is_empty() {
            clusters.push(kw);
        }
        let top = TechKeywords { keywords: keywords.keywords.iter().take(src.keyword_top_n).cloned().collect() };
        let docs = match_relevant_docs(&top, src.external, src.relevant_top_n, src.priorities.relevant_docs);
        if !docs.docs.is_empty() {
            clusters.push(docs.cluster());
        }
    }
    clusters
}
