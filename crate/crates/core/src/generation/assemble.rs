//! Segment ordering, token-budget optimization and prompt rendering.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ClusterKind, GenError, Segment, SegmentCluster, TokenCounter};
use crate::corpus::alnum_tokens;
use crate::embedding::split_sentences;

const SHINGLE: usize = 5;
const NEAR_DUPLICATE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role_instruction: String,
    /// Draft first, then the surviving segments in priority order.
    pub segments: Vec<Segment>,
    pub token_count: usize,
    pub budget: usize,
    pub dropped: Vec<Segment>,
    pub duplicates_removed: usize,
    pub trimmed: bool,
}

/// Role, draft, then the rest by descending priority; ties go templates,
/// keywords, documents, then input order.
pub fn assemble(clusters: &[SegmentCluster]) -> Result<Vec<Segment>, GenError> {
    let count = |kind| clusters.iter().filter(|c| c.kind == kind).count();
    match count(ClusterKind::ResponseDraft) {
        0 => return Err(GenError::DraftRequired),
        1 => {}
        _ => return Err(GenError::DuplicateCluster(ClusterKind::ResponseDraft)),
    }
    match count(ClusterKind::RoleInstruction) {
        0 => return Err(GenError::RoleRequired),
        1 => {}
        _ => return Err(GenError::DuplicateCluster(ClusterKind::RoleInstruction)),
    }
    let mut mandatory = Vec::new();
    let mut rest = Vec::new();
    for cluster in clusters {
        for seg in &cluster.segments {
            let kind = cluster.kind;
            let p = seg.priority;
            match kind {
                ClusterKind::ResponseDraft if p != 1.0 => return Err(GenError::InvalidPriority { kind, priority: p }),
                ClusterKind::RoleInstruction => {}
                ClusterKind::ResponseDraft => {}
                _ if !(p > 0.0 && p < 1.0) => return Err(GenError::InvalidPriority { kind, priority: p }),
                _ => {}
            }
            // an empty role means no preamble
            if seg.text.trim().is_empty() && kind != ClusterKind::RoleInstruction {
                return Err(GenError::EmptySegment(kind));
            }
            let s = Segment { kind, text: seg.text.clone(), priority: p };
            if kind.is_mandatory() { mandatory.push(s) } else { rest.push(s) }
        }
    }
    if !mandatory.iter().any(|s| s.kind == ClusterKind::RoleInstruction) {
        return Err(GenError::RoleRequired);
    }
    if !mandatory.iter().any(|s| s.kind == ClusterKind::ResponseDraft) {
        return Err(GenError::DraftRequired);
    }
    mandatory.sort_by_key(|s| s.kind.rank());
    rest.sort_by(|a, b| b.priority.total_cmp(&a.priority).then(a.kind.rank().cmp(&b.kind.rank())));
    mandatory.extend(rest);
    Ok(mandatory)
}

fn shingles(sentence: &str) -> HashSet<Vec<String>> {
    let tokens: Vec<String> = alnum_tokens(&sentence.to_lowercase());
    if tokens.len() < SHINGLE {
        return if tokens.is_empty() { HashSet::new() } else { HashSet::from([tokens]) };
    }
    tokens.windows(SHINGLE).map(|w| w.to_vec()).collect()
}

fn jaccard(a: &HashSet<Vec<String>>, b: &HashSet<Vec<String>>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 { 0.0 } else { inter as f64 / union as f64 }
}

/// Removes near-duplicate sentences across optional segments, keeping the
/// first occurrence. Returns the number of sentences removed.
fn dedup(segments: &mut Vec<Segment>) -> usize {
    let mut seen: Vec<HashSet<Vec<String>>> = Vec::new();
    let mut removed = 0;
    for seg in segments.iter_mut().filter(|s| !s.kind.is_mandatory()) {
        let sentences = split_sentences(&seg.text);
        let mut kept = Vec::new();
        for s in &sentences {
            let sh = shingles(s);
            if !sh.is_empty() && seen.iter().any(|prev| jaccard(prev, &sh) > NEAR_DUPLICATE) {
                removed += 1;
                continue;
            }
            if !sh.is_empty() {
                seen.push(sh);
            }
            kept.push(*s);
        }
        if kept.len() != sentences.len() {
            seg.text = kept.join(" ");
        }
    }
    segments.retain(|s| s.kind == ClusterKind::RoleInstruction || !s.text.trim().is_empty());
    removed
}

fn total(segments: &[Segment], counter: &TokenCounter) -> usize {
    segments.iter().map(|s| counter.count(&s.text)).sum()
}

/// Index of the optional segment to give up first: lowest priority, latest
/// in order among ties.
fn weakest(segments: &[Segment]) -> Option<usize> {
    segments
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.kind.is_mandatory())
        .min_by(|(i, a), (j, b)| a.priority.total_cmp(&b.priority).then(j.cmp(i)))
        .map(|(i, _)| i)
}

/// Fits assembled segments into `budget`: near-duplicate sentences go first,
/// then whole low-priority segments. Once a single optional segment is left
/// it loses trailing sentences instead, and is dropped only when not even
/// its first sentence fits. Role and draft are never touched.
pub fn optimize_tokens(segments: Vec<Segment>, budget: usize, counter: &TokenCounter) -> Result<PromptBundle, GenError> {
    let required: usize = segments.iter().filter(|s| s.kind.is_mandatory()).map(|s| counter.count(&s.text)).sum();
    if required > budget {
        return Err(GenError::BudgetTooSmall { required, budget });
    }
    let mut segments = segments;
    let duplicates_removed = dedup(&mut segments);
    let mut dropped = Vec::new();
    let mut trimmed = false;
    while total(&segments, counter) > budget {
        let optional = segments.iter().filter(|s| !s.kind.is_mandatory()).count();
        let Some(i) = weakest(&segments) else { break };
        if optional > 1 {
            dropped.push(segments.remove(i));
            continue;
        }
        let others = total(&segments, counter) - counter.count(&segments[i].text);
        let sentences = split_sentences(&segments[i].text);
        let fit = (1..sentences.len())
            .rev()
            .map(|n| sentences[..n].join(" "))
            .find(|t| others + counter.count(t) <= budget);
        match fit {
            Some(text) => {
                segments[i].text = text;
                trimmed = true;
            }
            None => dropped.push(segments.remove(i)),
        }
    }
    let role_instruction = segments
        .iter()
        .find(|s| s.kind == ClusterKind::RoleInstruction)
        .map(|s| s.text.clone())
        .unwrap_or_default();
    let token_count = total(&segments, counter);
    segments.retain(|s| s.kind != ClusterKind::RoleInstruction);
    Ok(PromptBundle { role_instruction, segments, token_count, budget, dropped, duplicates_removed, trimmed })
}

/// Role first, then each run of same-kind segments under a labelled
/// delimiter. Identical bundles give identical bytes.
pub fn build_prompt(bundle: &PromptBundle) -> String {
    let mut out = String::new();
    if !bundle.role_instruction.trim().is_empty() {
        out.push_str(bundle.role_instruction.trim());
        out.push_str("\n\n");
    }
    let mut prev = None;
    for seg in &bundle.segments {
        if prev != Some(seg.kind) {
            out.push_str(&format!("=== {} ===\n", seg.kind.label()));
            prev = Some(seg.kind);
        }
        out.push_str(seg.text.trim());
        out.push_str("\n\n");
    }
    let trimmed_len = out.trim_end().len();
    out.truncate(trimmed_len);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(prefix: &str, n: usize) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    fn kinds(segments: &[Segment]) -> Vec<ClusterKind> {
        segments.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn ordering_rule() {
        use ClusterKind::*;
        let clusters = vec![
            SegmentCluster::new(RelevantDocs, 0.3, ["doc"]),
            SegmentCluster::new(TemplateCluster, 0.6, ["tpl"]),
            SegmentCluster::draft("draft"),
            SegmentCluster::role("role"),
        ];
        assert_eq!(kinds(&assemble(&clusters).unwrap()), vec![RoleInstruction, ResponseDraft, TemplateCluster, RelevantDocs]);
        assert_eq!(kinds(&assemble(&clusters[2..]).unwrap()), vec![RoleInstruction, ResponseDraft]);

        let two = vec![
            SegmentCluster::role("r"),
            SegmentCluster::draft("d"),
            SegmentCluster { kind: TemplateCluster, segments: vec![
                super::super::ClusterSegment { text: "low".into(), priority: 0.4 },
                super::super::ClusterSegment { text: "high".into(), priority: 0.6 },
            ]},
        ];
        let texts: Vec<String> = assemble(&two).unwrap().into_iter().map(|s| s.text).collect();
        assert_eq!(texts, vec!["r", "d", "high", "low"]);

        let tie = vec![
            SegmentCluster::role("r"),
            SegmentCluster::draft("d"),
            SegmentCluster::new(RelevantDocs, 0.5, ["doc"]),
            SegmentCluster::new(KeywordCluster, 0.5, ["kw"]),
            SegmentCluster::new(TemplateCluster, 0.5, ["tpl"]),
        ];
        assert_eq!(kinds(&assemble(&tie).unwrap())[2..], [TemplateCluster, KeywordCluster, RelevantDocs]);
    }

    #[test]
    fn draft_and_role_required_once() {
        let role = SegmentCluster::role("r");
        let draft = SegmentCluster::draft("d");
        let e = assemble(&[role.clone()]).unwrap_err();
        assert_eq!(e.to_string(), "draft required");
        assert!(matches!(assemble(&[role.clone(), draft.clone(), draft.clone()]), Err(GenError::DuplicateCluster(_))));
        assert!(matches!(assemble(&[draft.clone()]), Err(GenError::RoleRequired)));
        let bad = SegmentCluster::new(ClusterKind::TemplateCluster, 1.0, ["t"]);
        assert!(matches!(assemble(&[role, draft, bad]), Err(GenError::InvalidPriority { .. })));
    }

    #[test]
    fn greedy_drop_trace() {
        // draft 40, template 30, docs 50, role 0 tokens, budget 80
        let counter = TokenCounter { ratio: 1.0 };
        let clusters = vec![
            SegmentCluster::role(""),
            SegmentCluster::draft(words("d", 40)),
            SegmentCluster::new(ClusterKind::TemplateCluster, 0.6, [words("t", 30)]),
            SegmentCluster::new(ClusterKind::RelevantDocs, 0.3, [words("x", 50)]),
        ];
        let b = optimize_tokens(assemble(&clusters).unwrap(), 80, &counter).unwrap();
        assert_eq!(kinds(&b.segments), vec![ClusterKind::ResponseDraft, ClusterKind::TemplateCluster]);
        assert_eq!(b.token_count, 70);
        assert_eq!(b.dropped.len(), 1);
        assert!(!b.trimmed);
    }

    #[test]
    fn generous_budget_is_identity() {
        let counter = TokenCounter::default();
        let segs = assemble(&[
            SegmentCluster::role("Be brief."),
            SegmentCluster::draft("The claims are novel. Jin fails to teach the layer."),
            SegmentCluster::new(ClusterKind::TemplateCluster, 0.6, ["Applicant traverses. The art is silent."]),
        ])
        .unwrap();
        let b = optimize_tokens(segs.clone(), 10_000, &counter).unwrap();
        assert_eq!(b.segments, segs[1..].to_vec());
        assert_eq!(b.token_count, total(&segs, &counter));
        assert!(b.dropped.is_empty() && b.duplicates_removed == 0);
    }

    #[test]
    fn duplicate_sentence_kept_once() {
        let shared = "The reference does not disclose an isolated phase change layer.";
        let segs = assemble(&[
            SegmentCluster::role("r"),
            SegmentCluster::draft(shared),
            SegmentCluster::new(ClusterKind::TemplateCluster, 0.6, [format!("Opening line here. {shared}"), format!("{shared} Closing remark follows.")]),
        ])
        .unwrap();
        let b = optimize_tokens(segs, 10_000, &TokenCounter::default()).unwrap();
        assert_eq!(b.duplicates_removed, 1);
        let prompt = build_prompt(&b);
        // once in the draft, once among the templates
        assert_eq!(prompt.matches(shared).count(), 2);
        assert_eq!(b.segments[2].text, "Closing remark follows.");
    }

    #[test]
    fn last_segment_is_trimmed_not_dropped() {
        let counter = TokenCounter { ratio: 1.0 };
        let segs = assemble(&[
            SegmentCluster::role(""),
            SegmentCluster::draft(words("d", 10)),
            SegmentCluster::new(ClusterKind::TemplateCluster, 0.6, ["Alpha beta gamma. Delta epsilon zeta. Eta theta iota."]),
        ])
        .unwrap();
        let b = optimize_tokens(segs, 18, &counter).unwrap();
        assert!(b.trimmed);
        assert_eq!(b.segments[1].text, "Alpha beta gamma. Delta epsilon zeta.");
        assert_eq!(b.token_count, 18);
    }

    #[test]
    fn budget_below_mandatory() {
        let segs = assemble(&[SegmentCluster::role("one two"), SegmentCluster::draft("three four")]).unwrap();
        let e = optimize_tokens(segs, 3, &TokenCounter { ratio: 1.0 }).unwrap_err();
        assert!(e.to_string().starts_with("budget too small for mandatory content"));
    }

    #[test]
    fn prompt_layout() {
        let segs = assemble(&[
            SegmentCluster::role("Role text."),
            SegmentCluster::draft("Draft text."),
            SegmentCluster::new(ClusterKind::TemplateCluster, 0.6, ["Template text."]),
        ])
        .unwrap();
        let b = optimize_tokens(segs, 1000, &TokenCounter::default()).unwrap();
        let p = build_prompt(&b);
        assert!(p.starts_with("Role text.\n\n=== RESPONSE DRAFT ===\nDraft text."));
        let d = p.find("=== RESPONSE DRAFT ===").unwrap();
        let t = p.find("=== TEMPLATES ===").unwrap();
        assert!(d < t);
        assert_eq!(p, build_prompt(&b.clone()));
    }

    fn sentence() -> impl Strategy<Value = String> {
        proptest::collection::vec("[a-z]{1,8}", 1..12).prop_map(|w| {
            let mut s = w.join(" ");
            s[..1].make_ascii_uppercase();
            s + "."
        })
    }

    fn optional() -> impl Strategy<Value = (u8, f64, String)> {
        (0u8..3, 1u32..100, proptest::collection::vec(sentence(), 1..5))
            .prop_map(|(k, p, s)| (k, p as f64 / 100.0, s.join(" ")))
    }

    proptest! {
        #[test]
        fn budget_and_draft_invariants(
            draft in proptest::collection::vec(sentence(), 1..4),
            opts in proptest::collection::vec(optional(), 0..8),
            slack in 0usize..200,
        ) {
            let counter = TokenCounter::default();
            let draft = draft.join(" ");
            let mut clusters = vec![SegmentCluster::role("Act as counsel."), SegmentCluster::draft(draft.clone())];
            for (k, p, text) in &opts {
                let kind = [ClusterKind::TemplateCluster, ClusterKind::KeywordCluster, ClusterKind::RelevantDocs][*k as usize];
                clusters.push(SegmentCluster::new(kind, *p, [text.clone()]));
            }
            let segs = assemble(&clusters).unwrap();
            let budget = counter.count("Act as counsel.") + counter.count(&draft) + slack;
            let a = optimize_tokens(segs.clone(), budget, &counter).unwrap();
            let b = optimize_tokens(segs, budget, &counter).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.token_count <= budget);
            prop_assert_eq!(&a.segments[0].text, &draft);
            // nothing dropped outranks a survivor
            let min_kept = a.segments.iter().filter(|s| !s.kind.is_mandatory()).map(|s| s.priority).fold(f64::INFINITY, f64::min);
            for d in &a.dropped {
                prop_assert!(d.priority <= min_kept);
            }
        }
    }
}
