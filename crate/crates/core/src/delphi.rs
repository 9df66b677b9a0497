//! Convergent Delphi process over OA topic proposals.
//!
//! The engine is a bookkeeper: attorneys supply Likert ratings, the expert
//! panel supplies decompositions and verdicts on attorney-proposed
//! candidates, and each round applies the fixed update order
//!
//! 1. mean suitability and higher-order scores per rated topic,
//! 2. decomposition of topics whose higher-order mean exceeds lambda,
//! 3. promotion of accepted candidates (the candidate set is then cleared),
//! 4. the consensus fraction P over topics rated this round,
//! 5. convergence when P exceeds theta,
//! 6. removal of rated topics with suitability below lambda or
//!    higher-order above lambda.
//!
//! All comparisons against lambda are strict.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LAMBDA: f64 = 4.0;
pub const DEFAULT_THETA: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelphiError {
    #[error("incomplete round: {0}")]
    IncompleteRound(String),
    #[error("decomposition required for topic {0:?}")]
    DecompositionRequired(String),
    #[error("empty topic set")]
    EmptyTopicSet,
    #[error("process already converged")]
    AlreadyConverged,
    #[error("rating {value} for ({attorney}, {topic}) outside 1..=5")]
    RatingOutOfRange { attorney: String, topic: String, value: u8 },
    #[error("duplicate topic_id {0:?}")]
    DuplicateTopic(String),
    #[error("topic {0:?} has no keywords")]
    NoKeywords(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("no input for round {0}")]
    MissingInput(usize),
    #[error("replay diverged at round {0}")]
    ReplayDiverged(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Expert,
    AttorneyCandidate,
    Decomposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicProposal {
    pub topic_id: String,
    pub label: String,
    pub keywords: Vec<String>,
    pub origin: Origin,
}

impl TopicProposal {
    pub fn new(topic_id: &str, label: &str, keywords: &[&str], origin: Origin) -> Self {
        TopicProposal {
            topic_id: topic_id.to_string(),
            label: label.to_string(),
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            origin,
        }
    }
}

/// One round of attorney input: attorneys x topics rating matrices plus
/// self-defined candidate topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRatings {
    pub attorneys: Vec<String>,
    pub topics: Vec<String>,
    /// `suitability[a][t]` for attorney `a`, topic `t`
    pub suitability: Vec<Vec<u8>>,
    pub higher_order: Vec<Vec<u8>>,
    #[serde(default)]
    pub candidates: BTreeMap<String, Vec<TopicProposal>>,
}

impl RoundRatings {
    /// Every attorney gives every topic the same pair of scores.
    pub fn uniform(attorneys: &[&str], topics: &[&str], suitability: u8, higher_order: u8) -> Self {
        RoundRatings {
            attorneys: attorneys.iter().map(|a| a.to_string()).collect(),
            topics: topics.iter().map(|t| t.to_string()).collect(),
            suitability: vec![vec![suitability; topics.len()]; attorneys.len()],
            higher_order: vec![vec![higher_order; topics.len()]; attorneys.len()],
            candidates: BTreeMap::new(),
        }
    }

    /// Per-topic columns: `columns[t] = (suitability scores, higher-order scores)`.
    pub fn from_columns(attorneys: usize, columns: &[(&str, Vec<u8>, Vec<u8>)]) -> Self {
        RoundRatings {
            attorneys: (0..attorneys).map(|a| format!("a{a}")).collect(),
            topics: columns.iter().map(|(t, _, _)| t.to_string()).collect(),
            suitability: (0..attorneys)
                .map(|a| columns.iter().map(|(_, s, _)| s[a]).collect())
                .collect(),
            higher_order: (0..attorneys)
                .map(|a| columns.iter().map(|(_, _, h)| h[a]).collect())
                .collect(),
            candidates: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertActions {
    #[serde(default)]
    pub decompositions: BTreeMap<String, Vec<TopicProposal>>,
    #[serde(default)]
    pub candidate_verdicts: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMeans {
    pub topic_id: String,
    pub suitability: f64,
    pub higher_order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalCause {
    LowSuitability,
    HigherOrder,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub topic_id: String,
    pub cause: RemovalCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub parent: String,
    pub children: Vec<String>,
}

/// Audit record of one round, including the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub means: Vec<TopicMeans>,
    pub consensus: f64,
    pub converged: bool,
    pub topics_after: usize,
    pub removals: Vec<Removal>,
    pub decompositions: Vec<Decomposition>,
    pub promotions: Vec<String>,
    pub dismissed_candidates: Vec<String>,
    pub ratings: RoundRatings,
    pub actions: ExpertActions,
}

/// Immutable snapshot of the process. `run_round` returns a new state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelphiState {
    pub topics: Vec<TopicProposal>,
    pub candidates: Vec<TopicProposal>,
    pub round: usize,
    pub lambda: f64,
    pub theta: f64,
    pub converged: bool,
    pub history: Vec<RoundRecord>,
}

impl DelphiState {
    /// Start a process from the expert-constructed topic set.
    pub fn new(topics: Vec<TopicProposal>, lambda: f64, theta: f64) -> Result<Self, DelphiError> {
        if !(lambda > 1.0 && lambda < 5.0) {
            return Err(DelphiError::InvalidThreshold(format!("lambda {lambda} not in (1, 5)")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(DelphiError::InvalidThreshold(format!("theta {theta} not in (0, 1)")));
        }
        if topics.is_empty() {
            return Err(DelphiError::EmptyTopicSet);
        }
        let mut seen = HashSet::new();
        for t in &topics {
            check_topic(t, &mut seen)?;
        }
        Ok(DelphiState {
            topics,
            candidates: Vec::new(),
            round: 0,
            lambda,
            theta,
            converged: false,
            history: Vec::new(),
        })
    }

    pub fn with_defaults(topics: Vec<TopicProposal>) -> Result<Self, DelphiError> {
        Self::new(topics, DEFAULT_LAMBDA, DEFAULT_THETA)
    }

    pub fn topic_ids(&self) -> Vec<&str> {
        self.topics.iter().map(|t| t.topic_id.as_str()).collect()
    }

    pub fn last_consensus(&self) -> Option<f64> {
        self.history.last().map(|r| r.consensus)
    }

    /// Apply one round of ratings and expert actions.
    pub fn run_round(&self, ratings: &RoundRatings, actions: &ExpertActions) -> Result<DelphiState, DelphiError> {
        if self.converged {
            return Err(DelphiError::AlreadyConverged);
        }
        if self.topics.is_empty() {
            return Err(DelphiError::EmptyTopicSet);
        }
        let means = self.topic_means(ratings)?;
        let lambda = self.lambda;

        let mut seen: HashSet<String> = self
            .topics
            .iter()
            .chain(&self.candidates)
            .map(|t| t.topic_id.clone())
            .collect();
        let mut topics = self.topics.clone();

        // decomposition of higher-order constructs
        let mut decompositions = Vec::new();
        for m in means.iter().filter(|m| m.higher_order > lambda) {
            let children = actions
                .decompositions
                .get(&m.topic_id)
                .ok_or_else(|| DelphiError::DecompositionRequired(m.topic_id.clone()))?;
            let mut ids = Vec::with_capacity(children.len());
            for child in children {
                let mut child = child.clone();
                child.origin = Origin::Decomposed;
                check_topic(&child, &mut seen)?;
                ids.push(child.topic_id.clone());
                topics.push(child);
            }
            decompositions.push(Decomposition {
                parent: m.topic_id.clone(),
                children: ids,
            });
        }

        // candidate promotion; C is emptied every round
        let mut promotions = Vec::new();
        let mut dismissed = Vec::new();
        let fresh = ratings.candidates.values().flatten();
        for cand in self.candidates.iter().chain(fresh) {
            if actions.candidate_verdicts.get(&cand.topic_id).copied().unwrap_or(false) {
                let mut cand = cand.clone();
                cand.origin = Origin::AttorneyCandidate;
                check_topic(&cand, &mut seen)?;
                promotions.push(cand.topic_id.clone());
                topics.push(cand);
            } else {
                dismissed.push(cand.topic_id.clone());
            }
        }

        let accepted = means.iter().filter(|m| m.suitability > lambda).count();
        let consensus = accepted as f64 / means.len() as f64;
        let converged = consensus > self.theta;

        let mut removals = Vec::new();
        for m in &means {
            let low = m.suitability < lambda;
            let higher = m.higher_order > lambda;
            let cause = match (low, higher) {
                (true, true) => RemovalCause::Both,
                (true, false) => RemovalCause::LowSuitability,
                (false, true) => RemovalCause::HigherOrder,
                (false, false) => continue,
            };
            removals.push(Removal {
                topic_id: m.topic_id.clone(),
                cause,
            });
        }
        topics.retain(|t| !removals.iter().any(|r| r.topic_id == t.topic_id));
        if topics.is_empty() {
            return Err(DelphiError::EmptyTopicSet);
        }

        let mut history = self.history.clone();
        history.push(RoundRecord {
            round: self.round + 1,
            means,
            consensus,
            converged,
            topics_after: topics.len(),
            removals,
            decompositions,
            promotions,
            dismissed_candidates: dismissed,
            ratings: ratings.clone(),
            actions: actions.clone(),
        });
        Ok(DelphiState {
            topics,
            candidates: Vec::new(),
            round: self.round + 1,
            lambda,
            theta: self.theta,
            converged,
            history,
        })
    }

    fn topic_means(&self, ratings: &RoundRatings) -> Result<Vec<TopicMeans>, DelphiError> {
        let incomplete = |m: String| Err(DelphiError::IncompleteRound(m));
        if ratings.attorneys.is_empty() {
            return incomplete("no attorneys".into());
        }
        if ratings.suitability.len() != ratings.attorneys.len()
            || ratings.higher_order.len() != ratings.attorneys.len()
        {
            return incomplete("rating matrices need one row per attorney".into());
        }
        let mut column = BTreeMap::new();
        for (i, t) in ratings.topics.iter().enumerate() {
            if column.insert(t.as_str(), i).is_some() {
                return Err(DelphiError::DuplicateTopic(t.clone()));
            }
        }
        for t in &ratings.topics {
            if !self.topics.iter().any(|p| &p.topic_id == t) {
                return incomplete(format!("topic {t:?} is not in the current topic set"));
            }
        }
        let n = ratings.attorneys.len() as f64;
        let mut means = Vec::with_capacity(self.topics.len());
        for topic in &self.topics {
            let Some(&col) = column.get(topic.topic_id.as_str()) else {
                return incomplete(format!("topic {:?} was not rated", topic.topic_id));
            };
            let mut sums = [0.0f64; 2];
            for (a, attorney) in ratings.attorneys.iter().enumerate() {
                for (slot, matrix) in [&ratings.suitability, &ratings.higher_order].into_iter().enumerate() {
                    let value = *matrix[a].get(col).ok_or_else(|| {
                        DelphiError::IncompleteRound(format!("missing cell ({attorney}, {})", topic.topic_id))
                    })?;
                    if !(1..=5).contains(&value) {
                        return Err(DelphiError::RatingOutOfRange {
                            attorney: attorney.clone(),
                            topic: topic.topic_id.clone(),
                            value,
                        });
                    }
                    sums[slot] += value as f64;
                }
            }
            means.push(TopicMeans {
                topic_id: topic.topic_id.clone(),
                suitability: sums[0] / n,
                higher_order: sums[1] / n,
            });
        }
        Ok(means)
    }
}

fn check_topic(topic: &TopicProposal, seen: &mut HashSet<String>) -> Result<(), DelphiError> {
    if topic.keywords.is_empty() {
        return Err(DelphiError::NoKeywords(topic.topic_id.clone()));
    }
    if !seen.insert(topic.topic_id.clone()) {
        return Err(DelphiError::DuplicateTopic(topic.topic_id.clone()));
    }
    Ok(())
}

/// Supplies attorney ratings for the round about to run.
pub trait RatingSource {
    fn ratings(&mut self, state: &DelphiState) -> Result<RoundRatings, DelphiError>;
}

/// Supplies the expert panel's decisions once ratings are known.
pub trait ExpertSource {
    fn actions(&mut self, state: &DelphiState, ratings: &RoundRatings) -> Result<ExpertActions, DelphiError>;
}

impl<F: FnMut(&DelphiState) -> RoundRatings> RatingSource for F {
    fn ratings(&mut self, state: &DelphiState) -> Result<RoundRatings, DelphiError> {
        Ok(self(state))
    }
}

impl<F: FnMut(&DelphiState, &RoundRatings) -> ExpertActions> ExpertSource for F {
    fn actions(&mut self, state: &DelphiState, ratings: &RoundRatings) -> Result<ExpertActions, DelphiError> {
        Ok(self(state, ratings))
    }
}

/// Pre-recorded inputs, one per round (e.g. loaded from files).
#[derive(Debug, Clone)]
pub struct Scripted<T>(pub Vec<T>);

impl RatingSource for Scripted<RoundRatings> {
    fn ratings(&mut self, state: &DelphiState) -> Result<RoundRatings, DelphiError> {
        self.0.get(state.round).cloned().ok_or(DelphiError::MissingInput(state.round + 1))
    }
}

impl ExpertSource for Scripted<ExpertActions> {
    fn actions(&mut self, state: &DelphiState, _: &RoundRatings) -> Result<ExpertActions, DelphiError> {
        // rounds without scripted actions get none
        Ok(self.0.get(state.round).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelphiOutcome {
    pub state: DelphiState,
    /// Set when `max_rounds` ran out before consensus.
    pub warning: Option<String>,
}

/// Run rounds until consensus or `max_rounds`.
pub fn run_to_convergence(
    initial: DelphiState,
    ratings: &mut dyn RatingSource,
    experts: &mut dyn ExpertSource,
    max_rounds: usize,
) -> Result<DelphiOutcome, DelphiError> {
    if max_rounds == 0 {
        return Err(DelphiError::InvalidThreshold("max_rounds must be >= 1".into()));
    }
    let mut state = initial;
    while !state.converged && state.round < max_rounds {
        let r = ratings.ratings(&state)?;
        let a = experts.actions(&state, &r)?;
        state = state.run_round(&r, &a)?;
    }
    let warning = (!state.converged).then(|| {
        format!(
            "no consensus after {} rounds (last P = {:.3})",
            state.round,
            state.last_consensus().unwrap_or(0.0)
        )
    });
    Ok(DelphiOutcome { state, warning })
}

/// Re-run the recorded inputs of `history` from `initial` and check that the
/// result reproduces the history exactly.
pub fn replay(initial: &DelphiState, history: &[RoundRecord]) -> Result<DelphiState, DelphiError> {
    let mut state = initial.clone();
    for record in history {
        state = state.run_round(&record.ratings, &record.actions)?;
        if state.history.last() != Some(record) {
            return Err(DelphiError::ReplayDiverged(record.round));
        }
    }
    Ok(state)
}
