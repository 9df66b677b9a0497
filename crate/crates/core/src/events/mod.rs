//! Append-only interaction log and depth-weighted engagement.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, FixedOffset, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf::Interaction;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("invalid field {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("event log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("event log io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EventError {
    pub fn field(&self) -> Option<&'static str> {
        match self {
            EventError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    ViewSlate,
    SelectTemplate,
    FillTemplate,
    GenerateDraft,
    ExportResponse,
    RateGeneration,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::ViewSlate,
        EventKind::SelectTemplate,
        EventKind::FillTemplate,
        EventKind::GenerateDraft,
        EventKind::ExportResponse,
        EventKind::RateGeneration,
    ];

    /// A session counts toward engagement only once it reaches one of these.
    pub fn completes_session(self) -> bool {
        matches!(self, EventKind::GenerateDraft | EventKind::ExportResponse)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEvent {
    pub event_id: String,
    pub user_id: String,
    /// RFC 3339 timestamp.
    pub timestamp: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub oa_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    pub session_id: String,
}

impl InteractionEvent {
    pub fn validate(&self) -> Result<DateTime<FixedOffset>, EventError> {
        let nonempty = |field: &'static str, v: &str| {
            if v.trim().is_empty() {
                Err(EventError::Invalid { field, message: "must not be empty".into() })
            } else {
                Ok(())
            }
        };
        nonempty("event_id", &self.event_id)?;
        nonempty("user_id", &self.user_id)?;
        nonempty("oa_id", &self.oa_id)?;
        nonempty("session_id", &self.session_id)?;
        let ts = DateTime::parse_from_rfc3339(&self.timestamp)
            .map_err(|e| EventError::Invalid { field: "timestamp", message: e.to_string() })?;
        match (self.kind, self.rating) {
            (EventKind::RateGeneration, Some(r)) if (1..=5).contains(&r) => {}
            (EventKind::RateGeneration, Some(r)) => {
                return Err(EventError::Invalid { field: "rating", message: format!("{r} is outside 1-5") })
            }
            (EventKind::RateGeneration, None) => {
                return Err(EventError::Invalid { field: "rating", message: "required for RateGeneration".into() })
            }
            (_, Some(_)) => {
                return Err(EventError::Invalid { field: "rating", message: "only allowed on RateGeneration".into() })
            }
            (_, None) => {}
        }
        if let Some(t) = &self.template_id {
            nonempty("template_id", t)?;
        }
        Ok(ts)
    }

    pub fn time(&self) -> Option<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(&self.timestamp).ok().map(|t| t.with_timezone(&Utc))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Accepted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub event_id: String,
    pub status: AckStatus,
}

/// Events in append order, optionally mirrored to a JSONL file. Each event
/// is written and synced before it is acknowledged.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<InteractionEvent>,
    ids: HashSet<String>,
    file: Option<(PathBuf, File)>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays an existing log (if any) and appends to it from then on.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EventError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| EventError::Io { path: path.display().to_string(), source };
        let mut log = EventLog::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev: InteractionEvent =
                    serde_json::from_str(&line).map_err(|e| EventError::Parse { line: i + 1, reason: e.to_string() })?;
                ev.validate().map_err(|e| EventError::Parse { line: i + 1, reason: e.to_string() })?;
                log.insert(ev);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        log.file = Some((path, file));
        Ok(log)
    }

    fn insert(&mut self, ev: InteractionEvent) -> bool {
        if !self.ids.insert(ev.event_id.clone()) {
            return false;
        }
        self.events.push(ev);
        true
    }

    pub fn append(&mut self, event: InteractionEvent) -> Result<Ack, EventError> {
        event.validate()?;
        let event_id = event.event_id.clone();
        if self.ids.contains(&event_id) {
            return Ok(Ack { event_id, status: AckStatus::Duplicate });
        }
        if let Some((path, file)) = &mut self.file {
            let io = |source| EventError::Io { path: path.display().to_string(), source };
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        self.insert(event);
        Ok(Ack { event_id, status: AckStatus::Accepted })
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<EventKind, usize> {
        let mut out: BTreeMap<EventKind, usize> = EventKind::ALL.iter().map(|k| (*k, 0)).collect();
        for e in &self.events {
            *out.get_mut(&e.kind).unwrap() += 1;
        }
        out
    }

    pub fn flush(&mut self) -> Result<(), EventError> {
        if let Some((path, file)) = &mut self.file {
            file.sync_all().map_err(|source| EventError::Io { path: path.display().to_string(), source })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthWeights {
    pub view: f64,
    pub select: f64,
    pub fill: f64,
    pub generate: f64,
    pub export: f64,
    /// Sessions split when a client session goes quiet this long.
    pub inactivity_hours: i64,
}

impl Default for DepthWeights {
    fn default() -> Self {
        DepthWeights { view: 0.2, select: 0.4, fill: 0.6, generate: 0.8, export: 1.0, inactivity_hours: 4 }
    }
}

impl DepthWeights {
    pub fn of(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::ViewSlate => self.view,
            EventKind::SelectTemplate => self.select,
            EventKind::FillTemplate => self.fill,
            EventKind::GenerateDraft => self.generate,
            EventKind::ExportResponse => self.export,
            EventKind::RateGeneration => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: String,
    pub session_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub depth: f64,
    pub completed: bool,
}

impl Session {
    /// Year-month of the session's last event.
    pub fn period(&self) -> String {
        self.end.format("%Y-%m").to_string()
    }
}

/// Groups events by (user, session_id) and splits a group wherever
/// consecutive events are further apart than the inactivity cutoff.
pub fn sessions(events: &[InteractionEvent], weights: &DepthWeights) -> Vec<Session> {
    let mut groups: BTreeMap<(&str, &str), Vec<(DateTime<Utc>, EventKind)>> = BTreeMap::new();
    for e in events {
        if let Some(t) = e.time() {
            groups.entry((&e.user_id, &e.session_id)).or_default().push((t, e.kind));
        }
    }
    let gap = Duration::hours(weights.inactivity_hours);
    let mut out = Vec::new();
    for ((user, sid), mut evs) in groups {
        evs.sort_by_key(|(t, k)| (*t, *k));
        let mut current: Option<Session> = None;
        for (t, kind) in evs {
            if let Some(s) = &current {
                if t - s.end > gap {
                    out.push(current.take().unwrap());
                }
            }
            let s = current.get_or_insert_with(|| Session {
                user_id: user.to_string(),
                session_id: sid.to_string(),
                start: t,
                end: t,
                depth: 0.0,
                completed: false,
            });
            s.end = t;
            s.depth = s.depth.max(weights.of(kind));
            s.completed |= kind.completes_session();
        }
        out.extend(current);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementScore {
    pub user_id: String,
    pub period: String,
    pub score: f64,
    pub sessions: usize,
}

/// Sum of depth weights over the user's completed sessions ending in
/// `period` (YYYY-MM). Unknown users score 0.
pub fn engagement_score(events: &[InteractionEvent], user: &str, period: &str, weights: &DepthWeights) -> EngagementScore {
    let done: Vec<Session> = sessions(events, weights)
        .into_iter()
        .filter(|s| s.user_id == user && s.completed && s.period() == period)
        .collect();
    EngagementScore {
        user_id: user.to_string(),
        period: period.to_string(),
        score: done.iter().map(|s| s.depth).sum(),
        sessions: done.len(),
    }
}

/// Every (user, period) with at least one completed session.
pub fn monthly_engagement(events: &[InteractionEvent], weights: &DepthWeights) -> Vec<EngagementScore> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for s in sessions(events, weights).into_iter().filter(|s| s.completed) {
        let e = acc.entry((s.user_id.clone(), s.period())).or_default();
        e.0 += s.depth;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((user_id, period), (score, sessions))| EngagementScore { user_id, period, score, sessions })
        .collect()
}

/// Implicit feedback for CF retraining: each event on a template adds its
/// depth weight to the (user, template) cell.
pub fn interactions_from_events(events: &[InteractionEvent], weights: &DepthWeights) -> Vec<Interaction> {
    let mut acc: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for e in events {
        if let Some(t) = &e.template_id {
            let w = weights.of(e.kind);
            if w > 0.0 {
                *acc.entry((&e.user_id, t)).or_default() += w;
            }
        }
    }
    acc.into_iter()
        .map(|((user, template), weight)| Interaction { user: user.into(), template: template.into(), weight })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(id: &str, user: &str, session: &str, ts: &str, kind: EventKind) -> InteractionEvent {
        InteractionEvent {
            event_id: id.into(),
            user_id: user.into(),
            timestamp: ts.into(),
            kind,
            template_id: Some("t1".into()),
            oa_id: "oa1".into(),
            rating: None,
            session_id: session.into(),
        }
    }

    use EventKind::*;

    #[test]
    fn depth_of_one_session() {
        let evs = vec![
            ev("1", "u", "s1", "2024-03-01T10:00:00Z", ViewSlate),
            ev("2", "u", "s1", "2024-03-01T10:05:00Z", SelectTemplate),
            ev("3", "u", "s1", "2024-03-01T10:20:00Z", GenerateDraft),
        ];
        let s = engagement_score(&evs, "u", "2024-03", &DepthWeights::default());
        assert_eq!(s.score, 0.8);
        assert_eq!(s.sessions, 1);
    }

    #[test]
    fn incomplete_session_contributes_nothing() {
        let evs = vec![
            ev("1", "u", "s1", "2024-03-01T10:00:00Z", ViewSlate),
            ev("2", "u", "s1", "2024-03-01T10:05:00Z", SelectTemplate),
        ];
        assert_eq!(engagement_score(&evs, "u", "2024-03", &DepthWeights::default()).score, 0.0);
        assert_eq!(engagement_score(&evs, "nobody", "2024-03", &DepthWeights::default()).score, 0.0);
    }

    #[test]
    fn two_sessions_sum() {
        let evs = vec![
            ev("1", "u", "s1", "2024-03-01T10:00:00Z", ViewSlate),
            ev("2", "u", "s1", "2024-03-01T10:20:00Z", GenerateDraft),
            ev("3", "u", "s2", "2024-03-09T09:00:00Z", SelectTemplate),
            ev("4", "u", "s2", "2024-03-09T09:30:00Z", ExportResponse),
            ev("5", "u", "s3", "2024-04-02T09:00:00Z", ExportResponse),
        ];
        let s = engagement_score(&evs, "u", "2024-03", &DepthWeights::default());
        assert!((s.score - 1.8).abs() < 1e-12);
        let monthly = monthly_engagement(&evs, &DepthWeights::default());
        assert_eq!(monthly.len(), 2);
        assert_eq!(monthly[1].period, "2024-04");
    }

    #[test]
    fn inactivity_splits_a_session() {
        // same client session id, five hours apart: the export does not
        // complete the morning's view
        let evs = vec![
            ev("1", "u", "s1", "2024-03-01T08:00:00Z", FillTemplate),
            ev("2", "u", "s1", "2024-03-01T13:00:00Z", ExportResponse),
        ];
        let all = sessions(&evs, &DepthWeights::default());
        assert_eq!(all.len(), 2);
        assert_eq!(engagement_score(&evs, "u", "2024-03", &DepthWeights::default()).score, 1.0);
    }

    #[test]
    fn validation() {
        let mut bad = ev("1", "u", "s", "2024-03-01T08:00:00Z", RateGeneration);
        bad.rating = Some(6);
        assert_eq!(bad.validate().unwrap_err().field(), Some("rating"));
        bad.rating = None;
        assert_eq!(bad.validate().unwrap_err().field(), Some("rating"));
        bad.rating = Some(5);
        assert!(bad.validate().is_ok());
        let mut wrong = ev("1", "u", "s", "2024-03-01T08:00:00Z", ViewSlate);
        wrong.rating = Some(3);
        assert!(wrong.validate().is_err());
        let mut ts = ev("1", "u", "s", "yesterday", ViewSlate);
        assert_eq!(ts.validate().unwrap_err().field(), Some("timestamp"));
        ts.timestamp = "2024-03-01T08:00:00+02:00".into();
        assert!(ts.validate().is_ok());
        assert_eq!(ev("", "u", "s", "2024-03-01T08:00:00Z", ViewSlate).validate().unwrap_err().field(), Some("event_id"));
    }

    #[test]
    fn log_is_idempotent_and_replayable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::open(&path).unwrap();
        let e = ev("1", "u", "s1", "2024-03-01T10:00:00Z", SelectTemplate);
        assert_eq!(log.append(e.clone()).unwrap().status, AckStatus::Accepted);
        assert_eq!(log.append(e).unwrap().status, AckStatus::Duplicate);
        assert_eq!(log.len(), 1);
        log.append(ev("2", "u", "s1", "2024-03-01T10:10:00Z", GenerateDraft)).unwrap();
        let before = monthly_engagement(log.events(), &DepthWeights::default());
        drop(log);
        let replayed = EventLog::open(&path).unwrap();
        assert_eq!(replayed.len(), 2);
        assert_eq!(monthly_engagement(replayed.events(), &DepthWeights::default()), before);
        assert_eq!(replayed.counts()[&GenerateDraft], 1);
    }

    #[test]
    fn events_become_interactions() {
        let evs = vec![
            ev("1", "u", "s1", "2024-03-01T10:00:00Z", SelectTemplate),
            ev("2", "u", "s1", "2024-03-01T10:05:00Z", FillTemplate),
        ];
        let cells = interactions_from_events(&evs, &DepthWeights::default());
        assert_eq!(cells.len(), 1);
        assert!((cells[0].weight - 1.0).abs() < 1e-12);
    }

    fn kind() -> impl Strategy<Value = EventKind> {
        prop_oneof![Just(ViewSlate), Just(SelectTemplate), Just(FillTemplate), Just(GenerateDraft), Just(ExportResponse)]
    }

    fn session_events(prefix: String) -> impl Strategy<Value = Vec<InteractionEvent>> {
        (proptest::collection::vec((kind(), 0u32..600), 1..6), 0u32..28, 0u32..3).prop_map(move |(ks, day, user)| {
            ks.into_iter()
                .enumerate()
                .map(|(i, (k, minute))| {
                    let ts = format!("2024-05-{:02}T{:02}:{:02}:00Z", day + 1, minute / 60, minute % 60);
                    ev(&format!("{prefix}-{i}"), &format!("u{user}"), &prefix, &ts, k)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn adding_a_completed_session_never_lowers_scores(
            base in proptest::collection::vec(session_events("b".into()), 0..4)
                .prop_map(|v| v.into_iter().enumerate().flat_map(|(i, evs)| evs.into_iter().map(move |mut e| {
                    e.session_id = format!("b{i}"); e.event_id = format!("b{i}-{}", e.event_id); e
                })).collect::<Vec<_>>()),
            extra in session_events("x".into()),
        ) {
            let w = DepthWeights::default();
            let mut extra = extra;
            extra.last_mut().unwrap().kind = ExportResponse;
            let before = monthly_engagement(&base, &w);
            let mut all = base.clone();
            all.extend(extra);
            let after = monthly_engagement(&all, &w);
            for b in &before {
                let a = after.iter().find(|a| a.user_id == b.user_id && a.period == b.period).unwrap();
                prop_assert!(a.score >= b.score - 1e-12);
            }
            prop_assert_eq!(monthly_engagement(&all, &w), after);
        }
    }
}
