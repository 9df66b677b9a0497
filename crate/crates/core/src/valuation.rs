//! Response valuation: min-max normalized value signals, weighted totals and
//! threshold admission into the template database.

use std::collections::BTreeMap;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValuationError {
    #[error("response {response_id:?} is missing signal {signal:?}")]
    MissingSignal { response_id: String, signal: String },
    #[error("response {response_id:?} has unexpected signal {signal:?}")]
    UnexpectedSignal { response_id: String, signal: String },
    #[error("signal {signal:?} of response {response_id:?} is not finite")]
    NonFinite { response_id: String, signal: String },
    #[error("weights do not match components: {0}")]
    WeightMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub name: String,
    pub direction: Direction,
}

/// One line of the signals file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalsRecord {
    pub response_id: String,
    pub topic_id: String,
    pub signals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueScore {
    pub components: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub topic_id: String,
    pub template_id: String,
    pub source_oa_id: String,
    pub body: String,
    pub value: ValueScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationConfig {
    pub signals: Vec<SignalSpec>,
    pub weights: BTreeMap<String, f64>,
    pub threshold: f64,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        let signals = [
            ("forward_rejections", Direction::HigherBetter, 0.5),
            ("claim_changes", Direction::LowerBetter, 0.3),
            ("law_firm_rank", Direction::LowerBetter, 0.2),
        ];
        ValuationConfig {
            signals: signals
                .iter()
                .map(|&(name, direction, _)| SignalSpec {
                    name: name.to_string(),
                    direction,
                })
                .collect(),
            weights: signals.iter().map(|&(n, _, w)| (n.to_string(), w)).collect(),
            threshold: 0.6,
        }
    }
}

impl ValuationConfig {
    pub fn validate(&self) -> Result<(), ValuationError> {
        check_weights(&self.weights)?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ValuationError::InvalidThreshold(self.threshold));
        }
        let names: Vec<&String> = self.signals.iter().map(|s| &s.name).collect();
        let weighted: Vec<&String> = self.weights.keys().collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() || sorted != weighted {
            return Err(ValuationError::WeightMismatch(
                "signal specs and weights must name the same signals".into(),
            ));
        }
        Ok(())
    }
}

fn check_weights(weights: &BTreeMap<String, f64>) -> Result<(), ValuationError> {
    if weights.is_empty() {
        return Err(ValuationError::InvalidWeights("no weights".into()));
    }
    if let Some((n, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(ValuationError::InvalidWeights(format!("weight {n:?} = {w}")));
    }
    let sum: f64 = weights.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ValuationError::InvalidWeights(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Min-max normalize each signal across all records. LowerBetter signals are
/// flipped; a signal with max = min maps to 0.5 everywhere.
pub fn normalize_signals(
    records: &[SignalsRecord],
    specs: &[SignalSpec],
) -> Result<Vec<BTreeMap<String, f64>>, ValuationError> {
    for r in records {
        for spec in specs {
            match r.signals.get(&spec.name) {
                None => {
                    return Err(ValuationError::MissingSignal {
                        response_id: r.response_id.clone(),
                        signal: spec.name.clone(),
                    })
                }
                Some(v) if !v.is_finite() => {
                    return Err(ValuationError::NonFinite {
                        response_id: r.response_id.clone(),
                        signal: spec.name.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = r.signals.keys().find(|k| !specs.iter().any(|s| &s.name == *k)) {
            return Err(ValuationError::UnexpectedSignal {
                response_id: r.response_id.clone(),
                signal: extra.clone(),
            });
        }
    }
    let ranges: Vec<(f64, f64)> = specs
        .iter()
        .map(|spec| {
            records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = r.signals[&spec.name];
                (lo.min(v), hi.max(v))
            })
        })
        .collect();
    Ok(records
        .iter()
        .map(|r| {
            specs
                .iter()
                .zip(&ranges)
                .map(|(spec, &(lo, hi))| {
                    let raw = r.signals[&spec.name];
                    let x = if hi > lo {
                        let x = (raw - lo) / (hi - lo);
                        match spec.direction {
                            Direction::HigherBetter => x,
                            Direction::LowerBetter => 1.0 - x,
                        }
                    } else {
                        0.5
                    };
                    (spec.name.clone(), x)
                })
                .collect()
        })
        .collect())
}

pub fn score_response(
    components: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<ValueScore, ValuationError> {
    check_weights(weights)?;
    if !components.keys().eq(weights.keys()) {
        let c: Vec<_> = components.keys().collect();
        let w: Vec<_> = weights.keys().collect();
        return Err(ValuationError::WeightMismatch(format!("components {c:?} vs weights {w:?}")));
    }
    let total = components.iter().map(|(n, c)| c * weights[n]).sum();
    Ok(ValueScore {
        components: components.clone(),
        weights: weights.clone(),
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub response_id: String,
    pub topic_id: String,
    pub value: ValueScore,
}

/// Normalize and score every record under `config`.
pub fn score_all(records: &[SignalsRecord], config: &ValuationConfig) -> Result<Vec<ScoredResponse>, ValuationError> {
    config.validate()?;
    let components = normalize_signals(records, &config.signals)?;
    records
        .par_iter()
        .zip(components.par_iter())
        .map(|(r, c)| {
            Ok(ScoredResponse {
                response_id: r.response_id.clone(),
                topic_id: r.topic_id.clone(),
                value: score_response(c, &config.weights)?,
            })
        })
        .collect()
}

/// Responses whose total strictly exceeds `threshold`, in input order.
pub fn admitted<'a>(scored: &'a [ScoredResponse], threshold: f64) -> Result<Vec<&'a ScoredResponse>, ValuationError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ValuationError::InvalidThreshold(threshold));
    }
    Ok(scored.iter().filter(|s| s.value.total > threshold).collect())
}

/// Turn admitted responses into template records. `source` maps a response id
/// to its (source OA id, body); responses it cannot resolve are returned in
/// the second list with a reason.
pub fn admit_templates<F>(
    scored: &[ScoredResponse],
    threshold: f64,
    mut source: F,
) -> Result<(Vec<TemplateRecord>, Vec<(String, String)>), ValuationError>
where
    F: FnMut(&ScoredResponse) -> Result<(String, String), String>,
{
    let mut templates = Vec::new();
    let mut skipped = Vec::new();
    for s in admitted(scored, threshold)? {
        match source(s) {
            Ok((source_oa_id, body)) => templates.push(TemplateRecord {
                topic_id: s.topic_id.clone(),
                template_id: s.response_id.clone(),
                source_oa_id,
                body,
                value: s.value.clone(),
            }),
            Err(reason) => skipped.push((s.response_id.clone(), reason)),
        }
    }
    Ok((templates, skipped))
}

pub fn read_signals(reader: impl BufRead) -> Result<Vec<SignalsRecord>, ValuationError> {
    read_jsonl(reader)
}

pub fn read_templates(reader: impl BufRead) -> Result<Vec<TemplateRecord>, ValuationError> {
    read_jsonl(reader)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, ValuationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ValuationError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ValuationError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(name: &str, raws: &[f64]) -> Vec<SignalsRecord> {
        raws.iter()
            .enumerate()
            .map(|(i, &v)| SignalsRecord {
                response_id: format!("r{i}"),
                topic_id: "c".into(),
                signals: BTreeMap::from([(name.to_string(), v)]),
            })
            .collect()
    }

    fn spec(name: &str, direction: Direction) -> Vec<SignalSpec> {
        vec![SignalSpec { name: name.into(), direction }]
    }

    fn column(out: &[BTreeMap<String, f64>], name: &str) -> Vec<f64> {
        out.iter().map(|m| m[name]).collect()
    }

    #[test]
    fn min_max_and_flip() {
        let r = records("x", &[2.0, 4.0, 6.0]);
        let hb = normalize_signals(&r, &spec("x", Direction::HigherBetter)).unwrap();
        assert_eq!(column(&hb, "x"), vec![0.0, 0.5, 1.0]);
        let lb = normalize_signals(&r, &spec("x", Direction::LowerBetter)).unwrap();
        assert_eq!(column(&lb, "x"), vec![1.0, 0.5, 0.0]);
        let flat = normalize_signals(&records("x", &[3.0; 4]), &spec("x", Direction::LowerBetter)).unwrap();
        assert_eq!(column(&flat, "x"), vec![0.5; 4]);
    }

    #[test]
    fn missing_and_extra_signals() {
        let r = records("x", &[1.0, 2.0]);
        assert!(matches!(
            normalize_signals(&r, &spec("y", Direction::HigherBetter)),
            Err(ValuationError::MissingSignal { .. })
        ));
        let mut specs = spec("x", Direction::HigherBetter);
        specs.push(SignalSpec { name: "y".into(), direction: Direction::HigherBetter });
        let mut r2 = records("x", &[1.0]);
        r2[0].signals.insert("y".into(), 1.0);
        r2[0].signals.insert("z".into(), 1.0);
        assert!(matches!(normalize_signals(&r2, &specs), Err(ValuationError::UnexpectedSignal { .. })));
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn weighted_totals() {
        let s = score_response(&map(&[("a", 1.0), ("b", 0.0)]), &map(&[("a", 0.7), ("b", 0.3)])).unwrap();
        assert!((s.total - 0.7).abs() < 1e-12);
        let comps = map(&[("fwd", 0.8), ("claims", 0.5), ("rank", 0.2)]);
        let weights = map(&[("fwd", 0.5), ("claims", 0.3), ("rank", 0.2)]);
        let s = score_response(&comps, &weights).unwrap();
        let oracle = 0.8 * 0.5 + 0.5 * 0.3 + 0.2 * 0.2;
        assert!((s.total - oracle).abs() < 1e-12 && (oracle - 0.59).abs() < 1e-12);
        let uniform = score_response(&map(&[("a", 0.3), ("b", 0.3), ("c", 0.3)]), &map(&[("a", 0.25), ("b", 0.25), ("c", 0.5)])).unwrap();
        assert!((uniform.total - 0.3).abs() < 1e-12);
    }

    #[test]
    fn weight_errors() {
        let c = map(&[("a", 1.0)]);
        assert!(matches!(score_response(&c, &map(&[("b", 1.0)])), Err(ValuationError::WeightMismatch(_))));
        assert!(matches!(score_response(&c, &map(&[("a", 0.9)])), Err(ValuationError::InvalidWeights(_))));
        assert!(ValuationConfig::default().validate().is_ok());
    }

    fn scored(totals: &[f64]) -> Vec<ScoredResponse> {
        totals
            .iter()
            .enumerate()
            .map(|(i, &t)| ScoredResponse {
                response_id: format!("r{i}"),
                topic_id: "c".into(),
                value: ValueScore { components: BTreeMap::new(), weights: BTreeMap::new(), total: t },
            })
            .collect()
    }

    fn source(s: &ScoredResponse) -> Result<(String, String), String> {
        Ok((format!("oa-{}", s.response_id), "body".into()))
    }

    #[test]
    fn admission_is_strict() {
        let (t, _) = admit_templates(&scored(&[0.59, 0.7]), 0.6, source).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].template_id, "r1");
        assert_eq!(t[0].source_oa_id, "oa-r1");
        assert_eq!(admit_templates(&scored(&[0.1, 0.2]), 0.0, source).unwrap().0.len(), 2);
        assert!(admit_templates(&scored(&[1.0, 0.9]), 1.0, source).unwrap().0.is_empty());
        assert_eq!(admit_templates(&scored(&[0.6]), 0.6, source).unwrap().0.len(), 0);
        assert!(admit_templates(&scored(&[0.5]), 1.5, source).is_err());
    }

    #[test]
    fn unresolvable_sources_are_skipped() {
        let (t, skipped) = admit_templates(&scored(&[0.9]), 0.5, |_| Err("no body".to_string())).unwrap();
        assert!(t.is_empty());
        assert_eq!(skipped, vec![("r0".to_string(), "no body".to_string())]);
    }

    #[test]
    fn signals_file_parses() {
        let body = "{\"response_id\":\"r1\",\"topic_id\":\"c1\",\"signals\":{\"a\":1.5}}\n\n";
        let r = read_signals(body.as_bytes()).unwrap();
        assert_eq!(r[0].signals["a"], 1.5);
        assert!(matches!(read_signals("{".as_bytes()), Err(ValuationError::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn normalization_is_affine_invariant(
            raws in proptest::collection::vec(-100.0f64..100.0, 2..20),
            scale in 0.01f64..100.0, shift in -1000.0f64..1000.0,
        ) {
            for dir in [Direction::HigherBetter, Direction::LowerBetter] {
                let a = normalize_signals(&records("x", &raws), &spec("x", dir)).unwrap();
                let moved: Vec<f64> = raws.iter().map(|r| r * scale + shift).collect();
                let b = normalize_signals(&records("x", &moved), &spec("x", dir)).unwrap();
                for (x, y) in column(&a, "x").iter().zip(column(&b, "x")) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn admission_monotone_in_threshold(
            totals in proptest::collection::vec(0.0f64..=1.0, 0..20),
            lo in 0.0f64..=1.0, hi in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let s = scored(&totals);
            let low: Vec<_> = admitted(&s, lo).unwrap().iter().map(|r| r.response_id.clone()).collect();
            for r in admitted(&s, hi).unwrap() {
                prop_assert!(low.contains(&r.response_id));
            }
        }

        #[test]
        fn total_monotone_in_higher_better_raw(
            raws in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..10),
            who in 0usize..10, bump in 0.0f64..5.0,
        ) {
            let who = who % raws.len();
            let config = ValuationConfig {
                signals: vec![
                    SignalSpec { name: "up".into(), direction: Direction::HigherBetter },
                    SignalSpec { name: "down".into(), direction: Direction::LowerBetter },
                ],
                weights: map(&[("up", 0.6), ("down", 0.4)]),
                threshold: 0.5,
            };
            let build = |extra: f64| -> Vec<SignalsRecord> {
                raws.iter().enumerate().map(|(i, &(u, d))| SignalsRecord {
                    response_id: format!("r{i}"),
                    topic_id: "c".into(),
                    signals: map(&[("up", if i == who { u + extra } else { u }), ("down", d)]),
                }).collect()
            };
            let before = score_all(&build(0.0), &config).unwrap()[who].value.total;
            let after = score_all(&build(bump), &config).unwrap()[who].value.total;
            prop_assert!(after >= before - 1e-12);
        }
    }
}
