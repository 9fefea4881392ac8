//! Ingestion of real-world, water-treatment-shaped datasets: CSV telemetry,
//! automatic subsystem assignment from signal naming codes, and attack
//! interval annotations for evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, SubsystemId};
use crate::symptoms::{BinarizationConfig, SubsystemSignalsMap, ThresholdMethod};
use crate::timeseries::TimeSeriesFrame;

/// A documented attack: which subsystems were manipulated, over which time
/// interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackAnnotation {
    pub id: String,
    pub subsystems: BTreeSet<SubsystemId>,
    pub start: i64,
    pub end: i64,
}

impl AttackAnnotation {
    pub fn validate(&self) -> Result<()> {
        if self.subsystems.is_empty() {
            return Err(Error::InvalidAnnotation(format!(
                "attack `{}` names no subsystems",
                self.id
            )));
        }
        if self.start >= self.end {
            return Err(Error::InvalidAnnotation(format!(
                "attack `{}` has an empty interval [{}, {})",
                self.id, self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Extracts a process-stage code from a signal name. The default takes the
/// first digit of the first three-digit run, so `FIT101` maps to stage `1`
/// and the subsystem is named `P1`.
#[derive(Debug, Clone)]
pub struct CodeExtractor {
    pattern: Regex,
    prefix: String,
}

impl CodeExtractor {
    pub fn new(pattern: &str, prefix: &str) -> Result<Self> {
        let regex = Regex::new(pattern)
            .map_err(|e| Error::PatternMismatch(format!("invalid pattern: {e}")))?;
        if regex.captures_len() < 2 {
            return Err(Error::PatternMismatch(
                "pattern needs one capture group for the stage code".into(),
            ));
        }
        Ok(CodeExtractor { pattern: regex, prefix: prefix.to_string() })
    }

    pub fn subsystem_for(&self, signal: &str) -> Option<String> {
        self.pattern
            .captures(signal)
            .and_then(|c| c.get(1))
            .map(|m| format!("{}{}", self.prefix, m.as_str()))
    }
}

impl Default for CodeExtractor {
    fn default() -> Self {
        CodeExtractor::new(r"([0-9])[0-9]{2}", "P").expect("default pattern is valid")
    }
}

/// Groups signals into subsystems by their extracted stage code, preserving
/// the input order within each subsystem. Every name must match; offenders
/// are listed in the error.
pub fn auto_map_signals(
    signal_names: &[String],
    extractor: &CodeExtractor,
) -> Result<SubsystemSignalsMap> {
    let mut offenders = Vec::new();
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in signal_names {
        match extractor.subsystem_for(name) {
            Some(sub) => grouped.entry(sub).or_default().push(name.clone()),
            None => offenders.push(name.clone()),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::PatternMismatch(offenders.join(", ")));
    }
    let mut assignments = BTreeMap::new();
    for (sub, signals) in grouped {
        assignments.insert(SubsystemId::new(sub)?, signals);
    }
    SubsystemSignalsMap::new(assignments)
}

/// Telemetry plus validated attack annotations, ready for evaluation.
#[derive(Debug, Clone)]
pub struct AnnotatedRun {
    pub telemetry: TimeSeriesFrame,
    pub map: SubsystemSignalsMap,
    pub attacks: Vec<AttackAnnotation>,
}

/// Loads telemetry and its attack list, validating every annotation against
/// the graph and the telemetry time range.
pub fn load_annotated_run(
    telemetry_csv: &Path,
    attacks_json: &Path,
    map: &SubsystemSignalsMap,
    graph: &CausalGraph,
) -> Result<AnnotatedRun> {
    let telemetry = TimeSeriesFrame::load_csv(telemetry_csv)?;
    let text = std::fs::read_to_string(attacks_json)
        .map_err(|e| Error::io(format!("open {}", attacks_json.display()), e))?;
    let attacks: Vec<AttackAnnotation> = serde_json::from_str(&text)
        .map_err(|e| Error::json(format!("attacks file {}", attacks_json.display()), e))?;

    map.validate_against_graph(graph)?;
    map.validate_signals(&telemetry)?;
    annotate(telemetry, map.clone(), attacks)
}

/// In-memory variant of [`load_annotated_run`] with the same validation.
pub fn annotate(
    telemetry: TimeSeriesFrame,
    map: SubsystemSignalsMap,
    attacks: Vec<AttackAnnotation>,
) -> Result<AnnotatedRun> {
    let (first, last) = match (telemetry.timestamps().first(), telemetry.timestamps().last()) {
        (Some(&first), Some(&last)) => (first, last),
        _ => return Err(Error::InvalidFrame("telemetry has no rows".into())),
    };
    for attack in &attacks {
        attack.validate()?;
        for sub in &attack.subsystems {
            if map.signals_of(sub).is_err() {
                return Err(Error::InvalidAnnotation(format!(
                    "attack `{}` references unknown subsystem `{sub}`",
                    attack.id
                )));
            }
        }
        if attack.start < first || attack.end > last + 1 {
            return Err(Error::InvalidAnnotation(format!(
                "attack `{}` interval [{}, {}) lies outside the telemetry range [{first}, {}]",
                attack.id, attack.start, attack.end, last
            )));
        }
    }
    Ok(AnnotatedRun { telemetry, map, attacks })
}

/// A named evaluation preset: criterion weights plus binarization defaults.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub weights: crate::diagnosis::CriterionWeights,
    pub method: ThresholdMethod,
    pub smoothing_window: usize,
}

/// Looks up a preset by name. `swat` emphasizes the anomaly-status criterion
/// and uses conservative 99th-percentile thresholds with moving-median
/// smoothing.
pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "swat" => Some(Preset {
            name: "swat",
            weights: crate::diagnosis::CriterionWeights::swat(),
            method: ThresholdMethod::Percentile { q: 99.0 },
            smoothing_window: 5,
        }),
        _ => None,
    }
}

impl Preset {
    pub fn binarization(&self) -> BinarizationConfig {
        BinarizationConfig::new(self.method, self.smoothing_window)
            .expect("preset settings are valid")
    }
}
