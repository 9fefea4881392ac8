//! Symptoms generator: pluggable residual models reconstruct windowed
//! telemetry per subsystem, reconstruction errors are aggregated to
//! subsystem level, optionally smoothed with a moving median, and binarized
//! against thresholds calibrated on held-out nominal data.
//!
//! Two residual models satisfy the same contract: a deterministic linear
//! subspace model (the default) and a subsystem-structured autoencoder whose
//! per-subsystem latent blocks form a composite latent space.

mod autoencoder;
mod linear;

pub use autoencoder::{fit_autoencoder_model, SubsystemAutoencoder};
pub use linear::{fit_linear_subspace_model, LinearSubspaceModel};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, HealthStateVector, SubsystemId};
use crate::timeseries::TimeSeriesFrame;

/// Partition of the monitored signals: each subsystem owns a non-empty,
/// ordered, pairwise-disjoint set of signal names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct SubsystemSignalsMap {
    assignments: BTreeMap<SubsystemId, Vec<String>>,
}

impl SubsystemSignalsMap {
    pub fn new(assignments: BTreeMap<SubsystemId, Vec<String>>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidMap("no subsystems".into()));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for (sub, signals) in &assignments {
            if signals.is_empty() {
                return Err(Error::InvalidMap(format!("subsystem `{sub}` has no signals")));
            }
            for s in signals {
                if s.is_empty() {
                    return Err(Error::InvalidMap(format!("subsystem `{sub}` has an empty signal name")));
                }
                if !seen.insert(s) {
                    return Err(Error::InvalidMap(format!("signal `{s}` assigned more than once")));
                }
            }
        }
        Ok(SubsystemSignalsMap { assignments })
    }

    pub fn subsystems(&self) -> impl Iterator<Item = &SubsystemId> {
        self.assignments.keys()
    }

    pub fn n_subsystems(&self) -> usize {
        self.assignments.len()
    }

    pub fn signals_of(&self, id: &SubsystemId) -> Result<&[String]> {
        self.assignments
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SubsystemId, &[String])> {
        self.assignments.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// All signals, grouped by subsystem in map order.
    pub fn all_signals(&self) -> Vec<&str> {
        self.assignments
            .values()
            .flat_map(|v| v.iter().map(String::as_str))
            .collect()
    }

    pub fn min_signal_count(&self) -> usize {
        self.assignments.values().map(Vec::len).min().unwrap_or(0)
    }

    /// Requires the map's subsystems to be exactly the graph's node set.
    pub fn validate_against_graph(&self, graph: &CausalGraph) -> Result<()> {
        let map_set: BTreeSet<&SubsystemId> = self.assignments.keys().collect();
        let graph_set: BTreeSet<&SubsystemId> = graph.nodes().iter().collect();
        if map_set != graph_set {
            return Err(Error::InvalidMap(format!(
                "map covers {} subsystems but the graph has {}",
                map_set.len(),
                graph_set.len()
            )));
        }
        Ok(())
    }

    /// Requires the union of assigned signals to equal the frame's signals.
    pub fn validate_signals(&self, frame: &TimeSeriesFrame) -> Result<()> {
        let mapped: BTreeSet<&str> = self.all_signals().into_iter().collect();
        let present: BTreeSet<&str> =
            frame.signal_names().iter().map(String::as_str).collect();
        if mapped != present {
            let missing: Vec<&&str> = mapped.difference(&present).collect();
            let extra: Vec<&&str> = present.difference(&mapped).collect();
            return Err(Error::SignalMismatch(format!(
                "missing from frame: {missing:?}; not in map: {extra:?}"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("subsystem-signals map", e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self).expect("map serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

impl TryFrom<BTreeMap<String, Vec<String>>> for SubsystemSignalsMap {
    type Error = Error;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (name, signals) in raw {
            assignments.insert(SubsystemId::new(name)?, signals);
        }
        SubsystemSignalsMap::new(assignments)
    }
}

impl From<SubsystemSignalsMap> for BTreeMap<String, Vec<String>> {
    fn from(map: SubsystemSignalsMap) -> Self {
        map.assignments
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

/// Window reconstruction errors: per signal, and aggregated per subsystem as
/// the arithmetic mean over the subsystem's signals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualVector {
    pub timestamp: i64,
    pub per_signal: BTreeMap<String, f64>,
    pub per_subsystem: BTreeMap<SubsystemId, f64>,
}

/// Thresholding rule applied to the (smoothed) per-subsystem residual series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    MeanPlusKSigma { k: f64 },
    Percentile { q: f64 },
}

/// Binarization settings plus the calibrated per-subsystem thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarizationConfig {
    pub method: ThresholdMethod,
    /// Moving-median width over the residual series; 0 or 1 disables smoothing.
    pub smoothing_window: usize,
    pub thresholds: BTreeMap<SubsystemId, f64>,
}

impl BinarizationConfig {
    pub fn new(method: ThresholdMethod, smoothing_window: usize) -> Result<Self> {
        match method {
            ThresholdMethod::MeanPlusKSigma { k } if !(k > 0.0) => {
                return Err(Error::InvalidConfig(format!("k must be positive, got {k}")));
            }
            ThresholdMethod::Percentile { q } if !(q > 0.0 && q < 100.0) => {
                return Err(Error::InvalidConfig(format!("q must lie in (0, 100), got {q}")));
            }
            _ => {}
        }
        Ok(BinarizationConfig { method, smoothing_window, thresholds: BTreeMap::new() })
    }

    pub fn threshold(&self, id: &SubsystemId) -> Result<f64> {
        self.thresholds
            .get(id)
            .copied()
            .ok_or_else(|| Error::Uncalibrated(id.to_string()))
    }

    pub fn is_calibrated_for(&self, map: &SubsystemSignalsMap) -> bool {
        map.subsystems().all(|s| self.thresholds.contains_key(s))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("binarization config", e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self).expect("config serialization cannot fail")
    }
}

/// Behavioral contract of a fitted reconstruction model: deterministic
/// residuals for any window of the configured length.
pub trait ResidualModel: Send + Sync {
    fn window_len(&self) -> usize;

    fn map(&self) -> &SubsystemSignalsMap;

    /// Residuals of the window starting at row `start` of `frame`.
    fn residuals_at(&self, frame: &TimeSeriesFrame, start: usize) -> Result<ResidualVector>;

    /// Residuals of a frame that is exactly one window long.
    fn residuals(&self, window: &TimeSeriesFrame) -> Result<ResidualVector> {
        if window.n_rows() != self.window_len() {
            return Err(Error::InvalidFrame(format!(
                "window has {} rows but the model expects {}",
                window.n_rows(),
                self.window_len()
            )));
        }
        self.residuals_at(window, 0)
    }
}

/// Serializable wrapper over the concrete residual models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearSubspaceModel),
    Autoencoder(SubsystemAutoencoder),
}

impl ResidualModel for FittedModel {
    fn window_len(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.window_len(),
            FittedModel::Autoencoder(m) => m.window_len(),
        }
    }

    fn map(&self) -> &SubsystemSignalsMap {
        match self {
            FittedModel::Linear(m) => m.map(),
            FittedModel::Autoencoder(m) => m.map(),
        }
    }

    fn residuals_at(&self, frame: &TimeSeriesFrame, start: usize) -> Result<ResidualVector> {
        match self {
            FittedModel::Linear(m) => m.residuals_at(frame, start),
            FittedModel::Autoencoder(m) => m.residuals_at(frame, start),
        }
    }
}

impl FittedModel {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("model file", e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self).expect("model serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::io(format!("write {}", path.display()), e))
    }
}

impl From<LinearSubspaceModel> for FittedModel {
    fn from(m: LinearSubspaceModel) -> Self {
        FittedModel::Linear(m)
    }
}

impl From<SubsystemAutoencoder> for FittedModel {
    fn from(m: SubsystemAutoencoder) -> Self {
        FittedModel::Autoencoder(m)
    }
}

/// Start offsets of non-overlapping windows (used for fitting and
/// calibration).
pub(crate) fn disjoint_window_starts(rows: usize, window_len: usize) -> Vec<usize> {
    (0..)
        .map(|i| i * window_len)
        .take_while(|start| start + window_len <= rows)
        .collect()
}

/// Start offsets of stride-1 sliding windows (used for inference).
pub(crate) fn sliding_window_starts(rows: usize, window_len: usize) -> Vec<usize> {
    if rows < window_len {
        return Vec::new();
    }
    (0..=rows - window_len).collect()
}

/// q-th percentile with linear interpolation between order statistics.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Centered moving median; the window shrinks at the series boundaries.
/// Widths 0 and 1 are the identity.
pub(crate) fn moving_median(series: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return series.to_vec();
    }
    let n = series.len();
    let before = (width - 1) / 2;
    let after = width / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            let mut window: Vec<f64> = series[lo..=hi].to_vec();
            window.sort_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
            let m = window.len();
            if m % 2 == 1 {
                window[m / 2]
            } else {
                0.5 * (window[m / 2 - 1] + window[m / 2])
            }
        })
        .collect()
}

const MIN_CALIBRATION_WINDOWS: usize = 30;

/// Computes per-subsystem residual series over non-overlapping held-out
/// windows, smooths them per the config, and sets one threshold per
/// subsystem (mean + k*sigma, or the q-th percentile).
///
/// The held-out data must be disjoint from the training data; that is the
/// caller's responsibility.
pub fn calibrate_thresholds(
    model: &dyn ResidualModel,
    heldout_nominal: &TimeSeriesFrame,
    cfg: &BinarizationConfig,
) -> Result<BinarizationConfig> {
    let starts = disjoint_window_starts(heldout_nominal.n_rows(), model.window_len());
    if starts.len() < MIN_CALIBRATION_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least {MIN_CALIBRATION_WINDOWS} windows, got {}",
            starts.len()
        )));
    }
    let series = subsystem_residual_series(model, heldout_nominal, &starts)?;

    let mut calibrated = cfg.clone();
    calibrated.thresholds.clear();
    for (sub, raw) in series {
        let smoothed = moving_median(&raw, cfg.smoothing_window);
        let threshold = match cfg.method {
            ThresholdMethod::MeanPlusKSigma { k } => {
                let n = smoothed.len() as f64;
                let mean = smoothed.iter().sum::<f64>() / n;
                let var = smoothed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                mean + k * var.sqrt()
            }
            ThresholdMethod::Percentile { q } => {
                let mut sorted = smoothed.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
                percentile(&sorted, q)
            }
        };
        calibrated.thresholds.insert(sub, threshold);
    }
    Ok(calibrated)
}

/// Residual series per subsystem over the given window starts.
fn subsystem_residual_series(
    model: &dyn ResidualModel,
    frame: &TimeSeriesFrame,
    starts: &[usize],
) -> Result<BTreeMap<SubsystemId, Vec<f64>>> {
    let mut series: BTreeMap<SubsystemId, Vec<f64>> = model
        .map()
        .subsystems()
        .map(|s| (s.clone(), Vec::with_capacity(starts.len())))
        .collect();
    for &start in starts {
        let rv = model.residuals_at(frame, start)?;
        for (sub, value) in rv.per_subsystem {
            series.get_mut(&sub).expect("model map is fixed").push(value);
        }
    }
    Ok(series)
}

/// Health states for a single window: a subsystem is flagged not-OK when its
/// residual exceeds the calibrated threshold. The timestamp is the window
/// end.
pub fn health_states(
    model: &dyn ResidualModel,
    cfg: &BinarizationConfig,
    map: &SubsystemSignalsMap,
    window: &TimeSeriesFrame,
) -> Result<HealthStateVector> {
    validate_detection_inputs(model, cfg, map, window)?;
    let rv = model.residuals(window)?;
    let mut states = BTreeMap::new();
    for (sub, value) in rv.per_subsystem {
        let threshold = cfg.threshold(&sub)?;
        states.insert(sub, value > threshold);
    }
    Ok(HealthStateVector::new(rv.timestamp, states))
}

/// Health states over stride-1 sliding windows of `frame`, with moving-median
/// smoothing applied to each subsystem's residual series before thresholding.
pub fn health_series(
    model: &dyn ResidualModel,
    cfg: &BinarizationConfig,
    map: &SubsystemSignalsMap,
    frame: &TimeSeriesFrame,
) -> Result<Vec<HealthStateVector>> {
    validate_detection_inputs(model, cfg, map, frame)?;
    let starts = sliding_window_starts(frame.n_rows(), model.window_len());
    if starts.is_empty() {
        return Ok(Vec::new());
    }
    let series = subsystem_residual_series(model, frame, &starts)?;
    let smoothed: BTreeMap<&SubsystemId, Vec<f64>> = series
        .iter()
        .map(|(sub, raw)| (sub, moving_median(raw, cfg.smoothing_window)))
        .collect();

    let window_len = model.window_len();
    starts
        .iter()
        .enumerate()
        .map(|(w, &start)| {
            let timestamp = frame.timestamps()[start + window_len - 1];
            let mut states = BTreeMap::new();
            for (sub, values) in &smoothed {
                let threshold = cfg.threshold(sub)?;
                states.insert((*sub).clone(), values[w] > threshold);
            }
            Ok(HealthStateVector::new(timestamp, states))
        })
        .collect()
}

fn validate_detection_inputs(
    model: &dyn ResidualModel,
    cfg: &BinarizationConfig,
    map: &SubsystemSignalsMap,
    frame: &TimeSeriesFrame,
) -> Result<()> {
    if map != model.map() {
        return Err(Error::SignalMismatch(
            "subsystem-signals map differs from the model's map".into(),
        ));
    }
    map.validate_signals(frame)?;
    for sub in map.subsystems() {
        cfg.threshold(sub)?;
    }
    Ok(())
}

/// Flattens the window rows `start..start+window_len` of the subsystem's
/// signals, time-major, resolving columns by name.
pub(crate) fn flatten_window(
    frame: &TimeSeriesFrame,
    columns: &[usize],
    start: usize,
    window_len: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(window_len * columns.len());
    for r in start..start + window_len {
        for &c in columns {
            out.push(frame.value(r, c));
        }
    }
    out
}

pub(crate) fn resolve_columns(frame: &TimeSeriesFrame, signals: &[String]) -> Result<Vec<usize>> {
    signals.iter().map(|s| frame.column_index(s)).collect()
}

pub(crate) fn check_window_bounds(
    frame: &TimeSeriesFrame,
    start: usize,
    window_len: usize,
) -> Result<()> {
    if start + window_len > frame.n_rows() {
        return Err(Error::InvalidFrame(format!(
            "window {start}..{} out of bounds for {} rows",
            start + window_len,
            frame.n_rows()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map2() -> SubsystemSignalsMap {
        let mut m = BTreeMap::new();
        m.insert(SubsystemId::new("s1").unwrap(), vec!["a".into(), "b".into()]);
        m.insert(SubsystemId::new("s2").unwrap(), vec!["c".into()]);
        SubsystemSignalsMap::new(m).unwrap()
    }

    #[test]
    fn map_invariants_are_enforced() {
        let mut dup = BTreeMap::new();
        dup.insert(SubsystemId::new("s1").unwrap(), vec!["a".into()]);
        dup.insert(SubsystemId::new("s2").unwrap(), vec!["a".into()]);
        assert!(matches!(SubsystemSignalsMap::new(dup), Err(Error::InvalidMap(_))));

        let mut empty = BTreeMap::new();
        empty.insert(SubsystemId::new("s1").unwrap(), vec![]);
        assert!(SubsystemSignalsMap::new(empty).is_err());
    }

    #[test]
    fn map_json_round_trip() {
        let m = map2();
        let text = m.to_json();
        assert_eq!(SubsystemSignalsMap::from_json(&text).unwrap(), m);
        assert!(SubsystemSignalsMap::from_json(r#"{"s1": []}"#).is_err());
    }

    #[test]
    fn map_validates_against_graph_and_frame() {
        let m = map2();
        let g = CausalGraph::new(["s1", "s2"], [("s1", "s2")]).unwrap();
        assert!(m.validate_against_graph(&g).is_ok());
        let g3 = CausalGraph::new(["s1", "s2", "s3"], [("s1", "s2")]).unwrap();
        assert!(m.validate_against_graph(&g3).is_err());

        let frame = TimeSeriesFrame::from_rows(
            vec![0],
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![0.0, 0.0, 0.0]],
        )
        .unwrap();
        assert!(m.validate_signals(&frame).is_ok());
        let extra = TimeSeriesFrame::from_rows(
            vec![0],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[vec![0.0; 4]],
        )
        .unwrap();
        assert!(m.validate_signals(&extra).is_err());
    }

    #[test]
    fn percentile_uses_linear_interpolation() {
        let series: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&series, 75.0) - 75.25).abs() < 1e-12);
        assert!((percentile(&series, 99.0) - 99.01).abs() < 1e-12);
        assert_eq!(percentile(&[42.0], 50.0), 42.0);
        // Percentile monotonicity in q.
        assert!(percentile(&series, 99.0) >= percentile(&series, 75.0));
    }

    #[test]
    fn moving_median_shrinks_at_boundaries() {
        let series = [1.0, 100.0, 2.0, 3.0, 4.0];
        assert_eq!(moving_median(&series, 0), series.to_vec());
        assert_eq!(moving_median(&series, 1), series.to_vec());
        let smoothed = moving_median(&series, 3);
        // Interior: median of the 3-wide neighborhood.
        assert_eq!(smoothed[1], 2.0);
        assert_eq!(smoothed[2], 3.0);
        // Edges: shrunk windows [1,100] and [3,4].
        assert_eq!(smoothed[0], 50.5);
        assert_eq!(smoothed[4], 3.5);
    }

    #[test]
    fn config_validation() {
        assert!(BinarizationConfig::new(ThresholdMethod::MeanPlusKSigma { k: 0.0 }, 0).is_err());
        assert!(BinarizationConfig::new(ThresholdMethod::Percentile { q: 100.0 }, 0).is_err());
        assert!(BinarizationConfig::new(ThresholdMethod::Percentile { q: 75.0 }, 5).is_ok());
    }

    #[test]
    fn window_starts() {
        assert_eq!(disjoint_window_starts(10, 4), vec![0, 4]);
        assert_eq!(disjoint_window_starts(3, 4), Vec::<usize>::new());
        assert_eq!(sliding_window_starts(6, 4), vec![0, 1, 2]);
        assert_eq!(sliding_window_starts(3, 4), Vec::<usize>::new());
    }
}
