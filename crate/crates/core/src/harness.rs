//! Experiment harness: canonical scenario diagnoses with theta sweeps, the
//! seeded multi-trial benchmark study with five-category outcome
//! classification, and the attack-table evaluation for ingested datasets.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnosis::{diagnose, CriterionWeights, DiagnosisResult};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, HealthStateVector, SubsystemId};
use crate::ingest::AnnotatedRun;
use crate::simulator::{make_trial, TrialConfig};
use crate::symptoms::{
    calibrate_thresholds, fit_linear_subspace_model, health_series, BinarizationConfig,
    ResidualModel, ThresholdMethod,
};

/// Five-way outcome of one benchmark trial, determined in this order:
/// missed symptom, missed cause, no reduction, perfect, reduced set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCategory {
    MissedSymptom,
    MissedCause,
    NoReduction,
    ReducedSet,
    Perfect,
}

impl OutcomeCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeCategory::MissedSymptom => "missed_symptom",
            OutcomeCategory::MissedCause => "missed_cause",
            OutcomeCategory::NoReduction => "no_reduction",
            OutcomeCategory::ReducedSet => "reduced_set",
            OutcomeCategory::Perfect => "perfect",
        }
    }
}

/// Classifies one trial from the true cause, detected symptoms, and
/// diagnosed causes.
pub fn classify(
    s_true: &SubsystemId,
    s_sym: &BTreeSet<SubsystemId>,
    s_causal: &BTreeSet<SubsystemId>,
) -> OutcomeCategory {
    if !s_sym.contains(s_true) {
        OutcomeCategory::MissedSymptom
    } else if !s_causal.contains(s_true) {
        OutcomeCategory::MissedCause
    } else if s_causal.len() >= s_sym.len() {
        OutcomeCategory::NoReduction
    } else if s_causal.len() == 1 {
        OutcomeCategory::Perfect
    } else {
        OutcomeCategory::ReducedSet
    }
}

/// A built-in diagnosis scenario: a graph plus a fixed symptom pattern.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub graph: CausalGraph,
    pub health: HealthStateVector,
}

fn scenario(
    name: &'static str,
    description: &'static str,
    nodes: &[&str],
    edges: &[(&str, &str)],
    symptomatic: &[&str],
) -> Scenario {
    let graph = CausalGraph::new(nodes.iter().copied(), edges.iter().copied())
        .expect("built-in scenario graphs are valid");
    let set: BTreeSet<SubsystemId> = symptomatic
        .iter()
        .map(|s| SubsystemId::new(*s).expect("valid name"))
        .collect();
    let health = HealthStateVector::from_symptoms(&graph, 0, &set)
        .expect("built-in scenario symptoms are valid");
    Scenario { name, description, graph, health }
}

/// The four canonical scenarios spanning acyclic/cyclic graphs with single
/// and multiple symptom clusters.
pub fn canonical_scenarios() -> Vec<Scenario> {
    vec![
        scenario(
            "acyclic-single",
            "chain with one downstream symptom cluster",
            &["A", "B", "C", "D"],
            &[("A", "B"), ("B", "C"), ("C", "D")],
            &["B", "C", "D"],
        ),
        scenario(
            "acyclic-multi",
            "two disconnected chains, one symptom cluster each",
            &["A", "B", "C", "D", "E", "F", "G"],
            &[("A", "B"), ("B", "C"), ("C", "D"), ("E", "F"), ("F", "G")],
            &["B", "C", "F", "G"],
        ),
        scenario(
            "cyclic-single",
            "four-ring with a chord, one symptom cluster",
            &["A", "B", "C", "D"],
            &[("A", "B"), ("B", "C"), ("C", "D"), ("D", "A"), ("B", "D")],
            &["C", "D"],
        ),
        scenario(
            "cyclic-multi",
            "two coupled cycles with two symptom clusters",
            &["A", "B", "C", "D", "E", "F", "G", "H", "I"],
            &[
                ("A", "B"),
                ("B", "C"),
                ("C", "D"),
                ("D", "A"),
                ("D", "E"),
                ("E", "F"),
                ("F", "G"),
                ("G", "E"),
                ("G", "H"),
                ("H", "I"),
            ],
            &["B", "C", "F", "G", "H"],
        ),
    ]
}

/// Thin orchestration over [`diagnose`], kept for symmetry with the sweep
/// and experiment runners.
pub fn run_scenario(
    graph: &CausalGraph,
    h: &HealthStateVector,
    w: &CriterionWeights,
    theta: f64,
) -> Result<DiagnosisResult> {
    diagnose(graph, h, w, theta)
}

/// One emitted sweep row: a threshold whose root-cause set differs from the
/// previously emitted row, plus the newly added nodes relative to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub root_causes: BTreeSet<SubsystemId>,
    pub newly_added: BTreeSet<SubsystemId>,
}

/// Sweep outcome: deduplicated rows plus nesting warnings. Nesting of
/// root-cause sets across decreasing theta is an empirical observation, not
/// a theorem, so violations are reported instead of failing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

/// Runs [`diagnose`] for each threshold of a strictly descending list and
/// emits a row whenever the root-cause set changes.
pub fn theta_sweep(
    graph: &CausalGraph,
    h: &HealthStateVector,
    w: &CriterionWeights,
    thetas: &[f64],
) -> Result<SweepReport> {
    if thetas.is_empty() {
        return Err(Error::InvalidSweep("empty theta list".into()));
    }
    for pair in thetas.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::InvalidSweep(format!(
                "thetas must be strictly descending ({} then {})",
                pair[0], pair[1]
            )));
        }
    }

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut warnings = Vec::new();
    for &theta in thetas {
        let result = diagnose(graph, h, w, theta)?;
        let causes = result.root_causes;
        match rows.last() {
            Some(prev) if prev.root_causes == causes => continue,
            _ => {}
        }
        let prev = rows.last().map(|r| r.root_causes.clone()).unwrap_or_default();
        if !prev.is_subset(&causes) {
            let dropped: Vec<String> =
                prev.difference(&causes).map(|s| s.to_string()).collect();
            let message = format!(
                "theta {theta}: root-cause set is not a superset of the previous row \
                 (dropped {})",
                dropped.join(", ")
            );
            log::warn!("{message}");
            warnings.push(message);
        }
        let newly_added = causes.difference(&prev).cloned().collect();
        rows.push(SweepRow { theta, root_causes: causes, newly_added });
    }
    Ok(SweepReport { rows, warnings })
}

/// The default sweep grid: 1.0 down to 0.0 in 0.1 decrements.
pub fn default_thetas() -> Vec<f64> {
    (0..=10).rev().map(|i| i as f64 / 10.0).collect()
}

/// Configuration of the seeded multi-trial study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub trial: TrialConfig,
    pub theta: f64,
    pub weights: CriterionWeights,
    pub master_seed: u64,
    pub window_len: usize,
    pub latent_dim: usize,
    pub percentile: f64,
    pub smoothing_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_trials: 100,
            trial: TrialConfig::default(),
            theta: 0.9,
            weights: CriterionWeights::equal(),
            master_seed: 0,
            window_len: 32,
            latent_dim: 16,
            percentile: 75.0,
            smoothing_window: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub n_nodes: usize,
    pub fault_scale: f64,
    pub s_true: SubsystemId,
    pub s_sym: BTreeSet<SubsystemId>,
    pub s_causal: BTreeSet<SubsystemId>,
    pub category: OutcomeCategory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub seed: u64,
    pub reason: String,
}

/// Aggregate counts and rates over the completed trials.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutcomeAggregate {
    pub missed_symptom: usize,
    pub missed_cause: usize,
    pub no_reduction: usize,
    pub reduced_set: usize,
    pub perfect: usize,
    pub inclusion_rate: f64,
    pub reduction_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub aggregate: OutcomeAggregate,
}

impl ExperimentReport {
    pub fn completed(&self) -> usize {
        self.trials.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Runs the full study: per seeded trial, generate the dataset, fit the
/// default linear residual model, calibrate percentile thresholds on the
/// calibration segment, majority-vote the health states over the fault
/// interval into a symptom set, diagnose, and classify. Trials run in
/// parallel; each is fully independent with a derived seed, and records are
/// assembled in trial order. Individual trial failures are recorded with
/// their reason and excluded from the aggregate rather than aborting the
/// study.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.n_trials == 0 {
        return Err(Error::InvalidSampling("n_trials must be positive".into()));
    }
    CriterionWeights::new(
        config.weights.reach,
        config.weights.dist,
        config.weights.anom,
        config.weights.chain,
    )?;
    let mut master = ChaCha8Rng::seed_from_u64(config.master_seed);
    let seeds: Vec<u64> = (0..config.n_trials).map(|_| master.next_u64()).collect();

    let outcomes: Vec<std::result::Result<TrialRecord, TrialFailure>> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            run_single_trial(config, index, seed).map_err(|e| TrialFailure {
                trial_index: index,
                seed,
                reason: e.to_string(),
            })
        })
        .collect();

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(record) => trials.push(record),
            Err(failure) => failures.push(failure),
        }
    }
    let aggregate = aggregate_outcomes(&trials);
    Ok(ExperimentReport { trials, failures, aggregate })
}

fn run_single_trial(
    config: &ExperimentConfig,
    index: usize,
    seed: u64,
) -> Result<TrialRecord> {
    let ds = make_trial(&config.trial, seed)?;
    let model =
        fit_linear_subspace_model(&ds.train, &ds.map, config.window_len, config.latent_dim)?;
    let base = BinarizationConfig::new(
        ThresholdMethod::Percentile { q: config.percentile },
        config.smoothing_window,
    )?;
    let calibrated = calibrate_thresholds(&model, &ds.calibration, &base)?;
    let states = health_series(&model, &calibrated, &ds.map, &ds.test)?;

    let s_sym = majority_symptoms(&states, ds.fault.start_time, ds.fault.end_time);
    let h = HealthStateVector::from_symptoms(&ds.graph, ds.fault.start_time, &s_sym)?;
    let result = diagnose(&ds.graph, &h, &config.weights, config.theta)?;
    let s_causal = result.root_causes;
    let category = classify(&ds.fault.target, &s_sym, &s_causal);

    Ok(TrialRecord {
        trial_index: index,
        seed,
        n_nodes: ds.manifest.n_nodes,
        fault_scale: ds.fault.scale_factor,
        s_true: ds.fault.target.clone(),
        s_sym,
        s_causal,
        category,
    })
}

/// Incident-level symptom set: a subsystem is symptomatic when it is flagged
/// in a strict majority of the windows whose span lies fully inside
/// `[start, end)`.
pub fn majority_symptoms(
    states: &[HealthStateVector],
    start: i64,
    end: i64,
) -> BTreeSet<SubsystemId> {
    // Window timestamps are window ends; a window of length L ending at t
    // spans [t - L + 1, t]. Using the recorded end timestamps directly keeps
    // this independent of the window length: we count windows ending inside
    // the interval.
    let in_interval: Vec<&HealthStateVector> = states
        .iter()
        .filter(|s| s.timestamp >= start && s.timestamp < end)
        .collect();
    if in_interval.is_empty() {
        return BTreeSet::new();
    }
    let majority = in_interval.len() / 2;
    let mut counts: std::collections::BTreeMap<&SubsystemId, usize> =
        std::collections::BTreeMap::new();
    for state in &in_interval {
        for (sub, &flag) in &state.states {
            if flag {
                *counts.entry(sub).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c > majority)
        .map(|(sub, _)| sub.clone())
        .collect()
}

pub fn aggregate_outcomes(trials: &[TrialRecord]) -> OutcomeAggregate {
    let mut agg = OutcomeAggregate::default();
    for trial in trials {
        match trial.category {
            OutcomeCategory::MissedSymptom => agg.missed_symptom += 1,
            OutcomeCategory::MissedCause => agg.missed_cause += 1,
            OutcomeCategory::NoReduction => agg.no_reduction += 1,
            OutcomeCategory::ReducedSet => agg.reduced_set += 1,
            OutcomeCategory::Perfect => agg.perfect += 1,
        }
    }
    let completed = trials.len();
    if completed > 0 {
        let included = agg.no_reduction + agg.reduced_set + agg.perfect;
        let reduced = agg.reduced_set + agg.perfect;
        agg.inclusion_rate = included as f64 / completed as f64;
        agg.reduction_rate = reduced as f64 / completed as f64;
    }
    agg
}

/// One row of the attack evaluation table: attack id, annotated subsystems,
/// detected symptoms, and diagnosis candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackEvalRow {
    pub attack: String,
    pub attacked: BTreeSet<SubsystemId>,
    pub symptoms: BTreeSet<SubsystemId>,
    pub candidates: BTreeSet<SubsystemId>,
}

/// Evaluates every annotated attack of an ingested run: health states over
/// the attack interval (majority vote), then diagnosis. Mirrors the trial
/// study's aggregation.
pub fn evaluate_attacks(
    run: &AnnotatedRun,
    model: &dyn ResidualModel,
    cfg: &BinarizationConfig,
    graph: &CausalGraph,
    weights: &CriterionWeights,
    theta: f64,
) -> Result<Vec<AttackEvalRow>> {
    run.map.validate_against_graph(graph)?;
    let window_len = model.window_len();
    let mut rows = Vec::with_capacity(run.attacks.len());
    for attack in &run.attacks {
        let first = run.telemetry.row_at_or_after(attack.start);
        let last = run.telemetry.row_at_or_after(attack.end);
        // Include enough leading context that the first in-interval
        // timestamps have complete windows.
        let slice_start = first.saturating_sub(window_len - 1);
        let slice = run.telemetry.slice_rows(slice_start, last)?;
        let states = if slice.n_rows() >= window_len {
            health_series(model, cfg, &run.map, &slice)?
        } else {
            Vec::new()
        };
        let symptoms = majority_symptoms(&states, attack.start, attack.end);
        let candidates = if symptoms.is_empty() {
            BTreeSet::new()
        } else {
            let h = HealthStateVector::from_symptoms(graph, attack.start, &symptoms)?;
            diagnose(graph, &h, weights, theta)?.root_causes
        };
        rows.push(AttackEvalRow {
            attack: attack.id.clone(),
            attacked: attack.subsystems.clone(),
            symptoms,
            candidates,
        });
    }
    Ok(rows)
}

/// Renders the attack table as CSV with the four evaluation columns.
pub fn attack_table_csv(rows: &[AttackEvalRow]) -> String {
    let join = |set: &BTreeSet<SubsystemId>| {
        set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    };
    let mut out = String::from("attack,attacked_subsystems,symptoms,dx_candidates\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.attack,
            join(&row.attacked),
            join(&row.symptoms),
            join(&row.candidates)
        ));
    }
    out
}

/// Renders a sweep as CSV with the three sensitivity-table columns.
pub fn sweep_table_csv(rows: &[SweepRow]) -> String {
    let join = |set: &BTreeSet<SubsystemId>| {
        set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    };
    let mut out = String::from("theta,all_root_causes,newly_added\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.theta,
            join(&row.root_causes),
            join(&row.newly_added)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> SubsystemId {
        SubsystemId::new(s).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<SubsystemId> {
        ids.iter().map(|s| sid(s)).collect()
    }

    #[test]
    fn classification_follows_the_category_order() {
        let t = sid("s1");
        assert_eq!(
            classify(&t, &set(&["s2"]), &set(&["s1"])),
            OutcomeCategory::MissedSymptom
        );
        assert_eq!(
            classify(&t, &set(&["s1", "s2"]), &set(&["s2"])),
            OutcomeCategory::MissedCause
        );
        assert_eq!(
            classify(&t, &set(&["s1", "s2"]), &set(&["s1", "s2"])),
            OutcomeCategory::NoReduction
        );
        assert_eq!(
            classify(&t, &set(&["s1", "s2"]), &set(&["s1"])),
            OutcomeCategory::Perfect
        );
        assert_eq!(
            classify(&t, &set(&["s1", "s2", "s3"]), &set(&["s1", "s3"])),
            OutcomeCategory::ReducedSet
        );
        // A sole symptom diagnosed exactly counts as no_reduction: the
        // category order puts the size check first.
        assert_eq!(
            classify(&t, &set(&["s1"]), &set(&["s1"])),
            OutcomeCategory::NoReduction
        );
    }

    #[test]
    fn scenario_one_has_a_single_explaining_root() {
        let scenarios = canonical_scenarios();
        let s = &scenarios[0];
        let result = run_scenario(&s.graph, &s.health, &CriterionWeights::equal(), 1.0).unwrap();
        assert_eq!(result.root_causes, set(&["B"]));
        let symptomatic = s.health.symptomatic();
        for sym in &symptomatic {
            let explained = result
                .root_causes
                .iter()
                .any(|r| s.graph.reachable_set(r).unwrap().contains(sym));
            assert!(explained);
        }
    }

    #[test]
    fn scenario_two_selects_one_node_per_cluster() {
        let scenarios = canonical_scenarios();
        let s = &scenarios[1];
        let result = run_scenario(&s.graph, &s.health, &CriterionWeights::equal(), 1.0).unwrap();
        assert_eq!(result.root_causes, set(&["B", "F"]));
    }

    #[test]
    fn scenario_three_terminates_within_symptom_bound() {
        let scenarios = canonical_scenarios();
        let s = &scenarios[2];
        let result = run_scenario(&s.graph, &s.health, &CriterionWeights::equal(), 1.0).unwrap();
        assert!(result.iterations.len() <= s.health.symptomatic().len());
        assert_eq!(result.root_causes, set(&["C"]));
    }

    #[test]
    fn sweep_dedupes_and_tracks_newly_added() {
        let scenarios = canonical_scenarios();
        let s = &scenarios[0];
        let report = theta_sweep(
            &s.graph,
            &s.health,
            &CriterionWeights::equal(),
            &default_thetas(),
        )
        .unwrap();
        assert!(!report.rows.is_empty());
        // First row is the argmax diagnosis at theta = 1.0.
        assert_eq!(report.rows[0].theta, 1.0);
        assert_eq!(report.rows[0].root_causes, report.rows[0].newly_added);
        // Within one scenario the sets only grow here, so no warnings.
        assert!(report.warnings.is_empty());
        // The final row covers every positive-score first-iteration candidate.
        let last = &report.rows[report.rows.len() - 1];
        let result = diagnose(&s.graph, &s.health, &CriterionWeights::equal(), 0.0).unwrap();
        for score in &result.iterations[0].scores {
            if score.total > 0.0 {
                assert!(last.root_causes.contains(&score.candidate));
            }
        }
        // Consecutive rows really differ.
        for pair in report.rows.windows(2) {
            assert_ne!(pair[0].root_causes, pair[1].root_causes);
        }
    }

    #[test]
    fn sweep_rejects_unsorted_thetas() {
        let scenarios = canonical_scenarios();
        let s = &scenarios[0];
        let err = theta_sweep(
            &s.graph,
            &s.health,
            &CriterionWeights::equal(),
            &[0.5, 0.7],
        );
        assert!(matches!(err, Err(Error::InvalidSweep(_))));
    }

    #[test]
    fn constant_diagnosis_emits_one_row() {
        let single = CausalGraph::new(["X"], Vec::<(&str, &str)>::new()).unwrap();
        let hs = HealthStateVector::from_symptoms(&single, 0, &set(&["X"])).unwrap();
        let report = theta_sweep(
            &single,
            &hs,
            &CriterionWeights::equal(),
            &default_thetas(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn majority_vote_needs_a_strict_majority() {
        let g = CausalGraph::new(["A", "B"], [("A", "B")]).unwrap();
        let mk = |t: i64, sym: &[&str]| {
            HealthStateVector::from_symptoms(&g, t, &set(sym)).unwrap()
        };
        let states = vec![
            mk(0, &["A"]),
            mk(1, &["A", "B"]),
            mk(2, &[]),
            mk(3, &["A"]),
            mk(4, &["B"]),
        ];
        // Windows 0..5 all inside; A flagged 3/5 (> 2), B 2/5.
        assert_eq!(majority_symptoms(&states, 0, 5), set(&["A"]));
        // Outside the interval nothing counts.
        assert!(majority_symptoms(&states, 10, 20).is_empty());
    }

    #[test]
    fn aggregate_is_conserved() {
        let records: Vec<TrialRecord> = [
            OutcomeCategory::Perfect,
            OutcomeCategory::ReducedSet,
            OutcomeCategory::MissedSymptom,
            OutcomeCategory::NoReduction,
            OutcomeCategory::Perfect,
        ]
        .iter()
        .enumerate()
        .map(|(i, &category)| TrialRecord {
            trial_index: i,
            seed: i as u64,
            n_nodes: 5,
            fault_scale: 5.0,
            s_true: sid("s1"),
            s_sym: set(&["s1"]),
            s_causal: set(&["s1"]),
            category,
        })
        .collect();
        let agg = aggregate_outcomes(&records);
        assert_eq!(
            agg.missed_symptom + agg.missed_cause + agg.no_reduction + agg.reduced_set
                + agg.perfect,
            records.len()
        );
        assert!((agg.inclusion_rate - 4.0 / 5.0).abs() < 1e-12);
        assert!((agg.reduction_rate - 3.0 / 5.0).abs() < 1e-12);
    }
}
