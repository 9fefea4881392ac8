//! Graph diagnosis: score candidate root causes by four weighted criteria
//! (reachability, distance, anomaly status, anomaly chains), select every
//! candidate within a theta-relative band of the best score, and iterate on
//! the still-unexplained symptoms until all of them are explained.
//!
//! The search deliberately avoids the exhaustive subset space: per iteration
//! each node is scored at most once, so the reach/dist/anom work stays within
//! O(|S|^2 (|S|+|E|)) over a whole call. The chain criterion is bounded
//! separately by restricting its path enumeration to the symptomatic set.

use std::collections::BTreeSet;

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, HealthStateVector, SubsystemId};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weights of the four scoring criteria, in the order
/// (reachability, distance, anomaly status, anomaly chains).
/// Each weight lies in [0, 1] and they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionWeights {
    pub reach: f64,
    pub dist: f64,
    pub anom: f64,
    pub chain: f64,
}

impl CriterionWeights {
    pub fn new(reach: f64, dist: f64, anom: f64, chain: f64) -> Result<Self> {
        for (name, w) in [("reach", reach), ("dist", dist), ("anom", anom), ("chain", chain)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidWeights(format!(
                    "weight {name} = {w} is outside [0, 1]"
                )));
            }
        }
        let sum = reach + dist + anom + chain;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(CriterionWeights { reach, dist, anom, chain })
    }

    /// Equal weights 0.25 each, the balanced default.
    pub fn equal() -> Self {
        CriterionWeights { reach: 0.25, dist: 0.25, anom: 0.25, chain: 0.25 }
    }

    /// Preset used for water-treatment style evaluation: extra emphasis on
    /// the anomaly status criterion.
    pub fn swat() -> Self {
        CriterionWeights { reach: 0.2, dist: 0.2, anom: 0.4, chain: 0.2 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.reach, self.dist, self.anom, self.chain]
    }
}

impl Serialize for CriterionWeights {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for CriterionWeights {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let [w1, w2, w3, w4] = <[f64; 4]>::deserialize(de)?;
        CriterionWeights::new(w1, w2, w3, w4).map_err(D::Error::custom)
    }
}

/// Per-candidate score breakdown. Every component and the weighted total lie
/// in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: SubsystemId,
    #[serde(rename = "reach")]
    pub reach_score: f64,
    #[serde(rename = "dist")]
    pub dist_score: f64,
    #[serde(rename = "anom")]
    pub anom_score: f64,
    #[serde(rename = "chain")]
    pub chain_score: f64,
    pub total: f64,
}

/// One refinement round: the symptoms still unexplained entering the round,
/// all candidate scores against them, the selection band, and what the
/// selection explained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub unexplained_before: BTreeSet<SubsystemId>,
    pub scores: Vec<CandidateScore>,
    pub sigma_max: f64,
    pub selected: BTreeSet<SubsystemId>,
    #[serde(skip)]
    pub explained_after: BTreeSet<SubsystemId>,
}

/// Outcome of [`diagnose`]: the selected root causes plus the full
/// per-iteration trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub root_causes: BTreeSet<SubsystemId>,
    pub theta: f64,
    pub weights: CriterionWeights,
    pub iterations: Vec<IterationTrace>,
}

impl DiagnosisResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnosis result serialization cannot fail")
    }
}

/// All nodes whose reachable set (reflexive) intersects `targets`.
/// Empty targets yield an empty set.
pub fn candidate_set(
    g: &CausalGraph,
    targets: &BTreeSet<SubsystemId>,
) -> Result<BTreeSet<SubsystemId>> {
    let seeds = targets
        .iter()
        .map(|t| g.node_index(t))
        .collect::<Result<Vec<_>>>()?;
    let mask = g.reverse_reach_mask(&seeds);
    Ok(mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| g.node_at(i).clone())
        .collect())
}

/// Scores one candidate against a symptom set.
///
/// With `n = |symptomatic|`:
/// - reach: fraction of symptoms reachable from the candidate;
/// - dist: mean proximity `1/(1+d)` to each symptom (0 when unreachable);
/// - anom: the candidate's own health state;
/// - chain: longest consecutive symptomatic chain from the candidate, over `n`.
pub fn score_candidate(
    g: &CausalGraph,
    candidate: &SubsystemId,
    symptomatic: &BTreeSet<SubsystemId>,
    h: &HealthStateVector,
    w: &CriterionWeights,
) -> Result<CandidateScore> {
    CriterionWeights::new(w.reach, w.dist, w.anom, w.chain)?;
    if symptomatic.is_empty() {
        return Err(Error::EmptySymptoms);
    }
    let ci = g.node_index(candidate)?;
    let mut target_mask = vec![false; g.node_count()];
    for id in symptomatic {
        target_mask[g.node_index(id)?] = true;
    }
    let anom = *h
        .states
        .get(candidate)
        .ok_or_else(|| Error::HealthMismatch(format!("no health state for `{candidate}`")))?;

    let score = score_indexed(g, ci, &target_mask, symptomatic.len(), anom, w);
    if score.reach_score == 0.0 {
        return Err(Error::NotACandidate(candidate.to_string()));
    }
    Ok(CandidateScore {
        candidate: candidate.clone(),
        reach_score: score.reach_score,
        dist_score: score.dist_score,
        anom_score: score.anom_score,
        chain_score: score.chain_score,
        total: score.total,
    })
}

struct RawScore {
    reach_score: f64,
    dist_score: f64,
    anom_score: f64,
    chain_score: f64,
    total: f64,
}

/// One BFS gives both the reach and distance criteria; the chain criterion
/// runs its restricted DFS on top.
fn score_indexed(
    g: &CausalGraph,
    ci: usize,
    target_mask: &[bool],
    n_targets: usize,
    anomalous: bool,
    w: &CriterionWeights,
) -> RawScore {
    let n = n_targets as f64;
    let dist = g.distances_from(ci);
    let mut reached = 0usize;
    let mut proximity = 0.0;
    for (i, d) in dist.iter().enumerate() {
        if target_mask[i] {
            if let Some(d) = d {
                reached += 1;
                proximity += 1.0 / (1.0 + *d as f64);
            }
        }
    }
    let reach_score = reached as f64 / n;
    let dist_score = proximity / n;
    let anom_score = f64::from(u8::from(anomalous));
    let chain_score = g.chain_len_indexed(ci, target_mask) as f64 / n;
    let total = w.reach * reach_score
        + w.dist * dist_score
        + w.anom * anom_score
        + w.chain * chain_score;
    RawScore { reach_score, dist_score, anom_score, chain_score, total }
}

/// Runs the full iterative diagnosis.
///
/// Symptoms are read from `h`; candidates are re-scored against the current
/// unexplained set each round (the anomaly criterion always uses the global
/// health state), every candidate with `total >= theta * sigma_max` is
/// selected, and symptoms reachable from a selected node are marked
/// explained. An empty symptom set returns an empty result.
pub fn diagnose(
    g: &CausalGraph,
    h: &HealthStateVector,
    w: &CriterionWeights,
    theta: f64,
) -> Result<DiagnosisResult> {
    CriterionWeights::new(w.reach, w.dist, w.anom, w.chain)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidTheta(theta));
    }
    if h.states.len() != g.node_count() {
        return Err(Error::HealthMismatch(format!(
            "graph has {} nodes but health vector covers {}",
            g.node_count(),
            h.states.len()
        )));
    }
    let mut anomalous = vec![false; g.node_count()];
    for (id, &state) in &h.states {
        anomalous[g.node_index(id)?] = state;
    }

    let mut unexplained: Vec<usize> =
        (0..g.node_count()).filter(|&i| anomalous[i]).collect();
    let mut root_causes = BTreeSet::new();
    let mut iterations = Vec::new();

    while !unexplained.is_empty() {
        let candidate_mask = g.reverse_reach_mask(&unexplained);
        let mut target_mask = vec![false; g.node_count()];
        for &u in &unexplained {
            target_mask[u] = true;
        }

        // Deterministic order: candidates sorted by id before selection.
        let mut candidates: Vec<usize> = (0..g.node_count())
            .filter(|&i| candidate_mask[i])
            .collect();
        candidates.sort_by(|&a, &b| g.node_at(a).cmp(g.node_at(b)));

        let scores: Vec<(usize, CandidateScore)> = candidates
            .iter()
            .map(|&ci| {
                let s = score_indexed(g, ci, &target_mask, unexplained.len(), anomalous[ci], w);
                (
                    ci,
                    CandidateScore {
                        candidate: g.node_at(ci).clone(),
                        reach_score: s.reach_score,
                        dist_score: s.dist_score,
                        anom_score: s.anom_score,
                        chain_score: s.chain_score,
                        total: s.total,
                    },
                )
            })
            .collect();

        let sigma_max = scores.iter().map(|(_, s)| s.total).fold(0.0, f64::max);
        let cutoff = theta * sigma_max;
        let selected_idx: Vec<usize> = scores
            .iter()
            .filter(|(_, s)| s.total >= cutoff)
            .map(|(ci, _)| *ci)
            .collect();

        let mut explained_mask = vec![false; g.node_count()];
        for &ci in &selected_idx {
            for (i, reachable) in g.reach_mask(ci).into_iter().enumerate() {
                if reachable {
                    explained_mask[i] = true;
                }
            }
        }
        let explained: Vec<usize> = unexplained
            .iter()
            .copied()
            .filter(|&u| explained_mask[u])
            .collect();
        assert!(
            !explained.is_empty(),
            "the top-scoring candidate always explains at least one symptom"
        );

        iterations.push(IterationTrace {
            unexplained_before: unexplained.iter().map(|&u| g.node_at(u).clone()).collect(),
            scores: scores.into_iter().map(|(_, s)| s).collect(),
            sigma_max,
            selected: selected_idx.iter().map(|&c| g.node_at(c).clone()).collect(),
            explained_after: explained.iter().map(|&u| g.node_at(u).clone()).collect(),
        });
        root_causes.extend(selected_idx.iter().map(|&c| g.node_at(c).clone()));
        unexplained.retain(|&u| !explained_mask[u]);
    }

    Ok(DiagnosisResult { root_causes, theta, weights: *w, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sid(s: &str) -> SubsystemId {
        SubsystemId::new(s).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<SubsystemId> {
        ids.iter().map(|s| sid(s)).collect()
    }

    fn chain_abc() -> CausalGraph {
        CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C")]).unwrap()
    }

    fn health(g: &CausalGraph, symptomatic: &[&str]) -> HealthStateVector {
        HealthStateVector::from_symptoms(g, 0, &set(symptomatic)).unwrap()
    }

    #[test]
    fn weights_are_validated() {
        assert!(CriterionWeights::new(0.25, 0.25, 0.25, 0.25).is_ok());
        assert!(CriterionWeights::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(CriterionWeights::new(0.5, 0.3, 0.1, 0.2).is_err());
        assert!(CriterionWeights::new(f64::NAN, 0.3, 0.3, 0.4).is_err());
        let sum = CriterionWeights::new(0.2, 0.2, 0.4, 0.2).unwrap();
        assert_eq!(sum.as_array(), CriterionWeights::swat().as_array());
    }

    #[test]
    fn weights_serialize_as_array() {
        let w = CriterionWeights::equal();
        assert_eq!(serde_json::to_string(&w).unwrap(), "[0.25,0.25,0.25,0.25]");
        let back: CriterionWeights = serde_json::from_str("[0.2,0.2,0.4,0.2]").unwrap();
        assert_eq!(back, CriterionWeights::swat());
        assert!(serde_json::from_str::<CriterionWeights>("[0.9,0.9,0.1,0.1]").is_err());
    }

    #[test]
    fn candidate_set_examples() {
        let g = chain_abc();
        assert_eq!(candidate_set(&g, &set(&["C"])).unwrap(), set(&["A", "B", "C"]));

        let two = CausalGraph::new(["A", "B", "X", "Y"], [("A", "B"), ("X", "Y")]).unwrap();
        assert_eq!(candidate_set(&two, &set(&["B"])).unwrap(), set(&["A", "B"]));

        let cyc = CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")]).unwrap();
        assert_eq!(candidate_set(&cyc, &set(&["B"])).unwrap(), set(&["A", "B", "C"]));

        assert!(candidate_set(&g, &BTreeSet::new()).unwrap().is_empty());
        assert!(candidate_set(&g, &set(&["Z"])).is_err());
    }

    #[test]
    fn chain_scores_match_hand_computation() {
        let g = chain_abc();
        let h = health(&g, &["B", "C"]);
        let w = CriterionWeights::equal();
        let sym = set(&["B", "C"]);

        let b = score_candidate(&g, &sid("B"), &sym, &h, &w).unwrap();
        assert!((b.reach_score - 1.0).abs() < 1e-12);
        assert!((b.dist_score - 0.75).abs() < 1e-12);
        assert!((b.anom_score - 1.0).abs() < 1e-12);
        assert!((b.chain_score - 1.0).abs() < 1e-12);
        assert!((b.total - 0.9375).abs() < 1e-12);

        let a = score_candidate(&g, &sid("A"), &sym, &h, &w).unwrap();
        assert!((a.reach_score - 1.0).abs() < 1e-12);
        assert!((a.dist_score - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((a.anom_score - 0.0).abs() < 1e-12);
        assert!((a.chain_score - 1.0).abs() < 1e-12);
        assert!((a.total - 0.25 * (1.0 + (0.5 + 1.0 / 3.0) / 2.0 + 1.0)).abs() < 1e-12);

        let c = score_candidate(&g, &sid("C"), &sym, &h, &w).unwrap();
        assert!((c.reach_score - 0.5).abs() < 1e-12);
        assert!((c.dist_score - 0.5).abs() < 1e-12);
        assert!((c.anom_score - 1.0).abs() < 1e-12);
        assert!((c.chain_score - 0.5).abs() < 1e-12);
        assert!((c.total - 0.625).abs() < 1e-12);
    }

    #[test]
    fn score_candidate_checks_preconditions() {
        let g = chain_abc();
        let h = health(&g, &["B"]);
        let w = CriterionWeights::equal();
        assert!(matches!(
            score_candidate(&g, &sid("A"), &BTreeSet::new(), &h, &w),
            Err(Error::EmptySymptoms)
        ));
        // C cannot reach the only symptom B.
        assert!(matches!(
            score_candidate(&g, &sid("C"), &set(&["B"]), &h, &w),
            Err(Error::NotACandidate(_))
        ));
        assert!(score_candidate(&g, &sid("Z"), &set(&["B"]), &h, &w).is_err());
    }

    #[test]
    fn diagnose_chain_selects_the_middle_node() {
        let g = chain_abc();
        let h = health(&g, &["B", "C"]);
        let result = diagnose(&g, &h, &CriterionWeights::equal(), 1.0).unwrap();
        assert_eq!(result.root_causes, set(&["B"]));
        assert_eq!(result.iterations.len(), 1);
        let it = &result.iterations[0];
        assert!((it.sigma_max - 0.9375).abs() < 1e-12);
        assert_eq!(it.unexplained_before, set(&["B", "C"]));
        assert_eq!(it.selected, set(&["B"]));
        assert_eq!(it.explained_after, set(&["B", "C"]));
    }

    #[test]
    fn diagnose_theta_band_adds_lower_scores() {
        let g = chain_abc();
        let h = health(&g, &["B", "C"]);
        let w = CriterionWeights::equal();
        // Totals: B = 0.9375, C = 0.625, A = 0.60417. C enters at
        // theta <= 0.625/0.9375, A at theta <= 0.60417/0.9375.
        let at = |theta: f64| diagnose(&g, &h, &w, theta).unwrap().iterations[0].selected.clone();
        assert_eq!(at(1.0), set(&["B"]));
        assert_eq!(at(0.66), set(&["B", "C"]));
        assert_eq!(at(0.65), set(&["B", "C"]));
        assert_eq!(at(0.64), set(&["A", "B", "C"]));
    }

    #[test]
    fn diagnose_single_node() {
        let g = CausalGraph::new(["X"], Vec::<(&str, &str)>::new()).unwrap();
        let h = health(&g, &["X"]);
        for theta in [0.0, 0.5, 1.0] {
            let result = diagnose(&g, &h, &CriterionWeights::swat(), theta).unwrap();
            assert_eq!(result.root_causes, set(&["X"]));
        }
    }

    #[test]
    fn diagnose_disjoint_components_selects_one_each() {
        let g = CausalGraph::new(["A", "B", "X", "Y"], [("A", "B"), ("X", "Y")]).unwrap();
        let h = health(&g, &["B", "Y"]);
        let result = diagnose(&g, &h, &CriterionWeights::equal(), 1.0).unwrap();
        assert_eq!(result.root_causes, set(&["B", "Y"]));
        // Both symptoms explained.
        for s in ["B", "Y"] {
            let covered = result
                .root_causes
                .iter()
                .any(|r| g.reachable_set(r).unwrap().contains(&sid(s)));
            assert!(covered, "symptom {s} not explained");
        }
    }

    #[test]
    fn diagnose_empty_symptoms_returns_empty_result() {
        let g = chain_abc();
        let h = health(&g, &[]);
        let result = diagnose(&g, &h, &CriterionWeights::equal(), 0.9).unwrap();
        assert!(result.root_causes.is_empty());
        assert!(result.iterations.is_empty());
    }

    #[test]
    fn diagnose_validates_inputs() {
        let g = chain_abc();
        let h = health(&g, &["B"]);
        let w = CriterionWeights::equal();
        assert!(matches!(diagnose(&g, &h, &w, 1.5), Err(Error::InvalidTheta(_))));
        assert!(matches!(diagnose(&g, &h, &w, f64::NAN), Err(Error::InvalidTheta(_))));

        let mut short = BTreeMap::new();
        short.insert(sid("A"), true);
        let bad = HealthStateVector::new(0, short);
        assert!(matches!(diagnose(&g, &bad, &w, 0.9), Err(Error::HealthMismatch(_))));

        let mut wrong = BTreeMap::new();
        wrong.insert(sid("A"), false);
        wrong.insert(sid("B"), true);
        wrong.insert(sid("Z"), false);
        let bad = HealthStateVector::new(0, wrong);
        assert!(diagnose(&g, &bad, &w, 0.9).is_err());
    }

    #[test]
    fn theta_zero_selects_every_positive_candidate_in_first_iteration() {
        let g = CausalGraph::new(
            ["A", "B", "C", "D", "E"],
            [("A", "B"), ("B", "C"), ("C", "D"), ("B", "E")],
        )
        .unwrap();
        let h = health(&g, &["C", "E"]);
        let result = diagnose(&g, &h, &CriterionWeights::equal(), 0.0).unwrap();
        let first = &result.iterations[0];
        for s in &first.scores {
            if s.total > 0.0 {
                assert!(first.selected.contains(&s.candidate));
            }
        }
    }

    #[test]
    fn source_node_dominates_reach_only_weights() {
        let g = chain_abc();
        let h = health(&g, &["A", "B", "C"]);
        let w = CriterionWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let result = diagnose(&g, &h, &w, 1.0).unwrap();
        let first = &result.iterations[0];
        let max = first.scores.iter().map(|s| s.total).fold(0.0, f64::max);
        let argmax: BTreeSet<_> = first
            .scores
            .iter()
            .filter(|s| s.total == max)
            .map(|s| s.candidate.clone())
            .collect();
        assert!(argmax.contains(&sid("A")));
    }

    #[test]
    fn result_json_has_interface_shape() {
        let g = chain_abc();
        let h = health(&g, &["B", "C"]);
        let result = diagnose(&g, &h, &CriterionWeights::equal(), 1.0).unwrap();
        let json = result.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["root_causes"], serde_json::json!(["B"]));
        assert_eq!(value["theta"], serde_json::json!(1.0));
        assert_eq!(value["weights"], serde_json::json!([0.25, 0.25, 0.25, 0.25]));
        let it = &value["iterations"][0];
        assert_eq!(it["unexplained_before"], serde_json::json!(["B", "C"]));
        assert_eq!(it["selected"], serde_json::json!(["B"]));
        assert!(it.get("explained_after").is_none());
        let score_keys: Vec<&String> =
            it["scores"][0].as_object().unwrap().keys().collect();
        assert_eq!(score_keys, ["anom", "candidate", "chain", "dist", "reach", "total"]);
        // Scores are sorted by candidate id.
        let names: Vec<&str> = it["scores"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["candidate"].as_str().unwrap())
            .collect();
        assert_eq!(names, ["A", "B", "C"]);
    }
}
