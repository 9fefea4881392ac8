//! Causal subsystem graph: a directed graph over subsystem identifiers whose
//! edges encode fault propagation paths. Cycles are permitted; self-loops are
//! rejected at construction. All queries treat reachability as reflexive
//! (every node reaches itself), so a subsystem is always a candidate cause
//! for its own symptom.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a subsystem, unique within a [`CausalGraph`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsystemId(String);

impl SubsystemId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::EmptyName);
        }
        Ok(SubsystemId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubsystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for SubsystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SubsystemId::new(s)
    }
}

impl std::borrow::Borrow<str> for SubsystemId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// On-disk JSON shape of a graph. Unknown keys are rejected.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

/// Work cap for one longest-chain query, counted in DFS edge expansions.
const CHAIN_VISIT_BUDGET: usize = 200_000;

/// Directed fault propagation graph over subsystems.
///
/// Immutable after construction; all queries are pure and safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    nodes: Vec<SubsystemId>,
    index: HashMap<SubsystemId, usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    edge_count: usize,
}

impl CausalGraph {
    /// Builds a graph from node names and `(from, to)` edge pairs.
    ///
    /// Rejects empty or duplicate names, edges with unknown endpoints,
    /// duplicate edges and self-loops. Cycles are fine.
    pub fn new<N, NS, E, ES>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = NS>,
        NS: Into<String>,
        E: IntoIterator<Item = (ES, ES)>,
        ES: Into<String>,
    {
        let mut ids = Vec::new();
        let mut index = HashMap::new();
        for name in nodes {
            let id = SubsystemId::new(name)?;
            if index.contains_key(&id) {
                return Err(Error::DuplicateNode(id.0));
            }
            index.insert(id.clone(), ids.len());
            ids.push(id);
        }

        let mut out_edges = vec![Vec::new(); ids.len()];
        let mut in_edges = vec![Vec::new(); ids.len()];
        let mut seen = BTreeSet::new();
        let mut edge_count = 0;
        for pair in edges {
            let (from, to) = (pair.0.into(), pair.1.into());
            let fi = *index
                .get(from.as_str())
                .ok_or_else(|| Error::UnknownNode(from.clone()))?;
            let ti = *index
                .get(to.as_str())
                .ok_or_else(|| Error::UnknownNode(to.clone()))?;
            if fi == ti {
                return Err(Error::SelfLoop(from));
            }
            if !seen.insert((fi, ti)) {
                return Err(Error::DuplicateEdge { from, to });
            }
            out_edges[fi].push(ti);
            in_edges[ti].push(fi);
            edge_count += 1;
        }
        for adj in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            adj.sort_unstable();
        }

        Ok(CausalGraph { nodes: ids, index, out_edges, in_edges, edge_count })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Nodes in construction order.
    pub fn nodes(&self) -> &[SubsystemId] {
        &self.nodes
    }

    pub fn contains(&self, id: &SubsystemId) -> bool {
        self.index.contains_key(id)
    }

    /// Edges as `(from, to)` pairs, sorted by node index.
    pub fn edges(&self) -> Vec<(SubsystemId, SubsystemId)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (fi, targets) in self.out_edges.iter().enumerate() {
            for &ti in targets {
                out.push((self.nodes[fi].clone(), self.nodes[ti].clone()));
            }
        }
        out
    }

    pub(crate) fn node_index(&self, id: &SubsystemId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.0.clone()))
    }

    pub(crate) fn node_at(&self, i: usize) -> &SubsystemId {
        &self.nodes[i]
    }

    /// Forward BFS; the returned mask includes `from` itself.
    pub(crate) fn reach_mask(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.out_edges[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// BFS distances (in edges) from `from` to every node; `None` = unreachable.
    pub(crate) fn distances_from(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.out_edges[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Multi-source BFS over reversed edges: marks every node that can reach
    /// at least one of the seeds (seeds included).
    pub(crate) fn reverse_reach_mask(&self, seeds: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.in_edges[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// All nodes reachable from `from` via directed paths, including `from`.
    pub fn reachable_set(&self, from: &SubsystemId) -> Result<BTreeSet<SubsystemId>> {
        let fi = self.node_index(from)?;
        let mask = self.reach_mask(fi);
        Ok(mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.nodes[i].clone())
            .collect())
    }

    /// Length in edges of the shortest directed path, `Some(0)` when
    /// `from == to`, `None` when `to` is unreachable.
    pub fn shortest_distance(&self, from: &SubsystemId, to: &SubsystemId) -> Result<Option<usize>> {
        let fi = self.node_index(from)?;
        let ti = self.node_index(to)?;
        Ok(self.distances_from(fi)[ti])
    }

    /// Maximum count of symptomatic nodes along any simple directed path that
    /// begins at `start`. `start` contributes 1 iff it is itself symptomatic;
    /// beyond `start`, only consecutive symptomatic successors extend the
    /// chain. The search is restricted to `{start} ∪ symptomatic`, so the
    /// enumeration is bounded by the (small) symptom set.
    pub fn longest_symptomatic_chain(
        &self,
        start: &SubsystemId,
        symptomatic: &BTreeSet<SubsystemId>,
    ) -> Result<usize> {
        let si = self.node_index(start)?;
        let mut mask = vec![false; self.nodes.len()];
        for id in symptomatic {
            mask[self.node_index(id)?] = true;
        }
        Ok(self.chain_len_indexed(si, &mask))
    }

    pub(crate) fn chain_len_indexed(&self, start: usize, symptomatic: &[bool]) -> usize {
        let mut allowed = symptomatic.to_vec();
        let start_counts = allowed[start];
        allowed[start] = true;

        let mut on_path = vec![false; self.nodes.len()];
        on_path[start] = true;
        // Longest-path enumeration is exponential in the worst case even on
        // the symptomatic-induced subgraph, so the DFS carries a fixed visit
        // budget: the result is exact whenever the enumeration fits (small
        // or sparse symptom sets) and the best chain found so far otherwise.
        let mut budget = CHAIN_VISIT_BUDGET;
        self.chain_dfs(start, usize::from(start_counts), &allowed, &mut on_path, &mut budget)
    }

    fn chain_dfs(
        &self,
        u: usize,
        count: usize,
        allowed: &[bool],
        on_path: &mut Vec<bool>,
        budget: &mut usize,
    ) -> usize {
        let mut best = count;
        for &v in &self.out_edges[u] {
            if allowed[v] && !on_path[v] {
                if *budget == 0 {
                    break;
                }
                *budget -= 1;
                on_path[v] = true;
                best = best.max(self.chain_dfs(v, count + 1, allowed, on_path, budget));
                on_path[v] = false;
            }
        }
        best
    }

    /// Parses the JSON graph format: `{"nodes": [...], "edges": [[from, to], ...]}`.
    /// Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::json("graph file", e))?;
        CausalGraph::new(file.nodes, file.edges)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            nodes: self.nodes.iter().map(|n| n.0.clone()).collect(),
            edges: self
                .edges()
                .into_iter()
                .map(|(a, b)| (a.0, b.0))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph file serialization cannot fail")
    }

    /// DOT rendering with the diagnosis overlay: symptomatic nodes are filled
    /// yellow, selected root causes get a bold outline.
    pub fn to_dot(
        &self,
        symptomatic: &BTreeSet<SubsystemId>,
        root_causes: &BTreeSet<SubsystemId>,
    ) -> String {
        let mut out = String::from("digraph causal {\n");
        for node in &self.nodes {
            let mut attrs = Vec::new();
            if symptomatic.contains(node) {
                attrs.push("style=filled, fillcolor=yellow".to_string());
            }
            if root_causes.contains(node) {
                attrs.push("penwidth=3".to_string());
            }
            if attrs.is_empty() {
                out.push_str(&format!("    \"{}\";\n", node.0));
            } else {
                out.push_str(&format!("    \"{}\" [{}];\n", node.0, attrs.join(", ")));
            }
        }
        for (from, to) in self.edges() {
            out.push_str(&format!("    \"{}\" -> \"{}\";\n", from.0, to.0));
        }
        out.push_str("}\n");
        out
    }
}

/// Per-subsystem binary health at one time step: 0 = OK, 1 = not OK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStateVector {
    #[serde(rename = "t")]
    pub timestamp: i64,
    #[serde(rename = "h", with = "binary_states")]
    pub states: BTreeMap<SubsystemId, bool>,
}

impl HealthStateVector {
    pub fn new(timestamp: i64, states: BTreeMap<SubsystemId, bool>) -> Self {
        HealthStateVector { timestamp, states }
    }

    /// Marks exactly `symptomatic` as not-OK over the node set of `graph`.
    pub fn from_symptoms(
        graph: &CausalGraph,
        timestamp: i64,
        symptomatic: &BTreeSet<SubsystemId>,
    ) -> Result<Self> {
        for id in symptomatic {
            graph.node_index(id)?;
        }
        let states = graph
            .nodes()
            .iter()
            .map(|n| (n.clone(), symptomatic.contains(n)))
            .collect();
        Ok(HealthStateVector { timestamp, states })
    }

    /// Subsystems currently flagged as not OK.
    pub fn symptomatic(&self) -> BTreeSet<SubsystemId> {
        self.states
            .iter()
            .filter(|(_, &v)| v)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn is_all_ok(&self) -> bool {
        self.states.values().all(|&v| !v)
    }
}

/// Serializes health values as strict 0/1 integers, per the JSON-lines format
/// `{"t": ..., "h": {"sub": 0|1, ...}}`.
mod binary_states {
    use super::SubsystemId;
    use serde::de::Error as DeError;
    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        states: &BTreeMap<SubsystemId, bool>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(states.len()))?;
        for (k, &v) in states {
            map.serialize_entry(k, &u8::from(v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<SubsystemId, bool>, D::Error> {
        let raw: BTreeMap<SubsystemId, u8> = BTreeMap::deserialize(de)?;
        raw.into_iter()
            .map(|(k, v)| match v {
                0 => Ok((k, false)),
                1 => Ok((k, true)),
                other => Err(D::Error::custom(format!(
                    "health value must be 0 or 1, got {other}"
                ))),
            })
            .collect()
    }
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

    fn chain_abc() -> CausalGraph {
        CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C")]).unwrap()
    }

    #[test]
    fn construction_rejects_invalid_input() {
        assert!(matches!(
            CausalGraph::new(["A", ""], Vec::<(&str, &str)>::new()),
            Err(Error::EmptyName)
        ));
        assert!(matches!(
            CausalGraph::new(["A", "A"], Vec::<(&str, &str)>::new()),
            Err(Error::DuplicateNode(_))
        ));
        assert!(matches!(
            CausalGraph::new(["A"], [("A", "B")]),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            CausalGraph::new(["A", "B"], [("A", "A")]),
            Err(Error::SelfLoop(_))
        ));
        let dup = CausalGraph::new(["A", "B"], [("A", "B"), ("A", "B")]);
        assert!(matches!(dup, Err(Error::DuplicateEdge { .. })));
    }

    #[test]
    fn reachable_set_on_chain_cycle_and_isolated() {
        let g = chain_abc();
        assert_eq!(g.reachable_set(&sid("A")).unwrap(), set(&["A", "B", "C"]));

        let cyc = CausalGraph::new(["A", "B"], [("A", "B"), ("B", "A")]).unwrap();
        assert_eq!(cyc.reachable_set(&sid("B")).unwrap(), set(&["A", "B"]));

        let iso = CausalGraph::new(["X"], Vec::<(&str, &str)>::new()).unwrap();
        assert_eq!(iso.reachable_set(&sid("X")).unwrap(), set(&["X"]));

        assert!(matches!(g.reachable_set(&sid("Z")), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn shortest_distance_on_chain_and_cycle() {
        let g = chain_abc();
        assert_eq!(g.shortest_distance(&sid("A"), &sid("C")).unwrap(), Some(2));
        assert_eq!(g.shortest_distance(&sid("C"), &sid("A")).unwrap(), None);
        assert_eq!(g.shortest_distance(&sid("B"), &sid("B")).unwrap(), Some(0));

        // 3-cycle: B -> C -> A is the only simple path from B to A.
        let cyc =
            CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")]).unwrap();
        assert_eq!(cyc.shortest_distance(&sid("B"), &sid("A")).unwrap(), Some(2));
    }

    #[test]
    fn symptomatic_chain_counts_consecutive_symptoms() {
        let g = chain_abc();
        // Start not symptomatic: successors B, C still form a chain of 2.
        assert_eq!(g.longest_symptomatic_chain(&sid("A"), &set(&["B", "C"])).unwrap(), 2);
        // Start symptomatic: counts itself plus C.
        assert_eq!(g.longest_symptomatic_chain(&sid("B"), &set(&["B", "C"])).unwrap(), 2);
        // Empty symptom set.
        assert_eq!(g.longest_symptomatic_chain(&sid("A"), &BTreeSet::new()).unwrap(), 0);
        // A gap cuts the chain: with only C symptomatic, from A the walk
        // must pass non-symptomatic B, so nothing beyond the gap counts.
        assert_eq!(g.longest_symptomatic_chain(&sid("A"), &set(&["C"])).unwrap(), 0);
        assert_eq!(g.longest_symptomatic_chain(&sid("C"), &set(&["C"])).unwrap(), 1);
    }

    #[test]
    fn chain_handles_cycles_without_double_counting() {
        let g =
            CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")]).unwrap();
        // All symptomatic on a 3-cycle: a simple path visits each node once.
        assert_eq!(
            g.longest_symptomatic_chain(&sid("A"), &set(&["A", "B", "C"])).unwrap(),
            3
        );
    }

    #[test]
    fn json_round_trip_and_unknown_key_rejection() {
        let g = chain_abc();
        let text = g.to_json();
        let back = CausalGraph::from_json(&text).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());

        let bad = r#"{"nodes": ["A"], "edges": [], "comment": "nope"}"#;
        assert!(matches!(CausalGraph::from_json(bad), Err(Error::Json { .. })));
    }

    #[test]
    fn dot_marks_symptoms_and_root_causes() {
        let g = chain_abc();
        let dot = g.to_dot(&set(&["B", "C"]), &set(&["B"]));
        assert!(dot.contains("\"B\" [style=filled, fillcolor=yellow, penwidth=3];"));
        assert!(dot.contains("\"C\" [style=filled, fillcolor=yellow];"));
        assert!(dot.contains("\"A\" -> \"B\";"));
    }

    #[test]
    fn health_vector_serializes_as_binary_map() {
        let g = chain_abc();
        let h = HealthStateVector::from_symptoms(&g, 5, &set(&["B"])).unwrap();
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"t":5,"h":{"A":0,"B":1,"C":0}}"#);
        let back: HealthStateVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);

        let bad = r#"{"t":0,"h":{"A":2}}"#;
        assert!(serde_json::from_str::<HealthStateVector>(bad).is_err());

        assert_eq!(h.symptomatic(), set(&["B"]));
        assert!(!h.is_all_ok());
    }
}
