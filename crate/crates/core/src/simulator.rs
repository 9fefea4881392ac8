//! Controllable synthetic benchmarks: sample a random causal graph, derive
//! block-structured linear dynamics `dy/dt = A y + B u` whose couplings
//! follow the graph's edges, integrate with piecewise-constant random
//! control inputs, and inject multiplicative parameter faults into a chosen
//! subsystem's diagonal block.

use std::collections::BTreeMap;
use std::ops::{Range, RangeInclusive};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, SubsystemId};
use crate::symptoms::SubsystemSignalsMap;
use crate::timeseries::TimeSeriesFrame;

/// Linear time-invariant dynamics with a contiguous block of state indices
/// per subsystem. Couplings: the block at (rows of `m`, columns of `l`) is
/// nonzero only if the graph has the edge `(l, m)`, i.e. states of `l` drive
/// states of `m`. Diagonal blocks are always permitted. The matrix is
/// spectrally shifted so every eigenvalue has real part <= -damping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    blocks: Vec<(SubsystemId, Range<usize>)>,
    pub noise_std: f64,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        blocks: Vec<(SubsystemId, Range<usize>)>,
        noise_std: f64,
    ) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(Error::InvalidSystem("A must be square".into()));
        }
        if b.nrows() != dim {
            return Err(Error::InvalidSystem("B must have one row per state".into()));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::InvalidSystem(format!("noise_std = {noise_std} must be >= 0")));
        }
        let mut covered = 0usize;
        for (id, range) in &blocks {
            if range.start != covered {
                return Err(Error::InvalidSystem(format!(
                    "block of `{id}` starts at {} but {covered} states are covered so far",
                    range.start
                )));
            }
            let size = range.end - range.start;
            if !(2..=5).contains(&size) {
                return Err(Error::InvalidSystem(format!(
                    "block of `{id}` has {size} states; sizes must lie in [2, 5]"
                )));
            }
            covered = range.end;
        }
        if covered != dim {
            return Err(Error::InvalidSystem(format!(
                "blocks cover {covered} states but A is {dim}x{dim}"
            )));
        }
        Ok(LtiSystem { a, b, blocks, noise_std })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn blocks(&self) -> &[(SubsystemId, Range<usize>)] {
        &self.blocks
    }

    pub fn block_of(&self, id: &SubsystemId) -> Result<Range<usize>> {
        self.blocks
            .iter()
            .find(|(b, _)| b == id)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Signal names per subsystem, `<node>_y<j>`, in block order.
    pub fn signals_map(&self) -> SubsystemSignalsMap {
        let mut assignments = BTreeMap::new();
        for (id, range) in &self.blocks {
            let signals = (0..range.end - range.start)
                .map(|j| format!("{id}_y{j}"))
                .collect();
            assignments.insert(id.clone(), signals);
        }
        SubsystemSignalsMap::new(assignments).expect("block layout is a valid partition")
    }
}

/// Multiplicative parameter fault over a time interval: the selected entries
/// of the target subsystem's diagonal block of `A` are scaled by
/// `scale_factor` while `start_time <= t < end_time`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: SubsystemId,
    pub scale_factor: f64,
    #[serde(default)]
    pub affected_entries: EntrySelection,
    pub start_time: i64,
    pub end_time: i64,
}

/// Which entries of the target's diagonal block the fault scales.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySelection {
    /// Every nonzero entry of the diagonal block.
    #[default]
    AllNonzero,
    /// Only the main-diagonal entries within the block.
    MainDiagonal,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::InvalidFault(format!(
                "scale factor must be a positive real, got {}",
                self.scale_factor
            )));
        }
        if self.start_time >= self.end_time {
            return Err(Error::InvalidFault(format!(
                "fault interval [{}, {}) is empty",
                self.start_time, self.end_time
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant random control: each channel holds an i.i.d. uniform
/// level in `offset ± amplitude`, resampling independently per step with
/// probability `1 / hold_steps` (geometric holds with mean `hold_steps`).
/// Memoryless switching keeps the window population stationary, so windows
/// taken at any offset see the same switch-phase distribution. A nonzero
/// offset keeps the plant at a nonzero operating point, the way physical
/// processes run around set-points rather than around zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub hold_steps: usize,
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for ControlPolicy {
    fn default() -> Self {
        ControlPolicy { hold_steps: 12, amplitude: 0.5, offset: 1.0 }
    }
}

impl ControlPolicy {
    fn sample_level<R: Rng>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.offset - self.amplitude..=self.offset + self.amplitude)
    }
}

/// Samples a weakly connected directed graph with
/// `ceil(edge_density * n * (n-1))` edges (clamped to the maximum the mode
/// allows), self-loops excluded. With `allow_cycles = false` all edges
/// follow a random topological order. Deterministic per seed.
pub fn sample_graph(
    n_nodes: usize,
    edge_density: f64,
    allow_cycles: bool,
    seed: u64,
) -> Result<CausalGraph> {
    if !(2..=200).contains(&n_nodes) {
        return Err(Error::InvalidSampling(format!(
            "n_nodes = {n_nodes} must lie in [2, 200]"
        )));
    }
    if !(edge_density > 0.0 && edge_density <= 1.0) {
        return Err(Error::InvalidSampling(format!(
            "edge_density = {edge_density} must lie in (0, 1]"
        )));
    }
    let n = n_nodes;
    let max_edges = if allow_cycles { n * (n - 1) } else { n * (n - 1) / 2 };
    let target = ((edge_density * (n * (n - 1)) as f64).ceil() as usize).min(max_edges);
    if target < n - 1 {
        return Err(Error::InvalidSampling(format!(
            "edge_density = {edge_density} yields {target} edges but weak connectivity needs \
             at least {}; use a density of at least {:.4}",
            n - 1,
            (n - 1) as f64 / (n * (n - 1)) as f64
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (n - 1).to_string().len();
    let names: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();

    // Random topological order; only used to orient edges in acyclic mode.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    // Random spanning tree over the order guarantees weak connectivity.
    let mut present = vec![false; n * n];
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(target);
    for j in 1..n {
        let i = rng.random_range(0..j);
        let (mut from, mut to) = (order[i], order[j]);
        if allow_cycles && rng.random_bool(0.5) {
            std::mem::swap(&mut from, &mut to);
        }
        present[from * n + to] = true;
        edges.push((from, to));
    }

    // Remaining candidate pairs, shuffled; take what the target still needs.
    let mut pool: Vec<(usize, usize)> = Vec::new();
    if allow_cycles {
        for from in 0..n {
            for to in 0..n {
                if from != to && !present[from * n + to] {
                    pool.push((from, to));
                }
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                let (from, to) = (order[i], order[j]);
                if !present[from * n + to] {
                    pool.push((from, to));
                }
            }
        }
    }
    let extra = target - edges.len();
    for k in 0..extra {
        let pick = rng.random_range(k..pool.len());
        pool.swap(k, pick);
        edges.push(pool[k]);
    }

    let named_edges: Vec<(String, String)> = edges
        .into_iter()
        .map(|(f, t)| (names[f].clone(), names[t].clone()))
        .collect();
    CausalGraph::new(names, named_edges)
}

/// Builds block-structured dynamics for a graph: permitted blocks are filled
/// uniformly in [-coupling_scale, coupling_scale], everything else is zero,
/// and the whole matrix is shifted by -(damping + rho) I where rho is the
/// spectral abscissa of the raw matrix.
pub fn build_system(
    g: &CausalGraph,
    signals_per_node: RangeInclusive<usize>,
    coupling_scale: f64,
    damping: f64,
    noise_std: f64,
    seed: u64,
) -> Result<LtiSystem> {
    if *signals_per_node.start() < 2 || *signals_per_node.end() > 5 {
        return Err(Error::InvalidSystem(format!(
            "signals per node must stay within [2, 5], got [{}, {}]",
            signals_per_node.start(),
            signals_per_node.end()
        )));
    }
    if signals_per_node.is_empty() {
        return Err(Error::InvalidSystem("empty signals-per-node range".into()));
    }
    if !(coupling_scale > 0.0) {
        return Err(Error::InvalidSystem(format!("coupling_scale = {coupling_scale} must be > 0")));
    }
    if !(damping > 0.0) {
        return Err(Error::InvalidSystem(format!("damping = {damping} must be > 0")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.node_count();
    let mut blocks = Vec::with_capacity(n);
    let mut start = 0usize;
    for node in g.nodes() {
        let size = rng.random_range(signals_per_node.clone());
        blocks.push((node.clone(), start..start + size));
        start += size;
    }
    let dim = start;

    let mut a = DMatrix::zeros(dim, dim);
    // Diagonal blocks first, then coupling blocks in edge order.
    for (_, range) in &blocks {
        for r in range.clone() {
            for c in range.clone() {
                a[(r, c)] = rng.random_range(-coupling_scale..=coupling_scale);
            }
        }
    }
    for (from, to) in g.edges() {
        let col_block = blocks.iter().find(|(id, _)| *id == from).unwrap().1.clone();
        let row_block = blocks.iter().find(|(id, _)| *id == to).unwrap().1.clone();
        for r in row_block {
            for c in col_block.clone() {
                a[(r, c)] = rng.random_range(-coupling_scale..=coupling_scale);
            }
        }
    }

    let rho = spectral_abscissa(&a);
    let shift = damping + rho;
    for i in 0..dim {
        a[(i, i)] -= shift;
    }

    // One control channel per subsystem driving its own states. Input gains
    // keep a magnitude floor so every subsystem sits at a distinct operating
    // point under the nonzero-mean control policy.
    let mut b = DMatrix::zeros(dim, n);
    for (j, (_, range)) in blocks.iter().enumerate() {
        for r in range.clone() {
            let magnitude = rng.random_range(0.5 * coupling_scale..=coupling_scale);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            b[(r, j)] = sign * magnitude;
        }
    }

    LtiSystem::new(a, b, blocks, noise_std)
}

/// Largest real part over the eigenvalues. Falls back to the Gershgorin
/// upper bound if the Schur iteration fails to converge, which only
/// over-damps the shifted system.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), 1e-12, 100_000) {
        schur
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        (0..m.nrows())
            .map(|i| {
                let radius: f64 =
                    (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
                m[(i, i)] + radius
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Everything [`simulate`] needs besides the system itself.
#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub horizon: usize,
    pub dt: f64,
    pub control: ControlPolicy,
    pub fault: Option<FaultSpec>,
    pub seed: u64,
    /// Timestamp of the first emitted row.
    pub start_time: i64,
    pub initial_state: Option<DVector<f64>>,
}

impl SimulateOptions {
    pub fn nominal(horizon: usize, dt: f64, seed: u64) -> Self {
        SimulateOptions {
            horizon,
            dt,
            control: ControlPolicy::default(),
            fault: None,
            seed,
            start_time: 0,
            initial_state: None,
        }
    }
}

/// Integrates the system with fixed-step fourth-order Runge-Kutta and emits
/// one measurement row per step (state plus i.i.d. Gaussian observation
/// noise). The documented guideline is `dt * ||A||_inf < 0.5`; any
/// non-finite state aborts with an error naming `dt`. Deterministic per
/// seed, and the draw order does not depend on the fault, so a
/// `scale_factor = 1` fault reproduces the no-fault run bit for bit.
pub fn simulate(sys: &LtiSystem, opts: &SimulateOptions) -> Result<TimeSeriesFrame> {
    if opts.horizon == 0 {
        return Err(Error::InvalidSystem("horizon must be positive".into()));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidSystem(format!("dt = {} must be positive", opts.dt)));
    }
    if opts.control.hold_steps == 0 {
        return Err(Error::InvalidSystem("control hold must be at least one step".into()));
    }
    let dim = sys.state_dim();
    if let Some(y0) = &opts.initial_state {
        if y0.len() != dim {
            return Err(Error::InvalidSystem(format!(
                "initial state has {} entries, expected {dim}",
                y0.len()
            )));
        }
    }

    let a_faulted = match &opts.fault {
        Some(fault) => {
            fault.validate()?;
            Some(apply_fault(&sys.a, sys, fault)?)
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, sys.noise_std)
        .map_err(|e| Error::InvalidSystem(format!("noise distribution: {e}")))?;

    let mut y = opts
        .initial_state
        .clone()
        .unwrap_or_else(|| DVector::zeros(dim));
    let mut u = DVector::zeros(sys.b.ncols());
    let mut timestamps = Vec::with_capacity(opts.horizon);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(opts.horizon);

    let dt = opts.dt;
    let switch_p = 1.0 / opts.control.hold_steps as f64;
    for step in 0..opts.horizon {
        for level in u.iter_mut() {
            if step == 0 || rng.random_bool(switch_p) {
                *level = opts.control.sample_level(&mut rng);
            }
        }
        let t = opts.start_time + step as i64;
        timestamps.push(t);
        let mut row = Vec::with_capacity(dim);
        if sys.noise_std > 0.0 {
            for &v in y.iter() {
                row.push(v + noise.sample(&mut rng));
            }
        } else {
            row.extend(y.iter().copied());
        }
        rows.push(row);

        let fault_active = opts
            .fault
            .as_ref()
            .is_some_and(|f| t >= f.start_time && t < f.end_time);
        let a = if fault_active { a_faulted.as_ref().unwrap() } else { &sys.a };

        let bu = &sys.b * &u;
        let k1 = a * &y + &bu;
        let k2 = a * (&y + &k1 * (dt / 2.0)) + &bu;
        let k3 = a * (&y + &k2 * (dt / 2.0)) + &bu;
        let k4 = a * (&y + &k3 * dt) + &bu;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::UnstableIntegration { step, dt });
        }
    }

    // Columns are in state order; consumers resolve them by name.
    let names: Vec<String> = sys
        .blocks
        .iter()
        .flat_map(|(id, range)| (0..range.end - range.start).map(move |j| format!("{id}_y{j}")))
        .collect();
    TimeSeriesFrame::from_rows(timestamps, names, &rows)
}

fn apply_fault(a: &DMatrix<f64>, sys: &LtiSystem, fault: &FaultSpec) -> Result<DMatrix<f64>> {
    let range = sys.block_of(&fault.target)?;
    let mut faulted = a.clone();
    match fault.affected_entries {
        EntrySelection::AllNonzero => {
            for r in range.clone() {
                for c in range.clone() {
                    if faulted[(r, c)] != 0.0 {
                        faulted[(r, c)] *= fault.scale_factor;
                    }
                }
            }
        }
        EntrySelection::MainDiagonal => {
            for i in range {
                faulted[(i, i)] *= fault.scale_factor;
            }
        }
    }
    Ok(faulted)
}

/// Parameter ranges from which [`make_trial`] samples one benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    pub nodes: RangeInclusive<usize>,
    pub signals_per_node: RangeInclusive<usize>,
    pub edge_density: RangeInclusive<f64>,
    pub allow_cycles: bool,
    pub coupling_scale: f64,
    pub damping: f64,
    pub noise_std: RangeInclusive<f64>,
    pub fault_scale: RangeInclusive<f64>,
    pub dt: f64,
    pub control: ControlPolicy,
    pub warmup: usize,
    pub train_len: usize,
    pub validation_len: usize,
    pub calibration_len: usize,
    pub test_len: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            nodes: 5..=100,
            signals_per_node: 2..=5,
            edge_density: 0.04..=0.12,
            allow_cycles: true,
            coupling_scale: 1.2,
            damping: 1.0,
            noise_std: 0.002..=0.01,
            fault_scale: 3.0..=10.0,
            dt: 0.05,
            control: ControlPolicy::default(),
            warmup: 400,
            train_len: 6000,
            validation_len: 1000,
            calibration_len: 3000,
            test_len: 2400,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if *self.nodes.start() < 2 || self.nodes.is_empty() {
            return Err(Error::InvalidSampling(format!(
                "node range [{}, {}] is invalid",
                self.nodes.start(),
                self.nodes.end()
            )));
        }
        if self.edge_density.is_empty() || *self.edge_density.start() <= 0.0 {
            return Err(Error::InvalidSampling("invalid edge density range".into()));
        }
        if self.fault_scale.is_empty() || *self.fault_scale.start() <= 0.0 {
            return Err(Error::InvalidFault("invalid fault scale range".into()));
        }
        if self.test_len < 30 {
            return Err(Error::InvalidSampling("test segment too short".into()));
        }
        Ok(())
    }
}

/// Everything sampled for one trial, recorded for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialManifest {
    pub seed: u64,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub edge_density_sampled: f64,
    pub edge_density_effective: f64,
    pub allow_cycles: bool,
    pub block_sizes: Vec<usize>,
    pub state_dim: usize,
    pub coupling_scale: f64,
    pub damping: f64,
    pub noise_std: f64,
    pub dt: f64,
    pub control: ControlPolicy,
    pub warmup: usize,
    pub train_len: usize,
    pub validation_len: usize,
    pub calibration_len: usize,
    pub test_len: usize,
    pub fault: FaultSpec,
}

/// One generated benchmark: graph, map, three pairwise non-overlapping
/// nominal segments, and a test segment containing the fault interval.
#[derive(Debug, Clone)]
pub struct TrialDataset {
    pub graph: CausalGraph,
    pub map: SubsystemSignalsMap,
    pub train: TimeSeriesFrame,
    pub validation: TimeSeriesFrame,
    pub calibration: TimeSeriesFrame,
    pub test: TimeSeriesFrame,
    pub fault: FaultSpec,
    pub seed: u64,
    pub manifest: TrialManifest,
}

/// Samples a complete trial: graph, system, fault target and magnitude,
/// noise level; simulates the nominal segments and a faulted test segment.
/// Deterministic per seed. If the sampled density cannot keep the graph
/// weakly connected it is raised to the minimum feasible value (both values
/// are recorded in the manifest).
pub fn make_trial(config: &TrialConfig, seed: u64) -> Result<TrialDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_nodes = rng.random_range(config.nodes.clone());
    let density_sampled =
        rng.random_range(*config.edge_density.start()..=*config.edge_density.end());
    let min_density = (n_nodes as f64 - 1.0) / (n_nodes * (n_nodes - 1)) as f64;
    let density = density_sampled.max(min_density * 1.01);
    let noise_std = rng.random_range(*config.noise_std.start()..=*config.noise_std.end());
    let fault_scale =
        rng.random_range(*config.fault_scale.start()..=*config.fault_scale.end());

    let graph_seed = rng.next_u64();
    let system_seed = rng.next_u64();
    let nominal_seed = rng.next_u64();
    let test_seed = rng.next_u64();
    let target_idx = rng.random_range(0..n_nodes);

    let graph = sample_graph(n_nodes, density, config.allow_cycles, graph_seed)?;
    let sys = build_system(
        &graph,
        config.signals_per_node.clone(),
        config.coupling_scale,
        config.damping,
        noise_std,
        system_seed,
    )?;
    let map = sys.signals_map();
    let target = graph.nodes()[target_idx].clone();

    // Keep the integrator inside its stability envelope.
    let a_norm_inf = (0..sys.a.nrows())
        .map(|r| (0..sys.a.ncols()).map(|c| sys.a[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let dt = config.dt.min(0.4 / a_norm_inf);

    let nominal_len =
        config.warmup + config.train_len + config.validation_len + config.calibration_len;
    let nominal = simulate(
        &sys,
        &SimulateOptions {
            horizon: nominal_len,
            dt,
            control: config.control.clone(),
            fault: None,
            seed: nominal_seed,
            start_time: 0,
            initial_state: None,
        },
    )?;
    let t0 = config.warmup;
    let t1 = t0 + config.train_len;
    let t2 = t1 + config.validation_len;
    let t3 = t2 + config.calibration_len;
    let train = nominal.slice_rows(t0, t1)?;
    let validation = nominal.slice_rows(t1, t2)?;
    let calibration = nominal.slice_rows(t2, t3)?;

    // Test run: fresh transient discarded, fault in the middle third.
    let test_start = t3 as i64;
    let fault_start = test_start + config.warmup as i64 + (config.test_len / 3) as i64;
    let fault_end = fault_start + (config.test_len / 3) as i64;
    let fault = FaultSpec {
        target,
        scale_factor: fault_scale,
        affected_entries: EntrySelection::AllNonzero,
        start_time: fault_start,
        end_time: fault_end,
    };
    let test_full = simulate(
        &sys,
        &SimulateOptions {
            horizon: config.warmup + config.test_len,
            dt,
            control: config.control.clone(),
            fault: Some(fault.clone()),
            seed: test_seed,
            start_time: test_start,
            initial_state: None,
        },
    )?;
    let test = test_full.slice_rows(config.warmup, config.warmup + config.test_len)?;

    let manifest = TrialManifest {
        seed,
        n_nodes,
        n_edges: graph.edge_count(),
        edge_density_sampled: density_sampled,
        edge_density_effective: density,
        allow_cycles: config.allow_cycles,
        block_sizes: sys.blocks().iter().map(|(_, r)| r.end - r.start).collect(),
        state_dim: sys.state_dim(),
        coupling_scale: config.coupling_scale,
        damping: config.damping,
        noise_std,
        dt,
        control: config.control.clone(),
        warmup: config.warmup,
        train_len: config.train_len,
        validation_len: config.validation_len,
        calibration_len: config.calibration_len,
        test_len: config.test_len,
        fault: fault.clone(),
    };

    Ok(TrialDataset {
        graph,
        map,
        train,
        validation,
        calibration,
        test,
        fault,
        seed,
        manifest,
    })
}

const DATASET_FILES: [&str; 8] = [
    "graph.json",
    "map.json",
    "train.csv",
    "validation.csv",
    "calibration.csv",
    "test.csv",
    "fault.json",
    "manifest.json",
];

impl TrialDataset {
    pub fn file_names() -> &'static [&'static str] {
        &DATASET_FILES
    }

    /// Persists the dataset directory layout.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        std::fs::write(dir.join("graph.json"), self.graph.to_json())
            .map_err(|e| Error::io("write graph.json", e))?;
        std::fs::write(dir.join("map.json"), self.map.to_json())
            .map_err(|e| Error::io("write map.json", e))?;
        self.train.save_csv(&dir.join("train.csv"))?;
        self.validation.save_csv(&dir.join("validation.csv"))?;
        self.calibration.save_csv(&dir.join("calibration.csv"))?;
        self.test.save_csv(&dir.join("test.csv"))?;
        let fault = serde_json::to_string_pretty(&self.fault)
            .map_err(|e| Error::json("fault spec", e))?;
        std::fs::write(dir.join("fault.json"), fault)
            .map_err(|e| Error::io("write fault.json", e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::json("manifest", e))?;
        std::fs::write(dir.join("manifest.json"), manifest)
            .map_err(|e| Error::io("write manifest.json", e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| Error::io(format!("open {}", dir.join(name).display()), e))
        };
        let graph = CausalGraph::from_json(&read("graph.json")?)?;
        let map = SubsystemSignalsMap::from_json(&read("map.json")?)?;
        let train = TimeSeriesFrame::load_csv(&dir.join("train.csv"))?;
        let validation = TimeSeriesFrame::load_csv(&dir.join("validation.csv"))?;
        let calibration = TimeSeriesFrame::load_csv(&dir.join("calibration.csv"))?;
        let test = TimeSeriesFrame::load_csv(&dir.join("test.csv"))?;
        let fault: FaultSpec = serde_json::from_str(&read("fault.json")?)
            .map_err(|e| Error::json("fault.json", e))?;
        let manifest: TrialManifest = serde_json::from_str(&read("manifest.json")?)
            .map_err(|e| Error::json("manifest.json", e))?;
        let seed = manifest.seed;
        Ok(TrialDataset {
            graph,
            map,
            train,
            validation,
            calibration,
            test,
            fault,
            seed,
            manifest,
        })
    }
}
