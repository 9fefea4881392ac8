//! End-to-end root-cause diagnosis for cyber-physical systems.
//!
//! The pipeline has two halves. The *symptoms generator* turns windowed
//! multivariate telemetry into per-subsystem binary health states: a residual
//! model (linear subspace or subsystem autoencoder) reconstructs each
//! subsystem's signals, reconstruction errors are aggregated per subsystem,
//! smoothed, and binarized against thresholds calibrated on held-out nominal
//! data. The *graph diagnosis algorithm* then traces the symptomatic
//! subsystems back through a directed (possibly cyclic) fault propagation
//! graph, scoring candidate root causes by four weighted criteria and
//! iterating until every symptom is explained.
//!
//! Supporting modules generate controllable synthetic benchmarks from random
//! graphs with block-structured linear dynamics ([`simulator`]), reproduce
//! the scenario and trial studies ([`harness`]), and ingest real SWAT-shaped
//! datasets ([`ingest`]).

pub mod diagnosis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod simulator;
pub mod symptoms;
pub mod timeseries;

pub use diagnosis::{
    candidate_set, diagnose, score_candidate, CandidateScore, CriterionWeights, DiagnosisResult,
    IterationTrace,
};
pub use error::{Error, Result};
pub use graph::{CausalGraph, HealthStateVector, SubsystemId};
pub use symptoms::{
    calibrate_thresholds, fit_autoencoder_model, fit_linear_subspace_model, health_series,
    health_states, BinarizationConfig, FittedModel, ResidualModel, ResidualVector,
    SubsystemSignalsMap, ThresholdMethod,
};
pub use timeseries::TimeSeriesFrame;
