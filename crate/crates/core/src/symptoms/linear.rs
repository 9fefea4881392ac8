//! Deterministic linear residual model: per subsystem, a best rank-k
//! subspace of mean-centered flattened windows. Reconstruction projects a
//! window onto the subspace and adds the mean back; residuals are the
//! remaining squared error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symptoms::{
    check_window_bounds, disjoint_window_starts, flatten_window, resolve_columns, ResidualModel,
    ResidualVector, SubsystemSignalsMap,
};
use crate::timeseries::TimeSeriesFrame;

const MIN_TRAINING_WINDOWS_FACTOR: usize = 10;

/// Per-subsystem affine subspace: window mean plus an orthonormal basis of
/// the top principal directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SubspaceBlock {
    pub(crate) signals: Vec<String>,
    pub(crate) mean: DVector<f64>,
    /// D x k orthonormal basis, D = window_len * |signals|.
    pub(crate) basis: DMatrix<f64>,
}

/// Linear subspace residual model; the crate's default symptoms generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSubspaceModel {
    window_len: usize,
    map: SubsystemSignalsMap,
    blocks: BTreeMap<crate::graph::SubsystemId, SubspaceBlock>,
}

/// Fits one subspace per subsystem on non-overlapping windows of nominal
/// data. Requires at least `10 * window_len` rows and strictly more windows
/// than the latent dimension would need (`n_windows >= latent_dim`).
pub fn fit_linear_subspace_model(
    nominal: &TimeSeriesFrame,
    map: &SubsystemSignalsMap,
    window_len: usize,
    latent_dim_per_subsystem: usize,
) -> Result<LinearSubspaceModel> {
    validate_fit_params(nominal, map, window_len, latent_dim_per_subsystem)?;
    let starts = disjoint_window_starts(nominal.n_rows(), window_len);
    if starts.len() < latent_dim_per_subsystem {
        return Err(Error::RankDeficient {
            got: starts.len(),
            want: latent_dim_per_subsystem,
        });
    }

    let mut blocks = BTreeMap::new();
    for (sub, signals) in map.entries() {
        let columns = resolve_columns(nominal, signals)?;
        let dim = window_len * columns.len();
        let flats: Vec<Vec<f64>> = starts
            .iter()
            .map(|&start| flatten_window(nominal, &columns, start, window_len))
            .collect();
        let mut data = DMatrix::from_fn(starts.len(), dim, |w, d| flats[w][d]);
        let mean = DVector::from_fn(dim, |d, _| {
            flats.iter().map(|f| f[d]).sum::<f64>() / starts.len() as f64
        });
        for w in 0..data.nrows() {
            for d in 0..dim {
                data[(w, d)] -= mean[d];
            }
        }
        let basis = principal_directions(&data, latent_dim_per_subsystem);
        blocks.insert(
            sub.clone(),
            SubspaceBlock { signals: signals.to_vec(), mean, basis },
        );
    }

    Ok(LinearSubspaceModel { window_len, map: map.clone(), blocks })
}

pub(crate) fn validate_fit_params(
    nominal: &TimeSeriesFrame,
    map: &SubsystemSignalsMap,
    window_len: usize,
    latent_dim: usize,
) -> Result<()> {
    if window_len == 0 {
        return Err(Error::InvalidConfig("window length must be positive".into()));
    }
    if latent_dim == 0 {
        return Err(Error::InvalidConfig("latent dimension must be positive".into()));
    }
    if nominal.n_rows() < MIN_TRAINING_WINDOWS_FACTOR * window_len {
        return Err(Error::InsufficientData(format!(
            "fitting needs at least {} rows (10 windows), got {}",
            MIN_TRAINING_WINDOWS_FACTOR * window_len,
            nominal.n_rows()
        )));
    }
    if latent_dim >= window_len * map.min_signal_count() {
        return Err(Error::InvalidConfig(format!(
            "latent dimension {latent_dim} must be below window_len * min subsystem signals = {}",
            window_len * map.min_signal_count()
        )));
    }
    map.validate_signals(nominal)
}

/// Top-k eigenvectors of the sample covariance of the centered rows,
/// ordered by descending eigenvalue; sign fixed so the entry of largest
/// magnitude is positive.
fn principal_directions(centered: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = centered.nrows() as f64;
    let cov = centered.transpose() * centered / n;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("covariance eigenvalues are finite")
            .then(a.cmp(&b))
    });

    let dim = centered.ncols();
    let mut basis = DMatrix::zeros(dim, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let mut column = eig.eigenvectors.column(idx).clone_owned();
        let dominant = column
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs().partial_cmp(&b.abs()).expect("eigenvector entries are finite")
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if column[dominant] < 0.0 {
            column.neg_mut();
        }
        basis.set_column(j, &column);
    }
    basis
}

impl LinearSubspaceModel {
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn map(&self) -> &SubsystemSignalsMap {
        &self.map
    }
}

impl ResidualModel for LinearSubspaceModel {
    fn window_len(&self) -> usize {
        self.window_len
    }

    fn map(&self) -> &SubsystemSignalsMap {
        &self.map
    }

    fn residuals_at(&self, frame: &TimeSeriesFrame, start: usize) -> Result<ResidualVector> {
        check_window_bounds(frame, start, self.window_len)?;
        let mut per_signal = BTreeMap::new();
        let mut per_subsystem = BTreeMap::new();

        for (sub, block) in &self.blocks {
            let columns = resolve_columns(frame, &block.signals)?;
            let flat = flatten_window(frame, &columns, start, self.window_len);
            let x = DVector::from_vec(flat);
            let centered = &x - &block.mean;
            let projected = &block.basis * (block.basis.transpose() * &centered);
            let error = centered - projected;

            let d = block.signals.len();
            let mut subsystem_total = 0.0;
            for (j, signal) in block.signals.iter().enumerate() {
                let mut sq = 0.0;
                for t in 0..self.window_len {
                    sq += error[t * d + j].powi(2);
                }
                let mse = sq / self.window_len as f64;
                subsystem_total += mse;
                per_signal.insert(signal.clone(), mse);
            }
            per_subsystem.insert(sub.clone(), subsystem_total / d as f64);
        }

        Ok(ResidualVector {
            timestamp: frame.timestamps()[start + self.window_len - 1],
            per_signal,
            per_subsystem,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SubsystemId;

    fn simple_map() -> SubsystemSignalsMap {
        let mut m = BTreeMap::new();
        m.insert(SubsystemId::new("s1").unwrap(), vec!["a".into(), "b".into()]);
        SubsystemSignalsMap::new(m).unwrap()
    }

    /// Data exactly on a k-dimensional affine manifold is reconstructed
    /// with negligible residual when latent_dim = k.
    #[test]
    fn exact_subspace_recovery() {
        let map = simple_map();
        let window = 4;
        let rows = 40 * window;
        // Window-aligned pattern: two basis directions mixed with
        // window-periodic coefficients, so flattened windows live on a
        // 2-dimensional affine subspace.
        let mut data = Vec::new();
        for w in 0..rows / window {
            let c1 = (w as f64 * 0.37).sin();
            let c2 = (w as f64 * 0.11).cos();
            for t in 0..window {
                let u = (t as f64 + 1.0) * 0.5;
                let v = (t as f64 - 1.5) * 0.25;
                data.push(vec![3.0 + c1 * u + c2 * v, -1.0 + c1 * v - c2 * u]);
            }
        }
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        let model = fit_linear_subspace_model(&frame, &map, window, 2).unwrap();
        for start in disjoint_window_starts(rows, window) {
            let rv = model.residuals_at(&frame, start).unwrap();
            for (_, value) in rv.per_signal {
                assert!(value <= 1e-8, "residual {value} too large");
            }
        }
    }

    #[test]
    fn constant_signals_have_zero_residual() {
        let map = simple_map();
        let rows = 64;
        let data: Vec<Vec<f64>> = (0..rows).map(|_| vec![2.5, -7.0]).collect();
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        let model = fit_linear_subspace_model(&frame, &map, 4, 1).unwrap();
        let rv = model.residuals_at(&frame, 3).unwrap();
        for (_, value) in rv.per_signal {
            assert!(value.abs() <= 1e-18);
        }
    }

    #[test]
    fn aggregation_is_mean_of_member_signals() {
        let map = simple_map();
        let rows = 80;
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        let model = fit_linear_subspace_model(&frame, &map, 4, 2).unwrap();
        let rv = model.residuals_at(&frame, 11).unwrap();
        let expected = (rv.per_signal["a"] + rv.per_signal["b"]) / 2.0;
        let got = rv.per_subsystem[&SubsystemId::new("s1").unwrap()];
        assert!((got - expected).abs() < 1e-9);
        assert_eq!(rv.timestamp, 11 + 4 - 1);
    }

    #[test]
    fn fit_rejects_insufficient_data() {
        let map = simple_map();
        let rows = 20;
        let data: Vec<Vec<f64>> = (0..rows).map(|i| vec![i as f64, 0.0]).collect();
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        assert!(matches!(
            fit_linear_subspace_model(&frame, &map, 4, 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fit_rejects_excessive_latent_dim() {
        let map = simple_map();
        let rows = 200;
        let data: Vec<Vec<f64>> = (0..rows).map(|i| vec![i as f64, 1.0]).collect();
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        // latent 8 == window_len * min signals -> rejected.
        assert!(fit_linear_subspace_model(&frame, &map, 4, 8).is_err());
    }

    #[test]
    fn model_json_round_trip_preserves_residuals() {
        let map = simple_map();
        let rows = 100;
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|i| vec![(i as f64 * 0.2).sin(), (i as f64 * 0.5).cos()])
            .collect();
        let frame = TimeSeriesFrame::from_rows(
            (0..rows as i64).collect(),
            vec!["a".into(), "b".into()],
            &data,
        )
        .unwrap();
        let model = fit_linear_subspace_model(&frame, &map, 4, 3).unwrap();
        let wrapped: crate::symptoms::FittedModel = model.clone().into();
        let back = crate::symptoms::FittedModel::from_json(&wrapped.to_json()).unwrap();
        let a = model.residuals_at(&frame, 17).unwrap();
        let b = back.residuals_at(&frame, 17).unwrap();
        assert_eq!(a.per_signal, b.per_signal);
    }
}
