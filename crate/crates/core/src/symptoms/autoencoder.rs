//! Subsystem-structured autoencoder: one nonlinear single-hidden-layer
//! encoder/decoder per subsystem, trained independently by full-batch
//! gradient descent on window reconstruction error. Concatenating the
//! per-subsystem latent blocks yields a composite latent space that mirrors
//! the subsystem layout.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symptoms::linear::validate_fit_params;
use crate::symptoms::{
    check_window_bounds, disjoint_window_starts, flatten_window, resolve_columns, ResidualModel,
    ResidualVector, SubsystemSignalsMap,
};
use crate::timeseries::TimeSeriesFrame;

/// One subsystem's encoder/decoder pair over standardized flattened windows:
/// `z = tanh(W1 x + b1)`, `x_hat = W2 z + b2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct AutoencoderBlock {
    pub(crate) signals: Vec<String>,
    pub(crate) mean: DVector<f64>,
    pub(crate) scale: DVector<f64>,
    pub(crate) w1: DMatrix<f64>,
    pub(crate) b1: DVector<f64>,
    pub(crate) w2: DMatrix<f64>,
    pub(crate) b2: DVector<f64>,
}

/// Nonlinear residual model satisfying the same contract as the linear one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsystemAutoencoder {
    window_len: usize,
    map: SubsystemSignalsMap,
    blocks: BTreeMap<crate::graph::SubsystemId, AutoencoderBlock>,
}

/// Trains one autoencoder per subsystem. Deterministic under a fixed seed.
/// Rejects `epochs == 0` and aborts with an error naming the learning rate
/// if the loss turns non-finite.
#[allow(clippy::too_many_arguments)]
pub fn fit_autoencoder_model(
    nominal: &TimeSeriesFrame,
    map: &SubsystemSignalsMap,
    window_len: usize,
    latent_dim_per_subsystem: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<SubsystemAutoencoder> {
    validate_fit_params(nominal, map, window_len, latent_dim_per_subsystem)?;
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive and finite, got {learning_rate}"
        )));
    }
    let starts = disjoint_window_starts(nominal.n_rows(), window_len);
    if starts.len() < latent_dim_per_subsystem {
        return Err(Error::RankDeficient {
            got: starts.len(),
            want: latent_dim_per_subsystem,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = BTreeMap::new();
    for (sub, signals) in map.entries() {
        let columns = resolve_columns(nominal, signals)?;
        let dim = window_len * columns.len();
        let n = starts.len();

        let flats: Vec<Vec<f64>> = starts
            .iter()
            .map(|&start| flatten_window(nominal, &columns, start, window_len))
            .collect();
        let mean = DVector::from_fn(dim, |d, _| flats.iter().map(|f| f[d]).sum::<f64>() / n as f64);
        let scale = DVector::from_fn(dim, |d, _| {
            let var = flats.iter().map(|f| (f[d] - mean[d]).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std > 0.0 {
                std
            } else {
                1.0
            }
        });
        // Standardized samples, one column per window.
        let x = DMatrix::from_fn(dim, n, |d, w| (flats[w][d] - mean[d]) / scale[d]);

        let k = latent_dim_per_subsystem;
        let a1 = 1.0 / (dim as f64).sqrt();
        let a2 = 1.0 / (k as f64).sqrt();
        let mut w1 = DMatrix::from_fn(k, dim, |_, _| rng.random_range(-a1..=a1));
        let mut b1 = DVector::zeros(k);
        let mut w2 = DMatrix::from_fn(dim, k, |_, _| rng.random_range(-a2..=a2));
        let mut b2 = DVector::zeros(dim);

        let norm = 1.0 / (n as f64 * dim as f64);
        for _epoch in 0..epochs {
            // Forward pass over the whole batch.
            let mut z = &w1 * &x;
            for mut col in z.column_iter_mut() {
                col += &b1;
            }
            z.apply(|v| *v = v.tanh());
            let mut y = &w2 * &z;
            for mut col in y.column_iter_mut() {
                col += &b2;
            }
            let r = &y - &x;
            let loss = r.iter().map(|v| v * v).sum::<f64>() * norm;
            if !loss.is_finite() {
                return Err(Error::Diverged(learning_rate));
            }

            // Backward pass.
            let dy = r * (2.0 * norm);
            let dw2 = &dy * z.transpose();
            let db2 = DVector::from_fn(dim, |d, _| dy.row(d).sum());
            let mut dz = w2.transpose() * &dy;
            dz.zip_apply(&z, |v, zv| *v *= 1.0 - zv * zv);
            let dw1 = &dz * x.transpose();
            let db1 = DVector::from_fn(k, |d, _| dz.row(d).sum());

            w1 -= dw1 * learning_rate;
            b1 -= db1 * learning_rate;
            w2 -= dw2 * learning_rate;
            b2 -= db2 * learning_rate;
        }

        blocks.insert(
            sub.clone(),
            AutoencoderBlock { signals: signals.to_vec(), mean, scale, w1, b1, w2, b2 },
        );
    }

    Ok(SubsystemAutoencoder { window_len, map: map.clone(), blocks })
}

impl SubsystemAutoencoder {
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn map(&self) -> &SubsystemSignalsMap {
        &self.map
    }
}

impl ResidualModel for SubsystemAutoencoder {
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
            let dim = flat.len();
            let xs = DVector::from_fn(dim, |d, _| (flat[d] - block.mean[d]) / block.scale[d]);
            let mut z = &block.w1 * &xs + &block.b1;
            z.apply(|v| *v = v.tanh());
            let ys = &block.w2 * z + &block.b2;
            // Back to original units before measuring the error.
            let d = block.signals.len();
            let mut subsystem_total = 0.0;
            for (j, signal) in block.signals.iter().enumerate() {
                let mut sq = 0.0;
                for t in 0..self.window_len {
                    let idx = t * d + j;
                    let reconstructed = ys[idx] * block.scale[idx] + block.mean[idx];
                    sq += (flat[idx] - reconstructed).powi(2);
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
