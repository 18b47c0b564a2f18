//! Per-feature standardisation with Welford / Chan parallel merging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator guard for zero-variance features.
pub const MIN_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerMode {
    /// Refit from scratch on each task's data.
    Refit,
    /// Fold each task's data into the running statistics.
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mode: ScalerMode,
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ScalerState {
    pub fn new(feature_dim: usize, mode: ScalerMode) -> Self {
        Self {
            mode,
            count: 0,
            mean: vec![0.0; feature_dim],
            m2: vec![0.0; feature_dim],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance (divides by count).
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|s| s / self.count as f64).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    /// Statistics of a single batch of rows (row-major, `feature_dim` wide).
    pub fn fit(feature_dim: usize, rows: &[f32], mode: ScalerMode) -> Result<Self> {
        let mut s = Self::new(feature_dim, mode);
        s.update(rows)?;
        Ok(s)
    }

    /// Folds a batch of rows into the running statistics.
    ///
    /// The batch's own mean and M2 are computed with Welford's recurrence,
    /// then combined with Chan's pairwise formula.
    pub fn update(&mut self, rows: &[f32]) -> Result<()> {
        let m = self.feature_dim();
        if m == 0 || !rows.len().is_multiple_of(m) {
            return Err(Error::config(format!(
                "scaler expects rows of {m} features, got {} values",
                rows.len()
            )));
        }
        let mut batch = Self::new(m, self.mode);
        for row in rows.chunks(m) {
            batch.count += 1;
            let n = batch.count as f64;
            for ((mean, m2), &x) in batch.mean.iter_mut().zip(&mut batch.m2).zip(row) {
                let x = x as f64;
                let delta = x - *mean;
                *mean += delta / n;
                *m2 += delta * (x - *mean);
            }
        }
        self.merge(&batch)
    }

    pub fn merge(&mut self, other: &ScalerState) -> Result<()> {
        if other.feature_dim() != self.feature_dim() {
            return Err(Error::config("cannot merge scalers of different width"));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean.clone_from(&other.mean);
            self.m2.clone_from(&other.m2);
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for j in 0..self.mean.len() {
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * nb / n;
            self.m2[j] += other.m2[j] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    /// `(x - mean) / max(std, MIN_STD)` for each row.
    pub fn apply(&self, rows: &[f32]) -> Result<Vec<f32>> {
        if self.count == 0 {
            return Err(Error::config("scaler applied before any update"));
        }
        let m = self.feature_dim();
        if !rows.len().is_multiple_of(m) {
            return Err(Error::config(format!("rows are not {m} features wide")));
        }
        let std: Vec<f64> = self.std().into_iter().map(|s| s.max(MIN_STD)).collect();
        Ok(rows
            .chunks(m)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&std)
                    .map(|((&x, &mu), &s)| ((x as f64 - mu) / s) as f32)
                    .collect::<Vec<_>>()
            })
            .collect())
    }

    /// Maps standardised rows back to raw feature space.
    pub fn invert(&self, rows: &[f32]) -> Result<Vec<f32>> {
        if self.count == 0 {
            return Err(Error::config("scaler inverted before any update"));
        }
        let m = self.feature_dim();
        let std: Vec<f64> = self.std().into_iter().map(|s| s.max(MIN_STD)).collect();
        Ok(rows
            .chunks(m)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&std)
                    .map(|((&z, &mu), &s)| (z as f64 * s + mu) as f32)
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_stream() {
        let s = ScalerState::fit(1, &[1.0, 2.0, 3.0], ScalerMode::Refit).unwrap();
        assert!((s.mean()[0] - 2.0).abs() < 1e-15);
        assert!((s.variance()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_halves_equal_one_shot() {
        let data: Vec<f32> = (0..40).map(|i| ((i * 37) % 11) as f32 * 0.7 - 2.0).collect();
        let one = ScalerState::fit(2, &data, ScalerMode::Refit).unwrap();
        let mut inc = ScalerState::new(2, ScalerMode::Incremental);
        inc.update(&data[..14]).unwrap();
        inc.update(&data[14..]).unwrap();
        for j in 0..2 {
            assert!((one.mean()[j] - inc.mean()[j]).abs() <= 1e-9 * one.mean()[j].abs().max(1e-12));
            assert!((one.variance()[j] - inc.variance()[j]).abs() <= 1e-6 * one.variance()[j]);
        }
    }

    #[test]
    fn zero_variance_feature_maps_to_zero() {
        let s = ScalerState::fit(2, &[5.0, 1.0, 5.0, 3.0], ScalerMode::Refit).unwrap();
        let z = s.apply(&[5.0, 2.0]).unwrap();
        assert_eq!(z[0], 0.0);
        assert!((z[1] - 0.0).abs() < 1e-7);
    }

    #[test]
    fn apply_before_update_fails() {
        let s = ScalerState::new(3, ScalerMode::Incremental);
        assert!(s.apply(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn width_mismatch_fails() {
        let mut s = ScalerState::new(3, ScalerMode::Incremental);
        assert!(s.update(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn invert_undoes_apply() {
        let s = ScalerState::fit(2, &[1.0, 10.0, 3.0, 30.0, 8.0, -4.0], ScalerMode::Refit).unwrap();
        let z = s.apply(&[2.0, 7.0]).unwrap();
        let x = s.invert(&z).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-5 && (x[1] - 7.0).abs() < 1e-5);
    }
}
