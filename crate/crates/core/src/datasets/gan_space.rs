//! Min-max map between standardised features and the generator's (0, 1) range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSpaceTransform {
    min: Vec<f32>,
    max: Vec<f32>,
    fitted: bool,
}

impl GanSpaceTransform {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            min: vec![f32::INFINITY; feature_dim],
            max: vec![f32::NEG_INFINITY; feature_dim],
            fitted: false,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.min.len()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn min(&self) -> &[f32] {
        &self.min
    }

    pub fn max(&self) -> &[f32] {
        &self.max
    }

    /// Widens the running per-feature range with a batch of rows.
    pub fn update(&mut self, rows: &[f32]) -> Result<()> {
        let m = self.feature_dim();
        if !rows.len().is_multiple_of(m) {
            return Err(Error::config(format!("rows are not {m} features wide")));
        }
        for row in rows.chunks(m) {
            for ((lo, hi), &v) in self.min.iter_mut().zip(&mut self.max).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        if !rows.is_empty() {
            self.fitted = true;
        }
        Ok(())
    }

    /// Maps standardised rows into `[0, 1]`; constant features go to 0.5.
    /// Values outside the observed range are clamped.
    pub fn forward(&self, rows: &[f32]) -> Result<Vec<f32>> {
        self.check(rows)?;
        let m = self.feature_dim();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows.chunks(m) {
            for ((&v, &lo), &hi) in row.iter().zip(&self.min).zip(&self.max) {
                out.push(if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                });
            }
        }
        Ok(out)
    }

    /// Maps `[0, 1]` values back to standardised space, clamping to the
    /// observed range.
    pub fn inverse(&self, rows: &[f32]) -> Result<Vec<f32>> {
        self.check(rows)?;
        let m = self.feature_dim();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows.chunks(m) {
            for ((&v, &lo), &hi) in row.iter().zip(&self.min).zip(&self.max) {
                out.push((lo + v * (hi - lo)).clamp(lo, hi));
            }
        }
        Ok(out)
    }

    fn check(&self, rows: &[f32]) -> Result<()> {
        if !self.fitted {
            return Err(Error::config("GAN-space transform used before fitting"));
        }
        if !rows.len().is_multiple_of(self.feature_dim()) {
            return Err(Error::config("row width does not match transform"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted() -> GanSpaceTransform {
        let mut t = GanSpaceTransform::new(2);
        t.update(&[-2.0, 1.0, 2.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn midpoint_maps_to_half() {
        let t = fitted();
        assert_eq!(t.forward(&[0.0, 1.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn round_trip_in_range() {
        let t = fitted();
        for v in [-2.0f32, -1.3, 0.0, 0.77, 2.0] {
            let back = t.inverse(&t.forward(&[v, 1.0]).unwrap()).unwrap();
            assert!((back[0] - v).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_clamps() {
        let t = fitted();
        assert_eq!(t.inverse(&[1.2, 0.3]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn unfitted_is_an_error() {
        let t = GanSpaceTransform::new(2);
        assert!(t.forward(&[0.0, 0.0]).is_err());
        assert!(t.inverse(&[0.0, 0.0]).is_err());
    }
}
