//! Relaxation-parameter schedules `omega_1..omega_L`.
//!
//! All structured kinds are normalized so that `sum omega_i = delta * L`:
//! the relaxation budget `delta` fixes the total amount of relaxation and the
//! kind fixes how it is spread across draft positions. The exponential kind
//! decays as `exp(-nu * i)`; the normalizing constant `mu` from the defining
//! constraint `sum exp(-nu*i - mu) = L` is eliminated analytically rather
//! than solved for.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Uniform,
    Exponential { nu: f64 },
    Linear { ell: usize },
}

/// A positive relaxation weight per draft position, `1`-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    delta: f64,
    kind: ScheduleKind,
    omegas: Vec<f64>,
}

impl Schedule {
    /// `omega_i = delta` for every position.
    pub fn uniform(delta: f64, len: usize) -> Result<Self> {
        validate_common(delta, len)?;
        Ok(Self {
            delta,
            kind: ScheduleKind::Uniform,
            omegas: vec![delta; len],
        })
    }

    /// `omega_i = delta * L * exp(-nu*i) / sum_j exp(-nu*j)`.
    ///
    /// Strictly decreasing when `nu > 0`; identical to [`Schedule::uniform`]
    /// when `nu = 0`.
    pub fn exponential(delta: f64, nu: f64, len: usize) -> Result<Self> {
        validate_common(delta, len)?;
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(
                "decay coefficient nu must be non-negative and finite".into(),
            ));
        }
        let weights: Vec<f64> = (1..=len).map(|i| (-nu * i as f64).exp()).collect();
        let total: f64 = weights.iter().sum();
        let omegas = weights
            .iter()
            .map(|w| delta * len as f64 * w / total)
            .collect();
        Ok(Self {
            delta,
            kind: ScheduleKind::Exponential { nu },
            omegas,
        })
    }

    /// `omega_i = delta * L * w_i / sum w_j` with `w_i = (ell - i) / (ell*(ell+1))`.
    ///
    /// Requires `ell > L` so every weight stays positive.
    pub fn linear(delta: f64, ell: usize, len: usize) -> Result<Self> {
        validate_common(delta, len)?;
        if ell <= len {
            return Err(Error::SlopeTooSteep {
                ell,
                draft_len: len,
            });
        }
        let denom = (ell * (ell + 1)) as f64;
        let weights: Vec<f64> = (1..=len).map(|i| (ell - i) as f64 / denom).collect();
        let total: f64 = weights.iter().sum();
        let omegas = weights
            .iter()
            .map(|w| delta * len as f64 * w / total)
            .collect();
        Ok(Self {
            delta,
            kind: ScheduleKind::Linear { ell },
            omegas,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Weight at the 1-based draft position `pos`.
    pub fn omega(&self, pos: usize) -> Result<f64> {
        if pos == 0 || pos > self.omegas.len() {
            return Err(Error::InvalidParameter(format!(
                "schedule position {pos} outside 1..={}",
                self.omegas.len()
            )));
        }
        Ok(self.omegas[pos - 1])
    }
}

fn validate_common(delta: f64, len: usize) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(
            "relaxation budget delta must be positive and finite".into(),
        ));
    }
    if len == 0 {
        return Err(Error::InvalidParameter(
            "schedule length must be at least 1".into(),
        ));
    }
    Ok(())
}
