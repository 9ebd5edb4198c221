//! The linear measurement map shared by single-photon POVMs, coincidence
//! POVMs and the dense design-matrix cache.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{from_hermitian_coordinates, hermitian_coordinates, numerical_rank, CMat};

/// Singular values at or below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-8;

/// A finite family of Hermitian operators `{Π_i}` on a `dim`-dimensional
/// space, exposed through the two linear maps a least-squares solver needs.
pub trait Measurement: Sync {
    fn dim(&self) -> usize;

    fn n_outcomes(&self) -> usize;

    /// `Tr(ρ·Π_i)` for every outcome, in outcome order.
    fn expectations(&self, rho: &CMat) -> Vec<f64>;

    /// `Σ_i w_i·Π_i`, exactly Hermitian.
    fn weighted_sum(&self, weights: &[f64]) -> CMat;

    /// Dense `Π_i`.
    fn element(&self, i: usize) -> CMat;
}

/// Measurement stored as the `n × dim²` real matrix of Gell-Mann coordinates
/// of its elements. Both linear maps become a single dense mat-vec.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    dim: usize,
    rows: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_measurement<M: Measurement + ?Sized>(meas: &M) -> Self {
        let q = meas.dim();
        let coords: Vec<Vec<f64>> = (0..meas.n_outcomes())
            .into_par_iter()
            .map(|i| hermitian_coordinates(&meas.element(i)))
            .collect();
        let rows = DMatrix::from_fn(coords.len(), q * q, |i, j| coords[i][j]);
        Self { dim: q, rows }
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

impl Measurement for DesignMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_outcomes(&self) -> usize {
        self.rows.nrows()
    }

    fn expectations(&self, rho: &CMat) -> Vec<f64> {
        let x = DVector::from_vec(hermitian_coordinates(rho));
        (&self.rows * x).iter().copied().collect()
    }

    fn weighted_sum(&self, weights: &[f64]) -> CMat {
        let w = DVector::from_column_slice(weights);
        let c = self.rows.tr_mul(&w);
        from_hermitian_coordinates(c.as_slice(), self.dim)
    }

    fn element(&self, i: usize) -> CMat {
        let c: Vec<f64> = self.rows.row(i).iter().copied().collect();
        from_hermitian_coordinates(&c, self.dim)
    }
}

/// Span dimension of a measurement's elements inside the `dim²`-dimensional
/// real space of Hermitian operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub required: usize,
    pub is_ic: bool,
    /// Smallest of the `required` leading singular values; values under the
    /// rank threshold (and missing ones, when there are fewer outcomes than
    /// `required`) are reported as 0.
    pub smallest_singular_value: f64,
}

pub fn rank_report(rows: &DMatrix<f64>, required: usize) -> RankReport {
    let (rank, sv) = numerical_rank(rows, RANK_THRESHOLD);
    let max = sv.first().copied().unwrap_or(0.0);
    let smallest = match sv.get(required.saturating_sub(1)) {
        Some(&s) if required > 0 && s > RANK_THRESHOLD * max => s,
        _ => 0.0,
    };
    RankReport { rank, required, is_ic: rank == required, smallest_singular_value: smallest }
}

/// Rank of the real matrix whose rows are the Gell-Mann coordinates of the
/// measurement elements.
pub fn measurement_rank<M: Measurement + ?Sized>(meas: &M) -> RankReport {
    let design = DesignMatrix::from_measurement(meas);
    let q = meas.dim();
    rank_report(design.rows(), q * q)
}
