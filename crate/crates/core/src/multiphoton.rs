//! Two-photon extension.
//!
//! Two photons with identical single-photon spaces share the product space
//! `H_A ⊗ H_B` (photon-A-major index `a·q + b`). A plain intensity image sees
//! only the per-pixel one- and two-photon probabilities and is never
//! informationally complete on that space; recording coincidences at pixel
//! pairs `(i, j)` realises `Π_i ⊗ Π_j`, which is IC whenever the single-photon
//! POVM is.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupler::PovmSet;
use crate::error::{Error, Result};
use crate::forward::multinomial;
use crate::linalg::{hermitian_coordinates, identity, kron, CMat, ZERO};
use crate::measurement::{rank_report, Measurement, RankReport};
use crate::seed;
use crate::state::DensityMatrix;

/// Default ceiling on `outcomes × (d·m)⁴`, the number of reals a dense
/// two-photon design matrix would hold.
pub const DEFAULT_MEMORY_CAP: usize = 1 << 24;

/// Pixel pairs per parallel work unit; fixed so sums are reproducible.
const CHUNK: usize = 32;

/// Density matrix of a photon pair on `H_A ⊗ H_B`.
#[derive(Debug, Clone)]
pub struct BiphotonState {
    single_dim: usize,
    rho: DensityMatrix,
}

impl BiphotonState {
    pub fn new(rho: DensityMatrix, single_dim: usize) -> Result<Self> {
        if single_dim == 0 || rho.dim() != single_dim * single_dim {
            return Err(Error::DimensionMismatch(format!(
                "biphoton state has dim {} but single-photon dim is {single_dim}",
                rho.dim()
            )));
        }
        Ok(Self { single_dim, rho })
    }

    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch("photon factors differ in dimension".into()));
        }
        Self::new(DensityMatrix::new(kron(a.matrix(), b.matrix()))?, a.dim())
    }

    pub fn single_dim(&self) -> usize {
        self.single_dim
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn matrix(&self) -> &CMat {
        self.rho.matrix()
    }
}

/// Block `(c, a)` of a two-photon operator: the `q × q` matrix
/// `X[(c,·), (a,·)]`.
fn block(x: &CMat, q: usize, c: usize, a: usize) -> nalgebra::DMatrixView<'_, crate::C64> {
    x.view((c * q, a * q), (q, q))
}

/// `Tr_A((P ⊗ I)·X)`.
fn conditional(x: &CMat, p: &CMat, q: usize) -> CMat {
    let mut out = CMat::from_element(q, q, ZERO);
    for a in 0..q {
        for c in 0..q {
            let w = p[(a, c)];
            if w != ZERO {
                out += block(x, q, c, a) * w;
            }
        }
    }
    out
}

/// `Tr_A(X)`.
fn trace_a(x: &CMat, q: usize) -> CMat {
    conditional(x, &identity(q), q)
}

/// Per-pixel intensity statistics of a photon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonPixelStats {
    pub pixel: usize,
    /// Exactly one photon at the pixel.
    pub p1: f64,
    /// Both photons at the pixel.
    pub p2: f64,
    /// `(Tr((Π⊗I)ρ), Tr((I⊗Π)ρ))`.
    pub marginals: (f64, f64),
}

fn check_pair(rho: &BiphotonState, povm: &PovmSet) -> Result<()> {
    if rho.single_dim() != povm.dim() {
        return Err(Error::DimensionMismatch(format!(
            "biphoton factors have dim {} but the POVM acts on dim {}",
            rho.single_dim(),
            povm.dim()
        )));
    }
    Ok(())
}

/// `P1 = Tr(½(Π⊗I + I⊗Π)ρ) − Tr((Π⊗Π)ρ)` and `P2 = Tr((Π⊗Π)ρ)` for every
/// pixel.
pub fn biphoton_pixel_stats(rho: &BiphotonState, povm: &PovmSet) -> Result<Vec<BiphotonPixelStats>> {
    check_pair(rho, povm)?;
    let q = povm.dim();
    let x = rho.matrix();
    let pb = povm.expectations(&trace_a(x, q));
    Ok((0..povm.len())
        .into_par_iter()
        .map(|i| {
            let sigma = conditional(x, &povm.element(i), q);
            let pa = sigma.trace().re;
            let p2 = povm.subset(&[i]).expectations(&sigma)[0];
            BiphotonPixelStats { pixel: i, p1: 0.5 * (pa + pb[i]) - p2, p2, marginals: (pa, pb[i]) }
        })
        .collect())
}

/// `Σ_{j=0}^{⌊k/2⌋} P1^{k−2j}·P2^j`, term for term. The expression carries no
/// combinatorial weights and need not sum to one over `k`.
pub fn eval_count_distribution(stats: &BiphotonPixelStats, k: u32) -> f64 {
    (0..=k / 2)
        .map(|j| stats.p1.powi((k - 2 * j) as i32) * stats.p2.powi(j as i32))
        .sum()
}

fn guard(outcomes: usize, q: usize, cap: usize) -> Result<()> {
    let required = outcomes.saturating_mul(q.saturating_pow(4));
    if required > cap {
        return Err(Error::MemoryGuard { required, cap });
    }
    Ok(())
}

/// Span of the `2n` intensity functionals `½(Π_i⊗I + I⊗Π_i)` and `Π_i⊗Π_i`
/// on the two-photon space.
pub fn intensity_ic_audit(povm: &PovmSet, cap: usize) -> Result<RankReport> {
    if povm.is_empty() {
        return Err(Error::InvalidArgument("empty POVM".into()));
    }
    let q = povm.dim();
    guard(2 * povm.len(), q, cap)?;
    let eye = identity(q);
    let coords: Vec<(Vec<f64>, Vec<f64>)> = (0..povm.len())
        .into_par_iter()
        .map(|i| {
            let p = povm.element(i);
            let sym = (kron(&p, &eye) + kron(&eye, &p)).scale(0.5);
            (hermitian_coordinates(&sym), hermitian_coordinates(&kron(&p, &p)))
        })
        .collect();
    let cols = q.pow(4);
    let rows = DMatrix::from_fn(2 * coords.len(), cols, |r, c| {
        let (s, t) = &coords[r / 2];
        if r % 2 == 0 {
            s[c]
        } else {
            t[c]
        }
    });
    Ok(rank_report(&rows, cols))
}

/// The `n²` coincidence elements `Π_i ⊗ Π_j`, outcome index `i·n + j`.
/// Elements are formed on demand from the single-photon POVM.
#[derive(Debug, Clone)]
pub struct CoincidencePovm {
    single: PovmSet,
}

/// Coincidence POVM of `povm`, refusing configurations whose dense design
/// matrix would exceed `cap` reals.
pub fn coincidence_povm(povm: &PovmSet, cap: usize) -> Result<CoincidencePovm> {
    if povm.is_empty() {
        return Err(Error::InvalidArgument("empty POVM".into()));
    }
    guard(povm.len() * povm.len(), povm.dim(), cap)?;
    Ok(CoincidencePovm { single: povm.clone() })
}

impl CoincidencePovm {
    pub fn single(&self) -> &PovmSet {
        &self.single
    }

    pub fn n_pixels(&self) -> usize {
        self.single.len()
    }
}

impl Measurement for CoincidencePovm {
    fn dim(&self) -> usize {
        self.single.dim().pow(2)
    }

    fn n_outcomes(&self) -> usize {
        self.single.len().pow(2)
    }

    /// `Tr((Π_i⊗Π_j)ρ) = Tr(Π_j·Tr_A((Π_i⊗I)ρ))`.
    fn expectations(&self, rho: &CMat) -> Vec<f64> {
        let q = self.single.dim();
        let n = self.single.len();
        let per_row: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let sigma = conditional(rho, &self.single.element(i), q);
                self.single.expectations(&sigma)
            })
            .collect();
        per_row.concat()
    }

    /// `Σ_i Π_i ⊗ (Σ_j w_ij·Π_j)`.
    fn weighted_sum(&self, weights: &[f64]) -> CMat {
        let n = self.single.len();
        assert_eq!(weights.len(), n * n, "one weight per pixel pair");
        let q2 = self.dim();
        let partials: Vec<CMat> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|rows| {
                let mut acc = CMat::from_element(q2, q2, ZERO);
                for &i in rows {
                    let w = &weights[i * n..(i + 1) * n];
                    if w.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    acc += kron(&self.single.element(i), &self.single.weighted_sum(w));
                }
                acc
            })
            .collect();
        let mut total = CMat::from_element(q2, q2, ZERO);
        for p in partials {
            total += p;
        }
        crate::linalg::hermitian_part(&total)
    }

    fn element(&self, k: usize) -> CMat {
        let n = self.single.len();
        kron(&self.single.element(k / n), &self.single.element(k % n))
    }
}

/// Coincidence counts over pixel pairs, row-major in `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub n_pixels: usize,
    pub n_pairs: u64,
    pub counts: Vec<u64>,
}

impl CoincidenceCounts {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_pixels + j]
    }

    /// Empirical distribution `counts / n_pairs`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n_pairs as f64).collect()
    }

    /// `pixel_i,pixel_j,count` lines, zero counts included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pixel_i,pixel_j,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{c}", k / self.n_pixels, k % self.n_pixels);
        }
        out
    }
}

/// Draw `n_pairs` coincidence events from `p_ij` (length `n²`).
pub fn sample_coincidences(p_ij: &[f64], n_pairs: u64, seed: u64) -> Result<CoincidenceCounts> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("pair budget must be positive".into()));
    }
    let n = (p_ij.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != p_ij.len() {
        return Err(Error::DimensionMismatch(format!("{} outcomes are not n² pixel pairs", p_ij.len())));
    }
    if p_ij.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("distribution has negative or non-finite entries".into()));
    }
    let sum: f64 = p_ij.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("distribution sums to {sum}")));
    }
    let counts = multinomial(p_ij, n_pairs, &mut seed::rng(seed));
    Ok(CoincidenceCounts { n_pixels: n, n_pairs, counts })
}
