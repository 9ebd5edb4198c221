//! Density matrices on the composite `spatial ⊗ non-spatial` space.
//!
//! Composite indices are spatial-major: basis vector `|i⟩ ⊗ |s⟩` sits at
//! index `i·m + s`. Every module uses this convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complex_gaussian, eigh, frobenius, hermiticity_defect, real_trace, reassemble, CMat, ZERO,
};
use crate::seed;

/// Eigenvalues down to this value count as zero in PSD checks.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Relative Hermiticity defect tolerated (and symmetrised away) by
/// [`project_psd_trace1`].
const HERMITIAN_INPUT_TOLERANCE: f64 = 1e-8;

/// Mode counts of a coupled measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSpec {
    /// Physical spatial modes.
    pub d: usize,
    /// Non-spatial modes (product of all non-spatial DOF dimensions).
    pub m: usize,
    /// Spatial modes after lifting (physical plus ancillas).
    #[serde(rename = "D")]
    pub lifted: usize,
}

impl DimensionSpec {
    pub fn new(d: usize, m: usize, lifted: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!("need d >= 1 and m >= 1 (got d={d}, m={m})")));
        }
        if lifted < d {
            return Err(Error::InvalidArgument(format!(
                "lifted spatial modes D={lifted} must be at least d={d}"
            )));
        }
        let spec = Self { d, m, lifted };
        if !spec.satisfies_recovery_bound() {
            tracing::warn!(d, m, D = lifted, "D < d·m: the coupled POVM cannot be informationally complete");
        }
        Ok(spec)
    }

    /// Dimension `d·m` of the state being reconstructed.
    pub fn state_dim(&self) -> usize {
        self.d * self.m
    }

    /// Dimension `D·m` of the space the coupler acts on.
    pub fn lifted_dim(&self) -> usize {
        self.lifted * self.m
    }

    /// The necessary condition `D ≥ d·m`.
    pub fn satisfies_recovery_bound(&self) -> bool {
        self.lifted >= self.d * self.m
    }
}

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMat,
}

impl DensityMatrix {
    /// Validate and wrap a matrix.
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!("density matrix must be square, got {:?}", m.shape())));
        }
        let dim = m.nrows() as f64;
        let defect = hermiticity_defect(&m);
        if defect > 1e-12 * dim {
            return Err(Error::NotHermitian(defect));
        }
        let trace = real_trace(&m);
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("trace is {trace}, expected 1")));
        }
        let (values, _) = eigh(&m);
        if values[0] < -PSD_TOLERANCE {
            return Err(Error::InvalidArgument(format!("min eigenvalue {} is negative", values[0])));
        }
        Ok(Self { m })
    }

    pub(crate) fn from_trusted(m: CMat) -> Self {
        Self { m }
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[crate::C64]) -> Result<Self> {
        let norm_sqr: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm_sqr > 0.0) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let n = psi.len();
        let m = CMat::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / norm_sqr);
        Ok(Self { m })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: CMat::identity(dim, dim).unscale(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn purity(&self) -> f64 {
        crate::linalg::trace_product(&self.m, &self.m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.m).0
    }
}

/// Ginibre-ensemble state of the given rank: `ρ = G·G†/Tr(G·G†)` with `G` a
/// `dim × rank` matrix of standard complex Gaussians.
pub fn random_state(dim: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    if dim == 0 || rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!("need 1 <= rank <= dim (rank={rank}, dim={dim})")));
    }
    let g = complex_gaussian(dim, rank, &mut seed::rng(seed));
    let gg = &g * g.adjoint();
    let trace = real_trace(&gg);
    Ok(DensityMatrix::from_trusted(crate::linalg::hermitian_part(&gg).unscale(trace)))
}

/// Eigenvalues below this fraction of the largest are treated as zero when
/// taking square roots; roundoff there would otherwise leak in as `√ε`.
const SUPPORT_CUTOFF: f64 = 1e-13;

/// `A` with `A·A† = ρ`, columns spanning the numerical support of `ρ`.
fn support_factor(rho: &CMat) -> CMat {
    let (values, vectors) = eigh(rho);
    let top = values.last().copied().unwrap_or(0.0).max(0.0);
    let mut a = vectors;
    for (k, &v) in values.iter().enumerate() {
        let root = if v > SUPPORT_CUTOFF * top { v.sqrt() } else { 0.0 };
        a.column_mut(k).scale_mut(root);
    }
    a
}

/// Uhlmann fidelity `(Tr √(√ρ0·ρ1·√ρ0))²`, clamped to `[0, 1]`. Evaluated as
/// the squared nuclear norm of `A0†·A1` with `A·A† = ρ`.
pub fn fidelity(rho0: &DensityMatrix, rho1: &DensityMatrix) -> Result<f64> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::DimensionMismatch(format!("fidelity of {}- and {}-dim states", rho0.dim(), rho1.dim())));
    }
    let overlap = support_factor(rho0.matrix()).adjoint() * support_factor(rho1.matrix());
    let nuclear: f64 = overlap.singular_values().iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

/// Trace out the non-spatial factor: `(Tr_m ρ)_ij = Σ_s ρ_(i·m+s),(j·m+s)`.
pub fn partial_trace_nonspatial(rho: &CMat, d: usize, m: usize) -> Result<CMat> {
    if !rho.is_square() || rho.nrows() != d * m {
        return Err(Error::DimensionMismatch(format!(
            "partial trace needs a {0}x{0} matrix, got {1:?}",
            d * m,
            rho.shape()
        )));
    }
    let mut out = CMat::from_element(d, d, ZERO);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = (0..m).map(|s| rho[(i * m + s, j * m + s)]).sum();
        }
    }
    Ok(out)
}

/// Trace out the spatial factor, leaving the `m × m` non-spatial marginal.
pub fn partial_trace_spatial(rho: &CMat, d: usize, m: usize) -> Result<CMat> {
    if !rho.is_square() || rho.nrows() != d * m {
        return Err(Error::DimensionMismatch(format!(
            "partial trace needs a {0}x{0} matrix, got {1:?}",
            d * m,
            rho.shape()
        )));
    }
    Ok(CMat::from_fn(m, m, |s, t| (0..d).map(|i| rho[(i * m + s, i * m + t)]).sum()))
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest density matrix to a Hermitian `h`: eigendecompose,
/// project the spectrum onto the simplex, reassemble.
pub fn project_psd_trace1(h: &CMat) -> Result<DensityMatrix> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("projection needs a square matrix, got {:?}", h.shape())));
    }
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_INPUT_TOLERANCE * frobenius(h).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let (values, vectors) = eigh(h);
    let projected = project_simplex(&values);
    Ok(DensityMatrix::from_trusted(reassemble(&projected, &vectors)))
}
