//! Coupler unitaries and the pixel POVMs they induce.
//!
//! A coupler acts on `D·m` lifted modes (spatial-major, like every composite
//! index in the crate). The physical state occupies the first `d` spatial
//! modes, i.e. lifted indices `0..d·m`; ancilla modes come after and start
//! empty. Pixel `i` then measures
//!
//! ```text
//! Π_i = 𝒮 · [U† (|r_i;D⟩⟨r_i;D| ⊗ I_m) U] restricted to the input block
//!     = 𝒮 · W_i W_i†,   W_i = restrict(U† (|r_i;D⟩ ⊗ I_m))   ((d·m) × m)
//! ```
//!
//! and only the factors `W_i` are stored.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, frobenius, hermitian_part, identity, CMat, C64, ZERO};
use crate::matrix_csv;
use crate::measurement::{measurement_rank, Measurement};
use crate::modes::{ModeBasis, PixelGrid};
use crate::seed;
use crate::state::DimensionSpec;

/// Where a coupler matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    Identity,
    Haar { seed: u64 },
    File {
        path: PathBuf,
        /// `‖U†U − I‖_F` of the file contents when they had to be replaced by
        /// their unitary polar factor.
        reunitarized_from: Option<f64>,
    },
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    frobenius(&(u.adjoint() * u - identity(u.ncols())))
}

/// Haar-distributed `n × n` unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` folded back into `Q`.
pub fn haar_random_unitary(n: usize, seed: u64) -> CMat {
    let g = complex_gaussian(n, n, &mut seed::rng(seed));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Unitary factor of the polar decomposition `M = U·P`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    u * v_t
}

#[derive(Debug, Clone)]
pub struct CouplerUnitary {
    dims: DimensionSpec,
    matrix: CMat,
    provenance: Provenance,
}

impl CouplerUnitary {
    pub fn identity(dims: DimensionSpec) -> Self {
        let n = dims.lifted_dim();
        Self { dims, matrix: identity(n), provenance: Provenance::Identity }
    }

    pub fn haar(dims: DimensionSpec, seed: u64) -> Self {
        Self {
            dims,
            matrix: haar_random_unitary(dims.lifted_dim(), seed),
            provenance: Provenance::Haar { seed },
        }
    }

    /// Wrap a matrix after checking shape and unitarity.
    pub fn from_matrix(dims: DimensionSpec, matrix: CMat, provenance: Provenance) -> Result<Self> {
        check_shape(&dims, &matrix)?;
        let defect = unitarity_defect(&matrix);
        if defect > unitarity_tolerance(&dims) {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self { dims, matrix, provenance })
    }

    pub fn dims(&self) -> DimensionSpec {
        self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

fn unitarity_tolerance(dims: &DimensionSpec) -> f64 {
    1e-10 * dims.lifted_dim() as f64
}

fn check_shape(dims: &DimensionSpec, matrix: &CMat) -> Result<()> {
    let n = dims.lifted_dim();
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch(format!("coupler matrix must be square, got {:?}", matrix.shape())));
    }
    if matrix.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "coupler is {0}x{0} but D·m = {1}",
            matrix.nrows(),
            n
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Replace a non-unitary matrix by its unitary polar factor instead of
    /// rejecting it.
    pub reunitarize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { reunitarize: true }
    }
}

/// Read a transmission matrix in complex-matrix CSV form. The matrix must
/// already be expressed in the working lifted mode basis (spatial-major,
/// `D·m × D·m`).
pub fn load_transmission_matrix(path: &Path, dims: DimensionSpec, options: LoadOptions) -> Result<CouplerUnitary> {
    let matrix = matrix_csv::read(path)?;
    check_shape(&dims, &matrix)?;
    let defect = unitarity_defect(&matrix);
    if defect <= unitarity_tolerance(&dims) {
        let provenance = Provenance::File { path: path.to_path_buf(), reunitarized_from: None };
        return Ok(CouplerUnitary { dims, matrix, provenance });
    }
    if !options.reunitarize {
        return Err(Error::NotUnitary(defect));
    }
    tracing::warn!(path = %path.display(), defect, "transmission matrix is not unitary; using its polar factor");
    Ok(CouplerUnitary {
        dims,
        matrix: polar_unitary(&matrix),
        provenance: Provenance::File { path: path.to_path_buf(), reunitarized_from: Some(defect) },
    })
}

/// `A·(B ⊗ I_m)·C` evaluated blockwise as `Σ_ij B_ij·A_i·C_j`, where `A_i` is
/// the `i`-th column block (width `m`) of `A` and `C_j` the `j`-th row block
/// (height `m`) of `C`. `B ⊗ I_m` is never formed.
pub fn kron_identity_sandwich(a: &CMat, b: &CMat, c: &CMat, m: usize) -> Result<CMat> {
    let nb = b.nrows();
    if m == 0 || !b.is_square() || a.ncols() != nb * m || c.nrows() != nb * m {
        return Err(Error::DimensionMismatch(format!(
            "sandwich shapes A {:?}, B {:?}, C {:?} with m = {m}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let mut out = CMat::from_element(a.nrows(), c.ncols(), ZERO);
    let mut mixed = CMat::from_element(m, c.ncols(), ZERO);
    for i in 0..nb {
        mixed.fill(ZERO);
        for j in 0..nb {
            let bij = b[(i, j)];
            if bij != ZERO {
                mixed += c.rows(j * m, m) * bij;
            }
        }
        out += a.columns(i * m, m) * &mixed;
    }
    Ok(out)
}

/// One pixel's POVM element in factored form, `Π = 𝒮·W·W†`.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmElement {
    pub pixel: usize,
    /// `(d·m) × m`.
    pub factor: CMat,
}

/// The pixel POVM `{Π_i}` of a coupled camera measurement.
#[derive(Debug, Clone)]
pub struct PovmSet {
    dims: DimensionSpec,
    grid: PixelGrid,
    elements: Vec<PovmElement>,
}

impl PovmSet {
    pub fn dims(&self) -> DimensionSpec {
        self.dims
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn pixel_area(&self) -> f64 {
        self.grid.pixel_area()
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `Σ_i Π_i`.
    pub fn total(&self) -> CMat {
        self.weighted_sum(&vec![1.0; self.len()])
    }

    /// `‖Σ_i Π_i − I_{d·m}‖_F`.
    pub fn completeness_error(&self) -> f64 {
        frobenius(&(self.total() - identity(self.dims.state_dim())))
    }

    /// The same measurement scaled by `c` (every `Π_i → c·Π_i`).
    pub fn scaled(&self, c: f64) -> Self {
        let s = c.sqrt();
        let elements = self
            .elements
            .iter()
            .map(|e| PovmElement { pixel: e.pixel, factor: e.factor.scale(s) })
            .collect();
        Self { dims: self.dims, grid: self.grid, elements }
    }

    /// Keep only the listed pixels, in the given order.
    pub fn subset(&self, pixels: &[usize]) -> Self {
        let elements = pixels.iter().map(|&k| self.elements[k].clone()).collect();
        Self { dims: self.dims, grid: self.grid, elements }
    }
}

impl Measurement for PovmSet {
    fn dim(&self) -> usize {
        self.dims.state_dim()
    }

    fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    fn expectations(&self, rho: &CMat) -> Vec<f64> {
        let area = self.pixel_area();
        self.elements
            .par_iter()
            .map(|e| {
                let rw = rho * &e.factor;
                let tr: f64 = e
                    .factor
                    .iter()
                    .zip(rw.iter())
                    .map(|(w, t)| w.re * t.re + w.im * t.im)
                    .sum();
                area * tr
            })
            .collect()
    }

    fn weighted_sum(&self, weights: &[f64]) -> CMat {
        assert_eq!(weights.len(), self.len(), "one weight per POVM element");
        let q = self.dim();
        let area = self.pixel_area();
        let mut acc = CMat::from_element(q, q, ZERO);
        for (e, &w) in self.elements.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let w = w * area;
            let f = &e.factor;
            for s in 0..f.ncols() {
                for j in 0..q {
                    let b = f[(j, s)].conj() * w;
                    for i in 0..q {
                        acc[(i, j)] += f[(i, s)] * b;
                    }
                }
            }
        }
        hermitian_part(&acc)
    }

    fn element(&self, i: usize) -> CMat {
        let f = &self.elements[i].factor;
        hermitian_part(&(f * f.adjoint()).scale(self.pixel_area()))
    }
}

fn check_lift_inputs(coupler: &CouplerUnitary, lifted_basis: &ModeBasis) -> Result<()> {
    let dims = coupler.dims();
    if lifted_basis.len() != dims.lifted {
        return Err(Error::DimensionMismatch(format!(
            "lifted basis has {} modes but D = {}",
            lifted_basis.len(),
            dims.lifted
        )));
    }
    Ok(())
}

/// Factor `W = restrict(U†·(v ⊗ I_m))` for one lifted pixel state `v`.
fn pixel_factor(u_in_adj: &CMat, v: &DVector<C64>, m: usize) -> CMat {
    let q = u_in_adj.nrows();
    CMat::from_fn(q, m, |r, s| {
        v.iter()
            .enumerate()
            .map(|(a, &va)| u_in_adj[(r, a * m + s)] * va)
            .sum()
    })
}

/// Build the pixel POVM of `coupler` over a `D`-mode basis whose first `d`
/// modes are the physical ones.
pub fn lift_povm(coupler: &CouplerUnitary, lifted_basis: &ModeBasis) -> Result<PovmSet> {
    check_lift_inputs(coupler, lifted_basis)?;
    let dims = coupler.dims();
    // rows of U† belonging to the input block are the adjoint of U's first d·m columns
    let u_in_adj = coupler.matrix().columns(0, dims.state_dim()).adjoint();
    let grid = *lifted_basis.grid();
    let elements = (0..grid.n_pixels())
        .into_par_iter()
        .map(|k| PovmElement { pixel: k, factor: pixel_factor(&u_in_adj, &lifted_basis.pixel_state(k), dims.m) })
        .collect();
    Ok(PovmSet { dims, grid, elements })
}

/// Dense `Π_k` straight from `U† (|r_k;D⟩⟨r_k;D| ⊗ I_m) U`, evaluated with
/// [`kron_identity_sandwich`] and restricted to the input block.
pub fn lifted_element_dense(coupler: &CouplerUnitary, lifted_basis: &ModeBasis, pixel: usize) -> Result<CMat> {
    check_lift_inputs(coupler, lifted_basis)?;
    let dims = coupler.dims();
    let u_in = coupler.matrix().columns(0, dims.state_dim()).into_owned();
    let v = lifted_basis.pixel_state(pixel);
    let projector = &v * v.adjoint();
    let dense = kron_identity_sandwich(&u_in.adjoint(), &projector, &u_in, dims.m)?;
    Ok(dense.scale(lifted_basis.grid().pixel_area()))
}

/// Informational-completeness audit of a pixel POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub rank: usize,
    pub is_ic: bool,
    pub smallest_singular_value: f64,
    pub n_pixels: usize,
    pub d: usize,
    pub m: usize,
    #[serde(rename = "D")]
    pub lifted: usize,
}

/// Rank of the pixel POVM inside the `(d·m)²`-dimensional space of Hermitian
/// operators; IC iff the rank is full.
pub fn ic_check(povm: &PovmSet) -> IcReport {
    let r = measurement_rank(povm);
    let dims = povm.dims();
    IcReport {
        rank: r.rank,
        is_ic: r.is_ic,
        smallest_singular_value: r.smallest_singular_value,
        n_pixels: povm.len(),
        d: dims.d,
        m: dims.m,
        lifted: dims.lifted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, ONE};
    use crate::modes::{build_constant_order_basis, BeamGeometry};

    fn random(rows: usize, cols: usize, s: u64) -> CMat {
        complex_gaussian(rows, cols, &mut seed::rng(s))
    }

    #[test]
    fn haar_is_unitary_and_deterministic() {
        for n in [1, 2, 5, 16] {
            let u = haar_random_unitary(n, 3);
            assert!(unitarity_defect(&u) < 1e-12);
            assert_eq!(u, haar_random_unitary(n, 3));
        }
        let u1 = haar_random_unitary(1, 11);
        assert!((u1[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polar_factor_of_scaled_unitary() {
        let u = haar_random_unitary(6, 1);
        let back = polar_unitary(&u.scale(0.9));
        assert!(frobenius(&(back - u)) < 1e-10);
    }

    #[test]
    fn sandwich_degenerate_and_identity_cases() {
        let a = random(3, 4, 1);
        let b = random(4, 4, 2);
        let c = random(4, 5, 3);
        let got = kron_identity_sandwich(&a, &b, &c, 1).unwrap();
        assert!(frobenius(&(got - &a * &b * &c)) < 1e-12);

        let a = random(3, 6, 4);
        let c = random(6, 2, 5);
        let got = kron_identity_sandwich(&a, &identity(3), &c, 2).unwrap();
        assert!(frobenius(&(got - &a * &c)) < 1e-14);
    }

    #[test]
    fn sandwich_matches_dense_kronecker() {
        let (d, m, s) = (3, 2, 4);
        let a = random(s, d * m, 6);
        let b = random(d, d, 7);
        let c = random(d * m, s, 8);
        let dense = &a * kron(&b, &identity(m)) * &c;
        let got = kron_identity_sandwich(&a, &b, &c, m).unwrap();
        assert!(frobenius(&(got - dense)) < 1e-12);
        assert!(kron_identity_sandwich(&a, &random(2, 2, 9), &c, m).is_err());
    }

    #[test]
    fn identity_coupler_gives_bare_pixel_projectors() {
        let grid = PixelGrid::new(12, 4.5).unwrap();
        let basis = build_constant_order_basis(3, 3, BeamGeometry::default(), grid).unwrap();
        let dims = DimensionSpec::new(3, 1, 3).unwrap();
        let povm = lift_povm(&CouplerUnitary::identity(dims), &basis).unwrap();
        for k in [0, 40, 77] {
            let v = basis.pixel_state(k);
            let bare = (&v * v.adjoint()).scale(grid.pixel_area());
            assert!(frobenius(&(povm.element(k) - bare)) < 1e-15);
        }
    }

    #[test]
    fn factored_matches_dense_lift() {
        let grid = PixelGrid::new(8, 4.5).unwrap();
        let basis = build_constant_order_basis(3, 4, BeamGeometry::default(), grid).unwrap();
        let dims = DimensionSpec::new(2, 2, 4).unwrap();
        let coupler = CouplerUnitary::haar(dims, 17);
        let povm = lift_povm(&coupler, &basis).unwrap();
        let u_in = coupler.matrix().columns(0, 4).into_owned();
        for k in 0..grid.n_pixels() {
            let v = basis.pixel_state(k);
            let oracle = (u_in.adjoint() * kron(&(&v * v.adjoint()), &identity(2)) * &u_in).scale(grid.pixel_area());
            assert!(frobenius(&(povm.element(k) - &oracle)) < 1e-12);
            let b2 = lifted_element_dense(&coupler, &basis, k).unwrap();
            assert!(frobenius(&(b2 - oracle)) < 1e-12);
        }
    }

    #[test]
    fn lift_rejects_wrong_basis_size() {
        let grid = PixelGrid::new(8, 4.5).unwrap();
        let basis = build_constant_order_basis(3, 3, BeamGeometry::default(), grid).unwrap();
        let dims = DimensionSpec::new(2, 2, 4).unwrap();
        assert!(lift_povm(&CouplerUnitary::identity(dims), &basis).is_err());
    }

    #[test]
    fn from_matrix_checks_shape_and_unitarity() {
        let dims = DimensionSpec::new(1, 2, 1).unwrap();
        assert!(CouplerUnitary::from_matrix(dims, identity(3), Provenance::Identity).is_err());
        let bad = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(
            CouplerUnitary::from_matrix(dims, bad, Provenance::Identity),
            Err(Error::NotUnitary(_))
        ));
    }
}
