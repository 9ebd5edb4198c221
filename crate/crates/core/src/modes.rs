//! Laguerre-Gauss mode bases sampled on a square pixel grid, and the pixel
//! states they induce.
//!
//! Modes are evaluated at pixel centres and renormalised so that the discrete
//! squared norm times the pixel area is exactly one. Pixels are indexed
//! row-major (`k = row·side + col`); row 0 is the top of the image (largest
//! `y`).

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, identity, CMat, C64};

/// Squared grid norm below which a mode is considered unresolved.
const MIN_GRID_NORM_SQR: f64 = 1e-12;

/// One Laguerre-Gauss mode `LG_{l,p}` at propagation distance `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgModeSpec {
    pub l: i32,
    pub p: u32,
    pub w0: f64,
    pub z: f64,
    pub z_r: f64,
}

impl LgModeSpec {
    pub fn new(l: i32, p: u32) -> Self {
        Self { l, p, w0: 1.0, z: 0.0, z_r: 1.0 }
    }

    pub fn with_geometry(l: i32, p: u32, geometry: BeamGeometry) -> Self {
        Self { l, p, w0: geometry.w0, z: geometry.z, z_r: geometry.z_r }
    }

    /// Beam radius `w(z) = w0·sqrt((z² + zR²)/zR²)`.
    pub fn waist(&self) -> f64 {
        self.w0 * ((self.z * self.z + self.z_r * self.z_r) / (self.z_r * self.z_r)).sqrt()
    }

    pub fn order(&self) -> u32 {
        2 * self.p + self.l.unsigned_abs()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.z_r > 0.0 && self.z.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "LG mode needs w0 > 0, zR > 0 and finite z (got w0={}, zR={}, z={})",
                self.w0, self.z_r, self.z
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LgModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LG(l={},p={})", self.l, self.p)
    }
}

/// Beam parameters shared by every mode of a basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub w0: f64,
    pub z: f64,
    pub z_r: f64,
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self { w0: 1.0, z: 0.0, z_r: 1.0 }
    }
}

impl BeamGeometry {
    pub fn waist(&self) -> f64 {
        LgModeSpec::with_geometry(0, 0, *self).waist()
    }

    /// Default grid half-width: 4.5 beam radii.
    pub fn default_extent(&self) -> f64 {
        4.5 * self.waist()
    }
}

/// `side × side` grid of square pixels covering `[-extent, extent]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    side: usize,
    extent: f64,
}

impl PixelGrid {
    pub fn new(side: usize, extent: f64) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidArgument(format!("grid side must be >= 2, got {side}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid extent must be > 0, got {extent}")));
        }
        Ok(Self { side, extent })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n_pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn pixel_width(&self) -> f64 {
        2.0 * self.extent / self.side as f64
    }

    /// Pixel area 𝒮.
    pub fn pixel_area(&self) -> f64 {
        let h = self.pixel_width();
        h * h
    }

    /// Centre `(x, y)` of pixel `k`.
    pub fn center(&self, k: usize) -> (f64, f64) {
        let h = self.pixel_width();
        let (row, col) = (k / self.side, k % self.side);
        let x = -self.extent + h * (col as f64 + 0.5);
        let y = self.extent - h * (row as f64 + 0.5);
        (x, y)
    }
}

/// Generalized Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Field of `spec` at each pixel centre, renormalised so that
/// `Σ_k |f(r_k)|²·𝒮 = 1`.
///
/// The radial profile is `(√2·r/w)^|l|·exp(-r²/w²)·L_p^|l|(2r²/w²)`. Both signs
/// of `l` share the same radial samples; negative `l` takes the complex
/// conjugate phase, so `|LG_{l,p}| = |LG_{-l,p}|` holds bit-for-bit.
pub fn lg_mode_eval(spec: &LgModeSpec, grid: &PixelGrid) -> Result<Vec<C64>> {
    spec.validate()?;
    let w = spec.waist();
    let abs_l = spec.l.unsigned_abs();
    let alpha = abs_l as f64;
    let samples: Vec<C64> = (0..grid.n_pixels())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.center(k);
            let s = (x * x + y * y) / (w * w);
            let radial = (2.0 * s).sqrt().powi(abs_l as i32) * (-s).exp() * laguerre(spec.p, alpha, 2.0 * s);
            let (sin, cos) = (alpha * y.atan2(x)).sin_cos();
            let phase = if spec.l >= 0 { C64::new(cos, sin) } else { C64::new(cos, -sin) };
            phase * radial
        })
        .collect();
    normalize_samples(samples, grid.pixel_area()).map_err(|norm| {
        Error::Resolution(format!(
            "{spec} has squared grid norm {norm:.3e}; the grid does not resolve it"
        ))
    })
}

/// Scale samples to unit grid norm; returns the offending norm² on failure.
fn normalize_samples(mut samples: Vec<C64>, area: f64) -> std::result::Result<Vec<C64>, f64> {
    let norm_sqr: f64 = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * area;
    if !(norm_sqr > MIN_GRID_NORM_SQR) {
        return Err(norm_sqr);
    }
    let scale = 1.0 / norm_sqr.sqrt();
    for z in &mut samples {
        *z *= scale;
    }
    Ok(samples)
}

/// `(l, p)` pairs with `2p + |l| = order`, by increasing `|l|`, `+l` before `-l`.
pub fn constant_order_pairs(order: u32) -> Vec<(i32, u32)> {
    let mut out = Vec::new();
    let mut abs_l = order % 2;
    while abs_l <= order {
        let p = (order - abs_l) / 2;
        if abs_l == 0 {
            out.push((0, p));
        } else {
            out.push((abs_l as i32, p));
            out.push((-(abs_l as i32), p));
        }
        abs_l += 2;
    }
    out
}

/// Identifies a column of a [`ModeBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModeLabel {
    Lg(LgModeSpec),
    /// Mode imported from a file; only its samples are known.
    Named(String),
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeLabel::Lg(spec) => spec.fmt(f),
            ModeLabel::Named(name) => f.write_str(name),
        }
    }
}

/// An ordered set of modes sampled on a grid.
///
/// `samples` is `n_pixels × d`: column `i` holds `f_i(r_k)` for every pixel
/// `k`, which is also the layout of the basis CSV export.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    labels: Vec<ModeLabel>,
    grid: PixelGrid,
    samples: CMat,
}

impl ModeBasis {
    pub fn from_specs(specs: &[LgModeSpec], grid: PixelGrid) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("a mode basis needs at least one mode".into()));
        }
        let columns = specs
            .iter()
            .map(|s| lg_mode_eval(s, &grid))
            .collect::<Result<Vec<_>>>()?;
        let samples = CMat::from_fn(grid.n_pixels(), specs.len(), |k, i| columns[i][k]);
        Ok(Self {
            labels: specs.iter().copied().map(ModeLabel::Lg).collect(),
            grid,
            samples,
        })
    }

    /// Wrap externally sampled modes (rows = pixels, columns = modes). Every
    /// column is renormalised on the grid.
    pub fn from_samples(samples: CMat, grid: PixelGrid, labels: Option<Vec<ModeLabel>>) -> Result<Self> {
        if samples.nrows() != grid.n_pixels() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows but the grid has {} pixels",
                samples.nrows(),
                grid.n_pixels()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::InvalidArgument("a mode basis needs at least one mode".into()));
        }
        let labels = labels.unwrap_or_else(|| {
            (0..samples.ncols()).map(|i| ModeLabel::Named(format!("mode{i}"))).collect()
        });
        if labels.len() != samples.ncols() {
            return Err(Error::DimensionMismatch("one label per basis column required".into()));
        }
        let mut out = samples;
        for (i, label) in labels.iter().enumerate() {
            let col: Vec<C64> = out.column(i).iter().copied().collect();
            let col = normalize_samples(col, grid.pixel_area()).map_err(|norm| {
                Error::Resolution(format!("{label} has squared grid norm {norm:.3e}"))
            })?;
            for (k, z) in col.into_iter().enumerate() {
                out[(k, i)] = z;
            }
        }
        Ok(Self { labels, grid, samples: out })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn samples(&self) -> &CMat {
        &self.samples
    }

    /// `G_ij = 𝒮·Σ_k f_i*(r_k)·f_j(r_k)`; equal to the pixel-state resolution
    /// of identity `𝒮·Σ_k |r_k⟩⟨r_k|`.
    pub fn gram(&self) -> CMat {
        (self.samples.adjoint() * &self.samples).scale(self.grid.pixel_area())
    }

    /// `‖𝒮·Σ_k |r_k;d⟩⟨r_k;d| − I_d‖_F`.
    pub fn completeness_error(&self) -> f64 {
        frobenius(&(self.gram() - identity(self.len())))
    }

    /// The first `count` modes, on the same grid.
    pub fn truncate(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot take {count} modes from a basis of {}",
                self.len()
            )));
        }
        Ok(Self {
            labels: self.labels[..count].to_vec(),
            grid: self.grid,
            samples: self.samples.columns(0, count).into_owned(),
        })
    }

    /// Pixel state `|r_k; d⟩` as a vector with entries `f_i*(r_k)`.
    pub fn pixel_state(&self, k: usize) -> DVector<C64> {
        DVector::from_iterator(self.len(), self.samples.row(k).iter().map(|z| z.conj()))
    }
}

/// `count` modes of constant order `2p + |l| = order`, enumerated by
/// increasing `|l|` with `+l` first.
pub fn build_constant_order_basis(
    order: u32,
    count: usize,
    geometry: BeamGeometry,
    grid: PixelGrid,
) -> Result<ModeBasis> {
    let pairs = constant_order_pairs(order);
    if count == 0 || count > pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "order {order} has {} (l, p) pairs; cannot select {count}",
            pairs.len()
        )));
    }
    let specs: Vec<LgModeSpec> = pairs[..count]
        .iter()
        .map(|&(l, p)| LgModeSpec::with_geometry(l, p, geometry))
        .collect();
    ModeBasis::from_specs(&specs, grid)
}

/// Pixel state of one camera pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelState {
    pub pixel: usize,
    pub amplitudes: DVector<C64>,
}

pub fn pixel_states(basis: &ModeBasis) -> Vec<PixelState> {
    (0..basis.grid().n_pixels())
        .map(|k| PixelState { pixel: k, amplitudes: basis.pixel_state(k) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(side: usize) -> PixelGrid {
        PixelGrid::new(side, BeamGeometry::default().default_extent()).unwrap()
    }

    #[test]
    fn laguerre_matches_closed_forms() {
        let x = 0.7;
        let a = 2.0;
        assert_eq!(laguerre(0, a, x), 1.0);
        assert!((laguerre(1, a, x) - (1.0 + a - x)).abs() < 1e-15);
        let l2 = x * x / 2.0 - (a + 2.0) * x + (a + 2.0) * (a + 1.0) / 2.0;
        assert!((laguerre(2, a, x) - l2).abs() < 1e-14);
    }

    #[test]
    fn ground_mode_is_real_gaussian_peaked_at_center() {
        let g = grid(32);
        let f = lg_mode_eval(&LgModeSpec::new(0, 0), &g).unwrap();
        assert!(f.iter().all(|z| z.im == 0.0 && z.re > 0.0));
        let max = f.iter().map(|z| z.re).fold(0.0, f64::max);
        // the four pixels adjacent to the origin hold the maximum
        let c = 16 * 32 + 16;
        for k in [c, c - 1, c - 32, c - 33] {
            assert!((f[k].re - max).abs() < 1e-15);
        }
    }

    #[test]
    fn opposite_l_share_modulus_and_conjugate_phase() {
        let g = grid(48);
        let plus = lg_mode_eval(&LgModeSpec::new(1, 0), &g).unwrap();
        let minus = lg_mode_eval(&LgModeSpec::new(-1, 0), &g).unwrap();
        for (a, b) in plus.iter().zip(&minus) {
            assert_eq!(a.norm_sqr().to_bits(), b.norm_sqr().to_bits());
            assert_eq!(*a, b.conj());
        }
    }

    #[test]
    fn distinct_l_are_orthogonal_on_fine_grid() {
        let g = PixelGrid::new(256, 4.0).unwrap();
        let a = lg_mode_eval(&LgModeSpec::new(1, 0), &g).unwrap();
        let b = lg_mode_eval(&LgModeSpec::new(3, 0), &g).unwrap();
        let ip: C64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum::<C64>() * g.pixel_area();
        assert!(ip.norm() < 1e-6, "{ip}");
    }

    #[test]
    fn renormalization_is_idempotent() {
        let g = grid(32);
        let f = lg_mode_eval(&LgModeSpec::new(-4, 5), &g).unwrap();
        let again = normalize_samples(f.clone(), g.pixel_area()).unwrap();
        for (a, b) in f.iter().zip(&again) {
            assert!((a - b).norm() <= 1e-14);
        }
    }

    #[test]
    fn unresolvable_mode_is_rejected() {
        // a waist far below one pixel leaves every centre in the Gaussian tail
        let spec = LgModeSpec { l: 0, p: 0, w0: 1e-3, z: 0.0, z_r: 1.0 };
        let g = PixelGrid::new(4, 1.0).unwrap();
        assert!(matches!(lg_mode_eval(&spec, &g), Err(Error::Resolution(_))));
    }

    #[test]
    fn constant_order_enumeration() {
        assert_eq!(constant_order_pairs(0), vec![(0, 0)]);
        assert_eq!(constant_order_pairs(2), vec![(0, 1), (2, 0), (-2, 0)]);
        assert_eq!(constant_order_pairs(3), vec![(1, 1), (-1, 1), (3, 0), (-3, 0)]);
        let p14 = constant_order_pairs(14);
        assert_eq!(p14.len(), 15);
        assert!(p14.iter().all(|&(l, p)| 2 * p + l.unsigned_abs() == 14));
        assert_eq!(&p14[..3], &[(0, 7), (2, 6), (-2, 6)]);
    }

    #[test]
    fn constant_order_basis_sizes() {
        let g = grid(32);
        let b = build_constant_order_basis(0, 1, BeamGeometry::default(), g).unwrap();
        assert_eq!(b.labels(), &[ModeLabel::Lg(LgModeSpec::new(0, 0))]);
        let b = build_constant_order_basis(14, 15, BeamGeometry::default(), g).unwrap();
        assert_eq!(b.len(), 15);
        // order 14 has only 15 pairs
        assert!(build_constant_order_basis(14, 16, BeamGeometry::default(), g).is_err());
        assert!(build_constant_order_basis(2, 4, BeamGeometry::default(), g).is_err());
    }

    #[test]
    fn single_gaussian_resolution_of_identity() {
        let b = build_constant_order_basis(0, 1, BeamGeometry::default(), grid(32)).unwrap();
        let sum: f64 = pixel_states(&b)
            .iter()
            .map(|s| s.amplitudes[0].norm_sqr())
            .sum::<f64>()
            * b.grid().pixel_area();
        assert!((sum - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pixel_states_are_conjugated_samples() {
        let specs = [LgModeSpec::new(2, 2), LgModeSpec::new(4, 1)];
        let b = ModeBasis::from_specs(&specs, grid(64)).unwrap();
        let states = pixel_states(&b);
        assert_eq!(states.len(), 64 * 64);
        assert_eq!(states[100].amplitudes.len(), 2);
        assert_eq!(states[100].amplitudes[1], b.samples()[(100, 1)].conj());
        assert!(b.completeness_error() < 1e-6);
    }

    #[test]
    fn completeness_improves_with_resolution_until_truncation_floor() {
        // at a tight extent the error is quadrature-limited and shrinks as the
        // grid is refined
        let specs: Vec<_> = constant_order_pairs(6)
            .into_iter()
            .map(|(l, p)| LgModeSpec::new(l, p))
            .collect();
        let errs: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&s| ModeBasis::from_specs(&specs, PixelGrid::new(s, 4.5).unwrap()).unwrap().completeness_error())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn from_samples_renormalizes_and_checks_shape() {
        let g = PixelGrid::new(4, 1.0).unwrap();
        let raw = CMat::from_element(16, 2, C64::new(2.0, 0.0));
        let b = ModeBasis::from_samples(raw, g, None).unwrap();
        let norm: f64 = b.samples().column(0).iter().map(|z| z.norm_sqr()).sum::<f64>() * g.pixel_area();
        assert!((norm - 1.0).abs() < 1e-14);
        assert!(ModeBasis::from_samples(CMat::zeros(15, 1), g, None).is_err());
        assert!(matches!(
            ModeBasis::from_samples(CMat::zeros(16, 1), g, None),
            Err(Error::Resolution(_))
        ));
    }
}
