//! Forward model: outcome probabilities, photon-counting images and detector
//! noise.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coupler::PovmSet;
use crate::error::{Error, Result};
use crate::measurement::Measurement;
use crate::seed;
use crate::state::DensityMatrix;

/// Largest tolerated `|1 − Σ_i p_i|` before renormalisation.
pub const MAX_COVERAGE_DEFICIT: f64 = 0.05;

/// Negative probabilities down to this value are roundoff and are clamped.
const NEGATIVE_ROUNDOFF: f64 = 1e-12;

/// Outcome distribution over pixels (or any measurement outcomes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    pub values: Vec<f64>,
    /// `1 − Σ p_i` before renormalisation; 0 for empirical distributions.
    pub deficit: f64,
    /// Image side when the outcomes are the pixels of a square grid.
    pub side: Option<usize>,
}

impl ProbabilityVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_distance(&self, other: &ProbabilityVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// `p_i = Tr(ρ·Π_i)` for a pixel POVM, renormalised; see
/// [`outcome_probabilities`].
pub fn probabilities(rho: &DensityMatrix, povm: &PovmSet) -> Result<ProbabilityVector> {
    let mut p = outcome_probabilities(rho, povm)?;
    p.side = Some(povm.grid().side());
    Ok(p)
}

/// `p_i = Tr(ρ·Π_i)` with roundoff negatives clamped to zero, then rescaled
/// to sum to one. The pre-normalisation deficit is recorded; a deficit above
/// [`MAX_COVERAGE_DEFICIT`] means the grid misses part of the light and is an
/// error.
pub fn outcome_probabilities<M: Measurement + ?Sized>(rho: &DensityMatrix, meas: &M) -> Result<ProbabilityVector> {
    if rho.dim() != meas.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dim {} but the measurement acts on dim {}",
            rho.dim(),
            meas.dim()
        )));
    }
    let mut values = meas.expectations(rho.matrix());
    for v in &mut values {
        if *v < 0.0 {
            if *v < -NEGATIVE_ROUNDOFF {
                tracing::debug!(value = *v, "clamping a negative probability beyond roundoff");
            }
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    let deficit = 1.0 - sum;
    if !(deficit.abs() <= MAX_COVERAGE_DEFICIT) {
        return Err(Error::GridCoverage { sum, deficit });
    }
    for v in &mut values {
        *v /= sum;
    }
    Ok(ProbabilityVector { values, deficit, side: None })
}

/// Multinomial draw of `n` trials over `probs` by sequential conditional
/// binomials. Deterministic for a given RNG state.
pub fn multinomial<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let frac = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if frac >= 1.0 {
            remaining
        } else if frac <= 0.0 {
            0
        } else {
            Binomial::new(remaining, frac).expect("valid binomial").sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

fn check_distribution(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("distribution has negative or non-finite entries".into()));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// Additive white Gaussian noise level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// `10·log10(mean(signal²)/σ²)`; `None` disables noise.
    pub snr_db: Option<f64>,
}

/// A camera frame: per-pixel counts (real-valued once noise is added).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityImage {
    pub side: usize,
    pub counts: Vec<f64>,
    pub n_photons: u64,
    pub snr_db: Option<f64>,
    /// Standard deviation of the added noise, once noise has been applied.
    pub noise_sigma: Option<f64>,
}

impl IntensityImage {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.counts.iter().copied().fold(0.0, f64::max)
    }

    /// `pixel_row,pixel_col,count` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pixel_row,pixel_col,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", k / self.side, k % self.side, c);
        }
        out
    }

    /// Plain (P2) PGM with `maxval = ceil(max count)`; pixel values are
    /// rounded to nearest, ties to even.
    pub fn to_pgm(&self) -> String {
        let maxval = (self.max().ceil() as u64).max(1);
        let mut out = format!("P2\n{0} {0}\n{1}\n", self.side, maxval);
        for row in self.counts.chunks(self.side) {
            let line: Vec<String> = row
                .iter()
                .map(|c| (c.round_ties_even().max(0.0) as u64).min(maxval).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Draw `n_photons` independent photon positions from `p`.
pub fn sample_image(p: &ProbabilityVector, n_photons: u64, seed: u64) -> Result<IntensityImage> {
    if n_photons == 0 {
        return Err(Error::InvalidArgument("photon budget must be positive".into()));
    }
    check_distribution(&p.values)?;
    let side = p.side.unwrap_or_else(|| (p.len() as f64).sqrt().round() as usize);
    if side * side != p.len() {
        return Err(Error::DimensionMismatch(format!("{} outcomes do not form a square image", p.len())));
    }
    let counts = multinomial(&p.values, n_photons, &mut seed::rng(seed));
    Ok(IntensityImage {
        side,
        counts: counts.into_iter().map(|c| c as f64).collect(),
        n_photons,
        snr_db: None,
        noise_sigma: None,
    })
}

/// Add zero-mean Gaussian noise with `σ² = mean(counts²)/10^(snr/10)` from the
/// pre-noise counts; negative results are clamped to zero.
pub fn add_gaussian_noise(image: &IntensityImage, cfg: &NoiseConfig, seed: u64) -> IntensityImage {
    let Some(snr_db) = cfg.snr_db else {
        return image.clone();
    };
    let power = image.counts.iter().map(|c| c * c).sum::<f64>() / image.counts.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut out = image.clone();
    out.snr_db = Some(snr_db);
    out.noise_sigma = Some(sigma);
    if sigma > 0.0 && sigma.is_finite() {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut rng = seed::rng(seed);
        for c in &mut out.counts {
            *c = (*c + normal.sample(&mut rng)).max(0.0);
        }
    }
    out
}

/// Empirical distribution `counts / Σ counts`.
pub fn normalize(image: &IntensityImage) -> Result<ProbabilityVector> {
    let total = image.total();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("image has no signal to normalise".into()));
    }
    Ok(ProbabilityVector {
        values: image.counts.iter().map(|c| c / total).collect(),
        deficit: 0.0,
        side: Some(image.side),
    })
}
