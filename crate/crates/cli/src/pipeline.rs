//! State → coupler → POVM → image → reconstruction, as used by every command.

use hyperqst::coupler::{lift_povm, load_transmission_matrix, CouplerUnitary, LoadOptions, PovmSet};
use hyperqst::forward::{add_gaussian_noise, normalize, probabilities, sample_image, IntensityImage, NoiseConfig};
use hyperqst::measurement::DesignMatrix;
use hyperqst::modes::{ModeBasis, PixelGrid};
use hyperqst::seed;
use hyperqst::solver::{reconstruct, SolveReport, SolverOptions};
use hyperqst::state::{fidelity, random_state, DensityMatrix, DimensionSpec};

use crate::config::{CouplerConfig, ExperimentConfig};
use crate::error::{CliError, Context};

const TAG_COUPLER: u64 = 0xC0;
const TAG_STATE: u64 = 0x57;
const STREAM_SAMPLE: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Seed of the Haar coupler on `D·m` lifted modes; one coupler per size.
pub fn coupler_seed(master: u64, dims: DimensionSpec) -> u64 {
    seed::derive(master, &[TAG_COUPLER, dims.lifted_dim() as u64])
}

/// Per-trial RNG seeds.
///
/// The state depends only on the trial index, so every sweep point of a
/// trial sees the same state; sampling and noise also depend on the sweep
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub state: u64,
    pub sample: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn derive(master: u64, sweep_value: u64, trial: u64) -> Self {
        let base = seed::derive(master, &[sweep_value, trial]);
        Self {
            state: seed::derive(master, &[TAG_STATE, trial]),
            sample: seed::derive(base, &[STREAM_SAMPLE]),
            noise: seed::derive(base, &[STREAM_NOISE]),
        }
    }
}

/// A coupler with its POVM and the dense design matrix the solver uses.
pub struct Setup {
    pub coupler: CouplerUnitary,
    pub povm: PovmSet,
    pub design: DesignMatrix,
}

impl Setup {
    pub fn new(coupler: CouplerUnitary, lifted_basis: &ModeBasis) -> Result<Self, CliError> {
        let povm = lift_povm(&coupler, lifted_basis).ctx("POVM")?;
        let design = DesignMatrix::from_measurement(&povm);
        Ok(Self { coupler, povm, design })
    }

    pub fn dims(&self) -> DimensionSpec {
        self.coupler.dims()
    }
}

pub fn lifted_basis(cfg: &ExperimentConfig, lifted: usize, grid: PixelGrid) -> Result<ModeBasis, CliError> {
    ModeBasis::from_specs(&cfg.basis.specs(lifted), grid).ctx("basis")
}

pub fn build_coupler(cfg: &ExperimentConfig, dims: DimensionSpec, master: u64) -> Result<CouplerUnitary, CliError> {
    Ok(match &cfg.coupler {
        CouplerConfig::Haar => CouplerUnitary::haar(dims, coupler_seed(master, dims)),
        CouplerConfig::Identity => CouplerUnitary::identity(dims),
        CouplerConfig::File { path, reunitarize } => {
            load_transmission_matrix(path, dims, LoadOptions { reunitarize: *reunitarize }).ctx("coupler")?
        }
    })
}

pub fn build_setup(cfg: &ExperimentConfig, lifted: usize, master: u64) -> Result<Setup, CliError> {
    let dims = cfg.dimension_spec(lifted)?;
    let basis = lifted_basis(cfg, lifted, cfg.pixel_grid()?)?;
    Setup::new(build_coupler(cfg, dims, master)?, &basis)
}

/// How the observed distribution is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// The exact outcome probabilities.
    Exact,
    /// A finite number of detected photons.
    Photons(u64),
}

pub struct TrialOutcome {
    pub rho_true: DensityMatrix,
    pub report: SolveReport,
    pub fidelity: f64,
    pub image: Option<IntensityImage>,
    /// `1 − Σ p_i` before renormalisation.
    pub deficit: f64,
}

/// Image `rho`, add noise and reconstruct.
pub fn observe_and_reconstruct(
    setup: &Setup,
    rho: DensityMatrix,
    budget: Budget,
    snr_db: Option<f64>,
    seeds: TrialSeeds,
    solver: &SolverOptions,
) -> Result<TrialOutcome, CliError> {
    let p = probabilities(&rho, &setup.povm).ctx("probabilities")?;
    let (observed, image) = match budget {
        Budget::Exact => (p.values.clone(), None),
        Budget::Photons(n) => {
            let clean = sample_image(&p, n, seeds.sample).ctx("sampling")?;
            let noisy = add_gaussian_noise(&clean, &NoiseConfig { snr_db }, seeds.noise);
            (normalize(&noisy).ctx("normalisation")?.values, Some(noisy))
        }
    };
    let report = reconstruct(&setup.design, &observed, solver).ctx("reconstruction")?;
    let fidelity = fidelity(&rho, &report.rho_hat).ctx("fidelity")?;
    Ok(TrialOutcome { rho_true: rho, report, fidelity, image, deficit: p.deficit })
}

/// One trial with a fresh random state of the given rank.
pub fn run_trial(
    setup: &Setup,
    rank: usize,
    budget: Budget,
    snr_db: Option<f64>,
    seeds: TrialSeeds,
    solver: &SolverOptions,
) -> Result<TrialOutcome, CliError> {
    let rho = random_state(setup.dims().state_dim(), rank, seeds.state).ctx("state")?;
    observe_and_reconstruct(setup, rho, budget, snr_db, seeds, solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_are_independent_streams() {
        let a = TrialSeeds::derive(1, 1000, 0);
        let b = TrialSeeds::derive(1, 100_000, 0);
        let c = TrialSeeds::derive(1, 1000, 1);
        assert_eq!(a.state, b.state);
        assert_ne!(a.sample, b.sample);
        assert_ne!(a.state, c.state);
        assert_ne!(a.sample, a.noise);
        assert_eq!(a, TrialSeeds::derive(1, 1000, 0));
    }
}
