//! The subcommands. Each returns a serialisable report and writes its files
//! under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hyperqst::coupler::{haar_random_unitary, ic_check, lift_povm, CouplerUnitary, IcReport};
use hyperqst::forward::outcome_probabilities;
use hyperqst::linalg::C64;
use hyperqst::matrix_csv;
use hyperqst::measurement::{measurement_rank, DesignMatrix, Measurement, RankReport};
use hyperqst::modes::{LgModeSpec, ModeBasis, PixelGrid};
use hyperqst::multiphoton::{coincidence_povm, intensity_ic_audit, sample_coincidences, DEFAULT_MEMORY_CAP};
use hyperqst::solver::{reconstruct, SolveReport, SolverOptions};
use hyperqst::state::{fidelity, random_state, DensityMatrix, DimensionSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BasisConfig, ExperimentConfig, GridConfig};
use crate::error::{CliError, Context};
use crate::pipeline::{build_setup, coupler_seed, run_trial, Budget, Setup, TrialSeeds};

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
    text.push('\n');
    write(dir, name, &text)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub seed: u64,
    pub d: usize,
    pub m: usize,
    #[serde(rename = "D")]
    pub lifted: usize,
    pub rank: usize,
    pub photons: u64,
    pub snr_db: Option<f64>,
    pub fidelity: f64,
    pub coverage_deficit: f64,
    pub noise_sigma: Option<f64>,
    pub ic: IcReport,
    pub solver: SolveReport,
}

/// One noisy image of one random state, reconstructed. Matches trial 0 of
/// the first photon budget of a photon sweep.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateReport, CliError> {
    cfg.validate()?;
    let setup = build_setup(cfg, cfg.dims.lifted, cfg.seed)?;
    let photons = cfg.photons[0];
    let seeds = TrialSeeds::derive(cfg.seed, photons, 0);
    let trial = run_trial(&setup, cfg.rank(), Budget::Photons(photons), cfg.snr_db, seeds, &cfg.solver)?;
    let image = trial.image.as_ref().expect("finite budget yields an image");

    write(out, "rho_true.csv", &matrix_csv::to_string(trial.rho_true.matrix()))?;
    write(out, "rho_hat.csv", &matrix_csv::to_string(trial.report.rho_hat.matrix()))?;
    write(out, "image.csv", &image.to_csv())?;
    write(out, "image.pgm", &image.to_pgm())?;
    let report = SimulateReport {
        seed: cfg.seed,
        d: cfg.dims.d,
        m: cfg.dims.m,
        lifted: cfg.dims.lifted,
        rank: cfg.rank(),
        photons,
        snr_db: cfg.snr_db,
        fidelity: trial.fidelity,
        coverage_deficit: trial.deficit,
        noise_sigma: image.noise_sigma,
        ic: ic_check(&setup.povm),
        solver: trial.report,
    };
    write_json(out, "report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    #[serde(rename = "D")]
    pub lifted: usize,
    pub photons: u64,
    pub trial: usize,
    pub rank: usize,
    pub fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    #[serde(rename = "D")]
    pub lifted: usize,
    pub photons: u64,
    pub trials: usize,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub min_fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    fn from_rows(rows: Vec<SweepRow>) -> Self {
        let mut points: Vec<SweepPoint> = Vec::new();
        for chunk in rows.chunk_by(|a, b| a.lifted == b.lifted && a.photons == b.photons) {
            let f: Vec<f64> = chunk.iter().map(|r| r.fidelity).collect();
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f.len() as f64;
            points.push(SweepPoint {
                lifted: chunk[0].lifted,
                photons: chunk[0].photons,
                trials: f.len(),
                mean_fidelity: mean,
                std_fidelity: var.sqrt(),
                min_fidelity: f.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
        Self { rows, points }
    }

    pub fn point(&self, lifted: usize, photons: u64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.lifted == lifted && p.photons == photons)
    }

    pub fn photons_csv(&self) -> String {
        let mut out = String::from("photons,trial,rank,fidelity,iterations,converged\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.12},{},{}", r.photons, r.trial, r.rank, r.fidelity, r.iterations, r.converged);
        }
        out
    }

    pub fn ancillas_csv(&self) -> String {
        let mut out = String::from("D,trial,photons,fidelity,iterations,converged\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.12},{},{}", r.lifted, r.trial, r.photons, r.fidelity, r.iterations, r.converged);
        }
        out
    }
}

/// All (budget, trial) pairs for one coupler, in parallel, in sweep order.
fn sweep_setup(cfg: &ExperimentConfig, setup: &Setup, budgets: &[u64]) -> Result<Vec<SweepRow>, CliError> {
    let rank = cfg.rank();
    let jobs: Vec<(u64, usize)> =
        budgets.iter().flat_map(|&n| (0..cfg.state.count).map(move |t| (n, t))).collect();
    jobs.par_iter()
        .map(|&(n, t)| {
            let seeds = TrialSeeds::derive(cfg.seed, n, t as u64);
            let trial = run_trial(setup, rank, Budget::Photons(n), cfg.snr_db, seeds, &cfg.solver)?;
            Ok(SweepRow {
                lifted: setup.dims().lifted,
                photons: n,
                trial: t,
                rank,
                fidelity: trial.fidelity,
                iterations: trial.report.iterations,
                converged: trial.report.converged,
            })
        })
        .collect()
}

/// Fidelity against photon budget for one coupler.
pub fn sweep_photons(cfg: &ExperimentConfig, out: &Path) -> Result<SweepResult, CliError> {
    cfg.validate()?;
    let setup = build_setup(cfg, cfg.dims.lifted, cfg.seed)?;
    let result = SweepResult::from_rows(sweep_setup(cfg, &setup, &cfg.photons)?);
    write(out, "sweep_photons.csv", &result.photons_csv())?;
    write_json(out, "sweep_photons.json", &result.points)?;
    Ok(result)
}

/// Fidelity against the number of lifted spatial modes `D`, one coupler per
/// value of `D`.
pub fn sweep_ancillas(cfg: &ExperimentConfig, out: &Path) -> Result<SweepResult, CliError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for lifted in cfg.lifted_values() {
        let setup = build_setup(cfg, lifted, cfg.seed)?;
        rows.extend(sweep_setup(cfg, &setup, &cfg.photons)?);
    }
    let result = SweepResult::from_rows(rows);
    write(out, "sweep_ancillas.csv", &result.ancillas_csv())?;
    write_json(out, "sweep_ancillas.json", &result.points)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct BiphotonAudit {
    /// Span of the intensity-only functionals on the two-photon space.
    pub intensity: RankReport,
    /// Span of the coincidence POVM.
    pub coincidence: RankReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckIcReport {
    pub ic: IcReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biphoton: Option<BiphotonAudit>,
}

fn biphoton_audit(povm: &hyperqst::coupler::PovmSet) -> Result<BiphotonAudit, CliError> {
    let intensity = intensity_ic_audit(povm, DEFAULT_MEMORY_CAP).ctx("intensity audit")?;
    let coincidence = measurement_rank(&coincidence_povm(povm, DEFAULT_MEMORY_CAP).ctx("coincidence POVM")?);
    Ok(BiphotonAudit { intensity, coincidence })
}

pub fn check_ic(cfg: &ExperimentConfig, out: &Path) -> Result<CheckIcReport, CliError> {
    cfg.validate()?;
    let setup = build_setup(cfg, cfg.dims.lifted, cfg.seed)?;
    let biphoton = if cfg.biphoton_audit { Some(biphoton_audit(&setup.povm)?) } else { None };
    let report = CheckIcReport { ic: ic_check(&setup.povm), biphoton };
    write_json(out, "ic.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FailcasePair {
    pub name: String,
    pub modes: Vec<String>,
    pub m: usize,
    #[serde(rename = "D")]
    pub lifted: usize,
    /// Largest `|p_A − p_B|` over pixels with no coupler.
    pub max_intensity_difference: f64,
    pub ic_without_coupler: bool,
    pub ic_with_coupler: bool,
    /// Fidelity of each reconstruction to its own state.
    pub fidelity: [f64; 2],
    /// Fidelity of each reconstruction to the other state.
    pub cross_fidelity: [f64; 2],
    pub distinguished: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailcaseReport {
    pub seed: u64,
    pub grid_side: usize,
    pub pairs: Vec<FailcasePair>,
}

pub const FAILCASE_FIDELITY: f64 = 0.99;
pub const FAILCASE_CROSS_FIDELITY: f64 = 0.9;
const FAILCASE_SIDE: usize = 32;
const FAILCASE_LIFTED: usize = 8;

fn unit(v: &[(usize, f64)], dim: usize) -> DensityMatrix {
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    for &(i, a) in v {
        psi[i] = C64::new(a, 0.0);
    }
    DensityMatrix::pure(&psi).expect("normalised by construction")
}

fn failcase_pair(
    name: &str,
    modes: &[(i32, u32)],
    d: usize,
    m: usize,
    states: [DensityMatrix; 2],
    grid: PixelGrid,
    seed: u64,
) -> Result<FailcasePair, CliError> {
    let specs: Vec<LgModeSpec> = modes.iter().map(|&(l, p)| LgModeSpec::new(l, p)).collect();
    let lifted_basis = ModeBasis::from_specs(&specs, grid).ctx("failcase basis")?;
    let physical = lifted_basis.truncate(d).ctx("failcase basis")?;

    // camera directly behind the source
    let bare_dims = DimensionSpec::new(d, m, d).ctx("failcase dims")?;
    let bare = lift_povm(&CouplerUnitary::identity(bare_dims), &physical).ctx("failcase POVM")?;
    let pa = bare.expectations(states[0].matrix());
    let pb = bare.expectations(states[1].matrix());
    let max_diff = pa.iter().zip(&pb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let dims = DimensionSpec::new(d, m, FAILCASE_LIFTED).ctx("failcase dims")?;
    let setup = Setup::new(CouplerUnitary::haar(dims, coupler_seed(seed, dims)), &lifted_basis)?;
    let mut fid = [0.0; 2];
    let mut cross = [0.0; 2];
    for k in 0..2 {
        let p = outcome_probabilities(&states[k], &setup.povm).ctx("failcase probabilities")?;
        let rep = reconstruct(&setup.design, &p.values, &SolverOptions::default()).ctx("failcase reconstruction")?;
        fid[k] = fidelity(&states[k], &rep.rho_hat).ctx("fidelity")?;
        cross[k] = fidelity(&states[1 - k], &rep.rho_hat).ctx("fidelity")?;
    }
    let distinguished = fid.iter().all(|&f| f >= FAILCASE_FIDELITY) && cross.iter().all(|&f| f <= FAILCASE_CROSS_FIDELITY);
    Ok(FailcasePair {
        name: name.to_string(),
        modes: specs.iter().map(|s| s.to_string()).collect(),
        m,
        lifted: FAILCASE_LIFTED,
        max_intensity_difference: max_diff,
        ic_without_coupler: ic_check(&bare).is_ic,
        ic_with_coupler: ic_check(&setup.povm).is_ic,
        fidelity: fid,
        cross_fidelity: cross,
        distinguished,
    })
}

/// The two intensity ambiguities: opposite-OAM superpositions, and a pair of
/// OAM-spin states that differ only in spin.
pub fn failcase(seed: u64, out: &Path) -> Result<FailcaseReport, CliError> {
    let grid = PixelGrid::new(FAILCASE_SIDE, 4.5).ctx("grid")?;
    let h = std::f64::consts::FRAC_1_SQRT_2;

    // (|+1⟩ + |−2⟩)/√2 against (|−1⟩ + |+2⟩)/√2; physical modes +1, −2, −1, +2
    let oam_modes = [(1, 0), (-2, 0), (-1, 0), (2, 0), (0, 0), (0, 1), (3, 0), (-3, 0)];
    let oam = failcase_pair("opposite_oam", &oam_modes, 4, 1, [unit(&[(0, h), (1, h)], 4), unit(&[(2, h), (3, h)], 4)], grid, seed)?;

    // (|a,H⟩ + |b,V⟩)/√2 against (|a,V⟩ + |b,H⟩)/√2 with a = LG(2,2), b = LG(4,1)
    let spin_modes = [(2, 2), (4, 1), (-2, 2), (-4, 1), (6, 0), (-6, 0), (0, 3), (0, 0)];
    let spin = failcase_pair("spin_only", &spin_modes, 2, 2, [unit(&[(0, h), (3, h)], 4), unit(&[(1, h), (2, h)], 4)], grid, seed)?;

    let report = FailcaseReport { seed, grid_side: FAILCASE_SIDE, pairs: vec![oam, spin] };
    write_json(out, "failcase.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BiphotonReport {
    pub seed: u64,
    pub single_ic: IcReport,
    pub intensity: RankReport,
    pub coincidence: RankReport,
    pub exact_fidelity: f64,
    pub pairs: u64,
    pub sampled_fidelity: f64,
    pub exact_solver: SolveReport,
}

/// Configuration used by `biphoton-demo` when none is given.
pub fn biphoton_default_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        dims: crate::config::DimsConfig { d: 2, m: 1, lifted: 4 },
        basis: BasisConfig::LgConstantOrder { order: 3, w0: 1.0, z: 0.0, z_r: 1.0 },
        grid: GridConfig { side: 8, extent: Some(2.5) },
        coupler: Default::default(),
        state: Default::default(),
        photons: vec![1_000_000],
        snr_db: None,
        solver: Default::default(),
        output: Default::default(),
        sweep: None,
        biphoton_audit: true,
    }
}

pub const BIPHOTON_MAX_SINGLE_DIM: usize = 2;
pub const BIPHOTON_MAX_SIDE: usize = 16;

/// Intensity-only audit and coincidence round trip for a photon pair.
pub fn biphoton_demo(cfg: &ExperimentConfig, out: &Path) -> Result<BiphotonReport, CliError> {
    cfg.validate()?;
    if cfg.dims.d * cfg.dims.m > BIPHOTON_MAX_SINGLE_DIM || cfg.grid.side > BIPHOTON_MAX_SIDE {
        return Err(CliError::Validation(format!(
            "biphoton-demo needs d·m <= {BIPHOTON_MAX_SINGLE_DIM} and grid side <= {BIPHOTON_MAX_SIDE}"
        )));
    }
    let setup = build_setup(cfg, cfg.dims.lifted, cfg.seed)?;
    let audit = biphoton_audit(&setup.povm)?;
    let coincidences = coincidence_povm(&setup.povm, DEFAULT_MEMORY_CAP).ctx("coincidence POVM")?;
    let design = DesignMatrix::from_measurement(&coincidences);

    let q = setup.dims().state_dim();
    let seeds = TrialSeeds::derive(cfg.seed, cfg.photons[0], 0);
    let rho = random_state(q * q, cfg.state.rank.resolve(q * q), seeds.state).ctx("state")?;
    let p = outcome_probabilities(&rho, &coincidences).ctx("coincidence probabilities")?;
    let exact = reconstruct(&design, &p.values, &cfg.solver).ctx("reconstruction")?;
    let exact_fidelity = fidelity(&rho, &exact.rho_hat).ctx("fidelity")?;

    let counts = sample_coincidences(&p.values, cfg.photons[0], seeds.sample).ctx("coincidence sampling")?;
    let sampled = reconstruct(&design, &counts.frequencies(), &cfg.solver).ctx("reconstruction")?;
    let sampled_fidelity = fidelity(&rho, &sampled.rho_hat).ctx("fidelity")?;

    write(out, "coincidences.csv", &counts.to_csv())?;
    write(out, "rho_true.csv", &matrix_csv::to_string(rho.matrix()))?;
    write(out, "rho_hat.csv", &matrix_csv::to_string(exact.rho_hat.matrix()))?;
    let report = BiphotonReport {
        seed: cfg.seed,
        single_ic: ic_check(&setup.povm),
        intensity: audit.intensity,
        coincidence: audit.coincidence,
        exact_fidelity,
        pairs: cfg.photons[0],
        sampled_fidelity,
        exact_solver: exact,
    };
    write_json(out, "biphoton.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenCouplerReport {
    pub path: PathBuf,
    pub size: usize,
    pub seed: u64,
}

/// Write the Haar coupler a `haar` config would use, as a complex-matrix CSV
/// that a `file` coupler can load back.
pub fn gen_coupler(cfg: &ExperimentConfig, out: &Path) -> Result<GenCouplerReport, CliError> {
    let dims = cfg.dimension_spec(cfg.dims.lifted)?;
    let seed = coupler_seed(cfg.seed, dims);
    let u = haar_random_unitary(dims.lifted_dim(), seed);
    let path = write(out, "coupler.csv", &matrix_csv::to_string(&u))?;
    Ok(GenCouplerReport { path, size: dims.lifted_dim(), seed })
}
