//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use hyperqst::modes::{BeamGeometry, LgModeSpec, PixelGrid};
use hyperqst::solver::SolverOptions;
use hyperqst::state::DimensionSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dims: DimsConfig,
    pub basis: BasisConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub coupler: CouplerConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default = "default_photons")]
    pub photons: Vec<u64>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub biphoton_audit: bool,
}

fn default_photons() -> Vec<u64> {
    vec![100_000]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub d: usize,
    pub m: usize,
    #[serde(rename = "D")]
    pub lifted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    /// The first `D` modes of order `2p + |l| = order`.
    LgConstantOrder {
        order: u32,
        #[serde(default = "one")]
        w0: f64,
        #[serde(default)]
        z: f64,
        #[serde(default = "one")]
        z_r: f64,
    },
    /// Explicit modes; the first `d` are physical, the rest ancillas.
    LgList {
        modes: Vec<ModeIndex>,
        #[serde(default = "one")]
        w0: f64,
        #[serde(default)]
        z: f64,
        #[serde(default = "one")]
        z_r: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeIndex {
    pub l: i32,
    pub p: u32,
}

impl BasisConfig {
    pub fn geometry(&self) -> BeamGeometry {
        match *self {
            BasisConfig::LgConstantOrder { w0, z, z_r, .. } | BasisConfig::LgList { w0, z, z_r, .. } => {
                BeamGeometry { w0, z, z_r }
            }
        }
    }

    /// Number of modes the basis can supply.
    pub fn capacity(&self) -> usize {
        match self {
            BasisConfig::LgConstantOrder { order, .. } => hyperqst::modes::constant_order_pairs(*order).len(),
            BasisConfig::LgList { modes, .. } => modes.len(),
        }
    }

    /// The first `count` mode specs.
    pub fn specs(&self, count: usize) -> Vec<LgModeSpec> {
        let g = self.geometry();
        match self {
            BasisConfig::LgConstantOrder { order, .. } => hyperqst::modes::constant_order_pairs(*order)
                .into_iter()
                .take(count)
                .map(|(l, p)| LgModeSpec::with_geometry(l, p, g))
                .collect(),
            BasisConfig::LgList { modes, .. } => {
                modes.iter().take(count).map(|m| LgModeSpec::with_geometry(m.l, m.p, g)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub side: usize,
    /// Half-width of the imaged window; `null` means `4.5·w(z)`.
    #[serde(default)]
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplerConfig {
    #[default]
    Haar,
    File {
        path: PathBuf,
        #[serde(default = "yes")]
        reunitarize: bool,
    },
    Identity,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSpec {
    Fixed(usize),
    Named(FullRank),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullRank {
    Full,
}

impl RankSpec {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            RankSpec::Fixed(r) => r,
            RankSpec::Named(FullRank::Full) => dim,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub rank: RankSpec,
    /// Trials per sweep point.
    pub count: usize,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { rank: RankSpec::Fixed(1), count: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "D")]
    pub lifted: Vec<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dimension_spec(&self, lifted: usize) -> Result<DimensionSpec, CliError> {
        DimensionSpec::new(self.dims.d, self.dims.m, lifted).map_err(|e| CliError::Validation(format!("dims: {e}")))
    }

    pub fn pixel_grid(&self) -> Result<PixelGrid, CliError> {
        let extent = self.grid.extent.unwrap_or_else(|| self.basis.geometry().default_extent());
        PixelGrid::new(self.grid.side, extent).map_err(|e| CliError::Validation(format!("grid: {e}")))
    }

    pub fn rank(&self) -> usize {
        self.state.rank.resolve(self.dims.d * self.dims.m)
    }

    /// Every `D` the config will build a coupler for.
    pub fn lifted_values(&self) -> Vec<usize> {
        match &self.sweep {
            Some(s) if !s.lifted.is_empty() => s.lifted.clone(),
            _ => vec![self.dims.lifted],
        }
    }

    /// Check every constraint that does not need heavy computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Validation(msg));
        for &lifted in &self.lifted_values() {
            self.dimension_spec(lifted)?;
            if lifted > self.basis.capacity() {
                return invalid(format!("basis supplies {} modes but D = {lifted}", self.basis.capacity()));
            }
        }
        for spec in self.basis.specs(self.basis.capacity()) {
            spec.validate().map_err(|e| CliError::Validation(format!("basis: {e}")))?;
        }
        self.pixel_grid()?;
        if self.state.count == 0 {
            return invalid("state.count must be >= 1".into());
        }
        let rank = self.rank();
        if rank == 0 || rank > self.dims.d * self.dims.m {
            return invalid(format!("state.rank must lie in 1..={}", self.dims.d * self.dims.m));
        }
        if self.photons.is_empty() {
            return invalid("photons must list at least one budget".into());
        }
        if self.photons.contains(&0) {
            return invalid("photon budgets must be positive".into());
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return invalid("snr_db must be finite".into());
            }
        }
        self.solver.validate().map_err(|e| CliError::Validation(format!("solver: {e}")))?;
        if let CouplerConfig::File { path, .. } = &self.coupler {
            if !path.is_file() {
                return invalid(format!("coupler file {} does not exist", path.display()));
            }
        }
        Ok(())
    }
}
