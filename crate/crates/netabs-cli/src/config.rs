//! Pipeline config: one TOML file shared by every subcommand.

use std::path::{Path, PathBuf};

use netabs::microgrid::{preset, CaseStudyConfig};
use netabs::pipeline::PipelineParams;
use netabs::simulator::{InitialKind, PolicyParams};
use netabs::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallGainConfig {
    /// Registered weight finder.
    pub method: String,
    /// Registered spectral-radius estimator.
    pub spectral: String,
    pub gelfand_k: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Defaults to half of the achieved decay.
    pub eps_tilde: Option<f64>,
    /// Fail when the achieved decay is below this.
    pub lambda_target: Option<f64>,
}

impl Default for SmallGainConfig {
    fn default() -> Self {
        Self {
            method: "auto".into(),
            spectral: "power_iteration".into(),
            gelfand_k: 8,
            max_iter: 10_000,
            tol: 1e-10,
            eps_tilde: None,
            lambda_target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    Csv,
    Binary,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: usize,
    /// Registered abstract input policy.
    pub input: String,
    /// Registered boundary policy.
    pub boundary: String,
    pub policy: PolicyParams,
    pub initial: InitialKind,
    pub scale: f64,
    pub seed: u64,
    /// Constant exogenous input for kinds with an `h` matrix.
    pub exogenous: Option<Vec<f64>>,
    pub trajectory: TrajectoryFormat,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            input: "zero".into(),
            boundary: "zero".into(),
            policy: PolicyParams::default(),
            initial: InitialKind::Random,
            scale: 1.0,
            seed: 0,
            exogenous: None,
            trajectory: TrajectoryFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicrogridConfig {
    pub preset: String,
    pub size: usize,
    pub horizon: usize,
    pub seed: u64,
    pub open: bool,
    pub kappa: Option<f64>,
    pub switch_period: Option<usize>,
    pub reference: Option<[f64; 2]>,
    pub load: Option<[f64; 2]>,
    pub mu_method: String,
    pub spectral_method: String,
    pub burn_in: Option<usize>,
    pub trajectory: TrajectoryFormat,
}

impl Default for MicrogridConfig {
    fn default() -> Self {
        Self {
            preset: "paper".into(),
            size: 100,
            horizon: 300,
            seed: 1,
            open: false,
            kappa: None,
            switch_period: None,
            reference: None,
            load: None,
            mu_method: "uniform".into(),
            spectral_method: "power_iteration".into(),
            burn_in: None,
            trajectory: TrajectoryFormat::None,
        }
    }
}

impl MicrogridConfig {
    pub fn case_study(&self, pipeline: &PipelineParams) -> Result<CaseStudyConfig> {
        let mut p = preset(&self.preset)?;
        if let Some(k) = self.kappa {
            p.kappa = k;
        }
        if let Some(t) = self.switch_period {
            p.switch_period = t;
        }
        if let Some(r) = self.reference {
            p.reference = r;
        }
        if let Some(l) = self.load {
            p.load = l;
        }
        Ok(CaseStudyConfig {
            preset: p,
            size: self.size,
            horizon: self.horizon,
            seed: self.seed,
            open: self.open,
            mu_method: self.mu_method.clone(),
            spectral_method: self.spectral_method.clone(),
            burn_in: self.burn_in,
            pipeline: pipeline.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Network file, relative to the config file.
    pub network: Option<PathBuf>,
    /// Bundle to read; defaults to `<out>/bundle.toml`.
    pub bundle: Option<PathBuf>,
    /// Keep only the first `truncate` subsystems.
    pub truncate: Option<usize>,
    pub certify: PipelineParams,
    pub smallgain: SmallGainConfig,
    pub simulate: SimulateConfig,
    pub microgrid: MicrogridConfig,
    pub verify: VerifyConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.network = cfg.network.map(|p| base.join(p));
        cfg.bundle = cfg.bundle.map(|p| base.join(p));
        Ok(cfg)
    }

    /// Applies `--seed` to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.certify.seed = seed;
        self.simulate.seed = seed;
        self.microgrid.seed = seed;
        self.verify.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.certify.certify.validate()?;
        if self.simulate.horizon == 0 || self.microgrid.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if !(self.simulate.scale >= 0.0 && self.simulate.scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "simulate.scale must be finite and nonnegative".into(),
            ));
        }
        if self.truncate == Some(0) {
            return Err(Error::InvalidParameter("truncate must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the effective config as TOML.
    pub fn hash(&self) -> Result<String> {
        let text = toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
