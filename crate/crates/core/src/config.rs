//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifold::FamilySpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    /// Chart (or ambient, for meshes) coordinates of the center.
    pub center: Vec<f64>,
    pub radius: f64,
    /// Radius of the ball carrying the Dirichlet problem for the splitting map.
    pub domain_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Regularity threshold relative to the median largest Jacobian eigenvalue.
    pub lambda_min_rel: f64,
    pub level_tolerance: f64,
    /// Flow time step in units of ε.
    pub dt_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Index among the nonconstant eigenmodes of the function to flow.
    pub mode: usize,
    /// Start point in chart coordinates; defaults to the ball center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Flow horizon in units of `1/K`.
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Ricci parameter `λ` with `Ric ≥ −(m−1)λ g`; measured from the analytic
    /// metric when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_ric: Option<f64>,
    /// Fiber levels checked by the a priori bound per ball.
    pub fiber_levels: usize,
    /// Every n-th node of the region is transported in the change-integral check.
    pub change_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub ball: BallConfig,
    pub sweep: SweepConfig,
    pub spectral: SpectralConfig,
    pub thresholds: Thresholds,
    pub flow: FlowConfig,
    pub estimates: EstimateConfig,
    pub output_dir: PathBuf,
    pub cache: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Warped torus `δ = 0.3` with the ball on the thin side of the warp.
    pub fn warped_default() -> Self {
        Self {
            family: FamilySpec::warped(0.1, 0.3, 256, 32),
            ball: BallConfig {
                center: vec![0.75, 0.0],
                radius: 0.2,
                domain_radius: 0.45,
            },
            sweep: SweepConfig {
                epsilons: vec![0.2, 0.1, 0.05],
            },
            spectral: SpectralConfig {
                count: 4,
                theta_max: Some(50.0),
                shift: 1.0,
            },
            thresholds: Thresholds {
                lambda_min_rel: 1e-6,
                level_tolerance: 1e-8,
                dt_factor: 1e-4,
            },
            flow: FlowConfig {
                mode: 0,
                x0: None,
                horizon: 10.0,
            },
            estimates: EstimateConfig {
                lambda_ric: None,
                fiber_levels: 9,
                change_stride: 8,
            },
            output_dir: PathBuf::from("out"),
            cache: true,
            seed: 0,
        }
    }

    /// Flat product torus with the same ball layout.
    pub fn flat_default() -> Self {
        Self {
            family: FamilySpec::flat(0.1, 256, 32),
            ..Self::warped_default()
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ball.radius", self.ball.radius),
            ("ball.domain_radius", self.ball.domain_radius),
            ("spectral.shift", self.spectral.shift),
            ("thresholds.lambda_min_rel", self.thresholds.lambda_min_rel),
            ("thresholds.level_tolerance", self.thresholds.level_tolerance),
            ("thresholds.dt_factor", self.thresholds.dt_factor),
            ("flow.horizon", self.flow.horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.spectral.count == 0 {
            return Err(Error::Config("spectral.count must be positive".into()));
        }
        if let Some(t) = self.spectral.theta_max {
            if !(t > 0.0) {
                return Err(Error::Config(format!("spectral.theta_max must be positive, got {t}")));
            }
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        if self.estimates.change_stride == 0 || self.estimates.fiber_levels == 0 {
            return Err(Error::Config("estimates counts must be positive".into()));
        }
        if self.ball.center.len() != self.family.manifold_dim() && self.ball.center.len() != 3 {
            return Err(Error::Config(format!(
                "ball.center has {} coordinates",
                self.ball.center.len()
            )));
        }
        Ok(())
    }

    /// The configuration with the family's ε replaced.
    pub fn at_epsilon(&self, epsilon: f64) -> Self {
        let mut cfg = self.clone();
        cfg.family.epsilon = epsilon;
        cfg
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
