//! JSON run configuration: a versioned, strictly validated mirror of the
//! solver inputs.  Unknown keys are rejected and parse failures name the
//! offending key path, so a typo cannot silently fall back to a default.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ebm2_core::{
    Coalbedo, Forcing, InsolationShape, ModelParams, SolarFactor, SpectralField, SpectralGrid,
    StateVec, StepControls,
};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelParams,
    pub forcing: ForcingConfig,
    pub grid: GridConfig,
    pub ic: IcConfig,
    pub run: RunSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
    /// Only consulted by the scan command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub shape: InsolationShape,
    pub solar: SolarFactor,
    pub beta_a: Coalbedo,
    pub beta_s: Coalbedo,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_quad: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IcConfig {
    Constant { t_a: f64, t_s: f64 },
    Coeffs { t_a: Vec<f64>, t_s: Vec<f64> },
    Random { seed: u64, offset: f64, amplitude: f64, max_mode: usize, floor: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_threshold: Option<f64>,
    /// Inverts the simulate exit code: a blow-up is the expected outcome.
    #[serde(default)]
    pub expect_blowup: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Subset of coeffs|nodal|energy; empty means all three.
    #[serde(default)]
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let config: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("config key `{}`: {}", e.path(), e.inner()))?;
        if config.schema != SCHEMA_VERSION {
            bail!("config key `schema`: expected {}, got {}", SCHEMA_VERSION, config.schema);
        }
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        if self.grid.n_modes == 0 {
            bail!("config key `grid.n_modes`: must be at least 1");
        }
        for fmt in &self.outputs.formats {
            if !matches!(fmt.as_str(), "coeffs" | "nodal" | "energy") {
                bail!("config key `outputs.formats`: unknown format {fmt:?}");
            }
        }
        if let IcConfig::Coeffs { t_a, t_s } = &self.ic {
            if t_a.len() != self.grid.n_modes || t_s.len() != self.grid.n_modes {
                bail!(
                    "config key `ic`: coefficient vectors must have length {}",
                    self.grid.n_modes
                );
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<SpectralGrid>> {
        let grid = match self.grid.n_quad {
            Some(q) => SpectralGrid::with_quadrature(self.grid.n_modes, q),
            None => SpectralGrid::new(self.grid.n_modes),
        }?;
        Ok(grid)
    }

    pub fn build_forcing(&self, grid: &Arc<SpectralGrid>) -> Result<Forcing> {
        Ok(Forcing::new(
            grid,
            self.forcing.shape,
            self.forcing.solar,
            self.forcing.beta_a,
            self.forcing.beta_s,
        )?)
    }

    /// The initial state; `seed_override` replaces a random IC's seed.
    pub fn build_ic(&self, grid: &Arc<SpectralGrid>, seed_override: Option<u64>) -> Result<StateVec> {
        let state = match &self.ic {
            IcConfig::Constant { t_a, t_s } => StateVec::constant(grid, *t_a, *t_s),
            IcConfig::Coeffs { t_a, t_s } => StateVec::new(
                SpectralField::from_coeffs(grid, t_a.clone())?,
                SpectralField::from_coeffs(grid, t_s.clone())?,
            )?,
            IcConfig::Random { seed, offset, amplitude, max_mode, floor } => {
                let mut rng = StdRng::seed_from_u64(seed_override.unwrap_or(*seed));
                StateVec::random_nonneg(grid, &mut rng, *offset, *amplitude, *max_mode, *floor)
            }
        };
        Ok(state)
    }

    pub fn build_controls(&self) -> StepControls {
        let d = StepControls::default();
        StepControls {
            dt_init: self.run.dt_init.unwrap_or(d.dt_init),
            rel_tol: self.run.rel_tol.unwrap_or(d.rel_tol),
            dt_min: self.run.dt_min.unwrap_or(d.dt_min),
            dt_max: self.run.dt_max.unwrap_or(d.dt_max),
            record_every: self.run.record_every.unwrap_or(d.record_every),
            blowup_threshold: self.run.blowup_threshold.unwrap_or(d.blowup_threshold),
        }
    }

    /// Which trajectory tables simulate writes.
    pub fn wants(&self, format: &str) -> bool {
        self.outputs.formats.is_empty() || self.outputs.formats.iter().any(|f| f == format)
    }
}
