//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [index]
//! alpha = [2.0]
//! delta = [0.0]
//!
//! [measure]
//! kind = "riesz"
//! d = 1
//! params = { gamma = 0.5 }
//!
//! [grid]
//! n = 256
//! length = 6.283185307179586
//!
//! [simulate]
//! dt = 0.001
//! horizon = 0.25
//! replicates = 100
//! drift = { kind = "constant", value = 0.0 }
//! diffusion = { kind = "constant", value = 1.0 }
//! initial = { kind = "constant", value = 0.0 }
//! ```
//!
//! Each subcommand reads only the blocks it needs; all of them are
//! validated before any computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::Bandwidth;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::{Coefficient, InitialCondition, PicardOptions, Scheme, SolverConfig};
use crate::spectral_measure::SpectralMeasure;
use crate::stable_kernel::FractionalIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub times: Vec<f64>,
    /// Points per axis when no `[grid]` is given; the box is then sized
    /// from the smallest time.
    pub n: Option<usize>,
    #[serde(default = "yes")]
    pub check: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn default_etas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "Coefficient::zero")]
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub initial: InitialCondition,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub picard: PicardOptions,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    #[serde(default = "one_usize")]
    pub replicates: usize,
    /// Report the largest `p`-th moment when set.
    pub moment_p: Option<f64>,
}

fn default_scheme() -> Scheme {
    Scheme::ExpEuler
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderBlock {
    #[serde(default = "one")]
    pub rho: f64,
    /// Defaults to the measure's critical exponent.
    pub eta: Option<f64>,
    #[serde(default)]
    pub min_lag: f64,
    #[serde(default = "one_usize")]
    pub min_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    pub t: f64,
    pub point: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: Bandwidth,
    #[serde(default = "one")]
    pub theta1: f64,
    /// Defaults to `1 - η*`.
    pub theta2: Option<f64>,
    pub rho_grid: Option<Vec<f64>>,
}

fn default_bandwidth() -> Bandwidth {
    Bandwidth::Silverman
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub index: Option<FractionalIndex>,
    pub measure: Option<SpectralMeasure>,
    pub grid: Option<GridSpec>,
    pub kernel: Option<KernelBlock>,
    pub admissibility: Option<MeasureBlock>,
    pub simulate: Option<SimulateBlock>,
    pub holder: Option<HolderBlock>,
    pub density: Option<DensityBlock>,
}

fn missing(block: &str) -> Error {
    Error::Configuration(format!("missing [{block}] block"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn index(&self) -> Result<&FractionalIndex> {
        self.index.as_ref().ok_or_else(|| missing("index"))
    }

    pub fn measure(&self) -> Result<&SpectralMeasure> {
        let m = self.measure.as_ref().ok_or_else(|| missing("measure"))?;
        let d = self.index()?.dim();
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
        }
        Ok(m)
    }

    pub fn grid(&self) -> Result<Option<Grid>> {
        match &self.grid {
            None => Ok(None),
            Some(g) => Ok(Some(Grid::new(self.index()?.dim(), g.n, g.length)?)),
        }
    }

    pub fn kernel_block(&self) -> Result<&KernelBlock> {
        let k = self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
        if k.times.is_empty() || k.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("kernel.times", "need positive finite times"));
        }
        Ok(k)
    }

    pub fn measure_block(&self) -> Result<MeasureBlock> {
        let b = self
            .admissibility
            .clone()
            .unwrap_or(MeasureBlock { etas: default_etas(), horizon: 1.0 });
        if b.etas.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::invalid("admissibility.etas", "must lie in (0, 1]"));
        }
        if !(b.horizon > 0.0 && b.horizon.is_finite()) {
            return Err(Error::invalid("admissibility.horizon", "must be positive"));
        }
        Ok(b)
    }

    /// Solver configuration assembled from `[index]`, `[measure]`, `[grid]`
    /// and `[simulate]`, validated.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let sim = self.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
        let grid = self.grid()?.ok_or_else(|| missing("grid"))?;
        let cfg = SolverConfig {
            idx: self.index()?.clone(),
            measure: self.measure()?.clone(),
            grid,
            drift: sim.drift,
            diffusion: sim.diffusion,
            initial: sim.initial.clone(),
            dt: sim.dt,
            horizon: sim.horizon,
            scheme: sim.scheme,
            picard: sim.picard,
            record_every: sim.record_every,
            master_seed: self.seed,
        };
        cfg.validate()?;
        cfg.initial.to_field(&cfg.grid)?;
        if sim.replicates == 0 {
            return Err(Error::invalid("simulate.replicates", "must be positive"));
        }
        Ok(cfg)
    }

    pub fn simulate_block(&self) -> Result<&SimulateBlock> {
        self.simulate.as_ref().ok_or_else(|| missing("simulate"))
    }

    pub fn holder_block(&self) -> Result<&HolderBlock> {
        let h = self.holder.as_ref().ok_or_else(|| missing("holder"))?;
        if !(h.rho > 0.0 && h.rho <= 1.0) {
            return Err(Error::invalid("holder.rho", "must lie in (0, 1]"));
        }
        if let Some(eta) = h.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::invalid("holder.eta", "must lie in (0, 1)"));
            }
        }
        Ok(h)
    }

    pub fn density_block(&self) -> Result<&DensityBlock> {
        let b = self.density.as_ref().ok_or_else(|| missing("density"))?;
        if !(b.t > 0.0 && b.t.is_finite()) {
            return Err(Error::invalid("density.t", "must be positive"));
        }
        Ok(b)
    }
}
