//! Law of `u(t,x)` by Monte Carlo, a kernel density smoothness diagnostic,
//! and a numerical check of the two-sided power bounds on
//! `I(ρ) = ∫_0^ρ J(s) ds`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::error::{Error, Result};
use crate::solver::{Solver, SolverConfig};
use crate::spectral_measure::{critical_eta, cumulative_integral, QuadratureOptions, SpectralMeasure};
use crate::stable_kernel::FractionalIndex;
use crate::stats::line_fit;

/// Ellipticity is probed on this symmetric range of arguments.
pub const SIGMA_PROBE: f64 = 10.0;
const SIGMA_PROBE_POINTS: usize = 2001;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawSample {
    pub samples: Vec<f64>,
    pub time: f64,
    pub point: Vec<usize>,
    pub min_sigma: f64,
    pub warnings: Vec<String>,
}

/// `n` replicate values of `u(t, x)` under `config` (horizon replaced by `t`).
pub fn sample_law(config: &SolverConfig, t: f64, point: &[usize], n: usize) -> Result<LawSample> {
    let sigma = config.diffusion;
    let min_sigma = (0..SIGMA_PROBE_POINTS)
        .map(|i| -SIGMA_PROBE + 2.0 * SIGMA_PROBE * i as f64 / (SIGMA_PROBE_POINTS - 1) as f64)
        .map(|z| sigma.eval(z))
        .fold(f64::INFINITY, f64::min);
    if !(min_sigma > 0.0) {
        return Err(Error::Ellipticity { min_sigma });
    }
    let grid = config.grid;
    if point.len() != grid.dim() || point.iter().any(|&j| j >= grid.n_per_dim()) {
        return Err(Error::invalid("point", "must index a grid cell"));
    }
    let mut cfg = config.clone();
    cfg.horizon = t;
    cfg.record_every = usize::MAX;
    let solver = Solver::new(cfg)?;

    let mut warnings = Vec::new();
    let eta = critical_eta(&config.measure, &config.idx, &QuadratureOptions::for_dim(grid.dim()))?;
    if eta >= 0.5 {
        warnings.push(format!("critical eta {eta:.4} is not below 1/2; smoothness of the law is not covered"));
    }

    let results: Vec<Result<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|r| solver.solve(r).and_then(|p| p.last().at(point)))
        .collect();
    let samples = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(LawSample { samples, time: t, point: point.to_vec(), min_sigma, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    /// `0.9 min(s, IQR/1.34) n^{-1/5}`
    Silverman,
    /// `1.06 s n^{-1/5}`
    Scott,
    Fixed { h: f64 },
    /// `factor` times the Silverman bandwidth.
    Scaled { factor: f64 },
}

impl Bandwidth {
    pub fn resolve(&self, samples: &[f64]) -> Result<f64> {
        let n = samples.len() as f64;
        let sd = samples.iter().std_dev();
        let silverman = || {
            let mut data = Data::new(samples.to_vec());
            let iqr = data.interquartile_range();
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * n.powf(-0.2)
        };
        let h = match *self {
            Bandwidth::Silverman => silverman(),
            Bandwidth::Scott => 1.06 * sd * n.powf(-0.2),
            Bandwidth::Fixed { h } => h,
            Bandwidth::Scaled { factor } => factor * silverman(),
        };
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid("bandwidth", format!("resolved to {h}")));
        }
        Ok(h)
    }
}

pub const KDE_POINTS: usize = 512;
pub const MIN_KDE_SAMPLES: usize = 500;
pub const NORMALIZATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
    pub grid_1d: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative_bounds: DerivativeBounds,
    pub integral: f64,
    /// Location of the atom when every sample coincides.
    pub point_mass: Option<f64>,
    pub warnings: Vec<String>,
}

/// Gaussian-kernel density estimate on `KDE_POINTS` points spanning the
/// samples with a margin of five bandwidths.
pub fn kde(samples: &[f64], policy: Bandwidth) -> Result<DensityEstimate> {
    if samples.len() < MIN_KDE_SAMPLES {
        return Err(Error::InsufficientSamples { found: samples.len(), required: MIN_KDE_SAMPLES });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples", "must be finite"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return Ok(DensityEstimate {
            samples: samples.to_vec(),
            bandwidth: 0.0,
            grid_1d: vec![lo],
            values: Vec::new(),
            derivative_bounds: DerivativeBounds { first: f64::NAN, second: f64::NAN },
            integral: f64::NAN,
            point_mass: Some(lo),
            warnings: vec![format!("degenerate law: point mass at {lo:?}")],
        });
    }
    let h = policy.resolve(samples)?;
    let (a, b) = (lo - 5.0 * h, hi + 5.0 * h);
    let step = (b - a) / (KDE_POINTS - 1) as f64;
    let grid_1d: Vec<f64> = (0..KDE_POINTS).map(|i| a + i as f64 * step).collect();
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values: Vec<f64> = grid_1d
        .par_iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let integral = step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[KDE_POINTS - 1]));
    if (integral - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Consistency(format!("density integrates to {integral}")));
    }
    let first = values.windows(3).map(|w| ((w[2] - w[0]) / (2.0 * step)).abs()).fold(0.0, f64::max);
    let second = values
        .windows(3)
        .map(|w| ((w[2] - 2.0 * w[1] + w[0]) / (step * step)).abs())
        .fold(0.0, f64::max);
    Ok(DensityEstimate {
        samples: samples.to_vec(),
        bandwidth: h,
        grid_1d,
        values,
        derivative_bounds: DerivativeBounds { first, second },
        integral,
        point_mass: None,
        warnings: Vec::new(),
    })
}

/// Two-sided Kolmogorov–Smirnov distance to a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value with the small-sample correction
/// `c / (√n + 0.12 + 0.11/√n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.628 / (s + 0.12 + 0.11 / s)
}

pub const STABILITY_TOL: f64 = 0.1;
/// Slack on the small-`ρ` slope before the upper bound is called degenerate.
pub const SLOPE_SLACK: f64 = 0.02;
const SLOPE_POINTS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceBoundReport {
    pub theta1: f64,
    pub theta2: f64,
    pub critical_eta: f64,
    pub rho: Vec<f64>,
    pub integral: Vec<f64>,
    /// Largest `c₁` with `I(ρ) ≥ c₁ ρ^{θ₁}` on the grid.
    pub c1: f64,
    /// Smallest `c₂` with `I(ρ) ≤ c₂ ρ^{θ₂}` on the grid.
    pub c2: f64,
    /// Log-log slope of `I` over the smallest grid points.
    pub small_rho_slope: f64,
    /// `c₂` grows without bound as `ρ → 0`.
    pub degenerate: bool,
    pub refined_c1: f64,
    pub refined_c2: f64,
    pub stable: bool,
}

fn bound_constants(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    rho: &[f64],
    theta: (f64, f64),
    opts: &QuadratureOptions,
) -> Result<(Vec<f64>, f64, f64)> {
    let integral = rho
        .iter()
        .map(|&r| cumulative_integral(idx, measure, r, opts))
        .collect::<Result<Vec<f64>>>()?;
    let c1 = rho.iter().zip(&integral).map(|(r, i)| i / r.powf(theta.0)).fold(f64::INFINITY, f64::min);
    let c2 = rho.iter().zip(&integral).map(|(r, i)| i / r.powf(theta.1)).fold(0.0, f64::max);
    Ok((integral, c1, c2))
}

/// Fit the constants of `c₁ ρ^{θ₁} ≤ I(ρ) ≤ c₂ ρ^{θ₂}` on `rho_grid` and
/// repeat with refined quadrature.
pub fn variance_bound_check(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    t: f64,
    thetas: (f64, f64),
    rho_grid: &[f64],
) -> Result<VarianceBoundReport> {
    let (theta1, theta2) = thetas;
    if !(theta1 >= 1.0) {
        return Err(Error::invalid("theta1", "must be at least 1"));
    }
    if !(theta2 > 0.0) {
        return Err(Error::invalid("theta2", "must be positive"));
    }
    let cap = t.min(1.0);
    if rho_grid.len() < SLOPE_POINTS || rho_grid.iter().any(|&r| !(r > 0.0 && r <= cap)) {
        return Err(Error::invalid("rho_grid", format!("need at least {SLOPE_POINTS} points in (0, min(t, 1)]")));
    }
    let mut rho = rho_grid.to_vec();
    rho.sort_by(f64::total_cmp);
    rho.dedup();
    let opts = QuadratureOptions::for_dim(idx.dim());
    let eta = critical_eta(measure, idx, &opts)?;
    let (integral, c1, c2) = bound_constants(idx, measure, &rho, thetas, &opts)?;
    if !(c1 > 0.0 && c1.is_finite() && c2 > 0.0 && c2.is_finite()) {
        return Err(Error::Consistency(format!("no admissible constants: c1 = {c1}, c2 = {c2}")));
    }
    let log_r: Vec<f64> = rho[..SLOPE_POINTS].iter().map(|r| r.ln()).collect();
    let log_i: Vec<f64> = integral[..SLOPE_POINTS].iter().map(|i| i.ln()).collect();
    let small_rho_slope = line_fit(&log_r, &log_i).slope;
    let (_, refined_c1, refined_c2) = bound_constants(idx, measure, &rho, thetas, &opts.refined())?;
    let stable = ((refined_c1 - c1) / c1).abs() <= STABILITY_TOL && ((refined_c2 - c2) / c2).abs() <= STABILITY_TOL;
    Ok(VarianceBoundReport {
        theta1,
        theta2,
        critical_eta: eta,
        rho,
        integral,
        c1,
        c2,
        small_rho_slope,
        degenerate: small_rho_slope < theta2 - SLOPE_SLACK,
        refined_c1,
        refined_c2,
        stable,
    })
}

/// `n` points spaced geometrically on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n.max(2) - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}
