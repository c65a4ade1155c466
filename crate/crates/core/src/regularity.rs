//! Hölder exponents of simulated paths from second-moment increment scaling.
//!
//! For dyadic lags `h` the mean squared increment `E|u(t+h,x) - u(t,x)|²`
//! (or the spatial analogue) is regressed on `h` in log-log coordinates and
//! half the slope is reported. Intervals come from a percentile bootstrap
//! over replicates.

use ndarray::{ArrayD, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::PathSolution;
use crate::stable_kernel::FractionalIndex;
use crate::stats::{bootstrap_ci, line_fit, Interval};

/// Upper ends `(γ₁, γ₂)` of the temporal and spatial Hölder windows for
/// initial data of regularity `ρ` and noise exponent `η`.
pub fn theoretical_exponents(idx: &FractionalIndex, rho: f64, eta: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    let g1 = (rho * idx.sum_inv_alpha()).min(0.5 * (1.0 - eta));
    let g2 = rho.min(0.5 * idx.alpha0() * (1.0 - eta)).min(0.5);
    Ok((g1, g2))
}

pub const MIN_REPLICATES: usize = 200;
pub const MIN_SCALES: usize = 4;
/// Estimates at or above this value are flagged as saturated (smooth at
/// every resolved scale).
pub const SATURATION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Average over every lattice cell.
    All,
    Point(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Lags below `max(2 dt, min_lag)` are excluded from the temporal fit.
    pub min_lag: f64,
    /// Smallest spatial lag in cells.
    pub min_cells: usize,
    pub probe: Probe,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { min_lag: 0.0, min_cells: 1, probe: Probe::All, resamples: 1000, level: 0.95, seed: 0x686f6c }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub ci: Interval,
    pub lags: Vec<f64>,
    pub moments: Vec<f64>,
    pub saturated: bool,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub gamma1_hat: ExponentEstimate,
    pub gamma2_hat: ExponentEstimate,
    pub gamma1_max: f64,
    pub gamma2_max: f64,
}

fn check_ensemble(paths: &[PathSolution]) -> Result<Grid> {
    if paths.len() < MIN_REPLICATES {
        return Err(Error::InsufficientSamples { found: paths.len(), required: MIN_REPLICATES });
    }
    let grid = *paths[0].frames[0].grid();
    let times = &paths[0].times;
    for p in paths {
        if p.times != *times || p.frames.iter().any(|f| *f.grid() != grid) {
            return Err(Error::Configuration("paths disagree on times or grid".into()));
        }
    }
    Ok(grid)
}

/// Regress per-replicate moments and bootstrap over replicates.
fn fit(per_rep: &[Vec<f64>], lags: Vec<f64>, opts: &EstimatorOptions) -> Result<ExponentEstimate> {
    let r = per_rep.len();
    let log_h: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let moments_of = |ix: &mut dyn Iterator<Item = usize>| {
        let mut acc = vec![0.0; lags.len()];
        let mut count = 0usize;
        for i in ix {
            for (a, v) in acc.iter_mut().zip(&per_rep[i]) {
                *a += v;
            }
            count += 1;
        }
        acc.iter().map(|a| a / count as f64).collect::<Vec<f64>>()
    };
    let moments = moments_of(&mut (0..r));
    if moments.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::Consistency("non-positive increment moment".into()));
    }
    let exponent = |m: &[f64]| {
        let log_m: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        0.5 * line_fit(&log_h, &log_m).slope
    };
    let value = exponent(&moments);
    let ci = bootstrap_ci(r, opts.resamples, opts.seed, opts.level, |ix| {
        exponent(&moments_of(&mut ix.iter().copied()))
    });
    Ok(ExponentEstimate { value, ci, lags, moments, saturated: value >= SATURATION, replicates: r })
}

fn flat_index(grid: &Grid, point: &[usize]) -> Result<usize> {
    if point.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: point.len() });
    }
    let n = grid.n_per_dim();
    point.iter().try_fold(0usize, |acc, &j| {
        if j < n {
            Ok(acc * n + j)
        } else {
            Err(Error::invalid("probe", "index outside the grid"))
        }
    })
}

/// Temporal exponent from frame increments at dyadic multiples of the frame
/// spacing, averaged over base times in the second half of the horizon.
pub fn estimate_temporal(paths: &[PathSolution], opts: &EstimatorOptions) -> Result<ExponentEstimate> {
    let grid = check_ensemble(paths)?;
    let times = &paths[0].times;
    let k_last = times.len() - 1;
    if k_last == 0 {
        return Err(Error::InsufficientResolution { usable: 0, required: MIN_SCALES });
    }
    let tau = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - tau).abs() > 1e-9 * tau) {
        return Err(Error::Configuration("temporal estimate needs uniformly spaced frames".into()));
    }
    let horizon = times[k_last];
    let floor = (2.0 * paths[0].dt).max(opts.min_lag);
    let mut steps = Vec::new();
    let mut m = 1usize;
    while m as f64 * tau <= horizon / 8.0 * (1.0 + 1e-12) {
        if m as f64 * tau >= floor * (1.0 - 1e-12) {
            steps.push(m);
        }
        m *= 2;
    }
    if steps.len() < MIN_SCALES {
        return Err(Error::InsufficientResolution { usable: steps.len(), required: MIN_SCALES });
    }
    let first_base = times.iter().position(|&t| t >= 0.5 * horizon).unwrap_or(k_last);
    let cell = match &opts.probe {
        Probe::All => None,
        Probe::Point(p) => Some(flat_index(&grid, p)?),
    };
    let per_rep = paths
        .iter()
        .map(|p| {
            let frames: Vec<&[f64]> = p
                .frames
                .iter()
                .map(|f| f.values().map(|v| v.as_slice_memory_order().expect("standard layout")))
                .collect::<Result<_>>()?;
            Ok(steps
                .iter()
                .map(|&m| {
                    let (mut acc, mut count) = (0.0, 0usize);
                    for k in first_base..=k_last.saturating_sub(m) {
                        let (a, b) = (frames[k], frames[k + m]);
                        match cell {
                            Some(c) => acc += (b[c] - a[c]).powi(2),
                            None => acc += a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum::<f64>() / a.len() as f64,
                        }
                        count += 1;
                    }
                    acc / count.max(1) as f64
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    fit(&per_rep, steps.iter().map(|&m| m as f64 * tau).collect(), opts)
}

/// Mean squared increment along every axis at a lattice offset of `m` cells.
fn spatial_moment(values: &ArrayD<f64>, m: usize) -> f64 {
    let d = values.ndim();
    let mut acc = 0.0;
    for axis in 0..d {
        let n = values.len_of(Axis(axis));
        let mut shifted = values.clone();
        for j in 0..n {
            shifted.index_axis_mut(Axis(axis), j).assign(&values.index_axis(Axis(axis), (j + m) % n));
        }
        acc += values.iter().zip(&shifted).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / values.len() as f64;
    }
    acc / d as f64
}

/// Spatial exponent at the frame closest to `t_probe`, over lags
/// `Δx·2^j ≤ L/8`.
pub fn estimate_spatial(
    paths: &[PathSolution],
    t_probe: f64,
    opts: &EstimatorOptions,
) -> Result<ExponentEstimate> {
    let grid = check_ensemble(paths)?;
    let frame = paths[0]
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t_probe).abs().total_cmp(&(b.1 - t_probe).abs()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let n = grid.n_per_dim();
    let mut cells = Vec::new();
    let mut m = 1usize;
    while m * 8 <= n {
        if m >= opts.min_cells {
            cells.push(m);
        }
        m *= 2;
    }
    if cells.len() < MIN_SCALES {
        return Err(Error::InsufficientResolution { usable: cells.len(), required: MIN_SCALES });
    }
    let per_rep = paths
        .iter()
        .map(|p| {
            let v = p.frames[frame].values()?;
            Ok(cells.iter().map(|&m| spatial_moment(v, m)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    fit(&per_rep, cells.iter().map(|&m| m as f64 * grid.spacing()).collect(), opts)
}

/// Both estimates next to the theoretical window ends.
pub fn holder_report(
    paths: &[PathSolution],
    idx: &FractionalIndex,
    rho: f64,
    eta: f64,
    opts: &EstimatorOptions,
) -> Result<HolderReport> {
    let (gamma1_max, gamma2_max) = theoretical_exponents(idx, rho, eta)?;
    let t_probe = *paths.first().and_then(|p| p.times.last()).unwrap_or(&0.0);
    Ok(HolderReport {
        gamma1_hat: estimate_temporal(paths, opts)?,
        gamma2_hat: estimate_spatial(paths, t_probe, opts)?,
        gamma1_max,
        gamma2_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn single_point_paths(
        reps: usize,
        steps: usize,
        dt: f64,
        mut value: impl FnMut(usize, usize, &mut ChaCha20Rng) -> f64,
    ) -> Vec<PathSolution> {
        let grid = Grid::new(1, 1, 1.0).unwrap();
        (0..reps)
            .map(|r| {
                let mut rng = ChaCha20Rng::seed_from_u64(r as u64);
                let frames = (0..=steps)
                    .map(|k| Field::from_vec(grid, vec![value(r, k, &mut rng)]).unwrap())
                    .collect();
                PathSolution {
                    dt,
                    times: (0..=steps).map(|k| k as f64 * dt).collect(),
                    frames,
                    replicate: r as u64,
                    picard: None,
                }
            })
            .collect()
    }

    #[test]
    fn theoretical_examples() {
        let (g1, g2) = theoretical_exponents(&FractionalIndex::isotropic(2, 2.0, 0.0).unwrap(), 0.3, 0.5).unwrap();
        assert_relative_eq!(g1, 0.25);
        assert_relative_eq!(g2, 0.3);
        let (g1, g2) = theoretical_exponents(&FractionalIndex::isotropic(1, 0.5, 0.0).unwrap(), 0.2, 0.9).unwrap();
        assert_relative_eq!(g1, 0.05, max_relative = 1e-12);
        assert_relative_eq!(g2, 0.025, max_relative = 1e-12);
        let (g1, g2) = theoretical_exponents(&FractionalIndex::laplacian(1), 1.0, 0.5 + 1e-9).unwrap();
        assert_relative_eq!(g1, 0.25, epsilon = 1e-8);
        assert_relative_eq!(g2, 0.5, epsilon = 1e-8);
        assert!(theoretical_exponents(&FractionalIndex::laplacian(1), 0.0, 0.5).is_err());
        assert!(theoretical_exponents(&FractionalIndex::laplacian(1), 0.5, 1.0).is_err());
    }

    #[test]
    fn lipschitz_path_has_unit_exponent() {
        let paths = single_point_paths(200, 256, 1.0 / 256.0, |_, k, _| k as f64 / 256.0);
        let est = estimate_temporal(&paths, &EstimatorOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 0.01);
        assert!(est.saturated);
    }

    #[test]
    fn brownian_path_has_half_exponent() {
        let dt = 1.0 / 512.0;
        let mut state = vec![0.0; 200];
        let paths = single_point_paths(200, 512, dt, |r, k, rng| {
            if k > 0 {
                let z: f64 = StandardNormal.sample(rng);
                state[r] += dt.sqrt() * z;
            }
            state[r]
        });
        let est = estimate_temporal(&paths, &EstimatorOptions::default()).unwrap();
        assert!((est.value - 0.5).abs() < 0.05, "{est:?}");
        assert!(est.ci.contains(est.value));
        assert!(!est.saturated);
    }

    #[test]
    fn smooth_field_saturates_spatially() {
        let grid = Grid::new(1, 128, 2.0 * std::f64::consts::PI).unwrap();
        let paths: Vec<PathSolution> = (0..200)
            .map(|r| PathSolution {
                dt: 0.1,
                times: vec![0.0],
                frames: vec![Field::from_fn(grid, |x| (x[0] + r as f64).sin())],
                replicate: r,
                picard: None,
            })
            .collect();
        let est = estimate_spatial(&paths, 0.0, &EstimatorOptions::default()).unwrap();
        assert!(est.value >= 0.95, "{est:?}");
        assert!(est.saturated);
    }

    #[test]
    fn too_few_scales_or_replicates() {
        let paths = single_point_paths(200, 32, 0.01, |_, k, _| k as f64);
        assert!(matches!(
            estimate_temporal(&paths, &EstimatorOptions::default()),
            Err(Error::InsufficientResolution { .. })
        ));
        let paths = single_point_paths(20, 512, 0.01, |_, k, _| k as f64);
        assert!(matches!(
            estimate_temporal(&paths, &EstimatorOptions::default()),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn theoretical_is_monotone(alpha in 0.3f64..2.0, rho in 0.05f64..1.0, eta in 0.05f64..0.9, de in 0.0f64..0.09, dr in 0.0f64..0.5) {
            prop_assume!((alpha - 1.0).abs() > 0.01);
            let idx = FractionalIndex::isotropic(1, alpha, 0.0).unwrap();
            let (a1, a2) = theoretical_exponents(&idx, rho, eta).unwrap();
            let (b1, b2) = theoretical_exponents(&idx, rho, eta + de).unwrap();
            prop_assert!(b1 <= a1 && b2 <= a2);
            let (c1, c2) = theoretical_exponents(&idx, (rho + dr).min(1.0), eta).unwrap();
            prop_assert!(c1 >= a1 && c2 >= a2);
        }
    }
}
