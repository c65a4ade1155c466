//! Discrete increments of Gaussian noise, white in time and spatially
//! correlated through a [`SpectralMeasure`], by periodic spectral synthesis.
//!
//! With `a_k² = dt (2π/L)^d μ(ξ_k)` and `w` a field of independent standard
//! normals, the increment is `√N · F⁻¹(a · F w)`. Its covariance at lag `h`
//! is `Σ_k a_k² cos(ξ_k · h)`, the Riemann sum of `dt ∫ e^{iξh} μ(dξ)` over
//! the grid band.
//!
//! Random streams are addressed by `(master_seed, replicate, step)`: the
//! master seed keys a ChaCha20 generator, the replicate selects its stream
//! and the step selects a disjoint block of `2^36` words in that stream.

use ndarray::{ArrayD, Dimension, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralPlan};
use crate::spectral_measure::{MeasureKind, SpectralMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath {
    pub master_seed: u64,
    pub replicate: u64,
    pub step: u64,
}

impl SeedPath {
    pub fn new(master_seed: u64, replicate: u64, step: u64) -> Self {
        Self { master_seed, replicate, step }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        stream_rng(self.master_seed, self.replicate, self.step)
    }
}

/// Words reserved per step inside one replicate stream.
const STEP_WORDS_LOG2: u32 = 36;

/// Counter-based generator for `(master_seed, replicate, step)`.
pub fn stream_rng(master_seed: u64, replicate: u64, step: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng.set_word_pos((step as u128) << STEP_WORDS_LOG2);
    rng
}

/// Precomputed synthesis amplitudes for one `(grid, measure, dt)`.
#[derive(Debug, Clone)]
pub struct NoiseSynth {
    plan: SpectralPlan,
    amplitude: ArrayD<f64>,
    /// `Some(c)` when every amplitude equals `c` (white noise).
    flat: Option<f64>,
    dt: f64,
    measure: SpectralMeasure,
}

impl NoiseSynth {
    pub fn new(grid: &Grid, measure: &SpectralMeasure, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if measure.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: measure.dim() });
        }
        if let Some(r_max) = measure.band_limit() {
            let corner = grid.nyquist() * (grid.dim() as f64).sqrt();
            if r_max < corner {
                return Err(Error::Synthesis(format!(
                    "tabulated density ends at |ξ| = {r_max}, grid band reaches {corner}"
                )));
            }
        }
        let freqs = grid.frequencies();
        let cell = (2.0 * std::f64::consts::PI / grid.box_length()).powi(grid.dim() as i32);
        let is_riesz = matches!(measure.kind(), MeasureKind::Riesz { .. });
        let mut failure = None;
        let mut xi = vec![0.0; grid.dim()];
        let amplitude = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |k| {
            let mut origin = true;
            for (slot, &kk) in xi.iter_mut().zip(k.slice()) {
                *slot = freqs[kk];
                origin &= kk == 0;
            }
            if origin && is_riesz {
                return 0.0;
            }
            let dens = measure.density(&xi);
            if !(dens.is_finite() && dens >= 0.0) {
                failure.get_or_insert_with(|| format!("density {dens} at ξ = {xi:?}"));
                return 0.0;
            }
            (dt * cell * dens).sqrt()
        });
        if let Some(msg) = failure {
            return Err(Error::Synthesis(msg));
        }
        let flat = match measure.kind() {
            MeasureKind::WhiteNoise => Some(amplitude.first().copied().unwrap_or(0.0)),
            _ => None,
        };
        Ok(Self { plan: SpectralPlan::new(grid), amplitude, flat, dt, measure: measure.clone() })
    }

    pub fn grid(&self) -> &Grid {
        self.plan.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    /// Synthesis amplitudes `a_k` in FFT order.
    pub fn amplitudes(&self) -> &ArrayD<f64> {
        &self.amplitude
    }

    /// Draw one increment and the largest imaginary residue of the inverse
    /// transform.
    pub fn sample_with_residue(&self, rng: &mut ChaCha20Rng) -> (ArrayD<f64>, f64) {
        let grid = self.plan.grid();
        let n = grid.len();
        let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let w = ArrayD::from_shape_vec(IxDyn(&grid.shape()), white).expect("shape matches grid");
        let root_n = (n as f64).sqrt();
        if let Some(c) = self.flat {
            return (w.mapv(|v| v * c * root_n), 0.0);
        }
        let mut spec = self.plan.forward_real(&w);
        spec.zip_mut_with(&self.amplitude, |s, a| *s *= *a * root_n);
        self.plan.inverse_to_real(spec)
    }

    pub fn sample(&self, rng: &mut ChaCha20Rng) -> ArrayD<f64> {
        self.sample_with_residue(rng).0
    }

    pub fn sample_at(&self, path: SeedPath) -> ArrayD<f64> {
        self.sample(&mut path.rng())
    }

    /// Exact covariance of the synthesized field at a lattice offset.
    pub fn covariance(&self, lag: &[isize]) -> f64 {
        let grid = self.plan.grid();
        let n = grid.n_per_dim() as isize;
        let mut acc = 0.0;
        for (k, a) in self.amplitude.indexed_iter() {
            let mut phase = 0.0;
            for (&kk, &h) in k.slice().iter().zip(lag) {
                phase += grid.signed_wavenumber(kk) as f64 * h.rem_euclid(n) as f64;
            }
            acc += a * a * (2.0 * std::f64::consts::PI * phase / n as f64).cos();
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct NoiseIncrement {
    pub field: Field,
    pub dt: f64,
    pub seed_path: SeedPath,
    pub measure: SpectralMeasure,
}

/// One increment `ΔM` over a step of length `dt`.
pub fn sample_increment(
    grid: &Grid,
    measure: &SpectralMeasure,
    dt: f64,
    seed_path: SeedPath,
) -> Result<NoiseIncrement> {
    let synth = NoiseSynth::new(grid, measure, dt)?;
    let values = synth.sample_at(seed_path);
    Ok(NoiseIncrement {
        field: Field::from_real(*grid, values)?,
        dt,
        seed_path,
        measure: measure.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagCovariance {
    pub lag: Vec<isize>,
    pub value: f64,
    pub std_error: f64,
}

pub const MIN_ENSEMBLE: usize = 100;

/// Unbiased ensemble covariance per lattice offset, averaged over space.
///
/// The per-cell ensemble mean is removed first; the standard error is
/// taken across replicates of the spatially averaged lag products.
pub fn empirical_covariance(
    ensemble: &[NoiseIncrement],
    lags: &[Vec<isize>],
) -> Result<Vec<LagCovariance>> {
    if ensemble.len() < MIN_ENSEMBLE {
        return Err(Error::InsufficientSamples { found: ensemble.len(), required: MIN_ENSEMBLE });
    }
    let first = &ensemble[0];
    let grid = *first.field.grid();
    for inc in &ensemble[1..] {
        if *inc.field.grid() != grid || inc.dt != first.dt || inc.measure != first.measure {
            return Err(Error::Configuration("ensemble mixes grids, steps or measures".into()));
        }
    }
    for lag in lags {
        if lag.len() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: lag.len() });
        }
    }
    let r = ensemble.len() as f64;
    let n = grid.n_per_dim() as isize;
    let mut mean = ArrayD::<f64>::zeros(IxDyn(&grid.shape()));
    for inc in ensemble {
        mean += inc.field.values()?;
    }
    mean /= r;
    let centered: Vec<ArrayD<f64>> = ensemble
        .iter()
        .map(|inc| inc.field.values().map(|v| v - &mean))
        .collect::<Result<_>>()?;
    let cells = grid.len() as f64;
    let correction = r / (r - 1.0);
    let mut out = Vec::with_capacity(lags.len());
    for lag in lags {
        let per_rep: Vec<f64> = centered
            .iter()
            .map(|c| {
                let mut acc = 0.0;
                let mut shifted = vec![0usize; grid.dim()];
                for (idx, &v) in c.indexed_iter() {
                    for (a, (&j, &h)) in idx.slice().iter().zip(lag).enumerate() {
                        shifted[a] = (j as isize + h).rem_euclid(n) as usize;
                    }
                    acc += v * c[IxDyn(&shifted)];
                }
                correction * acc / cells
            })
            .collect();
        let m = per_rep.iter().sum::<f64>() / r;
        let var = per_rep.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0);
        out.push(LagCovariance { lag: lag.clone(), value: m, std_error: (var / r).sqrt() });
    }
    Ok(out)
}

/// Increments of one replicate over consecutive steps.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub dt: f64,
    pub increments: Vec<ArrayD<f64>>,
}

impl NoisePath {
    /// Steps `0..n_steps` of replicate `replicate`.
    pub fn draw(synth: &NoiseSynth, master_seed: u64, replicate: u64, n_steps: usize) -> Self {
        let increments = (0..n_steps)
            .map(|k| synth.sample_at(SeedPath::new(master_seed, replicate, k as u64)))
            .collect();
        Self { dt: synth.dt(), increments }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Sum groups of `factor` consecutive increments: the same realization
    /// seen with step `factor · dt`.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || self.len() % factor != 0 {
            return Err(Error::invalid("factor", "must divide the number of steps"));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|chunk| {
                let mut acc = chunk[0].clone();
                for inc in &chunk[1..] {
                    acc += inc;
                }
                acc
            })
            .collect();
        Ok(NoisePath { dt: self.dt * factor as f64, increments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn reproducible_and_distinct_streams() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        let m = SpectralMeasure::bessel(1.0, 1).unwrap();
        let a = sample_increment(&grid, &m, 0.01, SeedPath::new(7, 3, 11)).unwrap();
        let b = sample_increment(&grid, &m, 0.01, SeedPath::new(7, 3, 11)).unwrap();
        assert_eq!(a.field.to_vec().unwrap(), b.field.to_vec().unwrap());
        let c = sample_increment(&grid, &m, 0.01, SeedPath::new(7, 3, 12)).unwrap();
        let e = sample_increment(&grid, &m, 0.01, SeedPath::new(7, 4, 11)).unwrap();
        assert_ne!(a.field.to_vec().unwrap(), c.field.to_vec().unwrap());
        assert_ne!(a.field.to_vec().unwrap(), e.field.to_vec().unwrap());
    }

    #[test]
    fn synthesized_field_is_real() {
        let grid = Grid::new(2, 32, 8.0).unwrap();
        let m = SpectralMeasure::riesz(0.7, 2).unwrap();
        let synth = NoiseSynth::new(&grid, &m, 0.1).unwrap();
        let (v, imag) = synth.sample_with_residue(&mut stream_rng(1, 0, 0));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(imag < 1e-10 * norm);
    }

    #[test]
    fn white_variance_matches_cell_formula() {
        let grid = Grid::new(1, 16, 4.0).unwrap();
        let synth = NoiseSynth::new(&grid, &SpectralMeasure::white(1), 0.02).unwrap();
        assert_relative_eq!(synth.covariance(&[0]), 0.02 / grid.spacing(), max_relative = 1e-12);
        assert!(synth.covariance(&[3]).abs() < 1e-15);
    }

    #[test]
    fn covariance_matches_direct_sum_of_density() {
        // Independent Riemann sum of dt ∫ cos(ξh) μ(dξ) over the band.
        let grid = Grid::new(1, 32, 12.0).unwrap();
        let m = SpectralMeasure::bessel(1.5, 1).unwrap();
        let dt = 0.05;
        let synth = NoiseSynth::new(&grid, &m, dt).unwrap();
        let dxi = 2.0 * PI / 12.0;
        for h in [0isize, 1, 5] {
            let x = h as f64 * grid.spacing();
            let direct: f64 = (-16..16)
                .map(|k| {
                    let xi = k as f64 * dxi;
                    dt * dxi * (1.0 + xi * xi).powf(-0.75) / (2.0 * PI) * (xi * x).cos()
                })
                .sum();
            assert_relative_eq!(synth.covariance(&[h]), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn synthesis_errors() {
        let grid = Grid::new(1, 64, 10.0).unwrap();
        let narrow = SpectralMeasure::tabulated(vec![0.0, 1.0], vec![1.0, 1.0], 1).unwrap();
        assert!(matches!(NoiseSynth::new(&grid, &narrow, 0.1), Err(Error::Synthesis(_))));
        assert!(NoiseSynth::new(&grid, &SpectralMeasure::white(1), 0.0).is_err());
        assert!(NoiseSynth::new(&grid, &SpectralMeasure::white(2), 0.1).is_err());
    }

    #[test]
    fn empirical_covariance_validation() {
        let grid = Grid::new(1, 8, 1.0).unwrap();
        let m = SpectralMeasure::white(1);
        let few: Vec<_> = (0..10)
            .map(|r| sample_increment(&grid, &m, 0.1, SeedPath::new(0, r, 0)).unwrap())
            .collect();
        assert!(matches!(
            empirical_covariance(&few, &[vec![0]]),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut mixed: Vec<_> = (0..120)
            .map(|r| sample_increment(&grid, &m, 0.1, SeedPath::new(0, r, 0)).unwrap())
            .collect();
        mixed.push(sample_increment(&grid, &m, 0.2, SeedPath::new(0, 999, 0)).unwrap());
        assert!(matches!(empirical_covariance(&mixed, &[vec![0]]), Err(Error::Configuration(_))));
    }

    #[test]
    fn empirical_white_covariance() {
        let grid = Grid::new(1, 32, 4.0).unwrap();
        let m = SpectralMeasure::white(1);
        let dt = 0.01;
        let ens: Vec<_> = (0..400)
            .map(|r| sample_increment(&grid, &m, dt, SeedPath::new(5, r, 0)).unwrap())
            .collect();
        let cov = empirical_covariance(&ens, &[vec![0], vec![1], vec![7]]).unwrap();
        let target = dt / grid.spacing();
        assert!((cov[0].value - target).abs() < 5.0 * cov[0].std_error);
        assert!(cov[1].value.abs() < 5.0 * cov[1].std_error);
        assert!(cov[2].value.abs() < 5.0 * cov[2].std_error);
    }

    #[test]
    fn coarsened_path_sums_increments() {
        let grid = Grid::new(1, 8, 1.0).unwrap();
        let synth = NoiseSynth::new(&grid, &SpectralMeasure::white(1), 0.1).unwrap();
        let path = NoisePath::draw(&synth, 3, 0, 8);
        let coarse = path.coarsen(4).unwrap();
        assert_eq!(coarse.len(), 2);
        assert_relative_eq!(coarse.dt, 0.4, max_relative = 1e-15);
        let manual = &path.increments[4] + &path.increments[5] + &path.increments[6] + &path.increments[7];
        assert_eq!(coarse.increments[1], manual);
        assert!(path.coarsen(3).is_err());
    }
}
