//! Mild solutions on the periodic lattice.
//!
//! Two schemes share one noise realization per replicate:
//!
//! * exponential Euler, `u_{k+1} = S_dt[u_k + dt b(u_k) + σ(u_k) ΔM_k]`;
//! * whole-path Picard iteration of the discrete mild equation, with the
//!   stochastic convolution on the same left-endpoint rule and the drift
//!   convolution on the trapezoid rule,
//!
//!   ```text
//!   v_{k+1} = S_dt[v_k + (dt/2) b(u_k) + σ(u_k) ΔM_k] + (dt/2) b(u_{k+1}).
//!   ```
//!
//! The increments are drawn once and held fixed across Picard iterations.

use ndarray::{ArrayD, IxDyn, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::noise::{NoisePath, NoiseSynth, SeedPath};
use crate::spectral_measure::{require_admissible, SpectralMeasure};
use crate::stable_kernel::{FractionalIndex, Propagator};
use crate::stats::{bootstrap_ci, Interval};

/// Named scalar coefficient presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    Linear { slope: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `offset + amplitude · sin(u)`
    Sine { offset: f64, amplitude: f64 },
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::Constant { value: 0.0 }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::Linear { slope } => slope * u,
            Coefficient::Affine { slope, intercept } => slope * u + intercept,
            Coefficient::Sine { offset, amplitude } => offset + amplitude * u.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Coefficient::Constant { .. } => 0.0,
            Coefficient::Linear { slope } | Coefficient::Affine { slope, .. } => slope.abs(),
            Coefficient::Sine { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Coefficient::Constant { value } => value == 0.0,
            Coefficient::Linear { slope } => slope == 0.0,
            Coefficient::Affine { slope, intercept } => slope == 0.0 && intercept == 0.0,
            Coefficient::Sine { offset, amplitude } => offset == 0.0 && amplitude == 0.0,
        }
    }

    fn params(&self) -> [f64; 2] {
        match *self {
            Coefficient::Constant { value } => [value, 0.0],
            Coefficient::Linear { slope } => [slope, 0.0],
            Coefficient::Affine { slope, intercept } => [slope, intercept],
            Coefficient::Sine { offset, amplitude } => [offset, amplitude],
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(name, "coefficient parameters must be finite"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `amplitude · cos(ξ·x)` with `ξ = 2π mode / L`.
    Cosine { amplitude: f64, mode: Vec<i64> },
    /// Unit-mass spike at the origin.
    Spike,
    /// `height · exp(-|x|² / (2 width²))`
    Bump { height: f64, width: f64 },
    /// Row-major values.
    Values { values: Vec<f64> },
}

impl InitialCondition {
    pub fn to_field(&self, grid: &Grid) -> Result<Field> {
        let field = match self {
            InitialCondition::Constant { value } => Field::constant(*grid, *value),
            InitialCondition::Cosine { amplitude, mode } => {
                if mode.len() != grid.dim() {
                    return Err(Error::DimensionMismatch { expected: grid.dim(), found: mode.len() });
                }
                let scale = 2.0 * std::f64::consts::PI / grid.box_length();
                Field::from_fn(*grid, |x| {
                    let phase: f64 = x.iter().zip(mode).map(|(xi, &m)| scale * m as f64 * xi).sum();
                    amplitude * phase.cos()
                })
            }
            InitialCondition::Spike => Field::spike(*grid),
            InitialCondition::Bump { height, width } => {
                if !(*width > 0.0) {
                    return Err(Error::invalid("width", "must be positive"));
                }
                Field::from_fn(*grid, |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    height * (-r2 / (2.0 * width * width)).exp()
                })
            }
            InitialCondition::Values { values } => Field::from_vec(*grid, values.clone())?,
        };
        if field.values()?.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial", "values must be finite"));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExpEuler,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub max_iter: usize,
    /// Stop once the sup-norm change is below `tol · max(1, sup u)`.
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub idx: FractionalIndex,
    pub measure: SpectralMeasure,
    pub grid: Grid,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub initial: InitialCondition,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub picard: PicardOptions,
    /// Record every `record_every`-th step (the last step is always kept).
    pub record_every: usize,
    pub master_seed: u64,
}

/// A frame whose sup-norm exceeds this multiple of `max(1, sup u₀)` aborts.
pub const BLOW_UP_FACTOR: f64 = 1e6;

impl SolverConfig {
    /// Check invariants and return the number of steps.
    pub fn validate(&self) -> Result<usize> {
        let d = self.grid.dim();
        self.idx.check_dim(d)?;
        if self.measure.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.measure.dim() });
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::invalid("horizon", "must be at least dt"));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::invalid("dt", "must divide the horizon"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be positive"));
        }
        if self.picard.max_iter == 0 || !(self.picard.tol > 0.0) {
            return Err(Error::invalid("picard", "max_iter and tol must be positive"));
        }
        self.drift.validate("drift")?;
        self.diffusion.validate("diffusion")?;
        require_admissible(&self.measure, &self.idx)?;
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardTrace {
    /// Sup-norm change per iteration.
    pub residuals: Vec<f64>,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    /// Ratios of successive residuals.
    pub fn contraction_rates(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PathSolution {
    pub dt: f64,
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
    pub replicate: u64,
    pub picard: Option<PicardTrace>,
}

impl PathSolution {
    pub fn last(&self) -> &Field {
        self.frames.last().expect("at least the initial frame")
    }
}

/// Validated configuration with precomputed propagator and synthesizer.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    steps: usize,
    initial: ArrayD<f64>,
    propagator: Propagator,
    synth: NoiseSynth,
    blow_up: f64,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        let steps = config.validate()?;
        let initial = config.initial.to_field(&config.grid)?.into_values()?;
        let propagator = Propagator::new(&config.idx, &config.grid, config.dt)?;
        let synth = NoiseSynth::new(&config.grid, &config.measure, config.dt)?;
        let sup0 = initial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { config, steps, initial, propagator, synth, blow_up: BLOW_UP_FACTOR * sup0.max(1.0) })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn synth(&self) -> &NoiseSynth {
        &self.synth
    }

    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }

    fn noise_free(&self) -> bool {
        self.config.diffusion.is_zero()
    }

    /// Pre-draw the increments of one replicate.
    pub fn noise_path(&self, replicate: u64) -> NoisePath {
        NoisePath::draw(&self.synth, self.config.master_seed, replicate, self.steps)
    }

    /// Solve with the configured scheme.
    pub fn solve(&self, replicate: u64) -> Result<PathSolution> {
        match self.config.scheme {
            Scheme::ExpEuler => self.solve_euler(replicate),
            Scheme::Picard => self.solve_picard(replicate),
        }
    }

    pub fn solve_euler(&self, replicate: u64) -> Result<PathSolution> {
        let seed = self.config.master_seed;
        self.euler_from(replicate, |k| {
            if self.noise_free() {
                None
            } else {
                Some(self.synth.sample_at(SeedPath::new(seed, replicate, k as u64)))
            }
        })
    }

    /// Exponential Euler on given increments, whose step may differ from
    /// the configured one.
    pub fn solve_euler_with(&self, path: &NoisePath, replicate: u64) -> Result<PathSolution> {
        let coarse = self.rescaled(path)?;
        let s = coarse.as_ref().unwrap_or(self);
        s.euler_from(replicate, |k| Some(path.increments[k].clone()))
    }

    pub fn solve_picard(&self, replicate: u64) -> Result<PathSolution> {
        let path = if self.noise_free() { None } else { Some(self.noise_path(replicate)) };
        self.picard_from(path.as_ref(), replicate)
    }

    pub fn solve_picard_with(&self, path: &NoisePath, replicate: u64) -> Result<PathSolution> {
        let coarse = self.rescaled(path)?;
        let s = coarse.as_ref().unwrap_or(self);
        s.picard_from(Some(path), replicate)
    }

    /// A copy of `self` stepping at `path.dt`, if that differs.
    fn rescaled(&self, path: &NoisePath) -> Result<Option<Solver>> {
        let same = (path.dt - self.config.dt).abs() <= 1e-12 * self.config.dt;
        let solver = if same {
            None
        } else {
            let mut cfg = self.config.clone();
            cfg.dt = path.dt;
            Some(Solver::new(cfg)?)
        };
        let steps = solver.as_ref().map_or(self.steps, |s| s.steps);
        if path.len() != steps {
            return Err(Error::Configuration(format!(
                "noise path has {} steps, scheme needs {steps}",
                path.len()
            )));
        }
        Ok(solver)
    }

    fn recorded(&self, k: usize) -> bool {
        k % self.config.record_every == 0 || k == self.steps
    }

    fn check_frame(&self, u: &ArrayD<f64>, step: usize, replicate: u64) -> Result<()> {
        let sup = u.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
        if !(sup <= self.blow_up) {
            return Err(Error::BlowUp { step, replicate, sup_norm: sup });
        }
        Ok(())
    }

    fn field(&self, values: ArrayD<f64>) -> Field {
        Field::from_real(self.config.grid, values).expect("shape fixed by grid")
    }

    fn euler_from(
        &self,
        replicate: u64,
        mut increment: impl FnMut(usize) -> Option<ArrayD<f64>>,
    ) -> Result<PathSolution> {
        let dt = self.config.dt;
        let (b, sigma) = (self.config.drift, self.config.diffusion);
        let mut u = self.initial.clone();
        let mut times = vec![0.0];
        let mut frames = vec![self.field(u.clone())];
        for k in 0..self.steps {
            let mut v = u.clone();
            if !b.is_zero() {
                v.mapv_inplace(|x| x + dt * b.eval(x));
            }
            if let Some(dm) = increment(k) {
                Zip::from(&mut v).and(&u).and(&dm).for_each(|v, &x, &w| *v += sigma.eval(x) * w);
            }
            u = self.propagator.apply(&v);
            self.check_frame(&u, k + 1, replicate)?;
            if self.recorded(k + 1) {
                times.push((k + 1) as f64 * dt);
                frames.push(self.field(u.clone()));
            }
        }
        Ok(PathSolution { dt, times, frames, replicate, picard: None })
    }

    fn picard_from(&self, path: Option<&NoisePath>, replicate: u64) -> Result<PathSolution> {
        let dt = self.config.dt;
        let half = 0.5 * dt;
        let (b, sigma) = (self.config.drift, self.config.diffusion);
        let opts = self.config.picard;

        // Zeroth iterate: the free flow.
        let mut u: Vec<ArrayD<f64>> = Vec::with_capacity(self.steps + 1);
        u.push(self.initial.clone());
        for k in 0..self.steps {
            let next = self.propagator.apply(&u[k]);
            u.push(next);
        }

        let mut residuals = Vec::new();
        loop {
            let mut v: Vec<ArrayD<f64>> = Vec::with_capacity(self.steps + 1);
            v.push(self.initial.clone());
            let mut change = 0.0f64;
            let mut scale = 1.0f64;
            for k in 0..self.steps {
                let mut w = v[k].clone();
                if !b.is_zero() {
                    Zip::from(&mut w).and(&u[k]).for_each(|w, &x| *w += half * b.eval(x));
                }
                if let Some(p) = path {
                    Zip::from(&mut w)
                        .and(&u[k])
                        .and(&p.increments[k])
                        .for_each(|w, &x, &dm| *w += sigma.eval(x) * dm);
                }
                let mut next = self.propagator.apply(&w);
                if !b.is_zero() {
                    Zip::from(&mut next).and(&u[k + 1]).for_each(|w, &x| *w += half * b.eval(x));
                }
                self.check_frame(&next, k + 1, replicate)?;
                Zip::from(&next).and(&u[k + 1]).for_each(|a, c| {
                    change = change.max((a - c).abs());
                    scale = scale.max(a.abs());
                });
                v.push(next);
            }
            residuals.push(change);
            u = v;
            if change < opts.tol * scale {
                break;
            }
            if residuals.len() >= opts.max_iter || !change.is_finite() {
                return Err(Error::PicardNonConvergence { iterations: residuals.len(), residuals });
            }
        }

        let mut times = Vec::new();
        let mut frames = Vec::new();
        for (k, values) in u.into_iter().enumerate() {
            if self.recorded(k) {
                times.push(k as f64 * dt);
                frames.push(self.field(values));
            }
        }
        Ok(PathSolution { dt, times, frames, replicate, picard: Some(PicardTrace { residuals }) })
    }
}

/// The deterministic flow `S_t u₀`.
pub fn smooth_initial(u0: &Field, idx: &FractionalIndex, t: f64) -> Result<Field> {
    crate::stable_kernel::apply_semigroup(u0, idx, t)
}

pub const MIN_REPLICATES: usize = 100;
const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0x6d6f6d;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    /// `max_{t,x} mean_r |u_r(t,x)|^p`
    pub value: f64,
    pub ci: Interval,
    pub time: f64,
    pub cell: Vec<usize>,
    pub replicates: usize,
}

/// Solve replicates `0..n` in parallel; the result is ordered by replicate
/// and the first failing replicate determines the error.
pub fn solve_ensemble(solver: &Solver, n: usize) -> Result<Vec<PathSolution>> {
    let results: Vec<Result<PathSolution>> =
        (0..n as u64).into_par_iter().map(|r| solver.solve(r)).collect();
    results.into_iter().collect()
}

/// Largest empirical `p`-th absolute moment over recorded frames and
/// cells, with a bootstrap interval at the maximizing `(t, x)`.
pub fn moment_estimate(solver: &Solver, p: f64, n_replicates: usize) -> Result<MomentEstimate> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::invalid("p", "must be at least 2"));
    }
    if n_replicates < MIN_REPLICATES {
        return Err(Error::InsufficientSamples { found: n_replicates, required: MIN_REPLICATES });
    }
    let paths = solve_ensemble(solver, n_replicates)?;
    moment_from_paths(&paths, p)
}

pub fn moment_from_paths(paths: &[PathSolution], p: f64) -> Result<MomentEstimate> {
    let r = paths.len();
    if r < MIN_REPLICATES {
        return Err(Error::InsufficientSamples { found: r, required: MIN_REPLICATES });
    }
    let frames = paths[0].frames.len();
    let shape = paths[0].frames[0].grid().shape();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for f in 0..frames {
        let mut acc = ArrayD::<f64>::zeros(IxDyn(&shape));
        for path in paths {
            acc.zip_mut_with(path.frames[f].values()?, |a, v| *a += v.abs().powf(p));
        }
        for (flat, a) in acc.iter().enumerate() {
            let m = a / r as f64;
            if m > best.0 {
                best = (m, f, flat);
            }
        }
    }
    let (value, frame, flat) = best;
    let samples: Vec<f64> = paths
        .iter()
        .map(|path| path.frames[frame].values().map(|v| v.as_slice_memory_order().expect("standard layout")[flat].abs().powf(p)))
        .collect::<Result<_>>()?;
    let ci = bootstrap_ci(r, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, 0.95, |ix| {
        ix.iter().map(|&i| samples[i]).sum::<f64>() / ix.len() as f64
    });
    let mut cell = Vec::with_capacity(shape.len());
    let mut rest = flat;
    for &n in shape.iter().rev() {
        cell.push(rest % n);
        rest /= n;
    }
    cell.reverse();
    Ok(MomentEstimate { p, value, ci, time: paths[0].times[frame], cell, replicates: r })
}
