//! Uniform periodic lattice on `[-L/2, L/2)^d`, fields over it, and the
//! discrete Fourier transform pair used by every spectral operation.
//!
//! Transform convention. With `x_j = -L/2 + j Δx` and `ξ_k = 2πk/L`
//! (`k ∈ {-n/2, …, n/2-1}` per axis, stored in FFT order), the forward
//! transform is
//!
//! ```text
//!   f̂_k = Σ_j f_j exp(+2πi jk/n)
//! ```
//!
//! and the inverse is `f_j = (1/N) Σ_k f̂_k exp(-2πi jk/n)` with `N = n^d`.
//! This matches the continuous transform `Ff(ξ) = ∫ e^{iξx} f(x) dx` up to
//! the factor `Δx^d (-1)^{Σk}`, which cancels in any multiply-then-invert
//! operation. Fourier multipliers are therefore applied to `f̂_k` as-is.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, Dimension, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n_per_dim: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(d: usize, n_per_dim: usize, box_length: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "spatial dimension must be positive"));
        }
        if n_per_dim == 0 {
            return Err(Error::invalid("n_per_dim", "must be positive"));
        }
        if n_per_dim > 1 && n_per_dim % 2 == 1 {
            return Err(Error::invalid("n_per_dim", "must be even (or 1)"));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::invalid("box_length", "must be a positive finite number"));
        }
        let total = n_per_dim
            .checked_pow(d as u32)
            .filter(|&t| t <= 1 << 28)
            .ok_or_else(|| Error::invalid("n_per_dim", "grid has too many points"))?;
        debug_assert!(total > 0);
        Ok(Self { d, n_per_dim, box_length })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n_per_dim as f64
    }

    /// Volume element `Δx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n_per_dim.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n_per_dim; self.d]
    }

    /// Physical coordinate of index `j` along any axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -0.5 * self.box_length + j as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_per_dim).map(|j| self.coordinate(j)).collect()
    }

    /// Index of the origin `x = 0` along each axis.
    pub fn origin_index(&self) -> usize {
        self.n_per_dim / 2
    }

    /// Signed wavenumber for FFT-ordered index `k`.
    pub fn signed_wavenumber(&self, k: usize) -> i64 {
        let n = self.n_per_dim as i64;
        let k = k as i64;
        if k < n.div_euclid(2) || n == 1 {
            k
        } else {
            k - n
        }
    }

    /// Angular frequency `ξ = 2πk/L` for FFT-ordered index `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        2.0 * PI * self.signed_wavenumber(k) as f64 / self.box_length
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_per_dim).map(|k| self.frequency(k)).collect()
    }

    /// Largest representable |ξ| along an axis.
    pub fn nyquist(&self) -> f64 {
        PI * self.n_per_dim as f64 / self.box_length
    }

    /// Iterate over every multi-index in row-major order.
    pub fn multi_indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let n = self.n_per_dim;
        let d = self.d;
        (0..self.len()).map(move |mut flat| {
            let mut idx = vec![0; d];
            for slot in idx.iter_mut().rev() {
                *slot = flat % n;
                flat /= n;
            }
            idx
        })
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Configuration(format!(
                "grid mismatch: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Physical,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(ArrayD<f64>),
    Complex(ArrayD<Complex64>),
}

/// Real- or complex-valued array over a [`Grid`], tagged with the space it
/// lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: FieldData,
    space: Space,
}

impl Field {
    pub fn from_real(grid: Grid, values: ArrayD<f64>) -> Result<Self> {
        if values.shape() != grid.shape().as_slice() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self { grid, data: FieldData::Real(values), space: Space::Physical })
    }

    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&grid.shape()), values)
            .map_err(|e| Error::Configuration(e.to_string()))?;
        Self::from_real(grid, arr)
    }

    pub fn from_complex(grid: Grid, values: ArrayD<Complex64>, space: Space) -> Result<Self> {
        if values.shape() != grid.shape().as_slice() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        Ok(Self { grid, data: FieldData::Complex(values), space })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            data: FieldData::Real(ArrayD::zeros(IxDyn(&grid.shape()))),
            grid,
            space: Space::Physical,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            data: FieldData::Real(ArrayD::from_elem(IxDyn(&grid.shape()), c)),
            grid,
            space: Space::Physical,
        }
    }

    /// Sample `f` at every grid point (coordinates passed in axis order).
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let coords = grid.coordinates();
        let mut x = vec![0.0; grid.dim()];
        let values = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |idx| {
            for (slot, &j) in x.iter_mut().zip(idx.slice()) {
                *slot = coords[j];
            }
            f(&x)
        });
        Self { grid, data: FieldData::Real(values), space: Space::Physical }
    }

    /// Discrete Dirac mass at the origin: `1/Δx^d` at the center cell.
    pub fn spike(grid: Grid) -> Self {
        let mut values = ArrayD::zeros(IxDyn(&grid.shape()));
        let center = vec![grid.origin_index(); grid.dim()];
        values[IxDyn(&center)] = 1.0 / grid.cell_volume();
        Self { grid, data: FieldData::Real(values), space: Space::Physical }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn data(&self) -> &FieldData {
        &self.data
    }

    pub fn real(&self) -> Option<&ArrayD<f64>> {
        match &self.data {
            FieldData::Real(a) => Some(a),
            FieldData::Complex(_) => None,
        }
    }

    /// Real values of a physical field, or an error for complex/frequency fields.
    pub fn values(&self) -> Result<&ArrayD<f64>> {
        match (&self.data, self.space) {
            (FieldData::Real(a), Space::Physical) => Ok(a),
            _ => Err(Error::Configuration("expected a real physical-space field".into())),
        }
    }

    pub fn into_values(self) -> Result<ArrayD<f64>> {
        match (self.data, self.space) {
            (FieldData::Real(a), Space::Physical) => Ok(a),
            _ => Err(Error::Configuration("expected a real physical-space field".into())),
        }
    }

    /// Row-major copy of the real values.
    pub fn to_vec(&self) -> Result<Vec<f64>> {
        Ok(self.values()?.iter().copied().collect())
    }

    /// `Σ values · Δx^d`.
    pub fn mass(&self) -> Result<f64> {
        Ok(self.values()?.iter().sum::<f64>() * self.grid.cell_volume())
    }

    pub fn sup_norm(&self) -> Result<f64> {
        Ok(self.values()?.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn min(&self) -> Result<f64> {
        Ok(self.values()?.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Checks the probability-density invariant: entries `≥ -clip_eps` and
    /// unit mass within `mass_tol`.
    pub fn check_density(&self, clip_eps: f64, mass_tol: f64) -> Result<()> {
        let min = self.min()?;
        if min < -clip_eps {
            return Err(Error::Truncation { min_value: min, tolerance: clip_eps });
        }
        let mass = self.mass()?;
        if (mass - 1.0).abs() > mass_tol {
            return Err(Error::Consistency(format!("density mass {mass} differs from 1")));
        }
        Ok(())
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> Result<f64> {
        let v = self.values()?;
        v.get(IxDyn(index))
            .copied()
            .ok_or_else(|| Error::Domain(format!("index {index:?} outside grid")))
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a = self.values()?;
        let b = other.values()?;
        Ok(a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        let v = self.values()?.mapv(f);
        Field::from_real(self.grid, v)
    }
}

/// Cached FFT plans for one grid. Cheap to clone; safe to share across
/// threads (plans are immutable, scratch space is per call).
#[derive(Clone)]
pub struct SpectralPlan {
    grid: Grid,
    // rustfft direction names: `fwd` is e^{-2πi jk/n}, `inv` is e^{+2πi jk/n}.
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            fwd: planner.plan_fft_forward(grid.n_per_dim()),
            inv: planner.plan_fft_inverse(grid.n_per_dim()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn along_axes(&self, data: &mut ArrayD<Complex64>, plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n_per_dim();
        if n == 1 {
            return;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.grid.dim() {
            for mut lane in data.lanes_mut(Axis(axis)) {
                if let Some(slice) = lane.as_slice_mut() {
                    plan.process_with_scratch(slice, &mut scratch);
                } else {
                    for (b, v) in buf.iter_mut().zip(lane.iter()) {
                        *b = *v;
                    }
                    plan.process_with_scratch(&mut buf, &mut scratch);
                    for (v, b) in lane.iter_mut().zip(buf.iter()) {
                        *v = *b;
                    }
                }
            }
        }
    }

    /// Physical → frequency, `f̂_k = Σ_j f_j e^{+2πi jk/n}`.
    pub fn forward(&self, data: &mut ArrayD<Complex64>) {
        self.along_axes(data, &self.inv);
    }

    /// Frequency → physical, `f_j = N^{-1} Σ_k f̂_k e^{-2πi jk/n}`.
    pub fn inverse(&self, data: &mut ArrayD<Complex64>) {
        self.along_axes(data, &self.fwd);
        let scale = 1.0 / self.grid.len() as f64;
        data.mapv_inplace(|v| v * scale);
    }

    pub fn forward_real(&self, values: &ArrayD<f64>) -> ArrayD<Complex64> {
        let mut c = values.mapv(|v| Complex64::new(v, 0.0));
        self.forward(&mut c);
        c
    }

    /// Inverse transform, returning the real part and the largest imaginary
    /// residue.
    pub fn inverse_to_real(&self, mut spec: ArrayD<Complex64>) -> (ArrayD<f64>, f64) {
        self.inverse(&mut spec);
        let imag = spec.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        (spec.mapv(|v| v.re), imag)
    }

    /// Apply the Fourier multiplier `m(ξ)` to a real field.
    pub fn apply_multiplier(
        &self,
        values: &ArrayD<f64>,
        multiplier: impl Fn(&[f64]) -> Complex64,
    ) -> ArrayD<f64> {
        let mut spec = self.forward_real(values);
        let freqs = self.grid.frequencies();
        let mut xi = vec![0.0; self.grid.dim()];
        for (idx, v) in spec.indexed_iter_mut() {
            for (slot, &k) in xi.iter_mut().zip(idx.slice()) {
                *slot = freqs[k];
            }
            *v *= multiplier(&xi);
        }
        self.inverse_to_real(spec).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_lattice() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        assert_abs_diff_eq!(g.spacing(), PI / 4.0);
        assert_abs_diff_eq!(g.coordinate(0), -PI);
        assert_eq!(g.origin_index(), 4);
        let ks: Vec<i64> = (0..8).map(|k| g.signed_wavenumber(k)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_abs_diff_eq!(g.frequency(1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(0, 8, 1.0).is_err());
        assert!(Grid::new(1, 7, 1.0).is_err());
        assert!(Grid::new(1, 8, -1.0).is_err());
        assert!(Grid::new(1, 8, f64::NAN).is_err());
    }

    #[test]
    fn transform_round_trip_2d() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let f = Field::from_fn(g, |x| (x[0] * 1.3).sin() + x[1] * x[1]);
        let plan = SpectralPlan::new(&g);
        let spec = plan.forward_real(f.values().unwrap());
        let (back, imag) = plan.inverse_to_real(spec);
        assert!(imag < 1e-12);
        for (a, b) in back.iter().zip(f.values().unwrap().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_sign_matches_continuous_convention() {
        // ∫ e^{iξx} e^{-ix} dx peaks at ξ = 1.
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let plan = SpectralPlan::new(&g);
        let mut c = ArrayD::from_shape_fn(IxDyn(&[16]), |i| {
            let x = g.coordinate(i[0]);
            Complex64::new(0.0, -x).exp()
        });
        plan.forward(&mut c);
        let (kmax, _) = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(g.signed_wavenumber(kmax), 1);
    }

    #[test]
    fn spike_has_unit_mass() {
        let g = Grid::new(2, 16, 5.0).unwrap();
        assert_abs_diff_eq!(Field::spike(g).mass().unwrap(), 1.0, epsilon = 1e-14);
    }
}
