//! Spectral measures of the spatial noise covariance and the frequency-side
//! integrals built from them.
//!
//! Every measure is stored by its density per `dξ`, normalized so that the
//! covariance is `Γ(x) = ∫ e^{iξ·x} μ(dξ)`; white noise therefore has the
//! constant density `(2π)^{-d}`.
//!
//! Integrals `∫ g(ξ) μ(dξ)` over `ℝ^d` are evaluated on dyadic shells of
//! `S_α(ξ) = Σ |ξ_i|^{α_i}`. Writing `ξ_i = (S θ_i)^{1/α_i}` with `θ` on the
//! unit simplex gives
//!
//! ```text
//!   ∫ g dξ = 2^d ∫_0^∞ S^{A-1} ∫_Δ Π a_i θ_i^{a_i-1} g dθ dS,  a_i = 1/α_i, A = Σ a_i,
//! ```
//!
//! for integrands even in each coordinate. The log-slope of the shell
//! contributions decides convergence and drives a geometric tail
//! extrapolation.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre};
use crate::stable_kernel::FractionalIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeasureKind {
    WhiteNoise,
    Riesz { gamma: f64 },
    Bessel { beta: f64 },
    FreeField { m: f64 },
    /// Radial density samples `(|ξ|, value)`, linearly interpolated and zero
    /// beyond the last radius.
    Tabulated { radii: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct SpectralMeasure {
    kind: MeasureKind,
    d: usize,
    /// Cached `(2π)^{-d}` times the kind-specific constant.
    #[serde(skip)]
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    #[serde(flatten)]
    kind: MeasureKind,
    d: usize,
}

impl TryFrom<RawMeasure> for SpectralMeasure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        SpectralMeasure::new(raw.kind, raw.d)
    }
}

impl From<SpectralMeasure> for RawMeasure {
    fn from(m: SpectralMeasure) -> Self {
        RawMeasure { kind: m.kind, d: m.d }
    }
}

/// Constant `C` with `F(|x|^{-γ})(ξ) = C |ξ|^{γ-d}` in `d` dimensions.
pub fn riesz_constant(gamma_: f64, d: usize) -> f64 {
    let d = d as f64;
    PI.powf(d / 2.0) * 2f64.powf(d - gamma_) * gamma((d - gamma_) / 2.0) / gamma(gamma_ / 2.0)
}

impl SpectralMeasure {
    pub fn new(kind: MeasureKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        let two_pi_d = (2.0 * PI).powi(-(d as i32));
        let scale = match &kind {
            MeasureKind::WhiteNoise => two_pi_d,
            MeasureKind::Riesz { gamma: g } => {
                if !(g.is_finite() && *g > 0.0 && *g < d as f64) {
                    return Err(Error::invalid("gamma", format!("{g} not in (0, d = {d})")));
                }
                two_pi_d * riesz_constant(*g, d)
            }
            MeasureKind::Bessel { beta: b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return Err(Error::invalid("beta", format!("{b} must be positive")));
                }
                two_pi_d
            }
            MeasureKind::FreeField { m } => {
                if !(m.is_finite() && *m > 0.0) {
                    return Err(Error::invalid("m", format!("{m} must be positive")));
                }
                (2.0 * PI).powf(-(d as f64) / 2.0)
            }
            MeasureKind::Tabulated { radii, density } => {
                if radii.len() < 2 || radii.len() != density.len() {
                    return Err(Error::invalid(
                        "tabulated",
                        "needs at least two (radius, density) pairs of equal length",
                    ));
                }
                if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("radii", "must be non-negative and strictly increasing"));
                }
                if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("density", "must be finite and non-negative"));
                }
                1.0
            }
        };
        Ok(Self { kind, d, scale })
    }

    pub fn white(d: usize) -> Self {
        Self::new(MeasureKind::WhiteNoise, d).expect("white noise is always valid")
    }

    pub fn riesz(gamma_: f64, d: usize) -> Result<Self> {
        Self::new(MeasureKind::Riesz { gamma: gamma_ }, d)
    }

    pub fn bessel(beta_: f64, d: usize) -> Result<Self> {
        Self::new(MeasureKind::Bessel { beta: beta_ }, d)
    }

    pub fn free_field(m: f64, d: usize) -> Result<Self> {
        Self::new(MeasureKind::FreeField { m }, d)
    }

    pub fn tabulated(radii: Vec<f64>, density: Vec<f64>, d: usize) -> Result<Self> {
        Self::new(MeasureKind::Tabulated { radii, density }, d)
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Largest tabulated radius, if band-limited.
    pub fn band_limit(&self) -> Option<f64> {
        match &self.kind {
            MeasureKind::Tabulated { radii, .. } => radii.last().copied(),
            _ => None,
        }
    }

    /// Density of `μ` per `dξ` at `ξ` (may be `+∞` at the origin for Riesz).
    pub fn density(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        self.density_r2(r2)
    }

    pub(crate) fn density_r2(&self, r2: f64) -> f64 {
        match &self.kind {
            MeasureKind::WhiteNoise => self.scale,
            MeasureKind::Riesz { gamma: g } => self.scale * r2.powf(0.5 * (g - self.d as f64)),
            MeasureKind::Bessel { beta: b } => self.scale * (1.0 + r2).powf(-0.5 * b),
            MeasureKind::FreeField { m } => self.scale / (r2 + m * m),
            MeasureKind::Tabulated { radii, density } => interpolate(radii, density, r2.sqrt()),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x > xs[last] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v < x).max(1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] * (1.0 - w) + ys[i] * w
}

/// `S_α(ξ) = Σ |ξ_i|^{α_i}`.
pub fn s_alpha(xi: &[f64], idx: &FractionalIndex) -> Result<f64> {
    idx.check_dim(xi.len())?;
    Ok(idx.s_alpha_unchecked(xi))
}

fn check_pair(measure: &SpectralMeasure, idx: &FractionalIndex) -> Result<()> {
    if measure.dim() != idx.dim() {
        return Err(Error::DimensionMismatch { expected: idx.dim(), found: measure.dim() });
    }
    Ok(())
}

/// Slope above which a shell sequence is declared divergent.
pub const DIVERGENT_SLOPE: f64 = -1e-8;
/// Slope below which a shell sequence is declared convergent.
pub const CONVERGENT_SLOPE: f64 = -1e-4;
/// Shell contributions below this fraction of the running total are
/// treated as an exhausted tail.
const NEGLIGIBLE: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Gauss–Legendre nodes in `ln S` per dyadic shell.
    pub radial_nodes: usize,
    /// Gauss–Legendre nodes per half-interval of each simplex coordinate.
    pub simplex_nodes: usize,
    pub k_min: i32,
    pub k_max: i32,
    /// Number of extreme shells used for the slope fit.
    pub fit_shells: usize,
}

impl QuadratureOptions {
    pub fn for_dim(d: usize) -> Self {
        let simplex_nodes = match d {
            0..=2 => 16,
            3 => 10,
            _ => 5,
        };
        Self { radial_nodes: 20, simplex_nodes, k_min: -40, k_max: 48, fit_shells: 5 }
    }

    /// Same shell range with twice the nodes.
    pub fn refined(&self) -> Self {
        Self {
            radial_nodes: 2 * self.radial_nodes,
            simplex_nodes: 2 * self.simplex_nodes,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
}

/// Shell decomposition of `∫ g dμ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellIntegral {
    pub k_min: i32,
    pub contributions: Vec<f64>,
    pub tail_slope: f64,
    pub head_slope: f64,
    pub verdict: Verdict,
    /// Finite value including both geometric extrapolations; `None` when
    /// divergent.
    pub value: Option<f64>,
}

/// Tensor rule over the simplex in stick-breaking coordinates; weights
/// include `Π a_i θ_i^{a_i-1}` and the orthant factor `2^d`.
struct SimplexRule {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SimplexRule {
    fn new(a: &[f64], nodes: usize) -> Self {
        let d = a.len();
        let orthants = 2f64.powi(d as i32);
        let prod_a: f64 = a.iter().product();
        if d == 1 {
            return Self { points: vec![vec![1.0]], weights: vec![orthants * prod_a] };
        }
        let gl = GaussLegendre::new(nodes);
        // 1-D rules for each stick variable x_j with weight
        // x^{a_j-1} (1-x)^{b_j-1}, b_j = Σ_{i>j} a_i. Both halves use the
        // substitution x = v^4 (resp. 1-x = w^4); since every a_i ≥ 1/2 the
        // transformed weights vanish at least like v.
        let q = 4.0;
        let edge = 0.5f64.powf(1.0 / q);
        let sticks: Vec<Vec<(f64, f64)>> = (0..d - 1)
            .map(|j| {
                let aj = a[j];
                let bj: f64 = a[j + 1..].iter().sum();
                let mut rule = Vec::with_capacity(2 * nodes);
                for (v, w) in gl.mapped(0.0, edge) {
                    let x = v.powf(q);
                    rule.push((x, w * q * v.powf(q * aj - 1.0) * (1.0 - x).powf(bj - 1.0)));
                }
                for (u, w) in gl.mapped(0.0, edge) {
                    let x = 1.0 - u.powf(q);
                    rule.push((x, w * q * u.powf(q * bj - 1.0) * x.powf(aj - 1.0)));
                }
                rule
            })
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut counters = vec![0usize; d - 1];
        let per = 2 * nodes;
        loop {
            let mut theta = vec![0.0; d];
            let mut rest = 1.0;
            let mut w = orthants * prod_a;
            for j in 0..d - 1 {
                let (x, wx) = sticks[j][counters[j]];
                theta[j] = rest * x;
                rest *= 1.0 - x;
                w *= wx;
            }
            theta[d - 1] = rest;
            points.push(theta);
            weights.push(w);
            let mut j = 0;
            loop {
                counters[j] += 1;
                if counters[j] < per {
                    break;
                }
                counters[j] = 0;
                j += 1;
                if j == d - 1 {
                    return Self { points, weights };
                }
            }
        }
    }
}

/// `∫ g(|ξ|, S_α(ξ)) μ(dξ)` with tail and head extrapolation.
///
/// `g` receives the absolute coordinates `|ξ_i|` and `S_α(ξ)`.
pub fn spectral_integral<G>(
    measure: &SpectralMeasure,
    idx: &FractionalIndex,
    opts: &QuadratureOptions,
    g: G,
) -> Result<ShellIntegral>
where
    G: Fn(&[f64], f64) -> f64 + Sync,
{
    check_pair(measure, idx)?;
    if opts.k_max <= opts.k_min || opts.fit_shells < 2 {
        return Err(Error::invalid("quadrature", "empty shell range or too few fit shells"));
    }
    let a: Vec<f64> = idx.alpha().iter().map(|x| 1.0 / x).collect();
    let big_a: f64 = a.iter().sum();
    let simplex = SimplexRule::new(&a, opts.simplex_nodes);
    let gl = GaussLegendre::new(opts.radial_nodes);
    let d = a.len();

    // For band-limited measures keep only shells inside the ball.
    let (k_lo, k_hi) = match measure.band_limit() {
        Some(r_max) => {
            let fits = |k: i32| {
                let s = 2f64.powi(k + 1);
                a.iter().map(|ai| s.powf(2.0 * ai)).sum::<f64>().sqrt() <= r_max
            };
            let mut hi = opts.k_min - 1;
            for k in opts.k_min..=opts.k_max {
                if fits(k) {
                    hi = k;
                }
            }
            let usable = (0..=hi).count();
            if usable < opts.fit_shells {
                return Err(Error::Inconclusive(format!(
                    "tabulated band covers {usable} shells with S >= 1, need {}",
                    opts.fit_shells
                )));
            }
            (opts.k_min, hi)
        }
        None => (opts.k_min, opts.k_max),
    };

    let contributions: Vec<f64> = (k_lo..=k_hi)
        .into_par_iter()
        .map(|k| {
            let lo = k as f64 * std::f64::consts::LN_2;
            let hi = lo + std::f64::consts::LN_2;
            let mut xi = vec![0.0; d];
            let mut acc = 0.0;
            for (ls, wl) in gl.mapped(lo, hi) {
                let s = ls.exp();
                let mut inner = 0.0;
                for (theta, w) in simplex.points.iter().zip(&simplex.weights) {
                    let mut r2 = 0.0;
                    for i in 0..d {
                        xi[i] = (s * theta[i]).powf(a[i]);
                        r2 += xi[i] * xi[i];
                    }
                    let v = measure.density_r2(r2) * g(&xi, s);
                    inner += w * v;
                }
                acc += wl * s.powf(big_a) * inner;
            }
            acc
        })
        .collect();

    Ok(classify(k_lo, contributions, opts.fit_shells, measure.band_limit().is_some()))
}

fn fit_slope(window: &[f64]) -> f64 {
    // Least-squares slope of ln C against shell index, per unit ln S.
    let n = window.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = window.iter().map(|c| c.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, c) in window.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (c.ln() - ym);
        sxx += dx * dx;
    }
    sxy / sxx / std::f64::consts::LN_2
}

fn classify(k_min: i32, contributions: Vec<f64>, fit: usize, band_limited: bool) -> ShellIntegral {
    let total: f64 = contributions.iter().sum();
    let n = contributions.len();
    let fit = fit.min(n);
    let top = &contributions[n - fit..];
    let bottom = &contributions[..fit];

    let negligible = |c: f64| total > 0.0 && c.abs() <= NEGLIGIBLE * total;
    let positive = |w: &[f64]| w.iter().all(|c| *c > 0.0 && c.is_finite());

    let mut value = total;
    let tail_slope;
    let mut verdict = Verdict::Convergent;
    if !band_limited && negligible(contributions[n - 1]) {
        tail_slope = if positive(top) { fit_slope(top) } else { f64::NEG_INFINITY };
    } else if !positive(top) {
        tail_slope = f64::NAN;
    } else {
        tail_slope = fit_slope(top);
        if tail_slope >= DIVERGENT_SLOPE {
            verdict = Verdict::Divergent;
        } else {
            let r = 2f64.powf(tail_slope);
            value += contributions[n - 1] * r / (1.0 - r);
        }
    }

    let head_slope;
    if negligible(contributions[0]) || total == 0.0 {
        head_slope = if positive(bottom) { fit_slope(bottom) } else { f64::INFINITY };
    } else if !positive(bottom) {
        head_slope = f64::NAN;
    } else {
        head_slope = fit_slope(bottom);
        if head_slope <= -DIVERGENT_SLOPE {
            verdict = Verdict::Divergent;
        } else {
            let r = 2f64.powf(-head_slope);
            value += contributions[0] * r / (1.0 - r);
        }
    }

    let inconclusive = tail_slope.is_nan()
        || head_slope.is_nan()
        || (verdict == Verdict::Convergent
            && tail_slope >= CONVERGENT_SLOPE
            && tail_slope < DIVERGENT_SLOPE)
        || (verdict == Verdict::Convergent && head_slope <= -CONVERGENT_SLOPE);
    ShellIntegral {
        k_min,
        contributions,
        tail_slope,
        head_slope,
        verdict,
        value: if verdict == Verdict::Convergent && !inconclusive { Some(value) } else { None },
    }
}

impl ShellIntegral {
    /// Finite value, or the matching error.
    pub fn finite(&self) -> Result<f64> {
        match (self.verdict, self.value) {
            (Verdict::Convergent, Some(v)) => Ok(v),
            (Verdict::Divergent, _) => Err(Error::Divergent { slope: self.tail_slope }),
            _ => Err(Error::Inconclusive(format!(
                "tail slope {:.3e}, head slope {:.3e}",
                self.tail_slope, self.head_slope
            ))),
        }
    }

    pub fn is_inconclusive(&self) -> bool {
        self.verdict == Verdict::Convergent && self.value.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub eta: f64,
    /// `∫ μ(dξ) / (1 + S_α(ξ))^η`; `None` stands for `+∞`.
    pub integral_value: Option<f64>,
    pub admissible: bool,
    pub method: Method,
    /// Critical exponent of the family (closed form) or fitted tail slope
    /// (quadrature).
    pub threshold: f64,
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// Closed-form admissibility, when the measure family has one for `idx`:
/// white noise for any `α`, the other analytic families for `α ≡ 2`.
pub fn closed_form_admissibility(
    measure: &SpectralMeasure,
    idx: &FractionalIndex,
    eta: f64,
) -> Result<Option<AdmissibilityReport>> {
    check_pair(measure, idx)?;
    check_eta(eta)?;
    let d = measure.dim();
    let df = d as f64;
    let all_two = idx.alpha().iter().all(|&a| a == 2.0);
    let sphere = 2.0 * PI.powf(df / 2.0) / gamma(df / 2.0);
    let report = |threshold: f64, admissible: bool, value: Option<f64>| AdmissibilityReport {
        eta,
        integral_value: if admissible { value } else { None },
        admissible,
        method: Method::ClosedForm,
        threshold,
    };
    let out = match measure.kind() {
        MeasureKind::WhiteNoise => {
            let a = idx.sum_inv_alpha();
            let ok = eta > a;
            let value = ok.then(|| {
                let logs: f64 = idx.alpha().iter().map(|x| ln_gamma(1.0 + 1.0 / x)).sum();
                PI.powf(-df) * (logs + ln_gamma(eta - a) - ln_gamma(eta)).exp()
            });
            Some(report(a, ok, value))
        }
        _ if !all_two => None,
        MeasureKind::Riesz { gamma: g } => {
            let ok = *g < 2.0 * eta;
            let value = ok.then(|| {
                let c = (2.0 * PI).powf(-df) * riesz_constant(*g, d);
                c * 0.5 * sphere * beta(g / 2.0, eta - g / 2.0)
            });
            Some(report(g / 2.0, ok, value))
        }
        MeasureKind::Bessel { beta: b } => {
            let crit = ((df - b) / 2.0).max(0.0);
            let ok = eta > crit;
            let value = ok.then(|| {
                (2.0 * PI).powf(-df) * 0.5 * sphere * beta(df / 2.0, eta + b / 2.0 - df / 2.0)
            });
            Some(report(crit, ok, value))
        }
        MeasureKind::FreeField { m } => {
            let crit = ((df - 2.0) / 2.0).max(0.0);
            let ok = eta > crit;
            let value = if ok { Some(free_field_radial(*m, d, eta)) } else { None };
            Some(report(crit, ok, value))
        }
        MeasureKind::Tabulated { .. } => None,
    };
    Ok(out)
}

/// `(2π)^{-d/2} |S^{d-1}| ∫_0^∞ r^{d-1} (r²+m²)^{-1} (1+r²)^{-η} dr` by
/// adaptive quadrature in `ln r` plus an asymptotic tail.
fn free_field_radial(m: f64, d: usize, eta: f64) -> f64 {
    let df = d as f64;
    let sphere = 2.0 * PI.powf(df / 2.0) / gamma(df / 2.0);
    let r_max: f64 = 1e6;
    let body = quadrature::adaptive((1e-14f64).ln(), r_max.ln(), 1e-15, 1e-13, 50_000, |s| {
        let r = s.exp();
        r.powf(df) / ((r * r + m * m) * (1.0 + r * r).powf(eta))
    });
    // Beyond r_max the integrand is r^p (1 - (m² + η)/r² + …), p = d-3-2η.
    let p = df - 3.0 - 2.0 * eta;
    let tail = -r_max.powf(p + 1.0) / (p + 1.0) + (m * m + eta) * r_max.powf(p - 1.0) / (p - 1.0);
    (2.0 * PI).powf(-df / 2.0) * sphere * (body.value + tail)
}

/// Admissibility by shell quadrature with tail extrapolation.
pub fn quadrature_admissibility(
    measure: &SpectralMeasure,
    idx: &FractionalIndex,
    eta: f64,
    opts: &QuadratureOptions,
) -> Result<AdmissibilityReport> {
    check_eta(eta)?;
    let shells = spectral_integral(measure, idx, opts, |_, s| (1.0 + s).powf(-eta))?;
    if shells.is_inconclusive() {
        return Err(Error::Inconclusive(format!(
            "tail slope {:.3e} between divergence and convergence thresholds",
            shells.tail_slope
        )));
    }
    Ok(AdmissibilityReport {
        eta,
        integral_value: shells.value,
        admissible: shells.verdict == Verdict::Convergent,
        method: Method::Quadrature,
        threshold: shells.tail_slope,
    })
}

/// Closed form when available, quadrature otherwise.
pub fn admissibility(
    measure: &SpectralMeasure,
    idx: &FractionalIndex,
    eta: f64,
) -> Result<AdmissibilityReport> {
    match closed_form_admissibility(measure, idx, eta)? {
        Some(r) => Ok(r),
        None => quadrature_admissibility(measure, idx, eta, &QuadratureOptions::for_dim(idx.dim())),
    }
}

pub(crate) fn require_admissible(measure: &SpectralMeasure, idx: &FractionalIndex) -> Result<()> {
    let rep = admissibility(measure, idx, 1.0)?;
    if !rep.admissible {
        return Err(Error::Divergent { slope: rep.threshold });
    }
    Ok(())
}

/// Critical exponent `η* = inf{η : ∫ μ/(1+S_α)^η < ∞}` from the log-slope
/// of the `μ`-mass of the outer shells, clamped at 0.
pub fn critical_eta(
    measure: &SpectralMeasure,
    idx: &FractionalIndex,
    opts: &QuadratureOptions,
) -> Result<f64> {
    let shells = spectral_integral(measure, idx, opts, |_, _| 1.0)?;
    let n = shells.contributions.len();
    let fit = opts.fit_shells.min(n);
    let top = &shells.contributions[n - fit..];
    if top.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Inconclusive("vanishing mass in outer shells".into()));
    }
    Ok(fit_slope(top).max(0.0))
}

/// `J(t) = ∫ |ψ_ξ(t)|² μ(dξ) = ∫ exp(-2t Σ|ξ_i|^{α_i} cos(δ_i π/2)) μ(dξ)`.
pub fn j_function(idx: &FractionalIndex, measure: &SpectralMeasure, t: f64) -> Result<f64> {
    j_function_with(idx, measure, t, &QuadratureOptions::for_dim(idx.dim()))
}

pub fn j_function_with(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    t: f64,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    require_admissible(measure, idx)?;
    // Extend the shell range until the semigroup factor has decayed.
    let needed = (60.0 / (2.0 * t * idx.kappa())).log2().ceil() as i32 + 1;
    let opts = QuadratureOptions { k_max: opts.k_max.max(needed), ..*opts };
    spectral_integral(measure, idx, &opts, |xi, _| (-2.0 * t * idx.damping_unchecked(xi)).exp())?
        .finite()
}

/// Integrated quantities of the two-sided bound on `∫_0^T J`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulativeBound {
    pub horizon: f64,
    /// `∫ μ T / (1 + 2T S_α)`.
    pub lhs: f64,
    /// `∫_0^T J(s) ds = ∫ μ (1 - e^{-2Tc(ξ)}) / (2c(ξ))`.
    pub integral: f64,
    /// `∫ μ 2T / (1 + 2Tκ S_α)`.
    pub rhs: f64,
    /// `∫ μ / (1 + S_α)`.
    pub admissibility_integral: f64,
    pub c1: f64,
    pub c2: f64,
    pub holds: bool,
}

/// Relative slack allowed on every link of the bound chain.
pub const BOUND_TOL: f64 = 1e-6;

pub fn cumulative_bound_check(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    horizon: f64,
) -> Result<CumulativeBound> {
    cumulative_bound_check_with(idx, measure, horizon, &QuadratureOptions::for_dim(idx.dim()))
}

pub fn cumulative_bound_check_with(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    horizon: f64,
    opts: &QuadratureOptions,
) -> Result<CumulativeBound> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    require_admissible(measure, idx)?;
    let t = horizon;
    let kappa = idx.kappa();
    let integral = cumulative_integral(idx, measure, t, opts)?;
    let lhs = spectral_integral(measure, idx, opts, |_, s| t / (1.0 + 2.0 * t * s))?.finite()?;
    let rhs = spectral_integral(measure, idx, opts, |_, s| 2.0 * t / (1.0 + 2.0 * t * kappa * s))?
        .finite()?;
    let h1 = spectral_integral(measure, idx, opts, |_, s| 1.0 / (1.0 + s))?.finite()?;
    let c1 = t.min(0.5);
    let c2 = (2.0 * t).max(1.0 / kappa);
    let le = |a: f64, b: f64| a <= b * (1.0 + BOUND_TOL);
    let holds = le(c1 * h1, lhs) && le(lhs, integral) && le(integral, rhs) && le(rhs, c2 * h1);
    if !holds {
        return Err(Error::Consistency(format!(
            "bound chain violated: {:e} <= {lhs:e} <= {integral:e} <= {rhs:e} <= {:e}",
            c1 * h1,
            c2 * h1
        )));
    }
    Ok(CumulativeBound {
        horizon,
        lhs,
        integral,
        rhs,
        admissibility_integral: h1,
        c1,
        c2,
        holds,
    })
}

/// `(1 - e^{-x}) / x` with the removable singularity filled in.
fn phi(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `∫_0^T J(s) ds`.
pub fn cumulative_integral(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    horizon: f64,
    opts: &QuadratureOptions,
) -> Result<f64> {
    spectral_integral(measure, idx, opts, |xi, _| {
        horizon * phi(2.0 * horizon * idx.damping_unchecked(xi))
    })?
    .finite()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WeightedIntegral {
    Finite { value: f64 },
    Divergent { slope: f64 },
}

impl WeightedIntegral {
    pub fn is_finite(&self) -> bool {
        matches!(self, WeightedIntegral::Finite { .. })
    }
}

/// `∫_0^T dr ∫ exp(-2rκ S_α) S_α^{2β} μ(dξ)` with `β = weight_exponent / 2`.
pub fn weighted_spectral_integral(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    weight_exponent: f64,
    horizon: f64,
) -> Result<WeightedIntegral> {
    weighted_spectral_integral_with(
        idx,
        measure,
        weight_exponent,
        horizon,
        &QuadratureOptions::for_dim(idx.dim()),
    )
}

pub fn weighted_spectral_integral_with(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    weight_exponent: f64,
    horizon: f64,
    opts: &QuadratureOptions,
) -> Result<WeightedIntegral> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !weight_exponent.is_finite() {
        return Err(Error::invalid("weight_exponent", "must be finite"));
    }
    let beta2 = weight_exponent;
    let kappa = idx.kappa();
    let shells = spectral_integral(measure, idx, opts, |_, s| {
        horizon * phi(2.0 * horizon * kappa * s) * s.powf(beta2)
    })?;
    match shells.verdict {
        Verdict::Divergent => Ok(WeightedIntegral::Divergent { slope: shells.tail_slope }),
        Verdict::Convergent => Ok(WeightedIntegral::Finite { value: shells.finite()? }),
    }
}

/// `∫_0^h dr ∫ exp(-2rκ S_α) μ(dξ)`, the small-time increment integral.
pub fn small_time_integral(
    idx: &FractionalIndex,
    measure: &SpectralMeasure,
    h: f64,
) -> Result<f64> {
    match weighted_spectral_integral(idx, measure, 0.0, h)? {
        WeightedIntegral::Finite { value } => Ok(value),
        WeightedIntegral::Divergent { slope } => Err(Error::Divergent { slope }),
    }
}
