//! Rectangular free-probability transforms.
//!
//! For a probability measure `μ` on singular values and `α ∈ [0, 1]`:
//!
//! * `M_μ(z) = ∫ 1/(1 − t²z) dμ(t) − 1` (even-moment generating function),
//! * `T^{(α)}(x) = (αx + 1)(x + 1)`,
//! * `H^{(α)}_μ(z) = z T^{(α)}(M_μ(z))`,
//! * `C^{(α)}_μ(z) = (T^{(α)})^{-1}(z / (H^{(α)}_μ)^{-1}(z))`, the rectangular
//!   R-transform, which is additive under rectangular free convolution.
//!
//! Analytic R-transforms are provided for the noise ensembles used by the
//! benchmarks; any other noise can be described by an empirical spectrum, in
//! which case `H` is inverted numerically.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RieError};
use crate::spectra::EmpiricalSpectrum;

const POLE_TOL: f64 = 1e-14;
const H_INVERSE_TOL: f64 = 1e-10;

/// A measure whose even-moment generating function can be evaluated.
pub trait SpectralMeasure {
    /// `M_μ(z)`.
    fn m_transform(&self, z: Complex64) -> Result<Complex64>;
}

impl SpectralMeasure for EmpiricalSpectrum {
    fn m_transform(&self, z: Complex64) -> Result<Complex64> {
        m_transform_atoms(self.values(), z)
    }
}

fn m_transform_atoms(values: &[f64], z: Complex64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for &t in values {
        let d = Complex64::new(1.0, 0.0) - z * (t * t);
        if d.norm() < POLE_TOL {
            return Err(RieError::Singularity(format!(
                "M-transform pole: 1 - t^2 z vanishes for t = {t}, z = {z}"
            )));
        }
        acc += d.inv();
    }
    Ok(acc / values.len() as f64 - 1.0)
}

/// `M'(z) = (1/N) Σ t²/(1 − t²z)²`.
fn m_derivative_atoms(values: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &t in values {
        let t2 = t * t;
        let d = Complex64::new(1.0, 0.0) - z * t2;
        acc += t2 / (d * d);
    }
    acc / values.len() as f64
}

/// `M_μ(z)` for any supported measure.
pub fn m_transform<S: SpectralMeasure + ?Sized>(measure: &S, z: Complex64) -> Result<Complex64> {
    measure.m_transform(z)
}

/// `T^{(α)}(x) = (αx + 1)(x + 1)`; `α = 0` gives the linear limit `x + 1`.
pub fn t_alpha(x: Complex64, alpha: f64) -> Complex64 {
    (x * alpha + 1.0) * (x + 1.0)
}

fn t_alpha_derivative(x: Complex64, alpha: f64) -> Complex64 {
    x * (2.0 * alpha) + (1.0 + alpha)
}

/// Root of `αx² + (1+α)x + (1−w) = 0` on the branch through `T^{-1}(1) = 0`.
///
/// Written as `2(w − 1) / ((1+α) + √((1+α)² − 4α(1−w)))` so that small `α`
/// does not cancel and `α = 0` reduces to `w − 1`.
pub fn t_alpha_inverse(w: Complex64, alpha: f64) -> Complex64 {
    let b = 1.0 + alpha;
    let disc = Complex64::new(b * b, 0.0) - (Complex64::new(1.0, 0.0) - w) * (4.0 * alpha);
    (w - 1.0) * 2.0 / (disc.sqrt() + b)
}

/// `H^{(α)}(z) = z T^{(α)}(M(z))` of an empirical spectrum.
pub fn h_transform(spec: &EmpiricalSpectrum, z: Complex64, alpha: f64) -> Result<Complex64> {
    Ok(z * t_alpha(spec.m_transform(z)?, alpha))
}

fn h_real(values: &[f64], z: f64, alpha: f64) -> f64 {
    let m: f64 = values.iter().map(|t| 1.0 / (1.0 - t * t * z)).sum::<f64>() / values.len() as f64 - 1.0;
    z * (alpha * m + 1.0) * (m + 1.0)
}

/// Inverts `H^{(α)}` on `[0, 1/γ_max²)` by bisection; `H` increases
/// monotonically there from `0` to `+∞`.
pub fn h_inverse(spec: &EmpiricalSpectrum, w: f64, alpha: f64) -> Result<f64> {
    if !w.is_finite() {
        return Err(RieError::Domain(format!("h_inverse argument {w}")));
    }
    let gmax = spec.max();
    if gmax == 0.0 {
        // M ≡ 0, so H is the identity.
        return Ok(w);
    }
    let edge = 1.0 / (gmax * gmax);
    let hi_z = edge * (1.0 - 1e-12);
    let values = spec.values();
    let h_hi = h_real(values, hi_z, alpha);
    if w < 0.0 || w >= h_hi {
        return Err(RieError::Range {
            value: w,
            lo: 0.0,
            hi: h_hi,
        });
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    let tol = H_INVERSE_TOL * w.max(1.0) * 1e-2;
    let (mut lo, mut hi) = (0.0, hi_z);
    let mut mid = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let h = h_real(values, mid, alpha);
        residual = h - w;
        if residual.abs() <= tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if residual < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if residual.abs() > H_INVERSE_TOL * w.max(1.0) {
        return Err(RieError::Convergence {
            iterations: 400,
            lo,
            hi,
            residual,
        });
    }
    Ok(mid)
}

/// Complex inverse of `H^{(α)}`, continued from `H^{-1}(0) = 0` along the ray
/// `s·w`, `s ∈ [0, 1]`, with Newton corrections at each step.
pub fn h_inverse_complex(spec: &EmpiricalSpectrum, w: Complex64, alpha: f64) -> Result<Complex64> {
    if w.im == 0.0 && w.re >= 0.0 {
        return h_inverse(spec, w.re, alpha).map(|x| Complex64::new(x, 0.0));
    }
    let values = spec.values();
    if spec.max() == 0.0 {
        return Ok(w);
    }
    let tol = 1e-12;
    let newton = |target: Complex64, start: Complex64| -> Option<Complex64> {
        let mut z = start;
        for _ in 0..60 {
            let m = m_transform_atoms(values, z).ok()?;
            let h = z * t_alpha(m, alpha);
            let r = h - target;
            if r.norm() <= tol * (1.0 + target.norm()) {
                return Some(z);
            }
            let dm = m_derivative_atoms(values, z);
            let dh = t_alpha(m, alpha) + z * t_alpha_derivative(m, alpha) * dm;
            if dh.norm() == 0.0 || !dh.re.is_finite() {
                return None;
            }
            z -= r / dh;
            if !z.re.is_finite() || !z.im.is_finite() {
                return None;
            }
        }
        None
    };

    let mut s = 0.0;
    let mut step = 1.0 / 16.0;
    let mut z = Complex64::new(0.0, 0.0);
    let mut iterations = 0;
    while s < 1.0 {
        iterations += 1;
        if iterations > 10_000 || step < 1e-9 {
            return Err(RieError::Convergence {
                iterations,
                lo: s,
                hi: (s + step).min(1.0),
                residual: f64::NAN,
            });
        }
        let next = (s + step).min(1.0);
        match newton(w * next, z) {
            Some(znew) => {
                z = znew;
                s = next;
                step *= 1.5;
            }
            None => step *= 0.5,
        }
    }
    Ok(z)
}

/// Noise ensemble named by its rectangular R-transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// i.i.d. `N(0, 1/N)` entries: `C(z) = z/α`.
    Gaussian,
    /// Singular values uniform on `[0, 2]`: `C(z) = 2√z coth(2√z) − 1` at `α = 1`.
    UniformSpectrum,
    /// Sum of `cN` rank-one unit outer products: `C(z) = cz/(1 − z)`.
    RankOneSum { c: f64 },
    /// Any noise, described by a sample of its singular values.
    Empirical { spectrum: EmpiricalSpectrum },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFamily {
    kind: NoiseKind,
    alpha: f64,
}

impl NoiseFamily {
    pub fn new(kind: NoiseKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(RieError::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if let NoiseKind::RankOneSum { c } = kind {
            if !(c > 0.0) || !c.is_finite() {
                return Err(RieError::Domain(format!("rank-one-sum c must be > 0, got {c}")));
            }
        }
        Ok(Self { kind, alpha })
    }

    pub fn gaussian(alpha: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, alpha)
    }

    pub fn uniform_spectrum(alpha: f64) -> Result<Self> {
        Self::new(NoiseKind::UniformSpectrum, alpha)
    }

    pub fn rank_one_sum(c: f64, alpha: f64) -> Result<Self> {
        Self::new(NoiseKind::RankOneSum { c }, alpha)
    }

    /// Aspect ratio taken from the spectrum.
    pub fn empirical(spectrum: EmpiricalSpectrum) -> Result<Self> {
        let alpha = spectrum.alpha();
        Self::new(NoiseKind::Empirical { spectrum }, alpha)
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::UniformSpectrum => "uniform",
            NoiseKind::RankOneSum { .. } => "rank1sum",
            NoiseKind::Empirical { .. } => "empirical",
        }
    }

    /// `C^{(α)}(z)` of this family.
    pub fn r_transform(&self, z: Complex64) -> Result<Complex64> {
        rect_r_transform(self, z)
    }
}

/// `x coth x − 1` as a function of `x²`, which makes it single-valued in `z`.
fn x_coth_x_minus_one(x2: Complex64) -> Result<Complex64> {
    if x2.norm() < 0.25 {
        // Σ_{n≥1} 2^{2n} B_{2n} x^{2n} / (2n)!
        const COEFFS: [f64; 9] = [
            1.0 / 3.0,
            -1.0 / 45.0,
            2.0 / 945.0,
            -1.0 / 4725.0,
            2.0 / 93555.0,
            -1382.0 / 638512875.0,
            4.0 / 18243225.0,
            -3617.0 / 162820783125.0,
            87734.0 / 38979295480125.0,
        ];
        let mut acc = Complex64::new(0.0, 0.0);
        for c in COEFFS.iter().rev() {
            acc = acc * x2 + *c;
        }
        return Ok(acc * x2);
    }
    let x = x2.sqrt();
    // coth x = (1 + e^{-2x}) / (1 - e^{-2x}) with Re x >= 0 for the principal root.
    let e = (-x * 2.0).exp();
    let denom = Complex64::new(1.0, 0.0) - e;
    if denom.norm() < POLE_TOL {
        return Err(RieError::Singularity(format!("coth pole at x^2 = {x2}")));
    }
    Ok(x * (e + 1.0) / denom - 1.0)
}

/// Rectangular R-transform `C^{(α)}(z)` of a noise family.
pub fn rect_r_transform(family: &NoiseFamily, z: Complex64) -> Result<Complex64> {
    let alpha = family.alpha;
    match &family.kind {
        NoiseKind::Gaussian => Ok(z / alpha),
        NoiseKind::UniformSpectrum => {
            if (alpha - 1.0).abs() > 1e-12 {
                return Err(RieError::UnsupportedFamily(format!(
                    "uniform-spectrum R-transform is only known in closed form for alpha = 1 (got {alpha}); use an empirical family"
                )));
            }
            x_coth_x_minus_one(z * 4.0)
        }
        NoiseKind::RankOneSum { c } => {
            let d = Complex64::new(1.0, 0.0) - z;
            if d.norm() < POLE_TOL {
                return Err(RieError::Singularity("rank-one-sum R-transform pole at z = 1".into()));
            }
            Ok(z * *c / d)
        }
        NoiseKind::Empirical { spectrum } => empirical_r_transform(spectrum, z, alpha),
    }
}

/// `C^{(α)}` of an empirical spectrum via numerical inversion of `H^{(α)}`.
pub fn empirical_r_transform(spec: &EmpiricalSpectrum, z: Complex64, alpha: f64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Ok(z);
    }
    let hinv = h_inverse_complex(spec, z, alpha)?;
    if hinv.norm() == 0.0 {
        return Err(RieError::Singularity(format!("H^-1({z}) = 0")));
    }
    Ok(t_alpha_inverse(z / hinv, alpha))
}

/// `max_u |C_Y(u) − C_S(u) − C_Z(u)|` with all three transforms estimated
/// from empirical spectra at a common `α`.
pub fn check_free_additivity(
    spec_s: &EmpiricalSpectrum,
    spec_z: &EmpiricalSpectrum,
    spec_y: &EmpiricalSpectrum,
    alpha: f64,
    u_grid: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &u in u_grid {
        let z = Complex64::new(u, 0.0);
        let cy = empirical_r_transform(spec_y, z, alpha)?;
        let cs = empirical_r_transform(spec_s, z, alpha)?;
        let cz = empirical_r_transform(spec_z, z, alpha)?;
        worst = worst.max((cy - cs - cz).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformTag {
    M,
    H,
    C,
}

impl fmt::Display for TransformTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransformTag::M => "M",
            TransformTag::H => "H",
            TransformTag::C => "C",
        };
        f.write_str(s)
    }
}

/// Cached evaluations of one transform on a set of arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrid {
    arguments: Vec<Complex64>,
    values: Vec<Complex64>,
    tag: TransformTag,
}

impl TransformGrid {
    pub fn new(arguments: Vec<Complex64>, values: Vec<Complex64>, tag: TransformTag) -> Result<Self> {
        if arguments.len() != values.len() {
            return Err(RieError::Dimension(format!(
                "{} arguments but {} values",
                arguments.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(RieError::Domain("transform grid values must be finite".into()));
        }
        Ok(Self {
            arguments,
            values,
            tag,
        })
    }

    /// Evaluates `f` at every argument.
    pub fn evaluate<F>(arguments: Vec<Complex64>, tag: TransformTag, mut f: F) -> Result<Self>
    where
        F: FnMut(Complex64) -> Result<Complex64>,
    {
        let values = arguments
            .iter()
            .enumerate()
            .map(|(i, &z)| f(z).map_err(|e| RieError::at(i, e)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(arguments, values, tag)
    }

    pub fn arguments(&self) -> &[Complex64] {
        &self.arguments
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn tag(&self) -> TransformTag {
        self.tag
    }

    /// Columns `re_arg,im_arg,re_val,im_val,tag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re_arg,im_arg,re_val,im_val,tag")?;
        for (a, v) in self.arguments.iter().zip(&self.values) {
            writeln!(out, "{},{},{},{},{}", a.re, a.im, v.re, v.im, self.tag)?;
        }
        Ok(())
    }
}
