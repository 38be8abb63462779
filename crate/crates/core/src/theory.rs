//! Asymptotic quantities: limiting MMSE formulas, the trace relation for Gaussian
//! noise and singular-vector overlaps.

use std::f64::consts::PI;
use std::io::Write;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RieError};
use crate::estimators::{oracle_xis, DenoisingInstance};
use crate::freeprob::{rect_r_transform, NoiseFamily};
use crate::models::{role, stream_rng};
use crate::spectra::{svd_thin, EmpiricalSpectrum, SpectralFunction};

/// Cut-off below which `μ_Y(x)/x²` is not integrated.
pub const INVERSE_SQUARE_CUTOFF: f64 = 1e-3;

/// Composite trapezoid rule on arbitrary nodes.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Principal-value Hilbert transform `(1/π) PV ∫ f(t)/(x − t) dt` of the
/// piecewise-linear interpolant of `(xs, f)`, evaluated at every node.
///
/// On a segment `[a, b]` with slope `s`, write `f(t) = c − s(x − t)` with `c`
/// the line's value at `x`; then `∫_a^b f/(x − t) dt = c ln|(x−a)/(x−b)| − s(b − a)`.
/// At a node the two logarithmic singularities from the adjacent segments
/// carry the same `c` and cancel, so they are dropped.
pub fn hilbert_pv(xs: &[f64], f: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), f.len());
    xs.iter()
        .map(|&x| {
            let mut acc = 0.0;
            for k in 0..xs.len().saturating_sub(1) {
                let (a, b) = (xs[k], xs[k + 1]);
                let s = (f[k + 1] - f[k]) / (b - a);
                let c = f[k] + s * (x - a);
                let (da, db) = ((x - a).abs(), (x - b).abs());
                let mut log_term = 0.0;
                if da > 0.0 {
                    log_term += da.ln();
                }
                if db > 0.0 {
                    log_term -= db.ln();
                }
                acc += c * log_term - s * (b - a);
            }
            acc / PI
        })
        .collect()
}

/// `∫ f(t)/(z − t) dt` for the piecewise-linear interpolant, exact for
/// `Im z ≠ 0`.
pub fn piecewise_linear_stieltjes(xs: &[f64], f: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..xs.len().saturating_sub(1) {
        let (a, b) = (xs[k], xs[k + 1]);
        if f[k] == 0.0 && f[k + 1] == 0.0 {
            continue;
        }
        let s = (f[k + 1] - f[k]) / (b - a);
        let c = (z - a) * s + f[k];
        acc += c * ((z - a).ln() - (z - b).ln()) - s * (b - a);
    }
    acc
}

/// Where a density grid came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSource {
    Empirical { n: usize, eta: f64 },
    Analytic { name: String },
}

/// One-sided view of a symmetrized singular-value law: nodes `xs ≥ 0`,
/// the symmetrized density `μ̄` (mass ½ on this half) and `H[μ̄]`.
/// On `x > 0`, `μ_Y = 2μ̄`.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    xs: Vec<f64>,
    density: Vec<f64>,
    hilbert: Vec<f64>,
    source: GridSource,
}

impl DensityGrid {
    pub fn new(xs: Vec<f64>, density: Vec<f64>, hilbert: Vec<f64>, source: GridSource) -> Result<Self> {
        if xs.len() < 2 || xs.len() != density.len() || xs.len() != hilbert.len() {
            return Err(RieError::Dimension(format!(
                "grid needs matching lengths >= 2, got {}, {}, {}",
                xs.len(),
                density.len(),
                hilbert.len()
            )));
        }
        if xs[0] < 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RieError::Domain("grid nodes must be nonnegative and strictly increasing".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) || hilbert.iter().any(|h| !h.is_finite()) {
            return Err(RieError::Domain("grid density must be finite and nonnegative".into()));
        }
        let grid = Self {
            xs,
            density,
            hilbert,
            source,
        };
        let mass = grid.half_mass();
        if !(0.49..=0.51).contains(&mass) {
            return Err(RieError::Coverage(format!("one-sided grid mass {mass} outside [0.49, 0.51]")));
        }
        Ok(grid)
    }

    /// Smoothed density and Hilbert transform read off `G(x − iη)` on
    /// `[0, γ_max + 20η]` with `n_points` uniform nodes.
    pub fn from_spectrum(spec: &EmpiricalSpectrum, eta: f64, n_points: usize) -> Result<Self> {
        let f = SpectralFunction::new(spec, eta)?;
        let n_points = n_points.max(2000);
        let hi = spec.max() + 20.0 * eta;
        let xs: Vec<f64> = (0..n_points).map(|i| hi * i as f64 / (n_points - 1) as f64).collect();
        let (density, hilbert): (Vec<f64>, Vec<f64>) = xs.iter().map(|&x| f.plemelj(x)).unzip();
        Self::new(xs, density, hilbert, GridSource::Empirical { n: spec.len(), eta })
    }

    /// Singular-value law of an `N × M` matrix with i.i.d. entries of
    /// variance `scale/N` as `N/M → α`: `x = √(scale·e)` where `αe` follows
    /// Marchenko–Pastur with ratio `α`. For `Y = √λ S + Z` with Gaussian `S`
    /// and `Z`, `scale = 1 + λ`. Nodes cluster at the square-root edges.
    pub fn marchenko_pastur(alpha: f64, scale: f64, n_points: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(scale > 0.0) {
            return Err(RieError::Domain(format!("need alpha in (0, 1] and scale > 0, got {alpha}, {scale}")));
        }
        let n_points = n_points.max(2000);
        let (a, b) = ((1.0 - alpha.sqrt()).powi(2), (1.0 + alpha.sqrt()).powi(2));
        let lo = (scale * a / alpha).sqrt();
        let hi = (scale * b / alpha).sqrt();
        let xs: Vec<f64> = (0..n_points)
            .map(|i| {
                let th = PI * i as f64 / (n_points - 1) as f64;
                lo + (hi - lo) * 0.5 * (1.0 - th.cos())
            })
            .collect();
        let mu_y = |x: f64| {
            if x <= 0.0 {
                // α = 1: quarter-circle value at the origin
                return if alpha == 1.0 { 2.0 / (PI * scale.sqrt()) } else { 0.0 };
            }
            let e = x * x / scale;
            let w = alpha * e;
            let q = (b - w) * (w - a);
            if q <= 0.0 {
                return 0.0;
            }
            q.sqrt() / (2.0 * PI * alpha * e) * 2.0 * x / scale
        };
        let density: Vec<f64> = xs.iter().map(|&x| 0.5 * mu_y(x)).collect();
        let hilbert = symmetric_hilbert(&xs, &density);
        Self::new(
            xs,
            density,
            hilbert,
            GridSource::Analytic {
                name: format!("marchenko_pastur(alpha={alpha}, scale={scale})"),
            },
        )
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// `μ̄` on the nodes.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `H[μ̄]` on the nodes.
    pub fn hilbert(&self) -> &[f64] {
        &self.hilbert
    }

    pub fn source(&self) -> &GridSource {
        &self.source
    }

    /// Trapezoid mass of `μ̄` on the nodes (½ for a complete grid).
    pub fn half_mass(&self) -> f64 {
        trapezoid(&self.xs, &self.density)
    }

    /// `μ_Y = 2μ̄` on the nodes.
    pub fn mu_y(&self) -> Vec<f64> {
        self.density.iter().map(|d| 2.0 * d).collect()
    }

    fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let x = x.abs();
        if x < self.xs[0] || x > *self.xs.last().unwrap() {
            return 0.0;
        }
        let k = self.xs.partition_point(|&t| t <= x).clamp(1, self.xs.len() - 1);
        let (a, b) = (self.xs[k - 1], self.xs[k]);
        let t = (x - a) / (b - a);
        values[k - 1] * (1.0 - t) + values[k] * t
    }

    /// Linear interpolation of `μ̄`, even in `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        self.interpolate(&self.density, x)
    }

    /// Linear interpolation of `H[μ̄]`, odd in `x`.
    pub fn hilbert_at(&self, x: f64) -> f64 {
        x.signum() * self.interpolate(&self.hilbert, x)
    }

    /// `G_μ̄(z)` of the piecewise-linear symmetrized density.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        let (full_x, full_f) = symmetrize(&self.xs, &self.density);
        piecewise_linear_stieltjes(&full_x, &full_f, z)
    }

    /// `G_μ̄(x − i0⁺) = πH[μ̄](x) + iπμ̄(x)`.
    pub fn boundary_stieltjes(&self, x: f64) -> Complex64 {
        Complex64::new(PI * self.hilbert_at(x), PI * self.density_at(x))
    }

    /// Columns `x,density,hilbert`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,density,hilbert")?;
        for ((x, d), h) in self.xs.iter().zip(&self.density).zip(&self.hilbert) {
            writeln!(out, "{x},{d},{h}")?;
        }
        Ok(())
    }
}

/// Mirrors one-sided nodes onto the full line (sharing the origin if present).
fn symmetrize(xs: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let skip = usize::from(xs[0] == 0.0);
    let mut fx: Vec<f64> = xs[skip..].iter().rev().map(|x| -x).collect();
    let mut ff: Vec<f64> = f[skip..].iter().rev().copied().collect();
    fx.extend_from_slice(xs);
    ff.extend_from_slice(f);
    (fx, ff)
}

/// `H[μ̄]` at the one-sided nodes for the even extension of `(xs, f)`.
fn symmetric_hilbert(xs: &[f64], f: &[f64]) -> Vec<f64> {
    let (fx, ff) = symmetrize(xs, f);
    let h = hilbert_pv(&fx, &ff);
    h[h.len() - xs.len()..].to_vec()
}

/// Limiting MMSE of the general RIE: `∫x²μ_S − ∫ ξ̂(x)² μ_Y(x) dx`, with `ξ̂` supplied as a
/// function on `x ≥ 0`.
pub fn mmse_general<F>(mu_s_second_moment: f64, xi_fn: F, grid: &DensityGrid) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mass = 2.0 * grid.half_mass();
    if (mass - 1.0).abs() > 0.05 {
        return Err(RieError::Coverage(format!("grid carries mass {mass}, more than 5% away from 1")));
    }
    let integrand = grid
        .xs()
        .iter()
        .zip(grid.density())
        .map(|(&x, &d)| xi_fn(x).map(|xi| xi * xi * 2.0 * d))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mu_s_second_moment - trapezoid(grid.xs(), &integrand))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMmse {
    pub value: f64,
    /// Set when `μ_Y` does not vanish near the origin although `α < 1`,
    /// in which case the `1/x²` term was truncated at the cut-off.
    pub warning: Option<String>,
}

/// Closed-form limiting MMSE for Gaussian noise:
/// `(1/λ)[1/α − (1/α − 1)² ∫ μ_Y/x² − (π²/3) ∫ μ_Y³]`.
///
/// The `1/x²` integral starts at [`INVERSE_SQUARE_CUTOFF`]; for `α < 1` the
/// limiting `μ_Y` has a hard gap at the origin, so only smoothing leakage is
/// dropped.
pub fn mmse_gaussian(grid: &DensityGrid, alpha: f64, lambda: f64) -> Result<GaussianMmse> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(lambda > 0.0) {
        return Err(RieError::Domain(format!("need alpha in (0, 1] and lambda > 0, got {alpha}, {lambda}")));
    }
    let xs = grid.xs();
    let mu = grid.mu_y();
    let cubes: Vec<f64> = mu.iter().map(|m| m * m * m).collect();
    let int_cube = trapezoid(xs, &cubes);
    let coef = (1.0 / alpha - 1.0).powi(2);
    let mut warning = None;
    let int_inv = if coef > 0.0 {
        let start = xs.partition_point(|&x| x < INVERSE_SQUARE_CUTOFF);
        let tail_x = &xs[start..];
        let tail: Vec<f64> = tail_x.iter().zip(&mu[start..]).map(|(x, m)| m / (x * x)).collect();
        if let Some(&m0) = mu[start..].first() {
            let peak = mu.iter().cloned().fold(0.0, f64::max);
            if m0 > 1e-3 * peak {
                warning = Some(format!(
                    "mu_Y = {m0:e} at the 1/x^2 cut-off {INVERSE_SQUARE_CUTOFF}; the integral is truncated"
                ));
            }
        }
        trapezoid(tail_x, &tail)
    } else {
        0.0
    };
    let value = (1.0 / alpha - coef * int_inv - PI * PI / 3.0 * int_cube) / lambda;
    Ok(GaussianMmse { value, warning })
}

/// `1/(α(1 + λ))`, the Gaussian–Gaussian MMSE.
pub fn mmse_gaussian_closed_form(alpha: f64, lambda: f64) -> f64 {
    1.0 / (alpha * (1.0 + lambda))
}

/// `G(z) = (1/N) Σ 1/(z² − γ_k²)` and `L(z) = (1/N) Σ γ_k ξ*_k/(z² − γ_k²)`
/// from singular values and oracle values.
pub fn trace_functions_from(gammas: &[f64], oracle: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let z2 = z * z;
    let n = gammas.len() as f64;
    let mut g = Complex64::new(0.0, 0.0);
    let mut l = Complex64::new(0.0, 0.0);
    for (&t, &xi) in gammas.iter().zip(oracle) {
        let r = (z2 - t * t).inv();
        g += r;
        l += r * (t * xi);
    }
    (g / n, l / n)
}

/// `(G(z), L(z)) = ((1/N) Tr G_{YYᵀ}(z²), (1/N) Tr G_{YYᵀ}(z²) Y Sᵀ)`.
pub fn trace_functions_gl(instance: &DenoisingInstance, z: Complex64) -> Result<(Complex64, Complex64)> {
    if z.im == 0.0 {
        return Err(RieError::Domain(format!("trace functions need Im z != 0, got {z}")));
    }
    let svd = instance.svd()?;
    let oracle = oracle_xis(&svd, instance.signal())?;
    Ok(trace_functions_from(svd.singular_values(), &oracle, z))
}

/// `(1/√λ)[G(z)(z² + 1 − 1/α₀) − z²G(z)² − 1]`, the Gaussian-noise
/// prediction for `L(z)`.
pub fn trace_relation_prediction(g: Complex64, z: Complex64, alpha0: f64, lambda: f64) -> Complex64 {
    let z2 = z * z;
    (g * (z2 + 1.0 - 1.0 / alpha0) - z2 * g * g - 1.0) / lambda.sqrt()
}

/// `ε_N = L(z) − (1/√λ)[G(z)(z² + 1 − 1/α₀) − z²G(z)² − 1]`.
pub fn theorem2_residual(instance: &DenoisingInstance, z: Complex64) -> Result<Complex64> {
    let (g, l) = trace_functions_gl(instance, z)?;
    Ok(l - trace_relation_prediction(g, z, instance.alpha0(), instance.lambda()))
}

/// The pair `ζ*₁, ζ*₂` at `z`, built from `g = G_μ̄(z)`:
/// `M(1/z²) + 1 = zg`, `Z = C_Z((1/z²) T(M(1/z²)))`,
/// `ζ₁ = zZ/(M + 1)`, `ζ₂ = αzZ/(αM + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaPair {
    pub zeta1: Complex64,
    pub zeta2: Complex64,
    pub z: Complex64,
}

impl ZetaPair {
    pub fn from_stieltjes(g: Complex64, z: Complex64, noise: &NoiseFamily) -> Result<Self> {
        let alpha = noise.alpha();
        let m = z * g - 1.0;
        let arg = (m * alpha + 1.0) * (m + 1.0) / (z * z);
        let zf = rect_r_transform(noise, arg).map_err(|e| RieError::Domain(format!("zeta evaluation at z = {z}: {e}")))?;
        let zeta1 = z * zf / (m + 1.0);
        let zeta2 = z * zf * alpha / (m * alpha + 1.0);
        if ![zeta1, zeta2].iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(RieError::Domain(format!("non-finite zeta at z = {z}")));
        }
        Ok(Self { zeta1, zeta2, z })
    }

    /// `σ / ((z − ζ₂)(z − ζ₁) − σ²)`.
    pub fn overlap_kernel(&self, sigma: f64) -> Complex64 {
        let d = (self.z - self.zeta2) * (self.z - self.zeta1) - sigma * sigma;
        Complex64::new(sigma, 0.0) / d
    }
}

/// Rescaled overlap `O(γ, σ) = (1/Im g) Im[σ/((z − ζ₂)(z − ζ₁) − σ²)]` at
/// `z = γ − iη`, with `g` taken from the grid. `η = 0` uses the boundary value
/// `πH + iπμ̄` directly.
pub fn overlap_theoretical(gamma: f64, sigma: f64, grid: &DensityGrid, noise: &NoiseFamily, alpha: f64, eta: f64) -> Result<f64> {
    if (noise.alpha() - alpha).abs() > 1e-9 {
        return Err(RieError::Domain(format!("noise alpha {} differs from {alpha}", noise.alpha())));
    }
    if !(eta >= 0.0) {
        return Err(RieError::Domain(format!("eta must be >= 0, got {eta}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let z = Complex64::new(gamma, -eta);
    let g = if eta == 0.0 { grid.boundary_stieltjes(gamma) } else { grid.stieltjes(z) };
    if !(g.im > 0.0) {
        return Err(RieError::Domain(format!("gamma = {gamma} lies outside the bulk")));
    }
    let pair = ZetaPair::from_stieltjes(g, z, noise)?;
    Ok(pair.overlap_kernel(sigma).im / g.im)
}

/// One bin of an empirical overlap curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapPoint {
    /// Mean `γ` of the samples in the bin.
    pub gamma: f64,
    pub overlap: f64,
    pub stderr: f64,
    pub n_trials: usize,
    pub n_samples: usize,
}

/// Columns `gamma,overlap,stderr,n_trials`.
pub fn write_overlap_csv<W: Write>(points: &[OverlapPoint], mut out: W) -> Result<()> {
    writeln!(out, "gamma,overlap,stderr,n_trials")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.gamma, p.overlap, p.stderr, p.n_trials)?;
    }
    Ok(())
}

/// Monte-Carlo setup for [`overlap_empirical`].
pub struct OverlapSetup<'a> {
    /// Fixed across trials, canonical (`N ≤ M`).
    pub signal: MatRef<'a, f64>,
    pub lambda: f64,
    /// Index of `σ_k` in the descending spectrum of the signal.
    pub sigma_index: usize,
    pub n_trials: usize,
    /// `n_bins` equal bins on `range`.
    pub n_bins: usize,
    pub range: (f64, f64),
    pub master_seed: u64,
}

/// Result of [`overlap_empirical`].
#[derive(Debug, Clone)]
pub struct OverlapCurve {
    pub sigma: f64,
    pub points: Vec<OverlapPoint>,
}

#[derive(Clone)]
struct BinAcc {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    gsum: Vec<f64>,
    count: Vec<usize>,
}

impl BinAcc {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            sumsq: vec![0.0; n],
            gsum: vec![0.0; n],
            count: vec![0; n],
        }
    }
}

/// `N⟨(u_jᵀ s_k^{(l)})(v_jᵀ s_k^{(r)})⟩` binned by `γ_j`, averaged over noise
/// draws with the signal held fixed. Repeated `σ_k` are summed over their
/// block, which is the only basis-independent quantity.
///
/// Each trial uses the eigendecomposition of `YYᵀ`; since
/// `v_j = Yᵀu_j/γ_j`, the right overlap is `u_jᵀ(Y s^{(r)})/γ_j`.
pub fn overlap_empirical<F>(setup: &OverlapSetup<'_>, noise: F) -> Result<OverlapCurve>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Mat<f64>> + Sync,
{
    if setup.n_trials < 2 {
        return Err(RieError::InsufficientSamples(format!(
            "overlap averages need at least 2 trials, got {}",
            setup.n_trials
        )));
    }
    let s = setup.signal;
    let (n, m) = (s.nrows(), s.ncols());
    if n == 0 || n > m {
        return Err(RieError::Dimension(format!("signal must be canonical, got {n}x{m}")));
    }
    let (lo, hi) = setup.range;
    if setup.n_bins == 0 || !(hi > lo) {
        return Err(RieError::Domain("overlap bins need n_bins >= 1 and a nonempty range".into()));
    }
    if !(setup.lambda > 0.0) {
        return Err(RieError::Domain(format!("lambda must be positive, got {}", setup.lambda)));
    }
    let ssvd = svd_thin(s)?;
    let sig = ssvd.singular_values();
    let k = setup.sigma_index;
    if k >= sig.len() {
        return Err(RieError::Dimension(format!("sigma index {k} out of range")));
    }
    let sigma = sig[k];
    let tol = 1e-10 * sigma.max(1.0);
    let block: Vec<usize> = (0..sig.len()).filter(|&i| (sig[i] - sigma).abs() <= tol).collect();
    let sl: Vec<Vec<f64>> = block.iter().map(|&i| ssvd.left().col(i).iter().copied().collect()).collect();
    let sr: Vec<Mat<f64>> = block
        .iter()
        .map(|&i| Mat::from_fn(m, 1, |r, _| ssvd.right_thin()[(r, i)]))
        .collect();
    let root = setup.lambda.sqrt();
    let width = (hi - lo) / setup.n_bins as f64;

    let per_trial: Vec<Result<BinAcc>> = (0..setup.n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(setup.master_seed, trial, role::NOISE);
            let z = noise(&mut rng)?;
            if z.nrows() != n || z.ncols() != m {
                return Err(RieError::Dimension(format!("noise sampler returned {}x{}", z.nrows(), z.ncols())));
            }
            let y = Mat::from_fn(n, m, |i, j| root * s[(i, j)] + z[(i, j)]);
            let gram = &y * y.transpose();
            let evd = gram
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| RieError::Backend(format!("eigendecomposition: {e:?}")))?;
            let q = evd.U();
            let evals: Vec<f64> = evd.S().column_vector().iter().map(|e| e.max(0.0)).collect();
            let mut acc = BinAcc::new(setup.n_bins);
            let mut prod = vec![0.0; n];
            for (sl_b, sr_b) in sl.iter().zip(&sr) {
                let ysr = &y * sr_b;
                for j in 0..n {
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for i in 0..n {
                        a += q[(i, j)] * sl_b[i];
                        b += q[(i, j)] * ysr[(i, 0)];
                    }
                    prod[j] += a * b;
                }
            }
            let gmax = evals.iter().cloned().fold(0.0, f64::max).sqrt();
            for j in 0..n {
                let gamma = evals[j].sqrt();
                if gamma <= 1e-9 * gmax || gamma < lo || gamma >= hi {
                    continue;
                }
                let bin = (((gamma - lo) / width) as usize).min(setup.n_bins - 1);
                let o = n as f64 * prod[j] / gamma;
                acc.sum[bin] += o;
                acc.sumsq[bin] += o * o;
                acc.gsum[bin] += gamma;
                acc.count[bin] += 1;
            }
            Ok(acc)
        })
        .collect();

    let mut total = BinAcc::new(setup.n_bins);
    for r in per_trial {
        let acc = r?;
        for b in 0..setup.n_bins {
            total.sum[b] += acc.sum[b];
            total.sumsq[b] += acc.sumsq[b];
            total.gsum[b] += acc.gsum[b];
            total.count[b] += acc.count[b];
        }
    }
    let points = (0..setup.n_bins)
        .filter(|&b| total.count[b] >= 2)
        .map(|b| {
            let c = total.count[b] as f64;
            let mean = total.sum[b] / c;
            let var = ((total.sumsq[b] - c * mean * mean) / (c - 1.0)).max(0.0);
            OverlapPoint {
                gamma: total.gsum[b] / c,
                overlap: mean,
                stderr: (var / c).sqrt(),
                n_trials: setup.n_trials,
                n_samples: total.count[b],
            }
        })
        .collect();
    Ok(OverlapCurve { sigma, points })
}

/// Vertex of a least-squares parabola through the points whose value is at
/// least `frac` of the maximum; a noise-tolerant peak location.
pub fn peak_location(xs: &[f64], ys: &[f64], frac: f64) -> Option<f64> {
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let sel: Vec<usize> = (0..xs.len()).filter(|&i| ys[i] >= frac * ymax).collect();
    if sel.len() < 3 {
        return Some(xs[imax]);
    }
    let x0 = xs[imax];
    // normal equations for y = c0 + c1 t + c2 t², t = x − x0
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for &i in &sel {
        let t = xs[i] - x0;
        let mut p = 1.0;
        for (d, sd) in s.iter_mut().enumerate() {
            *sd += p;
            if d < 3 {
                r[d] += p * ys[i];
            }
            p *= t;
        }
    }
    let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let c = solve3(a, r)?;
    if c[2] >= 0.0 {
        return Some(x0);
    }
    Some(x0 - c[1] / (2.0 * c[2]))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *o = det(m) / d;
    }
    Some(out)
}
