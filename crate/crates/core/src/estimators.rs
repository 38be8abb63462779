//! Rotational invariant estimators.
//!
//! Every estimator shares the singular vectors of `Y` and only chooses new
//! singular values `ξ_j`:
//!
//! * [`oracle_rie`]: `ξ*_j = u_jᵀ S v_j`, the best RIE (needs `S`),
//! * [`general_rie`]: the data-driven estimate for any bi-rotationally
//!   invariant noise with known rectangular R-transform,
//! * [`gaussian_rie`]: the closed form for Gaussian noise.

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RieError};
use crate::freeprob::{rect_r_transform, NoiseFamily};
use crate::spectra::{
    canonicalize, check_finite, default_eta, svd_thin, symmetrized_stieltjes, EmpiricalSpectrum, SvdResult,
};

/// Below this `Im G` a singular value is treated as outside the bulk.
pub const MIN_DENSITY: f64 = 1e-12;

/// `(S, Z, Y = √λ S + Z)` with `N ≤ M`.
#[derive(Debug, Clone)]
pub struct DenoisingInstance {
    signal: Mat<f64>,
    noise: Mat<f64>,
    observation: Mat<f64>,
    lambda: f64,
}

impl DenoisingInstance {
    pub fn new(signal: Mat<f64>, noise: Mat<f64>, lambda: f64) -> Result<Self> {
        if signal.nrows() != noise.nrows() || signal.ncols() != noise.ncols() {
            return Err(RieError::Dimension(format!(
                "signal is {}x{} but noise is {}x{}",
                signal.nrows(),
                signal.ncols(),
                noise.nrows(),
                noise.ncols()
            )));
        }
        if signal.nrows() == 0 || signal.nrows() > signal.ncols() {
            return Err(RieError::Dimension(format!(
                "instance must satisfy 1 <= N <= M, got {}x{}",
                signal.nrows(),
                signal.ncols()
            )));
        }
        check_lambda(lambda)?;
        check_finite(signal.as_ref())?;
        check_finite(noise.as_ref())?;
        let root = lambda.sqrt();
        let observation = Mat::from_fn(signal.nrows(), signal.ncols(), |i, j| root * signal[(i, j)] + noise[(i, j)]);
        Ok(Self {
            signal,
            noise,
            observation,
            lambda,
        })
    }

    pub fn signal(&self) -> MatRef<'_, f64> {
        self.signal.as_ref()
    }

    pub fn noise(&self) -> MatRef<'_, f64> {
        self.noise.as_ref()
    }

    pub fn observation(&self) -> MatRef<'_, f64> {
        self.observation.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_rows(&self) -> usize {
        self.signal.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.signal.ncols()
    }

    pub fn alpha0(&self) -> f64 {
        self.n_rows() as f64 / self.n_cols() as f64
    }

    pub fn svd(&self) -> Result<SvdResult> {
        svd_thin(self.observation.as_ref())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(RieError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(RieError::Domain(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

/// Shrunk singular values and the estimate `Σ ξ_j u_j v_jᵀ`, returned in the
/// orientation of the input matrix.
#[derive(Debug, Clone)]
pub struct ShrinkageResult {
    pub xis: Vec<f64>,
    pub estimate: Mat<f64>,
    pub eta_used: f64,
    /// Indices whose `ξ` was set to zero because `γ_j` lies outside the bulk.
    pub flags: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ShrinkageSummary {
    xis: Vec<f64>,
    eta: f64,
    flags: Vec<usize>,
}

impl ShrinkageResult {
    /// `{"xis": [...], "eta": ..., "flags": [...]}`.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ShrinkageSummary {
            xis: self.xis.clone(),
            eta: self.eta_used,
            flags: self.flags.clone(),
        })?)
    }
}

/// Shrinkage values with the indices that fell back to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Shrinkage {
    pub xis: Vec<f64>,
    pub flags: Vec<usize>,
}

/// `ξ*_j = u_jᵀ S v_j` for a canonical (`N ≤ M`) signal.
pub fn oracle_xis(svd: &SvdResult, signal: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let u = svd.left();
    let v = svd.right_thin();
    if signal.nrows() != u.nrows() || signal.ncols() != v.nrows() {
        return Err(RieError::Dimension(format!(
            "signal is {}x{}, decomposition is {}x{}",
            signal.nrows(),
            signal.ncols(),
            u.nrows(),
            v.nrows()
        )));
    }
    let uts = u.transpose() * signal;
    Ok((0..svd.singular_values().len())
        .map(|j| {
            let mut acc = 0.0;
            for m in 0..v.nrows() {
                acc += uts[(j, m)] * v[(m, j)];
            }
            acc
        })
        .collect())
}

/// `g_j = G_μ̄(γ_j − iη) = (1/N) Σ_k z/(z² − γ_k²)` for every `j`.
fn lower_stieltjes(values: &[f64], eta: f64) -> Vec<Complex64> {
    let n = values.len() as f64;
    values
        .iter()
        .map(|&gamma| {
            let z = Complex64::new(gamma, -eta);
            let z2 = z * z;
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in values {
                acc += (z2 - t * t).inv();
            }
            z * acc / n
        })
        .collect()
}

/// Gaussian-noise shrinkage at `z = γ_j + iη`:
/// `ξ_j = (1/√λ) Im{G(z²+1−1/α) − z²G²} / Im{zG}` with
/// `G(z) = (1/N) Σ 1/(z² − γ_k²)`.
pub fn gaussian_xis(spec: &EmpiricalSpectrum, lambda: f64, eta: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_eta(eta)?;
    let values = spec.values();
    let n = values.len() as f64;
    let alpha = spec.alpha();
    let scale = 1.0 / lambda.sqrt();
    Ok(values
        .iter()
        .map(|&gamma| {
            let z = Complex64::new(gamma, eta);
            let z2 = z * z;
            let mut g = Complex64::new(0.0, 0.0);
            for &t in values {
                g += (z2 - t * t).inv();
            }
            g /= n;
            let num = g * (z2 + 1.0 - 1.0 / alpha) - z2 * g * g;
            let den = z * g;
            scale * num.im / den.im
        })
        .collect())
}

/// General-noise shrinkage.
///
/// With `z = γ_j − iη` and `g = G_μ̄(z)`,
/// `ξ_j = (1/√λ) Im[z g − C_Z((g/z)(1 − α + α z g))] / Im g`,
/// where `Im g = π μ̄_Y` in the limit `η → 0`. Using the complex `z` in the
/// first term keeps the `(1−α)/z` pieces finite near `γ = 0` and makes the
/// Gaussian family reproduce [`gaussian_xis`] exactly.
pub fn general_xis(spec: &EmpiricalSpectrum, noise: &NoiseFamily, lambda: f64, eta: f64) -> Result<Shrinkage> {
    check_lambda(lambda)?;
    check_eta(eta)?;
    let alpha = spec.alpha();
    if (noise.alpha() - alpha).abs() > 1e-9 {
        return Err(RieError::Domain(format!(
            "noise family has alpha = {}, observation has N/M = {alpha}",
            noise.alpha()
        )));
    }
    let values = spec.values();
    let gs = lower_stieltjes(values, eta);
    let per_j: Vec<Result<Option<f64>>> = values
        .par_iter()
        .zip(gs.par_iter())
        .enumerate()
        .map(|(j, (&gamma, &g))| xi_from_stieltjes(gamma, g, eta, alpha, noise, lambda).map_err(|e| RieError::at(j, e)))
        .collect();
    let mut xis = Vec::with_capacity(values.len());
    let mut flags = Vec::new();
    for (j, r) in per_j.into_iter().enumerate() {
        match r? {
            Some(x) => xis.push(x),
            None => {
                xis.push(0.0);
                if values[j] != 0.0 {
                    flags.push(j);
                }
            }
        }
    }
    Ok(Shrinkage { xis, flags })
}

/// The general shrinkage map at `x` given `g = G_μ̄(x − iη)` (or its boundary
/// value `πH + iπμ̄` when `η = 0`). `None` where the density vanishes.
pub fn xi_from_stieltjes(x: f64, g: Complex64, eta: f64, alpha: f64, noise: &NoiseFamily, lambda: f64) -> Result<Option<f64>> {
    if x == 0.0 || g.im < MIN_DENSITY {
        return Ok(None);
    }
    let z = Complex64::new(x, -eta);
    let w = g / z * (Complex64::new(1.0 - alpha, 0.0) + z * g * alpha);
    let c = rect_r_transform(noise, w)?;
    Ok(Some((z * g - c).im / g.im / lambda.sqrt()))
}

/// The general shrinkage map at an arbitrary point `x` (not necessarily a
/// singular value), using the spectrum's smoothed Stieltjes transform.
/// `None` outside the bulk.
pub fn general_xi_at(spec: &EmpiricalSpectrum, noise: &NoiseFamily, lambda: f64, x: f64, eta: f64) -> Result<Option<f64>> {
    check_lambda(lambda)?;
    check_eta(eta)?;
    let g = symmetrized_stieltjes(spec.values(), Complex64::new(x, -eta));
    xi_from_stieltjes(x, g, eta, spec.alpha(), noise, lambda)
}

fn finish(svd: &SvdResult, xis: Vec<f64>, eta: f64, flags: Vec<usize>, transposed: bool) -> ShrinkageResult {
    let estimate = svd.assemble(&xis);
    let estimate = if transposed { estimate.transpose().to_owned() } else { estimate };
    ShrinkageResult {
        xis,
        estimate,
        eta_used: eta,
        flags,
    }
}

/// Oracle RIE of the instance's observation.
pub fn oracle_rie(instance: &DenoisingInstance) -> Result<ShrinkageResult> {
    let svd = instance.svd()?;
    let xis = oracle_xis(&svd, instance.signal())?;
    Ok(finish(&svd, xis, 0.0, Vec::new(), false))
}

/// General-noise RIE of an arbitrary (possibly tall) matrix.
pub fn general_rie(y: MatRef<'_, f64>, noise: &NoiseFamily, lambda: f64, eta: f64) -> Result<ShrinkageResult> {
    let (yc, transposed) = canonicalize(y)?;
    let svd = svd_thin(yc.as_ref())?;
    let Shrinkage { xis, flags } = general_xis(svd.spectrum(), noise, lambda, eta)?;
    Ok(finish(&svd, xis, eta, flags, transposed))
}

/// Gaussian-noise RIE at `η = N^{-ε}`.
pub fn gaussian_rie(y: MatRef<'_, f64>, lambda: f64, epsilon: f64) -> Result<ShrinkageResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(RieError::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let n = y.nrows().min(y.ncols());
    gaussian_rie_eta(y, lambda, default_eta(n, epsilon))
}

/// Gaussian-noise RIE at an explicit `η`.
pub fn gaussian_rie_eta(y: MatRef<'_, f64>, lambda: f64, eta: f64) -> Result<ShrinkageResult> {
    let (yc, transposed) = canonicalize(y)?;
    let svd = svd_thin(yc.as_ref())?;
    let xis = gaussian_xis(svd.spectrum(), lambda, eta)?;
    Ok(finish(&svd, xis, eta, Vec::new(), transposed))
}

/// `(1/N) ‖S − Ξ‖²_F` with `N = min(rows, cols)`.
pub fn mse(signal: MatRef<'_, f64>, estimate: MatRef<'_, f64>) -> Result<f64> {
    if signal.nrows() != estimate.nrows() || signal.ncols() != estimate.ncols() {
        return Err(RieError::Dimension(format!(
            "signal is {}x{} but estimate is {}x{}",
            signal.nrows(),
            signal.ncols(),
            estimate.nrows(),
            estimate.ncols()
        )));
    }
    let n = signal.nrows().min(signal.ncols());
    if n == 0 {
        return Err(RieError::Dimension("empty matrices".into()));
    }
    Ok((signal - estimate).squared_norm_l2() / n as f64)
}

/// MSE of `Σ ξ_j u_j v_jᵀ` from `‖S‖²` and the oracle values alone:
/// `(‖S‖² − 2 Σ ξ_j ξ*_j + Σ ξ_j²)/N`. Exact because the `u_j v_jᵀ` are
/// orthonormal and `ξ*_j = ⟨S, u_j v_jᵀ⟩`.
pub fn mse_from_xis(signal_norm2: f64, xis: &[f64], oracle: &[f64]) -> f64 {
    let n = xis.len() as f64;
    let cross: f64 = xis.iter().zip(oracle).map(|(a, b)| a * b).sum();
    let sq: f64 = xis.iter().map(|a| a * a).sum();
    (signal_norm2 - 2.0 * cross + sq).max(0.0) / n
}

/// Result of the window-integral formula for one `ξ*_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    /// Ratio at the smallest `η`.
    pub xi: f64,
    /// `|ratio(η_last) − ratio(η_prev)|`, zero for a single `η`.
    pub drift: f64,
    /// Set when the drift exceeds `1e-3`.
    pub warning: Option<String>,
}

/// `ξ*_j` as the `η → 0` limit of
/// `∫ Im L(x+iη) dx / ∫ Im{(x+iη) G(x+iη)} dx` over `[γ_j − ε, γ_j + ε]`.
///
/// Both integrands are sums of Lorentzians centred at `±γ_k`
/// (`L` carries weight `±ξ*_k/2N`, `zG` weight `1/2N`), so the window
/// integrals are evaluated exactly with arctangents.
pub fn exact_xi_prop1(instance: &DenoisingInstance, j: usize, window_eps: f64, eta_sequence: &[f64]) -> Result<WindowEstimate> {
    let svd = instance.svd()?;
    let gammas = svd.singular_values();
    if j >= gammas.len() {
        return Err(RieError::Dimension(format!("index {j} out of range for {} singular values", gammas.len())));
    }
    if !(window_eps > 0.0) {
        return Err(RieError::Domain(format!("window half-width must be positive, got {window_eps}")));
    }
    if eta_sequence.is_empty() || eta_sequence.iter().any(|&e| !(e > 0.0)) {
        return Err(RieError::Domain("eta sequence must be non-empty and positive".into()));
    }
    if eta_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RieError::Domain("eta sequence must be strictly decreasing".into()));
    }
    let gj = gammas[j];
    let (a, b) = (gj - window_eps, gj + window_eps);
    let inside = |c: f64| c >= a && c <= b;
    for (k, &g) in gammas.iter().enumerate() {
        if (k != j && inside(g)) || inside(-g) {
            return Err(RieError::Domain(format!(
                "window [{a}, {b}] around gamma_{j} = {gj} does not isolate it (contains ±gamma_{k} = {g})"
            )));
        }
    }
    let oracle = oracle_xis(&svd, instance.signal())?;
    // ∫_a^b Im 1/(x + iη − c) dx
    let lorentz = |c: f64, eta: f64| -(((b - c) / eta).atan() - ((a - c) / eta).atan());
    let ratio = |eta: f64| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &g) in gammas.iter().enumerate() {
            let (p, m) = (lorentz(g, eta), lorentz(-g, eta));
            num += oracle[k] * (p - m);
            den += p + m;
        }
        num / den
    };
    let values: Vec<f64> = eta_sequence.iter().map(|&e| ratio(e)).collect();
    let xi = *values.last().unwrap();
    let drift = if values.len() >= 2 {
        (values[values.len() - 1] - values[values.len() - 2]).abs()
    } else {
        0.0
    };
    let warning = (drift > 1e-3).then(|| format!("window ratio still moving by {drift:e} between the last two eta values"));
    Ok(WindowEstimate { xi, drift, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gaussian_iid;
    use crate::spectra::svd_decompose;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian_instance(n: usize, m: usize, lambda: f64, seed: u64) -> DenoisingInstance {
        let mut r = rng(seed);
        let s = gaussian_iid(n, m, &mut r).unwrap();
        let z = gaussian_iid(n, m, &mut r).unwrap();
        DenoisingInstance::new(s, z, lambda).unwrap()
    }

    #[test]
    fn instance_observation_is_constructed() {
        let inst = gaussian_instance(3, 5, 4.0, 1);
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(inst.observation()[(i, j)], 2.0 * inst.signal()[(i, j)] + inst.noise()[(i, j)]);
            }
        }
        assert!(DenoisingInstance::new(Mat::zeros(3, 2), Mat::zeros(3, 2), 1.0).is_err());
        assert!(DenoisingInstance::new(Mat::zeros(2, 3), Mat::zeros(2, 4), 1.0).is_err());
        assert!(DenoisingInstance::new(Mat::zeros(2, 3), Mat::zeros(2, 3), 0.0).is_err());
    }

    #[test]
    fn mse_arithmetic() {
        let s = Mat::<f64>::zeros(4, 4);
        let mut e = Mat::<f64>::zeros(4, 4);
        assert_eq!(mse(s.as_ref(), e.as_ref()).unwrap(), 0.0);
        e[(1, 2)] = 2.0;
        assert_eq!(mse(s.as_ref(), e.as_ref()).unwrap(), 1.0);
        assert!(mse(s.as_ref(), Mat::<f64>::zeros(4, 3).as_ref()).is_err());
    }

    #[test]
    fn oracle_of_zero_signal_is_zero() {
        let mut r = rng(2);
        let z = gaussian_iid(4, 6, &mut r).unwrap();
        let inst = DenoisingInstance::new(Mat::zeros(4, 6), z, 1.0).unwrap();
        let res = oracle_rie(&inst).unwrap();
        assert!(res.xis.iter().all(|&x| x.abs() < 1e-14));
        assert!(mse(inst.signal(), res.estimate.as_ref()).unwrap() < 1e-28);
    }

    #[test]
    fn oracle_recovers_noiseless_signal() {
        let mut r = rng(3);
        let s = gaussian_iid(5, 7, &mut r).unwrap();
        let inst = DenoisingInstance::new(s, Mat::zeros(5, 7), 1.0).unwrap();
        let res = oracle_rie(&inst).unwrap();
        assert!(mse(inst.signal(), res.estimate.as_ref()).unwrap() < 1e-24);
    }

    #[test]
    fn mse_shortcut_matches_dense_residual() {
        let inst = gaussian_instance(6, 9, 1.5, 4);
        let svd = inst.svd().unwrap();
        let oracle = oracle_xis(&svd, inst.signal()).unwrap();
        let xis = gaussian_xis(svd.spectrum(), 1.5, 0.3).unwrap();
        let dense = mse(inst.signal(), svd.assemble(&xis).as_ref()).unwrap();
        let fast = mse_from_xis(inst.signal().squared_norm_l2(), &xis, &oracle);
        assert_abs_diff_eq!(dense, fast, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_family_reduces_to_closed_form() {
        for (n, m, seed) in [(8, 8, 5), (7, 13, 6), (30, 60, 7)] {
            let inst = gaussian_instance(n, m, 2.0, seed);
            let svd = inst.svd().unwrap();
            let eta = default_eta(n, 0.5);
            let closed = gaussian_xis(svd.spectrum(), 2.0, eta).unwrap();
            let fam = NoiseFamily::gaussian(svd.spectrum().alpha()).unwrap();
            let general = general_xis(svd.spectrum(), &fam, 2.0, eta).unwrap();
            assert!(general.flags.is_empty());
            for (a, b) in closed.iter().zip(&general.xis) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn alpha_mismatch_is_rejected() {
        let inst = gaussian_instance(4, 8, 1.0, 8);
        let fam = NoiseFamily::gaussian(1.0).unwrap();
        assert!(general_rie(inst.observation(), &fam, 1.0, 0.5).is_err());
    }

    #[test]
    fn vanishing_density_is_flagged() {
        // an enormous eta flattens the smoothed density below the threshold
        let spec = EmpiricalSpectrum::new(vec![1.0, 0.9, 0.0], 3, 3).unwrap();
        let fam = NoiseFamily::gaussian(1.0).unwrap();
        let out = general_xis(&spec, &fam, 1.0, 1e13).unwrap();
        assert_eq!(out.flags, vec![0, 1]);
        assert_eq!(out.xis, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_input_gives_zero_estimate() {
        let y = Mat::<f64>::zeros(3, 5);
        let fam = NoiseFamily::gaussian(0.6).unwrap();
        let res = general_rie(y.as_ref(), &fam, 1.0, 0.3).unwrap();
        assert_eq!(res.estimate.norm_l2(), 0.0);
        assert!(res.flags.is_empty());
        let res = gaussian_rie(y.as_ref(), 1.0, 0.5).unwrap();
        assert_eq!(res.estimate.norm_l2(), 0.0);
    }

    #[test]
    fn tall_input_is_transposed_back() {
        let inst = gaussian_instance(5, 8, 1.0, 9);
        let wide = gaussian_rie(inst.observation(), 1.0, 0.5).unwrap();
        let tall_y = inst.observation().transpose().to_owned();
        let tall = gaussian_rie(tall_y.as_ref(), 1.0, 0.5).unwrap();
        assert_eq!(tall.estimate.nrows(), 8);
        let diff = (&wide.estimate - tall.estimate.transpose()).norm_max();
        assert!(diff < 1e-10);
    }

    #[test]
    fn estimate_reconstructs_from_xis() {
        let inst = gaussian_instance(6, 10, 1.0, 10);
        let res = gaussian_rie(inst.observation(), 1.0, 0.5).unwrap();
        let full = svd_decompose(inst.observation()).unwrap();
        let rebuilt = full.assemble(&res.xis);
        assert!((&rebuilt - &res.estimate).norm_max() < 1e-10);
    }

    #[test]
    fn summary_json_shape() {
        let res = ShrinkageResult {
            xis: vec![1.0, 0.5],
            estimate: Mat::zeros(2, 2),
            eta_used: 0.25,
            flags: vec![1],
        };
        let v: serde_json::Value = serde_json::from_str(&res.summary_json().unwrap()).unwrap();
        assert_eq!(v["eta"], 0.25);
        assert_eq!(v["flags"][0], 1);
        assert_eq!(v["xis"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn window_formula_requires_isolation() {
        let inst = gaussian_instance(5, 8, 1.0, 11);
        let svd = inst.svd().unwrap();
        let g = svd.singular_values();
        let too_wide = (g[0] - g[1]) * 1.5;
        assert!(exact_xi_prop1(&inst, 0, too_wide, &[1e-3]).is_err());
        assert!(exact_xi_prop1(&inst, 0, 1e-3, &[1e-3, 1e-2]).is_err());
    }

    #[test]
    fn window_formula_zero_signal() {
        let mut r = rng(12);
        let z = gaussian_iid(4, 6, &mut r).unwrap();
        let inst = DenoisingInstance::new(Mat::zeros(4, 6), z, 1.0).unwrap();
        let g = inst.svd().unwrap().singular_values().to_vec();
        let eps = 0.4 * (g[0] - g[1]).min(g[1] - g[2]);
        let est = exact_xi_prop1(&inst, 1, eps, &[1e-3, 1e-4]).unwrap();
        assert_eq!(est.xi, 0.0);
    }
}
