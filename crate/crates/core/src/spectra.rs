//! Singular-value decompositions, hermitization, and Cauchy-kernel estimates of
//! the Stieltjes and Hilbert transforms of empirical singular-value spectra.
//!
//! All spectral functions here work with the *symmetrized* empirical measure
//! `(1/2N) Σ_k (δ_{γ_k} + δ_{-γ_k})`. Evaluating its Stieltjes transform at a
//! point a distance `η` off the real axis is exactly a Cauchy-kernel smoothing
//! of the atoms with bandwidth `η`, so no binning is involved.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{Result, RieError};

/// Sorted (descending) singular values of an `n_rows × n_cols` matrix with
/// `n_rows <= n_cols`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmpiricalSpectrum {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl EmpiricalSpectrum {
    /// Validates the invariants: one value per row, nonnegative, descending,
    /// `0 < n_rows <= n_cols`.
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(RieError::Dimension("spectrum dimensions must be positive".into()));
        }
        if n_rows > n_cols {
            return Err(RieError::Dimension(format!(
                "spectrum of a {n_rows}x{n_cols} matrix: canonical form needs rows <= cols"
            )));
        }
        if values.len() != n_rows {
            return Err(RieError::Dimension(format!(
                "expected {n_rows} singular values, got {}",
                values.len()
            )));
        }
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(RieError::Domain(format!("singular value {k} is {v}")));
            }
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(RieError::Domain("singular values must be in descending order".into()));
        }
        Ok(Self {
            values,
            n_rows,
            n_cols,
        })
    }

    /// Sorts `values` (descending) before validating.
    pub fn from_unsorted(mut values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(RieError::Domain("NaN singular value".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Self::new(values, n_rows, n_cols)
    }

    /// Concatenates spectra of independent matrices with a common aspect
    /// ratio. The result is the spectrum of their block-diagonal sum, which
    /// keeps `N/M` and gives a larger sample of the same limiting law.
    pub fn pooled(spectra: &[EmpiricalSpectrum]) -> Result<Self> {
        let first = spectra
            .first()
            .ok_or_else(|| RieError::Dimension("cannot pool zero spectra".into()))?;
        let alpha = first.alpha();
        let mut values = Vec::new();
        let (mut rows, mut cols) = (0, 0);
        for s in spectra {
            if (s.alpha() - alpha).abs() > 1e-12 {
                return Err(RieError::Dimension("pooled spectra must share N/M".into()));
            }
            values.extend_from_slice(&s.values);
            rows += s.n_rows;
            cols += s.n_cols;
        }
        Self::from_unsorted(values, rows, cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Aspect ratio `N/M` in `(0, 1]`.
    pub fn alpha(&self) -> f64 {
        self.n_rows as f64 / self.n_cols as f64
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// `(1/N) Σ γ_k²`.
    pub fn second_moment(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>() / self.len() as f64
    }
}

/// Full or thin SVD `Y = U Γ Vᵀ` of a canonical (`N <= M`) matrix.
///
/// `right` has `M` columns for a full decomposition and `N` for a thin one;
/// only the first `N` columns ever enter an estimator.
#[derive(Debug, Clone)]
pub struct SvdResult {
    left: Mat<f64>,
    spectrum: EmpiricalSpectrum,
    right: Mat<f64>,
}

impl SvdResult {
    pub fn left(&self) -> MatRef<'_, f64> {
        self.left.as_ref()
    }

    pub fn right(&self) -> MatRef<'_, f64> {
        self.right.as_ref()
    }

    /// First `N` right singular vectors, paired with `left` column by column.
    pub fn right_thin(&self) -> MatRef<'_, f64> {
        self.right.as_ref().subcols(0, self.spectrum.n_rows())
    }

    pub fn spectrum(&self) -> &EmpiricalSpectrum {
        &self.spectrum
    }

    pub fn singular_values(&self) -> &[f64] {
        self.spectrum.values()
    }

    pub fn is_full(&self) -> bool {
        self.right.ncols() == self.spectrum.n_cols()
    }

    /// `Σ_j weights_j u_j v_jᵀ`.
    pub fn assemble(&self, weights: &[f64]) -> Mat<f64> {
        assert_eq!(weights.len(), self.spectrum.n_rows());
        let u = self.left.as_ref();
        let scaled = Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * weights[j]);
        &scaled * self.right_thin().transpose()
    }

    /// `U Γ Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.assemble(self.spectrum.values())
    }
}

/// Transposes `y` when it has more rows than columns, so that the result has
/// `N <= M`. The flag tells the caller to transpose the estimate back.
pub fn canonicalize(y: MatRef<'_, f64>) -> Result<(Mat<f64>, bool)> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(RieError::Dimension(format!(
            "empty matrix ({}x{})",
            y.nrows(),
            y.ncols()
        )));
    }
    if y.nrows() > y.ncols() {
        Ok((y.transpose().to_owned(), true))
    } else {
        Ok((y.to_owned(), false))
    }
}

pub(crate) fn check_finite(y: MatRef<'_, f64>) -> Result<()> {
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            if !y[(i, j)].is_finite() {
                return Err(RieError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn check_canonical(y: MatRef<'_, f64>) -> Result<()> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(RieError::Dimension("empty matrix".into()));
    }
    if y.nrows() > y.ncols() {
        return Err(RieError::Dimension(format!(
            "{}x{} matrix is not canonical; call canonicalize first",
            y.nrows(),
            y.ncols()
        )));
    }
    check_finite(y)
}

/// Clamps the tiny negative values a backend can return and enforces the
/// descending order the spectrum type requires.
fn spectrum_from_backend(raw: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<EmpiricalSpectrum> {
    let mut values: Vec<f64> = raw.into_iter().map(|s| s.max(0.0)).collect();
    for k in 1..values.len() {
        if values[k] > values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    EmpiricalSpectrum::new(values, n_rows, n_cols)
}

/// Full SVD with `U` (`N×N`) and `V` (`M×M`) both orthogonal.
pub fn svd_decompose(y: MatRef<'_, f64>) -> Result<SvdResult> {
    check_canonical(y)?;
    let svd = y
        .svd()
        .map_err(|e| RieError::Backend(format!("svd: {e:?}")))?;
    let raw: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok(SvdResult {
        left: svd.U().to_owned(),
        spectrum: spectrum_from_backend(raw, y.nrows(), y.ncols())?,
        right: svd.V().to_owned(),
    })
}

/// Thin SVD: `V` has only the `N` columns paired with the singular values.
pub fn svd_thin(y: MatRef<'_, f64>) -> Result<SvdResult> {
    check_canonical(y)?;
    let svd = y
        .thin_svd()
        .map_err(|e| RieError::Backend(format!("thin svd: {e:?}")))?;
    let raw: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok(SvdResult {
        left: svd.U().to_owned(),
        spectrum: spectrum_from_backend(raw, y.nrows(), y.ncols())?,
        right: svd.V().to_owned(),
    })
}

/// Singular values only. Cheaper than either decomposition.
pub fn singular_values(y: MatRef<'_, f64>) -> Result<EmpiricalSpectrum> {
    check_canonical(y)?;
    let raw = y
        .singular_values()
        .map_err(|e| RieError::Backend(format!("singular values: {e:?}")))?;
    spectrum_from_backend(raw, y.nrows(), y.ncols())
}

/// The symmetric `(N+M)×(N+M)` block matrix `[[0, Y], [Yᵀ, 0]]`, whose
/// eigenvalues are `±γ_k` together with `M − N` zeros.
pub fn hermitize(y: MatRef<'_, f64>) -> Mat<f64> {
    let (n, m) = (y.nrows(), y.ncols());
    Mat::from_fn(n + m, n + m, |i, j| {
        if i < n && j >= n {
            y[(i, j - n)]
        } else if i >= n && j < n {
            y[(j, i - n)]
        } else {
            0.0
        }
    })
}

/// Smoothing offset `η = N^{-ε}`.
pub fn default_eta(n: usize, epsilon: f64) -> f64 {
    (n as f64).powf(-epsilon)
}

#[inline]
pub(crate) fn recip(z: Complex64) -> Complex64 {
    let d = z.re * z.re + z.im * z.im;
    Complex64::new(z.re / d, -z.im / d)
}

/// `(1/2N) Σ_k [1/(z − γ_k) + 1/(z + γ_k)]` without the domain check.
pub(crate) fn symmetrized_stieltjes(values: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &g in values {
        acc += recip(z - g) + recip(z + g);
    }
    acc / (2.0 * values.len() as f64)
}

/// Stieltjes transform of the symmetrized empirical singular-value measure.
pub fn stieltjes(spec: &EmpiricalSpectrum, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
        return Err(RieError::Domain(format!(
            "Stieltjes transform needs Im z != 0, got {z}"
        )));
    }
    Ok(symmetrized_stieltjes(spec.values(), z))
}

/// Smoothed density and Hilbert transform of the symmetrized spectrum at
/// `x`, read off `G(x − iη) ≈ πH(x) + iπμ̄(x)`. Returns `(density, hilbert)`.
pub fn plemelj_limits(spec: &EmpiricalSpectrum, x: f64, eta: f64) -> Result<(f64, f64)> {
    SpectralFunction::new(spec, eta).map(|f| f.plemelj(x))
}

/// Cauchy-kernel evaluator of the symmetrized spectrum at a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct SpectralFunction {
    atoms: Vec<f64>,
    eta: f64,
}

impl SpectralFunction {
    pub fn new(spec: &EmpiricalSpectrum, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(RieError::Domain(format!("smoothing eta must be > 0, got {eta}")));
        }
        Ok(Self {
            atoms: spec.values().to_vec(),
            eta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Stieltjes transform at an arbitrary off-axis point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        symmetrized_stieltjes(&self.atoms, z)
    }

    /// `G(x − iη)`; its imaginary part is positive.
    pub fn lower(&self, x: f64) -> Complex64 {
        self.eval(Complex64::new(x, -self.eta))
    }

    /// `(density, hilbert)` at `x`.
    pub fn plemelj(&self, x: f64) -> (f64, f64) {
        let g = self.lower(x);
        (g.im / std::f64::consts::PI, g.re / std::f64::consts::PI)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.plemelj(x).0
    }

    pub fn hilbert(&self, x: f64) -> f64 {
        self.plemelj(x).1
    }
}
