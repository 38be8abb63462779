//! Seeded random-matrix ensembles.
//!
//! Every generator takes an explicit RNG. The harness derives one
//! independent ChaCha8 stream per `(trial, role)` pair from a master seed
//! (see [`stream_rng`]), so results do not depend on evaluation order.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RieError};

/// Stream roles; folded into the ChaCha stream id next to the trial index.
pub mod role {
    pub const SIGNAL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const FIXED_SIGNAL: u64 = 3;
    pub const AUX: u64 = 4;
}

/// ChaCha8 keyed by `master`, on stream `(trial << 8) | role`.
pub fn stream_rng(master: u64, trial: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial << 8) | (role & 0xff));
    rng
}

/// Row-major standard normal matrix.
fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Mat<f64> {
    let draws: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut *rng);
            scale * x
        })
        .collect::<Vec<f64>>();
    Mat::from_fn(rows, cols, |i, j| draws[i * cols + j])
}

/// Thin QR of a Gaussian `n × k` matrix with the signs of `diag(R)` folded
/// into `Q`, which makes `Q` uniformly distributed on the Stiefel manifold.
pub fn haar_stiefel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Mat<f64>> {
    if k == 0 || k > n {
        return Err(RieError::Dimension(format!("Stiefel frame {n}x{k} needs 1 <= k <= n")));
    }
    let g = gaussian_matrix(n, k, 1.0, rng);
    let qr = g.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let signs: Vec<f64> = (0..k).map(|i| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect();
    Ok(Mat::from_fn(n, k, |i, j| q[(i, j)] * signs[j]))
}

/// Haar-distributed `n × n` orthogonal matrix.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Mat<f64>> {
    if n == 0 {
        return Err(RieError::Dimension("haar_orthogonal needs n >= 1".into()));
    }
    haar_stiefel(n, n, rng)
}

/// i.i.d. `N(0, 1/N)` entries.
pub fn gaussian_iid<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Mat<f64>> {
    check_dims(n, m)?;
    Ok(gaussian_matrix(n, m, 1.0 / (n as f64).sqrt(), rng))
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(RieError::Dimension(format!("empty {n}x{m} ensemble")));
    }
    Ok(())
}

/// `U · [diag(σ) | 0] · Vᵀ` with Haar `U` and a Haar `M × N` frame for `V`
/// (the missing `M − N` columns never contribute).
pub fn with_singular_values<R: Rng + ?Sized>(sigma: &[f64], m: usize, rng: &mut R) -> Result<Mat<f64>> {
    let n = sigma.len();
    check_dims(n, m)?;
    if m < n {
        return Err(RieError::Dimension(format!("need n <= m, got {n}x{m}")));
    }
    let u = haar_orthogonal(n, rng)?;
    let v = haar_stiefel(m, n, rng)?;
    let us = Mat::from_fn(n, n, |i, j| u[(i, j)] * sigma[j]);
    Ok(&us * v.transpose())
}

/// Singular values i.i.d. uniform on `[0, 2]`, Haar singular vectors.
pub fn uniform_spectrum_noise<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Mat<f64>> {
    check_dims(n, m)?;
    let dist = Uniform::new(0.0, 2.0).expect("valid interval");
    let r: Vec<f64> = (0..n).map(|_| dist.sample(&mut *rng)).collect();
    with_singular_values(&r, m, rng)
}

fn unit_columns<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Mat<f64> {
    let mut a = gaussian_matrix(dim, count, 1.0, rng);
    for j in 0..count {
        let norm = a.col(j).norm_l2();
        for i in 0..dim {
            a[(i, j)] /= norm;
        }
    }
    a
}

/// `Σ_{k=1}^{L} a_k b_kᵀ` with independent uniform unit vectors.
pub fn rank_one_sum_noise<R: Rng + ?Sized>(n: usize, m: usize, l: usize, rng: &mut R) -> Result<Mat<f64>> {
    check_dims(n, m)?;
    if l == 0 {
        return Err(RieError::Domain("rank-one sum needs L >= 1".into()));
    }
    let a = unit_columns(n, l, rng);
    let b = unit_columns(m, l, rng);
    Ok(&a * b.transpose())
}

/// Number of rank-one terms for ratio `c`: `round(cN)`, at least one.
pub fn rank_one_count(c: f64, n: usize) -> usize {
    ((c * n as f64).round() as usize).max(1)
}

/// Singular values i.i.d. in `{0, 1}` with `P(0) = p`, Haar singular vectors.
pub fn bernoulli_spectrum_signal<R: Rng + ?Sized>(n: usize, m: usize, p: f64, rng: &mut R) -> Result<Mat<f64>> {
    check_prob(p)?;
    let sigma: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 }).collect();
    with_singular_values(&sigma, m, rng)
}

/// Entries `±1/√N` with probability `(1−p)/2` each, `0` with probability `p`.
pub fn bernoulli_rademacher_signal<R: Rng + ?Sized>(n: usize, m: usize, p: f64, rng: &mut R) -> Result<Mat<f64>> {
    check_dims(n, m)?;
    check_prob(p)?;
    let s = 1.0 / (n as f64).sqrt();
    let draws: Vec<f64> = (0..n * m)
        .map(|_| {
            let u: f64 = rng.random();
            if u < p {
                0.0
            } else if u < p + 0.5 * (1.0 - p) {
                s
            } else {
                -s
            }
        })
        .collect();
    Ok(Mat::from_fn(n, m, |i, j| draws[i * m + j]))
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RieError::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnsembleKind {
    GaussianIid,
    UniformSpectrumNoise,
    RankOneSum { c: f64 },
    BernoulliSpectrumSignal { p: f64 },
    BernoulliRademacherSignal { p: f64 },
}

impl EnsembleKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::GaussianIid => "gaussian_iid",
            EnsembleKind::UniformSpectrumNoise => "uniform_spectrum_noise",
            EnsembleKind::RankOneSum { .. } => "rank_one_sum",
            EnsembleKind::BernoulliSpectrumSignal { .. } => "bernoulli_spectrum_signal",
            EnsembleKind::BernoulliRademacherSignal { .. } => "bernoulli_rademacher_signal",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnsembleKind::RankOneSum { c } if !(c > 0.0 && c.is_finite()) => {
                Err(RieError::Domain(format!("c must be > 0, got {c}")))
            }
            EnsembleKind::BernoulliSpectrumSignal { p } | EnsembleKind::BernoulliRademacherSignal { p } => check_prob(p),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, m: usize, rng: &mut R) -> Result<Mat<f64>> {
        self.validate()?;
        match *self {
            EnsembleKind::GaussianIid => gaussian_iid(n, m, rng),
            EnsembleKind::UniformSpectrumNoise => uniform_spectrum_noise(n, m, rng),
            EnsembleKind::RankOneSum { c } => rank_one_sum_noise(n, m, rank_one_count(c, n), rng),
            EnsembleKind::BernoulliSpectrumSignal { p } => bernoulli_spectrum_signal(n, m, p, rng),
            EnsembleKind::BernoulliRademacherSignal { p } => bernoulli_rademacher_signal(n, m, p, rng),
        }
    }

    /// `(1/N) E‖X‖²_F`, the second moment of the singular-value law.
    pub fn second_moment(&self, n: usize, m: usize) -> f64 {
        match *self {
            EnsembleKind::GaussianIid => m as f64 / n as f64,
            EnsembleKind::UniformSpectrumNoise => 4.0 / 3.0,
            EnsembleKind::RankOneSum { c } => rank_one_count(c, n) as f64 / n as f64,
            EnsembleKind::BernoulliSpectrumSignal { p } => 1.0 - p,
            EnsembleKind::BernoulliRademacherSignal { p } => (1.0 - p) * m as f64 / n as f64,
        }
    }
}

/// A named ensemble at fixed dimensions and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n_rows: usize,
    pub n_cols: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.n_rows, self.n_cols)?;
        self.kind.validate()
    }

    /// Pure function of the spec.
    pub fn sample(&self) -> Result<Mat<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.kind.sample(self.n_rows, self.n_cols, &mut rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn max_abs_dev_from_identity(q: &Mat<f64>) -> f64 {
        let g = q.transpose() * q;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn haar_is_orthogonal() {
        let q = haar_orthogonal(12, &mut rng(1)).unwrap();
        assert!(max_abs_dev_from_identity(&q) < 1e-10);
        for j in 0..12 {
            assert!((q.col(j).norm_l2() - 1.0).abs() < 1e-10);
        }
        let f = haar_stiefel(9, 4, &mut rng(2)).unwrap();
        assert!(max_abs_dev_from_identity(&f) < 1e-10);
    }

    #[test]
    fn haar_n1_is_a_fair_sign() {
        let mut plus = 0;
        for s in 0..400 {
            let q = haar_orthogonal(1, &mut rng(s)).unwrap();
            assert_eq!(q[(0, 0)].abs(), 1.0);
            plus += (q[(0, 0)] > 0.0) as i32;
        }
        assert!((150..=250).contains(&plus), "{plus}");
    }

    #[test]
    fn haar_entry_second_moment() {
        let mut r = rng(7);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|_| haar_orthogonal(10, &mut r).unwrap()[(0, 0)].powi(2))
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 0.1).abs() < 0.01, "{mean}");
    }

    #[test]
    fn stream_rng_is_order_free() {
        let a: u64 = stream_rng(5, 3, role::NOISE).random();
        let _ = stream_rng(5, 2, role::NOISE).random::<u64>();
        let b: u64 = stream_rng(5, 3, role::NOISE).random();
        assert_eq!(a, b);
        let c: u64 = stream_rng(5, 3, role::SIGNAL).random();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_entry_variance() {
        let (n, m) = (50, 80);
        let g = gaussian_iid(n, m, &mut rng(3)).unwrap();
        let ms = g.squared_norm_l2() / (n * m) as f64;
        // variance of the mean of chi-square(1)/N terms: 2/(N² · NM)
        let sd = (2.0 / (n * m) as f64).sqrt() / n as f64;
        assert!((ms - 1.0 / n as f64).abs() < 4.0 * sd, "{ms}");
        assert_eq!(g, gaussian_iid(n, m, &mut rng(3)).unwrap());
    }

    #[test]
    fn rank_one_term_has_unit_norm() {
        let z = rank_one_sum_noise(6, 9, 1, &mut rng(4)).unwrap();
        assert!((z.norm_l2() - 1.0).abs() < 1e-12);
        let sv = z.singular_values().unwrap();
        assert!(sv[1] < 1e-12);
        assert!(rank_one_sum_noise(6, 9, 0, &mut rng(4)).is_err());
    }

    #[test]
    fn bernoulli_signals_edge_probabilities() {
        let s = bernoulli_spectrum_signal(5, 7, 1.0, &mut rng(5)).unwrap();
        assert_eq!(s.norm_l2(), 0.0);
        let s = bernoulli_spectrum_signal(5, 7, 0.0, &mut rng(5)).unwrap();
        assert!((s.squared_norm_l2() - 5.0).abs() < 1e-10);
        let s = bernoulli_rademacher_signal(5, 7, 1.0, &mut rng(5)).unwrap();
        assert_eq!(s.norm_l2(), 0.0);
        assert!(bernoulli_rademacher_signal(5, 7, 1.5, &mut rng(5)).is_err());
    }

    #[test]
    fn ensemble_spec_json_round_trip() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::RankOneSum { c: 0.5 },
            n_rows: 4,
            n_cols: 6,
            seed: 99,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: EnsembleSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.sample().unwrap(), spec.sample().unwrap());
    }
}
