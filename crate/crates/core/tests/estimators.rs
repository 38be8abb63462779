use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rie_core::estimators::{
    exact_xi_prop1, gaussian_rie, gaussian_rie_eta, general_rie, mse, oracle_rie, DenoisingInstance,
};
use rie_core::models::{gaussian_iid, haar_orthogonal, rank_one_count, rank_one_sum_noise, uniform_spectrum_noise};
use rie_core::spectra::svd_decompose;
use rie_core::NoiseFamily;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn observe(s: &Mat<f64>, z: &Mat<f64>, lambda: f64) -> Mat<f64> {
    s * lambda.sqrt() + z
}

fn rie_mse(s: &Mat<f64>, estimate: &Mat<f64>) -> f64 {
    mse(s.as_ref(), estimate.as_ref()).unwrap()
}

#[test]
fn mse_arithmetic() {
    let s = Mat::<f64>::zeros(4, 4);
    assert_eq!(mse(s.as_ref(), s.as_ref()).unwrap(), 0.0);
    let mut e = Mat::<f64>::zeros(4, 4);
    e[(2, 1)] = 2.0;
    assert!((mse(s.as_ref(), e.as_ref()).unwrap() - 1.0).abs() < 1e-15);
    assert!(mse(s.as_ref(), Mat::<f64>::zeros(4, 5).as_ref()).is_err());
}

#[test]
fn zero_signal_gives_zero_oracle() {
    let z = gaussian_iid(20, 30, &mut rng(1)).unwrap();
    let inst = DenoisingInstance::new(Mat::zeros(20, 30), z, 1.0).unwrap();
    let r = oracle_rie(&inst).unwrap();
    assert!(r.xis.iter().all(|x| x.abs() < 1e-12));
    assert_eq!(rie_mse(&Mat::zeros(20, 30), &r.estimate), 0.0);
}

#[test]
fn noiseless_oracle_recovers_signal() {
    let s = gaussian_iid(15, 25, &mut rng(2)).unwrap();
    let inst = DenoisingInstance::new(s.clone(), Mat::zeros(15, 25), 1.0).unwrap();
    let r = oracle_rie(&inst).unwrap();
    assert!(rie_mse(&s, &r.estimate) < 1e-20);
}

#[test]
fn uniform_noise_oracle_mse() {
    let n = 1000;
    let mut r = rng(3);
    let s = gaussian_iid(n, n, &mut r).unwrap();
    let z = uniform_spectrum_noise(n, n, &mut r).unwrap();
    let inst = DenoisingInstance::new(s.clone(), z, 1.0).unwrap();
    let v = rie_mse(&s, &oracle_rie(&inst).unwrap().estimate);
    assert!((v - 0.5686).abs() < 0.02, "{v}");
}

#[test]
fn rank_one_sum_rie_is_close_to_oracle() {
    let (n, m, lambda) = (1000, 2000, 1.0);
    let mut r = rng(4);
    let s = gaussian_iid(n, m, &mut r).unwrap();
    let z = rank_one_sum_noise(n, m, rank_one_count(1.0, n), &mut r).unwrap();
    let inst = DenoisingInstance::new(s.clone(), z, lambda).unwrap();
    let oracle = rie_mse(&s, &oracle_rie(&inst).unwrap().estimate);
    let family = NoiseFamily::rank_one_sum(1.0, 0.5).unwrap();
    let est = general_rie(inst.observation(), &family, lambda, (n as f64).powf(-0.5)).unwrap();
    let rel = (rie_mse(&s, &est.estimate) - oracle) / oracle;
    assert!((0.0..=0.0025).contains(&rel), "relative gap {rel}");
}

#[test]
fn mse_falls_with_snr() {
    let n = 400;
    let mut r = rng(5);
    let s = gaussian_iid(n, n, &mut r).unwrap();
    let z = uniform_spectrum_noise(n, n, &mut r).unwrap();
    let family = NoiseFamily::uniform_spectrum(1.0).unwrap();
    let eta = (n as f64).powf(-0.5);
    let at = |lambda: f64| {
        let est = general_rie(observe(&s, &z, lambda).as_ref(), &family, lambda, eta).unwrap();
        rie_mse(&s, &est.estimate)
    };
    let (m1, m5) = (at(1.0), at(5.0));
    assert!(m5 < m1, "{m5} >= {m1}");
    // The unshrunk Y/√λ already achieves λ·MSE = ‖Z‖²/N ≈ 4/3.
    assert!(5.0 * m5 < 4.0 / 3.0, "{m5}");
}

#[test]
fn gaussian_rie_reaches_the_mmse() {
    for (n, m, lambda, want, tol) in [(1000, 1000, 1.0, 0.5, 0.03), (1000, 2000, 2.0, 2.0 / 3.0, 0.04)] {
        let mut r = rng(6);
        let s = gaussian_iid(n, m, &mut r).unwrap();
        let z = gaussian_iid(n, m, &mut r).unwrap();
        let est = gaussian_rie(observe(&s, &z, lambda).as_ref(), lambda, 0.5).unwrap();
        let v = rie_mse(&s, &est.estimate);
        assert!((v - want).abs() < tol, "{n}x{m}, lambda {lambda}: {v}");
    }
}

#[test]
fn general_rie_reduces_to_gaussian_form() {
    let mut r = rng(7);
    let y = gaussian_iid(40, 90, &mut r).unwrap();
    let eta = 0.07;
    let a = gaussian_rie_eta(y.as_ref(), 1.5, eta).unwrap();
    let b = general_rie(y.as_ref(), &NoiseFamily::gaussian(40.0 / 90.0).unwrap(), 1.5, eta).unwrap();
    for (x, w) in a.xis.iter().zip(&b.xis) {
        assert!((x - w).abs() < 1e-9, "{x} vs {w}");
    }
}

#[test]
fn oracle_is_class_optimal() {
    for seed in 0..6 {
        let mut r = rng(100 + seed);
        let (n, m) = (50, 50 + 10 * seed as usize);
        let s = gaussian_iid(n, m, &mut r).unwrap();
        let z = gaussian_iid(n, m, &mut r).unwrap();
        let lambda = 0.5 + seed as f64;
        let inst = DenoisingInstance::new(s.clone(), z, lambda).unwrap();
        let oracle = rie_mse(&s, &oracle_rie(&inst).unwrap().estimate);
        let g = gaussian_rie(inst.observation(), lambda, 0.5).unwrap();
        let family = NoiseFamily::gaussian(n as f64 / m as f64).unwrap();
        let h = general_rie(inst.observation(), &family, lambda, 0.1).unwrap();
        assert!(oracle <= rie_mse(&s, &g.estimate) + 1e-12);
        assert!(oracle <= rie_mse(&s, &h.estimate) + 1e-12);
    }
}

#[test]
fn estimate_reassembles_from_singular_triplets() {
    let y = gaussian_iid(12, 20, &mut rng(8)).unwrap();
    let est = gaussian_rie(y.as_ref(), 1.0, 0.5).unwrap();
    let svd = svd_decompose(y.as_ref()).unwrap();
    let back = svd.assemble(&est.xis);
    assert!((&back - &est.estimate).norm_max() < 1e-10);
}

#[test]
fn estimators_are_orthogonally_equivariant() {
    let family = NoiseFamily::gaussian(30.0 / 45.0).unwrap();
    for seed in 0..3 {
        let mut r = rng(200 + seed);
        let y = gaussian_iid(30, 45, &mut r).unwrap();
        let u = haar_orthogonal(30, &mut r).unwrap();
        let v = haar_orthogonal(45, &mut r).unwrap();
        let rotated = &u * &y * v.transpose();
        let a = gaussian_rie(rotated.as_ref(), 1.0, 0.5).unwrap().estimate;
        let b = &u * gaussian_rie(y.as_ref(), 1.0, 0.5).unwrap().estimate * v.transpose();
        assert!((&a - &b).norm_max() < 1e-8);
        let a = general_rie(rotated.as_ref(), &family, 1.0, 0.2).unwrap().estimate;
        let b = &u * general_rie(y.as_ref(), &family, 1.0, 0.2).unwrap().estimate * v.transpose();
        assert!((&a - &b).norm_max() < 1e-8);
    }
}

fn to_na(m: &Mat<f64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

#[test]
fn window_ratio_matches_resolvent_quadrature() {
    let (n, m, lambda) = (8, 12, 1.0);
    let mut r = rng(9);
    let s = Mat::from_fn(n, m, |_, _| r.random_range(-0.5..0.5));
    let z = Mat::from_fn(n, m, |_, _| r.random_range(-0.5..0.5));
    let inst = DenoisingInstance::new(s.clone(), z, lambda).unwrap();
    let gam = inst.svd().unwrap().singular_values().to_vec();
    let j = 1;
    let eps = 0.5 * (gam[0] - gam[1]).min(gam[1] - gam[2]);
    let eta = 1e-2;
    let got = exact_xi_prop1(&inst, j, eps, &[eta]).unwrap().xi;

    // L(w) = (1/N) Tr (w²I − YYᵀ)⁻¹ Y Sᵀ and wG(w) = (w/N) Tr (w²I − YYᵀ)⁻¹, by dense inversion.
    let y = to_na(&inst.observation().to_owned());
    let yyt = &y * y.transpose();
    let yst = &y * to_na(&s).transpose();
    let k = 4000;
    let h = 2.0 * eps / k as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=k {
        let w = Complex64::new(gam[j] - eps + h * i as f64, eta);
        let res = (DMatrix::identity(n, n) * (w * w) - &yyt).try_inverse().unwrap();
        let l = (&res * &yst).trace() / n as f64;
        let wg = w * res.trace() / n as f64;
        let wt = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        num += wt * l.im;
        den += wt * wg.im;
    }
    let want = num / den;
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");

    let oracle = oracle_rie(&inst).unwrap().xis[j];
    let sharp = exact_xi_prop1(&inst, j, eps, &[1e-4, 1e-6]).unwrap();
    assert!((sharp.xi - oracle).abs() < 1e-4, "{} vs {oracle}", sharp.xi);
}
