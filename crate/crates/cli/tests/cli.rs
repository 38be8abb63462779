use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rie_core::estimators::{general_rie, mse};
use rie_core::matrix_io::{read_matrix, write_matrix, MatrixFormat};
use rie_core::models::{gaussian_iid, rank_one_sum_noise};
use rie_core::NoiseFamily;

fn rie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rie"))
        .args(args)
        .env_remove("RIE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn save(path: &Path, m: &Mat<f64>) {
    write_matrix(path, m.as_ref(), MatrixFormat::from_path(path)).unwrap();
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn zero_matrix_denoises_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    let out = dir.path().join("s.csv");
    save(&input, &Mat::zeros(4, 6));
    for noise in ["gaussian", "uniform", "rank1sum"] {
        let (n_arg, input_path) = if noise == "uniform" {
            let sq = dir.path().join("sq.csv");
            save(&sq, &Mat::zeros(5, 5));
            (noise, sq)
        } else {
            (noise, input.clone())
        };
        let o = rie(&["denoise", "--input", p(&input_path), "--noise", n_arg, "--snr", "1", "--output", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let est = read_matrix(&out).unwrap();
        assert_eq!(est.norm_max(), 0.0);
        let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(json["xis"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
        assert!(json["flags"].as_array().unwrap().is_empty());
    }
}

#[test]
fn denoise_reproduces_library_mse() {
    let dir = tempfile::tempdir().unwrap();
    let (n, m, lambda) = (30, 60, 2.0f64);
    let s = gaussian_iid(n, m, &mut rng(1)).unwrap();
    let z = rank_one_sum_noise(n, m, n, &mut rng(2)).unwrap();
    save(&dir.path().join("s.bin"), &s);
    save(&dir.path().join("z.bin"), &z);
    // rebuild Y from the saved pair, as a user would
    let s_back = read_matrix(&dir.path().join("s.bin")).unwrap();
    let z_back = read_matrix(&dir.path().join("z.bin")).unwrap();
    let y = Mat::from_fn(n, m, |i, j| lambda.sqrt() * s_back[(i, j)] + z_back[(i, j)]);
    let input = dir.path().join("y.bin");
    save(&input, &y);
    let out = dir.path().join("est.bin");
    let o = rie(&[
        "denoise", "--input", p(&input), "--noise", "rank1sum", "--c", "1", "--snr", "2", "--eps", "0.5", "--output",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cli_est = read_matrix(&out).unwrap();
    let fam = NoiseFamily::rank_one_sum(1.0, 0.5).unwrap();
    let lib = general_rie(y.as_ref(), &fam, lambda, (n as f64).powf(-0.5)).unwrap();
    let a = mse(s.as_ref(), cli_est.as_ref()).unwrap();
    let b = mse(s.as_ref(), lib.estimate.as_ref()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gaussian_flag_matches_gaussian_family() {
    let dir = tempfile::tempdir().unwrap();
    let (n, m, lambda) = (40, 50, 1.5f64);
    let s = gaussian_iid(n, m, &mut rng(3)).unwrap();
    let z = gaussian_iid(n, m, &mut rng(4)).unwrap();
    // tall input exercises the transpose path
    let y = Mat::from_fn(m, n, |i, j| lambda.sqrt() * s[(j, i)] + z[(j, i)]);
    let input = dir.path().join("y.csv");
    let out = dir.path().join("est.csv");
    save(&input, &y);
    let o = rie(&["denoise", "--input", p(&input), "--noise", "gaussian", "--snr", "1.5", "--output", p(&out)]);
    assert_eq!(code(&o), 0);
    let cli_est = read_matrix(&out).unwrap();
    let fam = NoiseFamily::gaussian(n as f64 / m as f64).unwrap();
    let lib = general_rie(y.as_ref(), &fam, lambda, (n as f64).powf(-0.5)).unwrap();
    assert_eq!((cli_est.nrows(), cli_est.ncols()), (m, n));
    assert!((&cli_est - &lib.estimate).norm_max() <= 1e-6);
}

#[test]
fn denoise_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let missing = dir.path().join("missing.csv");
    let o = rie(&["denoise", "--input", p(&missing), "--noise", "gaussian", "--snr", "1", "--output", p(&out)]);
    assert_eq!(code(&o), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "2,2\n1,2\n").unwrap();
    let o = rie(&["denoise", "--input", p(&bad), "--noise", "gaussian", "--snr", "1", "--output", p(&out)]);
    assert_eq!(code(&o), 3);

    let good = dir.path().join("good.csv");
    save(&good, &gaussian_iid(3, 4, &mut rng(5)).unwrap());
    let o = rie(&["denoise", "--input", p(&good), "--noise", "gaussian", "--snr", "-1", "--output", p(&out)]);
    assert_eq!(code(&o), 3);
    let o = rie(&["denoise", "--input", p(&good), "--noise", "cauchy", "--snr", "1", "--output", p(&out)]);
    assert_eq!(code(&o), 3);
    // uniform-spectrum noise is only defined for square matrices
    let o = rie(&["denoise", "--input", p(&good), "--noise", "uniform", "--snr", "1", "--output", p(&out)]);
    assert_eq!(code(&o), 3);

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "1,2\n1,NaN\n").unwrap();
    let o = rie(&["denoise", "--input", p(&nan), "--noise", "gaussian", "--snr", "1", "--output", p(&out)]);
    assert_eq!(code(&o), 3);

    let unwritable = dir.path().join("no/such/dir/o.csv");
    let o = rie(&["denoise", "--input", p(&good), "--noise", "gaussian", "--snr", "1", "--output", p(&unwritable)]);
    assert_eq!(code(&o), 2);
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let o = rie(&["preset", "fig1b"]);
    assert_eq!(code(&o), 0);
    let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    v["dims"] = serde_json::json!({"n_rows": 24, "n_cols": 48});
    for e in ["signal", "noise"] {
        v[e]["n_rows"] = 24.into();
        v[e]["n_cols"] = 48.into();
    }
    v["n_trials"] = 3.into();
    v["lambda_grid"] = serde_json::json!([0.5, 2.0]);
    let path = dir.join("cfg.json");
    fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn bench_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = rie(&["bench", "--config", p(&cfg), "--out", p(&a), "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_rie"))
        .args(["bench", "--config", p(&cfg), "--out", p(&b), "--threads", "1"])
        .env("RIE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("experiment,lambda,N,M,estimator,mean_mse,ci95,rel_err_pct,n_trials,seed,wall_ms\n"));
    // 2 noise panels x 2 lambdas x (oracle, rie)
    assert_eq!(text.lines().count(), 1 + 8);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["threads"], 3);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);

    let c = dir.path().join("c.csv");
    let o = rie(&["bench", "--config", p(&cfg), "--out", p(&c), "--seed", "7"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn bench_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["n_trials"] = 0.into();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, v.to_string()).unwrap();
    let out = dir.path().join("o.csv");
    let o = rie(&["bench", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_trials"));
    let o = rie(&["bench", "--config", p(&dir.path().join("none.json")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    fs::write(&bad, "{").unwrap();
    let o = rie(&["bench", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    let o = rie(&["preset", "fig99"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn theorem2_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t2.csv");
    let o = rie(&["check-theorem2", "--n-grid", "20,40,80", "--trials", "4", "--out", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    // 2 aspect ratios x 3 sizes x (abs, rel)
    assert_eq!(text.lines().count(), 1 + 12);
    let svg = dir.path().join("t2.svg");
    let o = rie(&["plot", "--input", p(&csv), "--out", p(&svg)]);
    assert_eq!(code(&o), 0);
    let first = fs::read(&svg).unwrap();
    let body = String::from_utf8(first.clone()).unwrap();
    assert!(body.contains("abs_error[alpha0=1]"));
    assert!(body.contains("abs_error[alpha0=0.5]"));
    assert!(body.contains("0.4 N^{-1/2}"));
    let o = rie(&["plot", "--input", p(&csv), "--out", p(&svg)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&svg).unwrap(), first);
}

#[test]
fn plot_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let svg = dir.path().join("r.svg");
    fs::write(&csv, "experiment,lambda,N,M,estimator,mean_mse,ci95,rel_err_pct,n_trials,seed,wall_ms\n").unwrap();
    let o = rie(&["plot", "--input", p(&csv), "--out", p(&svg)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no data rows"));
    fs::write(&csv, "a,b\n1,2\n").unwrap();
    let o = rie(&["plot", "--input", p(&csv), "--out", p(&svg)]);
    assert_eq!(code(&o), 3);
    let o = rie(&["plot", "--input", p(&dir.path().join("none.csv")), "--out", p(&svg)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn overlap_command_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ov.csv");
    let o = rie(&["overlap", "--alpha", "0.25", "--n", "20", "--trials", "6", "--bins", "8", "--out", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("gamma,overlap,stderr,n_trials\n"));
    assert!(text.lines().count() > 2);
    assert!(dir.path().join("ov.csv.theory.csv").exists());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["sup_deviation"].as_f64().unwrap().is_finite());
    let o = rie(&["overlap", "--alpha", "1.5", "--n", "20", "--trials", "6", "--out", p(&csv)]);
    assert_eq!(code(&o), 3);
    let o = rie(&["overlap", "--n", "20", "--trials", "1", "--out", p(&csv)]);
    assert_eq!(code(&o), 3);
}
