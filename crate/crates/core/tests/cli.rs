use std::fs;
use std::path::Path;
use std::process::Command;

use pnpi::cli::{self, RestoreReport, EXIT_CAPABILITY, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, EXIT_VIOLATED};
use pnpi::fidelity::bicubic_upsample;
use pnpi::io::{load_image, save_image};
use pnpi::phantoms;
use pnpi::solvers::TRACE_CSV_HEADER;

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("pnpi").chain(args.iter().copied()))
}

fn report(dir: &Path) -> RestoreReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// Data rows of a trace CSV, skipping the metadata comment and header.
fn trace_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect()).collect()
}

#[test]
fn deblur_with_gauss_denoiser_converges_and_improves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let code = run(&[
        "restore", "--task", "deblur", "--phantom", "gradient", "--size", "64", "--denoiser", "gauss:3x3",
        "--solver", "pnpi-hqs", "--iters", "300", "--mu", "0.3", "--beta", "0.04", "--tol", "0",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let r = report(&out);
    assert_eq!(r.iterations, 300);
    assert!(r.final_fp_residual.unwrap() <= 1e-3, "{:?}", r.final_fp_residual);
    assert!(r.psnr.unwrap() > r.psnr_observation.unwrap());
    assert_eq!(trace_rows(&out.join("trace.csv")).len(), 300);
    // gauss is firmly non-expansive and the deblur gradient is cocoercive
    assert_eq!(r.hypotheses.k, Some(0.0));
    for f in ["restored.pfm.txt", "observation.pfm.txt", "certificate.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn zero_iterations_return_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    for (task, extra) in [("deblur", vec![]), ("poisson", vec!["--peak", "20"]), ("sisr", vec!["--scale", "2"])] {
        let out = dir.path().join(task);
        let mut args = vec![
            "restore", "--task", task, "--phantom", "disk", "--size", "16", "--iters", "0", "--no-certify",
            "--out-dir", out.to_str().unwrap(),
        ];
        args.extend(extra);
        assert_eq!(run(&args), EXIT_OK, "{task}");
        let obs = load_image(&out.join("observation.pfm.txt")).unwrap();
        let restored = load_image(&out.join("restored.pfm.txt")).unwrap();
        let expected = if task == "sisr" { bicubic_upsample(&obs, 2) } else { obs };
        assert_eq!(restored.shape(), expected.shape(), "{task}");
        assert!(restored.max_abs_diff(&expected) < 1e-12, "{task}");
    }
}

#[test]
fn poisson_observation_has_the_right_mean() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("half.pfm.txt");
    save_image(&pnpi::image::Image::constant(32, 32, 0.5), &clean).unwrap();
    let out = dir.path().join("p");
    let code = run(&[
        "restore", "--task", "poisson", "--peak", "20", "--clean", clean.to_str().unwrap(), "--iters", "0",
        "--no-certify", "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let obs = load_image(&out.join("observation.pfm.txt")).unwrap();
    let sd = (0.5 / 20.0 / obs.len() as f64).sqrt();
    assert!((obs.mean() - 0.5).abs() <= 3.0 * sd, "mean {}", obs.mean());
}

#[test]
fn reruns_are_bit_identical_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let files = ["restored.pgm", "observation.pgm", "trace.csv", "report.json", "certificate.json"];
    let go = || {
        let code = run(&[
            "restore", "--phantom", "checkerboard", "--size", "16", "--iters", "20", "--seed", "5",
            "--format", "pgm", "--out-dir", out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        files.map(|f| fs::read(out.join(f)).unwrap())
    };
    let (first, second) = (go(), go());
    for ((f, x), y) in files.iter().zip(&first).zip(&second) {
        assert_eq!(x, y, "{f}");
        let text = String::from_utf8_lossy(x);
        assert!(text.contains("config_hash") && text.contains("seed"), "{f} lacks provenance");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("o");
    fs::write(
        &cfg,
        format!(
            r#"{{"phantom": "disk", "phantom_size": 16, "denoiser": "gauss:3x3", "solver": {{"max_iters": 50}}, "out_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    assert_eq!(run(&["restore", "--config", cfg.to_str().unwrap(), "--iters", "7", "--no-certify"]), EXIT_OK);
    let r = report(&out);
    assert_eq!(r.iterations, 7);
    assert_eq!(r.denoiser, "gauss:3x3");
    assert_eq!(r.config.phantom_size, 16);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"seed\": 1,\n  \"no_such_field\": true\n}\n").unwrap();
    assert_eq!(run(&["restore", "--config", cfg.to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run(&["restore", "--input", "/definitely/missing.pgm"]), EXIT_CONFIG);
    assert_eq!(run(&["restore", "--phantom", "disk", "--denoiser", "bogus"]), EXIT_CONFIG);
    assert_eq!(run(&["restore", "--phantom", "disk", "--a", "0.1", "--b", "0.5"]), EXIT_CONFIG);
    assert_eq!(run(&["certify", "--denoiser", "gauss:3x3", "--assumption", "spc:2"]), EXIT_CONFIG);
    assert_eq!(run(&["no-such-command"]), EXIT_CONFIG);
}

#[test]
fn divergence_exits_four_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    // Lipschitz constant 19 under plain Picard steps
    let code = run(&[
        "restore", "--phantom", "disk", "--size", "16", "--denoiser", "spc:rot90:k=0.9", "--solver", "pnp-gd",
        "--iters", "500", "--tol", "0", "--no-certify", "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DIVERGENCE);
    let r = report(&out);
    let n = r.diverged_at.unwrap();
    assert!(n > 0 && n < 500);
    assert_eq!(trace_rows(&out.join("trace.csv")).len(), n);
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("cert.json");
    let j = json.to_str().unwrap();
    assert_eq!(run(&["certify", "--denoiser", "gauss:3x3", "--assumption", "ne,pc", "--out", j]), EXIT_OK);

    assert_eq!(run(&["certify", "--denoiser", "antisym:c=1.0", "--assumption", "ne", "--out", j]), EXIT_VIOLATED);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let norm_j = v["maxima"]["norm_j"].as_f64().unwrap();
    assert!((norm_j - 2f64.sqrt()).abs() < 1e-6, "{norm_j}");
    assert!(v["meta"]["config_hash"].is_string());

    assert_eq!(run(&["certify", "--denoiser", "identity", "--assumption", "spc:0.5", "--out", j]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["maxima"]["norm_spc"][0][1].as_f64(), Some(1.0));
}

#[test]
fn certify_without_probes_exits_three() {
    // a 1024-pixel probe of a denoiser with no transpose product cannot be assembled densely
    assert_eq!(
        run(&["certify", "--denoiser", "blackbox:dct-shrink:t=0.05", "--size", "32", "--assumption", "pc"]),
        EXIT_CAPABILITY
    );
    // small probes fall back to dense assembly from finite differences
    assert_eq!(run(&["certify", "--denoiser", "blackbox:gauss:3x3", "--size", "8", "--assumption", "ne"]), EXIT_OK);
}

#[test]
fn verify_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    assert_eq!(
        run(&["verify", "--suite", "lemma4", "--trials", "1000", "--seed", "7", "--json", "--out", out.to_str().unwrap()]),
        EXIT_OK
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["reports"][0]["trials"], 1000);
    assert!(v["reports"][0]["max_violation"].as_f64().unwrap() <= 1e-8);
}

fn summary(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn bench_rotation_and_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let code = run(&[
        "bench", "--operators", "rotation,contraction", "--solvers", "picard,ishikawa", "--schedules", "0.3:0.15",
        "--iters", "200", "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(summary(&out).len(), 4);

    let rot_picard = trace_rows(&out.join("rotation_picard_a0.3_b0.15.csv"));
    let r0 = rot_picard[0][1];
    assert!(rot_picard.iter().all(|r| (r[1] - r0).abs() <= 1e-12 * r0));
    let rot_ish = trace_rows(&out.join("rotation_ishikawa_a0.3_b0.15.csv"));
    assert!(rot_ish.last().unwrap()[1] < 1e-6 * rot_ish[0][1]);

    // both converge on the contraction; the decaying Ishikawa steps lag behind Picard
    let c_picard = trace_rows(&out.join("contraction_picard_a0.3_b0.15.csv"));
    let c_ish = trace_rows(&out.join("contraction_ishikawa_a0.3_b0.15.csv"));
    assert!(c_picard[20][1] < 1e-3 * c_picard[0][1]);
    assert!(c_ish.last().unwrap()[1] < 1e-6 * c_ish[0][1]);
    assert!(c_ish[20][1] > c_picard[20][1]);
}

#[test]
fn bench_empty_grid_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    assert_eq!(run(&["bench", "--schedules", "", "--out-dir", out.to_str().unwrap()]), EXIT_OK);
    assert!(summary(&out).is_empty());
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), vec![cli::BENCH_SUMMARY_HEADER]);
}

#[test]
fn binary_maps_outcomes_to_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_pnpi");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["certify", "--denoiser", "gauss:3x3", "--assumption", "ne"]), Some(0));
    assert_eq!(status(&["certify", "--denoiser", "antisym:c=1.0", "--assumption", "ne"]), Some(2));
    assert_eq!(status(&["restore"]), Some(1));
    assert_eq!(status(&["--version"]), Some(0));
}

#[test]
fn phantoms_round_trip_through_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.pgm");
    let img = phantoms::checkerboard(8, 8, 2);
    save_image(&img, &p).unwrap();
    assert_eq!(load_image(&p).unwrap(), img);
}
