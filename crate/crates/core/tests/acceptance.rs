//! The ten acceptance criteria, each printed as one PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pnpi::denoisers::{make_dct_shrink_denoiser, make_linear_denoiser};
use pnpi::fidelity::{
    make_deblur_fidelity, make_poisson_fidelity, make_sisr_fidelity, poisson_prox_pixel, sample_poisson_observation,
    Fidelity,
};
use pnpi::image::{Image, Kernel};
use pnpi::linop::{conv_circular, LinearOperator, PairRotation};
use pnpi::metrics::psnr;
use pnpi::oracle::{
    dense_pc_norm, dense_svd_norm, verify_lemma, DenseMatrix, LemmaSuite, MatrixOperator, LEMMA_TOL,
};
use pnpi::phantoms::checkerboard;
use pnpi::solvers::{
    ishikawa_iterate, picard_iterate, pnpi_hqs, theorem2_holds, theorem3_holds, Schedule, SolverConfig, SolverKind,
};
use pnpi::spectral::{
    certify, constrain_linear_denoiser, dense_penalty, pc_penalty, penalty_objective, penalty_objective_grad,
    power_norm, spectral_mapping_check, Assumption, ConstraintConfig, ConstraintMode, DataTerm, ProbeConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// `U diag(s) Vᵀ` with Haar-random orthogonal factors.
fn with_singular_values(s: &[f64], rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = s.len();
    let u = DenseMatrix::random_orthogonal(n, rng);
    let v = DenseMatrix::random_orthogonal(n, rng);
    u.matmul(&DenseMatrix::diag(s)).matmul(&v.transpose())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_200, mut worst_10) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = rng.random_range(2..=256);
        // top singular value 1, all others at most 0.9: gap >= 0.1
        let mut s: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { rng.random_range(0.0..0.9) }).collect();
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        s.iter_mut().for_each(|v| *v *= scale);
        let m = with_singular_values(&s, &mut rng);
        let exact = dense_svd_norm(&m);
        let cfg = |n| ProbeConfig { power_iters: n, seed: rng_seed(d), ..ProbeConfig::default() };
        worst_200 = worst_200.max(rel(power_norm(&m, &cfg(200)), exact));
        worst_10 = worst_10.max(rel(power_norm(&m, &cfg(10)), exact));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_200 <= 1e-6 && worst_10 <= 1e-3 && secs < 10.0,
        format!("max rel err N=200 {worst_200:.2e} (<= 1e-6), N=10 {worst_10:.2e} (<= 1e-3), {secs:.2} s"),
    )
}

fn rng_seed(d: usize) -> u64 {
    d as u64 * 7919
}

fn random_symmetric(d: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> (DenseMatrix, Vec<f64>) {
    let eigs: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
    (DenseMatrix::random_symmetric_with_eigs(&eigs, rng), eigs)
}

fn linear_denoiser(m: &DenseMatrix, shape: (usize, usize), symmetric: bool) -> pnpi::denoisers::LinearDenoiser {
    let op = MatrixOperator::new(m.clone(), shape).unwrap().into_handle();
    make_linear_denoiser(op, "matrix", symmetric)
}

/// Ten outer iterations leave both pc routes visibly short of the dense values.
fn accurate_probe() -> ProbeConfig {
    ProbeConfig { power_iters: 300, inner_steps: 30, ..ProbeConfig::default() }
}

fn criterion_2() -> Outcome {
    let cfg = accurate_probe();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(2..=32);
        let (s, _) = random_symmetric(d, -1.0, 1.0, &mut rng);
        let d = linear_denoiser(&s, (1, s.rows()), true);
        let x = Image::zeros(1, s.rows());
        let got = pc_penalty(&d, &x, 0.0, &cfg).unwrap().value;
        worst = worst.max((got - dense_pc_norm(&s).unwrap()).abs());
    }
    let diag = DenseMatrix::diag(&[1.0, 0.5, -1.0]);
    let dd = linear_denoiser(&diag, (1, 3), true);
    let v = pc_penalty(&dd, &Image::zeros(1, 3), 0.0, &cfg).unwrap().value;
    outcome(
        worst <= 1e-3 && (v - 1.0).abs() <= 1e-3,
        format!("max |pc_penalty - oracle| {worst:.2e} (<= 1e-3); diag(1, 0.5, -1) -> {v:.6}"),
    )
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut tight = f64::NAN;
    for suite in LemmaSuite::ALL {
        let r = verify_lemma(suite, 1000, 3).unwrap();
        ok &= r.max_violation <= LEMMA_TOL;
        parts.push(format!("{} {:.1e}", suite.name(), r.max_violation));
        if let Some(c) = r.tight_composite_constant {
            tight = c;
        }
    }
    let third = 1.0 / 3.0;
    ok &= tight <= third + 1e-8 && tight > third - 1e-3;
    outcome(ok, format!("max violations [{}]; tight composite {tight:.9}", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    let mut violated = 0;
    for _ in 0..20 {
        // square sides so the matrix acts on the square probe images
        let side = rng.random_range(2..=5);
        let (s, eigs) = random_symmetric(side * side, -1.5, 1.5, &mut rng);
        worst = worst.max(spectral_mapping_check(&s).unwrap().max_eig_error);
        let d = linear_denoiser(&s, (side, side), true);
        let cfg = ProbeConfig { image_size: side, ..accurate_probe() };
        let cert = certify(&d, &cfg, &[Assumption::PseudoContractive]).unwrap();
        let via_pc = cert.verdicts.pseudo_contractive;
        let via_smax = cert.verdicts.pseudo_contractive_via_smax;
        if cert.route_disagreement || via_pc != via_smax || via_pc.is_none() {
            disagreements += 1;
        }
        if eigs.iter().any(|&l| l > 1.0) {
            violated += 1;
        }
    }
    outcome(
        worst <= 1e-8 && disagreements == 0,
        format!("max eig error {worst:.2e} (<= 1e-8); verdict disagreements {disagreements}/20 ({violated} non-pc cases)"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = Image::random_normal(8, 8, &mut rng);
    let rot = |u: &Image| PairRotation.apply(u);
    let picard = picard_iterate(rot, &u0, 1000, 0.0).unwrap();
    let r0 = picard.records[0].fp_residual;
    let drift = picard.records.iter().map(|r| (r.fp_residual - r0).abs()).fold(0.0, f64::max);
    let s = Schedule::new(0.3, 0.15).unwrap();
    let ish = ishikawa_iterate(rot, &u0, s, 10_000, 0.0).unwrap();
    let target = 1e-2 * u0.norm();
    // first iterate with ‖uⁿ‖ below target, by replaying the same recursion
    let mut u = u0.clone();
    let mut reached = None;
    for n in 0..10_000 {
        let y = u.lincomb(1.0 - s.beta(n), &rot(&u), s.beta(n));
        u = u.lincomb(1.0 - s.alpha(n), &rot(&y), s.alpha(n));
        if u.norm() < target {
            reached = Some(n + 1);
            break;
        }
    }
    let lib_final = ish.final_image.norm();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        drift <= 1e-12 && reached.is_some() && lib_final < target && secs < 5.0,
        format!(
            "picard residual drift {drift:.1e} over 1000 its; ishikawa below 1e-2 |u0| after {} its (library final {:.1e}); {secs:.2} s",
            reached.map_or("never".into(), |n| n.to_string()),
            lib_final / u0.norm()
        ),
    )
}

fn criterion_6() -> Outcome {
    let gammas = [0.0, 1e-6, 0.1, 0.5, 1.0, 2.0, 10.0, 1e6, f64::INFINITY];
    let t2 = gammas.iter().all(|&g| theorem2_holds(0.5, g));
    let t3_boundary = theorem3_holds(0.5, 1.0, 1.0);
    let t3_beyond = theorem3_holds(0.51, 1.0, 1.0);
    outcome(
        t2 && t3_boundary && !t3_beyond,
        format!("theorem 2 at k=1/2 for all gamma: {t2}; theorem 3 (1,1,1/2): {t3_boundary}; (1,1,0.51): {t3_beyond}"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let truth = checkerboard(64, 64, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Image::random_normal(64, 64, &mut rng).scale(12.75 / 255.0);
    let f = &conv_circular(&truth, &Kernel::binomial3()).unwrap() + &noise;
    let g = make_deblur_fidelity(f.clone(), Kernel::binomial3(), 0.04).unwrap();
    let d = make_dct_shrink_denoiser(0.05).unwrap();
    let cfg = SolverConfig {
        kind: SolverKind::PnpiHqs,
        schedule: Schedule::new(0.3, 0.15).unwrap(),
        max_iters: 300,
        tol: 0.0,
        beta: 1.0 / 25.0,
        beta_growth: 1.01,
        ..SolverConfig::default()
    };
    let trace = pnpi_hqs(&d, &g, &cfg, Some(&truth)).unwrap();
    let gain = psnr(&trace.final_image, &truth).unwrap() - psnr(&f, &truth).unwrap();
    let relres = trace.final_relative_fp_residual().unwrap();
    let absres = trace.final_fp_residual().unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        relres <= 1e-3 && gain >= 2.0 && secs < 30.0,
        format!(
            "relative fp residual {relres:.2e} (<= 1e-3; absolute {absres:.2e}), PSNR gain {gain:.2} dB (>= 2), {secs:.2} s"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_stat, mut worst_grid) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let x: f64 = rng.random_range(-1.0..2.0);
        let f: f64 = if i % 10 == 0 { 0.0 } else { rng.random_range(0.0..2.0) };
        let c: f64 = 10f64.powf(rng.random_range(-3.0..0.3));
        let u = poisson_prox_pixel(x, f, c);
        let stat = if u > 0.0 {
            (u - x + c * (1.0 - f / u)).abs()
        } else {
            // u = 0 is optimal iff f = 0 and x - c <= 0
            if f == 0.0 && x - c <= 0.0 { 0.0 } else { f64::INFINITY }
        };
        worst_stat = worst_stat.max(stat);

        let obj = |v: f64| {
            let data = if f == 0.0 { c * v } else if v <= 0.0 { f64::INFINITY } else { c * (v - f * v.ln()) };
            data + 0.5 * (v - x) * (v - x)
        };
        let hi = (x - c).max(0.0) + (c * f).sqrt() + 1e-3;
        let n = 100_000;
        let best = (0..=n)
            .map(|k| hi * k as f64 / n as f64)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        worst_grid = worst_grid.max((best - u).abs());
    }

    let mut stats_ok = true;
    let mut z_max = 0.0f64;
    for (i, peak) in [10.0, 15.0, 20.0].into_iter().enumerate() {
        let u = Image::constant(64, 64, 0.5);
        let y = sample_poisson_observation(&u, peak, 80 + i as u64).unwrap();
        let n = y.len() as f64;
        let mean = y.mean();
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let lam = 0.5 * peak;
        let mean_sd = (lam / n).sqrt() / peak;
        let var_sd = ((lam + 2.0 * lam * lam) / n).sqrt() / (peak * peak);
        let z_mean = (mean - 0.5).abs() / mean_sd;
        let z_var = (var - 0.5 / peak).abs() / var_sd;
        z_max = z_max.max(z_mean).max(z_var);
        stats_ok &= z_mean <= 3.0 && z_var <= 3.0;
    }
    outcome(
        worst_stat <= 1e-8 && worst_grid <= 1e-4 && stats_ok,
        format!(
            "stationarity {worst_stat:.1e} (<= 1e-8), grid-search gap {worst_grid:.1e} (<= 1e-4), sampling max z {z_max:.2} (<= 3)"
        ),
    )
}

fn criterion_9() -> Outcome {
    let w0 = DenseMatrix::identity(16).scale(1.5);
    let cfg = ConstraintConfig {
        mode: ConstraintMode::Pc,
        r: 1e-3,
        eps: 0.1,
        steps: 500,
        learning_rate: None,
        data: DataTerm::synthetic_denoising(16, 256, 0.1, 3),
    };
    let r = constrain_linear_denoiser(&w0, &cfg).unwrap();
    let d = linear_denoiser(&r.matrix, (4, 4), false);
    let probe = ProbeConfig { image_size: 4, ..ProbeConfig::default() };
    let mpim = pc_penalty(&d, &Image::zeros(4, 4), 0.0, &probe).unwrap().value;
    let cert = certify(&d, &probe, &[Assumption::PseudoContractive]).unwrap();
    let pc = cert.verdicts.pseudo_contractive == Some(true);
    let dense = dense_penalty(&r.matrix, ConstraintMode::Pc);
    outcome(
        (r.initial_penalty - 3.0).abs() < 1e-9 && r.steps_taken <= 500 && dense <= 1.0 && mpim <= 1.0 && pc,
        format!(
            "penalty {:.4} -> {dense:.4} (pc_penalty estimate {mpim:.4}) in {} steps; certificate pseudo_contractive: {pc}",
            r.initial_penalty, r.steps_taken
        ),
    )
}

/// `‖fd - g‖ / ‖g‖` with central differences of step `h` in every coordinate.
fn fd_rel_error(value: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], h: f64) -> f64 {
    let mut x = x.to_vec();
    let mut err = 0.0;
    for i in 0..x.len() {
        let xi = x[i];
        x[i] = xi + h;
        let p = value(&x);
        x[i] = xi - h;
        let m = value(&x);
        x[i] = xi;
        err += ((p - m) / (2.0 * h) - grad[i]).powi(2);
    }
    err.sqrt() / grad.iter().map(|g| g * g).sum::<f64>().sqrt()
}

fn fidelity_fd(g: &dyn Fidelity, u: &Image) -> f64 {
    let grad = g.grad(u).unwrap();
    fd_rel_error(|v| g.value(&u.with_data(v.to_vec())).unwrap(), u.data(), grad.data(), 1e-5)
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut errs = Vec::new();

    let u = Image::random_uniform(8, 8, &mut rng);
    let f = Image::random_uniform(8, 8, &mut rng);
    let deblur = make_deblur_fidelity(f.clone(), Kernel::gaussian(3, 0.8).unwrap(), 0.3).unwrap();
    errs.push(("deblur", fidelity_fd(&deblur, &u)));

    let flow = Image::random_uniform(4, 4, &mut rng);
    let sisr = make_sisr_fidelity(flow, Kernel::binomial3(), 2, 0.3).unwrap();
    errs.push(("sisr", fidelity_fd(&sisr, &u)));

    let upos = u.map(|v| 0.2 + v);
    let poisson = make_poisson_fidelity(f.map(|v| (v * 20.0).round() / 20.0), 0.3, 20.0).unwrap();
    errs.push(("poisson", fidelity_fd(&poisson, &upos)));

    let w0 = DenseMatrix::identity(8).scale(1.5);
    let w = w0.lincomb(1.0, &DenseMatrix::random_normal(8, 8, &mut rng), 0.2);
    for (name, mode, data) in [
        ("penalty pc/anchor", ConstraintMode::Pc, DataTerm::Anchor),
        ("penalty pc/denoising", ConstraintMode::Pc, DataTerm::synthetic_denoising(8, 32, 0.1, 11)),
        ("penalty spc/anchor", ConstraintMode::Spc(0.5), DataTerm::Anchor),
        ("penalty spc/denoising", ConstraintMode::Spc(0.5), DataTerm::synthetic_denoising(8, 32, 0.1, 12)),
    ] {
        let cfg = ConstraintConfig { mode, r: 0.7, eps: 0.1, steps: 1, learning_rate: None, data };
        let grad = penalty_objective_grad(&w, &w0, &cfg);
        let value = |v: &[f64]| penalty_objective(&DenseMatrix::new(8, 8, v.to_vec()).unwrap(), &w0, &cfg);
        errs.push((name, fd_rel_error(value, w.data(), grad.data(), 1e-6)));
    }
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let parts: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(worst <= 1e-6, format!("max rel FD error {worst:.1e} (<= 1e-6) [{}]", parts.join(", ")))
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("spectral-norm oracle agreement", criterion_1),
        ("modified power iteration", criterion_2),
        ("lemma suites", criterion_3),
        ("spectral mapping", criterion_4),
        ("ishikawa on rotation", criterion_5),
        ("hypothesis boundaries", criterion_6),
        ("end-to-end deblur", criterion_7),
        ("poisson prox and sampling", criterion_8),
        ("constraint enforcement", criterion_9),
        ("gradient checks", criterion_10),
    ];
    let mut failed = Vec::new();
    // written past the test harness's capture so the lines always show
    let mut err = std::io::stderr();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let status = if o.passed { "PASS" } else { "FAIL" };
        writeln!(err, "criterion {:>2} {status} {name}: {}", i + 1, o.detail).unwrap();
        if !o.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn standard_normal_is_used_for_noise() {
    // the deblur regression relies on this stream; pin its first draw
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a: f64 = rng.sample(StandardNormal);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let img = Image::random_normal(1, 1, &mut rng);
    assert_eq!(img.data()[0], a);
}
