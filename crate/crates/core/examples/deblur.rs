//! Deblurs a noisy, blurred checkerboard with PnPI-HQS and a DCT shrinkage
//! denoiser, printing the PSNR trajectory and writing PGM files.
//!
//! ```text
//! cargo run --release --example deblur [out_dir]
//! ```

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnpi::denoisers::make_dct_shrink_denoiser;
use pnpi::fidelity::make_deblur_fidelity;
use pnpi::image::{Image, Kernel};
use pnpi::io::save_image;
use pnpi::linop::conv_circular;
use pnpi::metrics::{psnr, ssim};
use pnpi::phantoms::checkerboard;
use pnpi::solvers::{pnpi_hqs, Schedule, SolverConfig};

fn main() -> pnpi::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/examples-out".into()));
    std::fs::create_dir_all(&out)?;

    let truth = checkerboard(64, 64, 8);
    let kernel = Kernel::binomial3();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Image::random_normal(64, 64, &mut rng).scale(12.75 / 255.0);
    let f = &conv_circular(&truth, &kernel)? + &noise;

    let g = make_deblur_fidelity(f.clone(), kernel, 0.04)?;
    let d = make_dct_shrink_denoiser(0.05)?;
    let cfg = SolverConfig {
        schedule: Schedule::new(0.3, 0.15)?,
        max_iters: 300,
        tol: 0.0,
        beta: 1.0 / 25.0,
        beta_growth: 1.01,
        ..SolverConfig::default()
    };
    let trace = pnpi_hqs(&d, &g, &cfg, Some(&truth))?;

    println!("observation: PSNR {:.2} dB", psnr(&f, &truth)?);
    for r in trace.records.iter().filter(|r| r.n % 50 == 0 || r.n + 1 == cfg.max_iters) {
        println!("n {:>3}  psnr {:6.2}  |T(u)-u| {:.3e}", r.n, r.psnr.unwrap_or(f64::NAN), r.fp_residual);
    }
    let u = &trace.final_image;
    println!("restored: PSNR {:.2} dB, SSIM {:.4}", psnr(u, &truth)?, ssim(u, &truth)?);

    save_image(&f, &out.join("deblur_observation.pgm"))?;
    save_image(&u.clamp(0.0, 1.0), &out.join("deblur_restored.pgm"))?;
    println!("images written to {}", out.display());
    Ok(())
}
