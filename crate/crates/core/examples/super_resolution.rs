//! 2x super-resolution of a disk phantom: bicubic initialization, then
//! PnPI-HQS whose prox solves the normal equations by conjugate gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnpi::denoisers::make_dct_shrink_denoiser;
use pnpi::fidelity::{make_sisr_fidelity, Fidelity};
use pnpi::image::{Image, Kernel};
use pnpi::linop::{conv_circular, downsample};
use pnpi::metrics::psnr;
use pnpi::phantoms::disk_phantom;
use pnpi::solvers::{pnpi_hqs, SolverConfig};

fn main() -> pnpi::Result<()> {
    let s = 2;
    let truth = disk_phantom(64, 64);
    let kernel = Kernel::gaussian(5, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let low = downsample(&conv_circular(&truth, &kernel)?, s)?;
    let f = &low + &Image::random_normal(32, 32, &mut rng).scale(2.55 / 255.0);

    let g = make_sisr_fidelity(f, kernel, s, 0.5)?;
    let d = make_dct_shrink_denoiser(0.05)?;
    let cfg = SolverConfig { max_iters: 60, tol: 1e-5, beta: 1.0 / 100.0, ..SolverConfig::default() };

    let bicubic = g.initial_estimate();
    let trace = pnpi_hqs(&d, &g, &cfg, Some(&truth))?;
    println!("bicubic  PSNR {:.2} dB", psnr(&bicubic, &truth)?);
    println!(
        "pnpi-hqs PSNR {:.2} dB after {} iterations ({:?})",
        psnr(&trace.final_image, &truth)?,
        trace.records.len(),
        trace.stop
    );
    Ok(())
}
