//! Photon-limited denoising: Poisson samples at several peaks, restored with
//! PnPI-HQS using the closed-form Poisson prox.

use pnpi::denoisers::make_dct_shrink_denoiser;
use pnpi::fidelity::{make_poisson_fidelity, sample_poisson_observation};
use pnpi::metrics::psnr;
use pnpi::phantoms::gradient;
use pnpi::solvers::{pnpi_hqs, SolverConfig};

fn main() -> pnpi::Result<()> {
    let truth = gradient(48, 48).map(|v| 0.1 + 0.8 * v);
    let d = make_dct_shrink_denoiser(0.05)?;
    println!("peak  observed  restored");
    for peak in [10.0, 15.0, 20.0] {
        let f = sample_poisson_observation(&truth, peak, 7)?;
        let g = make_poisson_fidelity(f.clone(), 1.0, peak)?;
        let cfg = SolverConfig { max_iters: 100, beta: 1.0 / 400.0, project_box: true, ..SolverConfig::default() };
        let trace = pnpi_hqs(&d, &g, &cfg, None)?;
        println!("{peak:>4}  {:8.2}  {:8.2}", psnr(&f, &truth)?, psnr(&trace.final_image, &truth)?);
    }
    Ok(())
}
