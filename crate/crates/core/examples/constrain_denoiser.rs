//! Trains a 16x16 linear denoiser under the pseudo-contractivity penalty,
//! starting from 1.5 I, then certifies the result.

use pnpi::denoisers::make_linear_denoiser;
use pnpi::oracle::{DenseMatrix, MatrixOperator};
use pnpi::spectral::{
    certify, constrain_linear_denoiser, Assumption, ConstraintConfig, ConstraintMode, DataTerm, ProbeConfig,
};

fn main() -> pnpi::Result<()> {
    let w0 = DenseMatrix::identity(16).scale(1.5);
    let cfg = ConstraintConfig {
        mode: ConstraintMode::Pc,
        r: 1e-3,
        eps: 0.1,
        steps: 500,
        learning_rate: None,
        data: DataTerm::synthetic_denoising(16, 256, 0.1, 3),
    };
    let r = constrain_linear_denoiser(&w0, &cfg)?;
    for (i, p) in r.penalty_history.iter().enumerate() {
        println!("step {i:>3}  penalty {p:.4}");
    }
    println!("converged: {} after {} steps", r.converged, r.steps_taken);

    let d = make_linear_denoiser(MatrixOperator::new(r.matrix, (4, 4))?.into_handle(), "constrained", false);
    let probe = ProbeConfig { image_size: 4, ..ProbeConfig::default() };
    let cert = certify(&d, &probe, &[Assumption::PseudoContractive, Assumption::Nonexpansive])?;
    println!(
        "certificate: pc_norm {:.4}, |J| {:.4}, pseudo-contractive {:?}, non-expansive {:?}",
        cert.maxima.pc_norm.unwrap_or(f64::NAN),
        cert.maxima.norm_j.unwrap_or(f64::NAN),
        cert.verdicts.pseudo_contractive,
        cert.verdicts.nonexpansive
    );
    Ok(())
}
