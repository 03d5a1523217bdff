//! Certifies a few denoisers and feeds the certificates to the convergence
//! hypothesis checks of a deblurring problem.

use pnpi::denoisers::DenoiserSpec;
use pnpi::fidelity::make_deblur_fidelity;
use pnpi::image::{Image, Kernel};
use pnpi::solvers::{check_hypotheses, SolverConfig, SolverKind};
use pnpi::spectral::{certify, parse_assumptions, ProbeConfig};

fn main() -> pnpi::Result<()> {
    let probe = ProbeConfig::default();
    let assumptions = parse_assumptions("ne,spc:0.5,pc")?;
    let g = make_deblur_fidelity(Image::zeros(16, 16), Kernel::binomial3(), 1.0)?;
    let cfg = SolverConfig::for_kind(SolverKind::PnpiFbs);

    println!("{:<22} {:>8} {:>10} {:>8}  ne    spc:0.5 pc    thm1  thm2  thm3", "denoiser", "|J|", "|kI+(1-k)J|", "pc_norm");
    for spec in ["identity", "gauss:3x3", "dct-shrink:t=0.05", "spc:rot90:k=0.5", "antisym:c=1"] {
        let d = spec.parse::<DenoiserSpec>()?.build()?;
        let cert = certify(d.as_ref(), &probe, &assumptions)?;
        let m = &cert.maxima;
        let mark = |v: Option<bool>| match v {
            Some(true) => "yes",
            Some(false) => "no",
            None => "?",
        };
        let h = check_hypotheses(Some(&cert), &g, &cfg);
        println!(
            "{spec:<22} {:>8.4} {:>10.4} {:>8.4}  {:<5} {:<7} {:<5} {:<5} {:<5} {:<5}",
            m.norm_j.unwrap_or(f64::NAN),
            m.norm_spc.first().map_or(f64::NAN, |p| p.1),
            m.pc_norm.unwrap_or(f64::NAN),
            mark(cert.requested[0].1),
            mark(cert.requested[1].1),
            mark(cert.requested[2].1),
            format!("{:?}", h.theorem1.status).to_lowercase(),
            format!("{:?}", h.theorem2.status).to_lowercase(),
            format!("{:?}", h.theorem3.status).to_lowercase(),
        );
    }
    Ok(())
}
