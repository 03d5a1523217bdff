//! Picard iteration cycles forever on a 90-degree rotation and blows up on a
//! strictly pseudo-contractive map; the Ishikawa process converges on both.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnpi::denoisers::DenoiserSpec;
use pnpi::image::Image;
use pnpi::linop::{LinearOperator, PairRotation};
use pnpi::solvers::{ishikawa_iterate, picard_iterate, Schedule};
use pnpi::Error;

fn report(name: &str, u0: &Image, result: pnpi::Result<pnpi::IterTrace>) {
    match result {
        Ok(t) => println!("{name:<22} |u|/|u0| = {:.3e} after {} steps", t.final_image.norm() / u0.norm(), t.records.len()),
        Err(Error::Divergence { iteration, .. }) => println!("{name:<22} diverged at step {iteration}"),
        Err(e) => println!("{name:<22} error: {e}"),
    }
}

fn main() -> pnpi::Result<()> {
    let u0 = Image::random_normal(8, 8, &mut ChaCha8Rng::seed_from_u64(0));
    let schedule = Schedule::new(0.3, 0.15)?;

    let rot = |u: &Image| PairRotation.apply(u);
    report("rotation / picard", &u0, picard_iterate(rot, &u0, 1000, 0.0));
    report("rotation / ishikawa", &u0, ishikawa_iterate(rot, &u0, schedule, 1000, 0.0));

    // 2R - I: ½-strictly pseudo-contractive, Lipschitz √5
    let d = "spc:rot90:k=0.5".parse::<DenoiserSpec>()?.build()?;
    let spc = |u: &Image| d.apply(u, 0.0);
    report("spc / picard", &u0, picard_iterate(spc, &u0, 1000, 0.0));
    report("spc / ishikawa", &u0, ishikawa_iterate(spc, &u0, schedule, 1000, 0.0));

    let t = ishikawa_iterate(rot, &u0, schedule, 40, 0.0)?;
    println!("\nishikawa on the rotation, first steps:");
    for r in t.records.iter().take(8) {
        println!("  n {}  alpha {:.3}  beta {:.3}  |T(u)-u| {:.3e}", r.n, r.alpha, r.beta, r.fp_residual);
    }
    Ok(())
}
