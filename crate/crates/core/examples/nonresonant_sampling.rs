//! Fraction of random directions whose momentum passes the non-resonance
//! conditions, for `l = 3` over a range of radii.

use polywave::nonres::{exponents, sample_nonresonant};
use polywave::{ModelContext, PeriodicFunction};

fn main() -> polywave::Result<()> {
    let ctx = ModelContext::new(2, 3, PeriodicFunction::cosine(2, 1.0))?;
    let e = exponents(&ctx);
    println!("gamma0 = {:.3}, gamma1 = {:.3}, gamma2 = {:.3}", e.gamma0, e.gamma1, e.gamma2);

    for k in [8.0, 12.0, 16.0, 24.0] {
        let (draws, fraction) = sample_nonresonant(k, &ctx, 400)?;
        let isolated = draws.iter().filter(|d| d.report.pass_in).count();
        let worst = draws
            .iter()
            .filter(|d| d.report.pass_all())
            .map(|d| d.report.margin_in_a / d.report.radius)
            .fold(f64::INFINITY, f64::min);
        println!(
            "k = {k:4}: admitted {:5.1}%  isolated {:5.1}%  smallest relative in-a margin {worst:.3}",
            100.0 * fraction,
            100.0 * isolated as f64 / draws.len() as f64
        );
    }
    Ok(())
}
