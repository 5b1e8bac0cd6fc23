//! Radius `κ(λ, ν)` of the isoenergetic curve for `(−Δ)³ + V` at
//! `λ = 10⁶`, printed by angle.

use num_complex::Complex64;
use polywave::iso::{angular_sweep, ktilde, sample_surface};
use polywave::{ModelContext, PeriodicFunction};

fn main() -> polywave::Result<()> {
    let ctx = ModelContext::new(2, 3, PeriodicFunction::cosine(2, 1.0))?;
    let (lambda, a) = (1e6, Complex64::new(1.0, 0.0));
    let (samples, stats) = sample_surface(lambda, a, 400, &ctx)?;

    println!("k~ = {}", ktilde(lambda, ctx.sigma, a, ctx.l)?);
    println!(
        "{} of {} directions admitted, {} solved, max |h| = {:.3e}",
        stats.admitted, stats.samples, stats.solved, stats.max_abs_h
    );
    for (angle, s) in angular_sweep(&samples) {
        if let (Some(kappa), Some(h)) = (s.kappa, s.h) {
            println!("  theta = {angle:+.4}  kappa = {kappa:.15}  h = {h:+.3e}  ({} evaluations)", s.evaluations);
        }
    }
    Ok(())
}
