//! Bloch eigenvalue of `(−Δ)³ + V` at a non-resonant point near `k = 10`,
//! from the perturbation series and from dense diagonalization.

use polywave::bloch::{diagonalize_oracle, series_eigenpair};
use polywave::nonres::sample_nonresonant;
use polywave::{ModelContext, PeriodicFunction};

fn main() -> polywave::Result<()> {
    let v = PeriodicFunction::cosine(2, 1.0);
    let ctx = ModelContext::new(2, 3, v.clone())?;

    let (draws, _) = sample_nonresonant(10.0, &ctx, 400)?;
    let draw = draws
        .iter()
        .find(|d| d.report.pass_all())
        .expect("no admitted draw among 400");
    let (t, j) = (&draw.report.t, &draw.report.j);
    println!("draw {} admitted: j = {j:?}, t = {:?}", draw.index, t.as_slice());

    let series = series_eigenpair(&v, t, j, &ctx)?;
    println!("series  lambda - k^6 = {:.15e}", series.lambda_shift);
    for (r, (g, norm)) in series.g_terms.iter().zip(&series.g_norms).enumerate() {
        println!("  r = {:2}  g_r = {g:+.3e}  |G_r|_1 = {norm:.3e}", r + 1);
    }
    println!("  tail bound {:.2e} ({:?})", series.tail_bound, series.tail_kind);

    let window = ctx.lin_window(series.k);
    let dense = diagonalize_oracle(&v, t, j, &ctx, window)?;
    println!("dense   lambda - k^6 = {:.15e} (window radius {window})", dense.lambda_shift);
    println!("difference {:.2e}", (series.lambda_shift - dense.lambda_shift).abs());
    Ok(())
}
