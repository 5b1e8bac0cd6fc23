//! Independent check of a fixed-point solution: Newton iteration on the
//! truncated Galerkin system, started from the fixed point.

use num_complex::Complex64;
use polywave::fixed_point::iterate;
use polywave::galerkin::{compare, newton_solve};
use polywave::{LatticeIndex, ModelContext, PeriodicFunction, QuasiMomentum, ResonanceGate};

fn main() -> polywave::Result<()> {
    let mut ctx = ModelContext::new(2, 1, PeriodicFunction::cosine(2, 1.0))?
        .with_nonlinearity(1.0, Complex64::new(0.0316, 0.0));
    ctx.gate = ResonanceGate::Isolated;
    ctx.series_order = 24;
    ctx.quadrature_nodes = 256;

    let t = QuasiMomentum::new(vec![0.5423638067150449, 0.1566074012856089])?;
    let j = LatticeIndex::new(&[9, 3]);
    let (sol, _) = iterate(&t, &j, &ctx)?;
    let newton = newton_solve(&sol, &ctx)?;

    println!("Newton steps {}", newton.iterations);
    for (i, r) in newton.residual_history.iter().enumerate() {
        println!("  step {i}: residual {r:.3e}");
    }
    let cmp = compare(&sol, &newton.solution)?;
    println!("|psi_fp - psi_newton|_+ = {:.2e}", cmp.psi_distance);
    println!("|lambda_fp - lambda_newton| = {:.2e}", cmp.lambda_distance);
    Ok(())
}
