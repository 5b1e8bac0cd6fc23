//! Fixed-point iteration for the cubic equation `−Δu + Vu + σ|u|²u = λu`
//! near `k = 10`, with the contraction comparisons for each step.

use num_complex::Complex64;
use polywave::fixed_point::{contraction_report, iterate};
use polywave::{LatticeIndex, ModelContext, PeriodicFunction, QuasiMomentum, ResonanceGate};

fn main() -> polywave::Result<()> {
    let mut ctx = ModelContext::new(2, 1, PeriodicFunction::cosine(2, 1.0))?
        .with_nonlinearity(1.0, Complex64::new(0.0316, 0.0));
    ctx.gate = ResonanceGate::Isolated;
    ctx.series_order = 24;
    ctx.quadrature_nodes = 256;

    let t = QuasiMomentum::new(vec![0.5423638067150449, 0.1566074012856089])?;
    let j = LatticeIndex::new(&[9, 3]);
    let (sol, trace) = iterate(&t, &j, &ctx)?;

    for rec in &trace.records {
        println!(
            "m = {:2}  lambda = {:.15e}  dW = {:.2e}  dE = {:.2e}",
            rec.m, rec.lambda, rec.dw, rec.de
        );
    }
    println!("k = {:.6}, k1 = {:.3e}, factor = {:.2e}", trace.k, trace.k1, trace.contraction_factor);
    println!("lambda = {:.15e}, residual = {:.2e}, certified = {}", sol.lambda, sol.residual, sol.certified);

    let report = contraction_report(&trace, &ctx);
    println!("geometric decay {}, all comparisons held {}", report.geometric_decay, report.all_held());
    Ok(())
}
