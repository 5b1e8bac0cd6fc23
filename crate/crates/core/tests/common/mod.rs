//! Shared fixtures: stored quasimomenta and small helpers.
#![allow(dead_code)]

use num_complex::Complex64;
use polywave::lattice::{LatticeIndex, PeriodicFunction, QuasiMomentum};
use polywave::nonres::sample_nonresonant;
use polywave::{ModelContext, ResonanceGate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gross–Pitaevskii point near k = 10 (l = 1, V = 2cos x₁ + 2cos x₂).
/// The dense window holds exactly one eigenvalue in ε(k, δ) at M_lin and
/// M_lin + 4, and the series converges at order 24.
pub const GP_K10_T: [f64; 2] = [0.5423638067150449, 0.1566074012856089];
pub const GP_K10_J: [i64; 2] = [9, 3];

/// Gross–Pitaevskii point near k = 8 (k = 8.1831), isolated, with the
/// series and both dense windows agreeing to 1e-16.
pub const GP_K8_T: [f64; 2] = [0.34813533119672524, 0.6010386927505977];
pub const GP_K8_J: [i64; 2] = [7, 3];

pub fn point(t: [f64; 2], j: [i64; 2]) -> (QuasiMomentum, LatticeIndex) {
    (QuasiMomentum::new(t.to_vec()).unwrap(), LatticeIndex::new(&j))
}

pub fn desk_potential() -> PeriodicFunction {
    PeriodicFunction::cosine(2, 1.0)
}

/// l = 1 context for the Gross–Pitaevskii runs.
pub fn gp_context(sigma_a2: f64) -> ModelContext {
    let mut ctx = ModelContext::new(2, 1, desk_potential())
        .unwrap()
        .with_nonlinearity(1.0, Complex64::new(sigma_a2.sqrt(), 0.0));
    ctx.gate = ResonanceGate::Isolated;
    ctx.series_order = 24;
    ctx.quadrature_nodes = 256;
    ctx
}

/// l = 3 context with `σ = 1` and `|A|² = sigma_a2`.
pub fn l3_context(sigma_a2: f64) -> ModelContext {
    ModelContext::new(2, 3, desk_potential())
        .unwrap()
        .with_nonlinearity(1.0, Complex64::new(sigma_a2.sqrt(), 0.0))
}

/// First draw admitted by the strict gate on the sphere of radius `k`.
pub fn first_admitted(k: f64, ctx: &ModelContext) -> (QuasiMomentum, LatticeIndex) {
    let (draws, _) = sample_nonresonant(k, ctx, 400).unwrap();
    let d = draws
        .into_iter()
        .find(|d| d.report.pass_all())
        .expect("no admitted draw among 400");
    (d.report.t, d.report.j)
}

/// Random real-valued zero-mean potential supported on `|q| ≤ 2`.
pub fn random_potential(rng: &mut ChaCha8Rng) -> PeriodicFunction {
    let mut v = PeriodicFunction::zero(2);
    for x in -2i64..=2 {
        for y in -2i64..=2 {
            let q = LatticeIndex::new(&[x, y]);
            if q.is_zero() || q.norm() > 2.0 || q < -q {
                continue;
            }
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            v.add_at(q, c);
            v.add_at(-q, c.conj());
        }
    }
    v
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
