mod common;

use common::*;
use num_complex::Complex64;
use polywave::fixed_point::iterate;
use polywave::iso::{kappa_solve, sample_surface};
use polywave::lattice::decompose;
use polywave::{ModelContext, PeriodicFunction};
use proptest::prelude::*;

#[test]
fn zero_potential_surface_is_the_sphere() {
    let ctx = ModelContext::new(2, 3, PeriodicFunction::zero(2))
        .unwrap()
        .with_nonlinearity(1.0, Complex64::new(0.1, 0.0));
    let lambda = 1e6 + ctx.sigma_a2();
    let (samples, stats) = sample_surface(lambda, ctx.amplitude, 200, &ctx).unwrap();
    assert!(stats.solved > 0 && stats.failed == 0);
    for s in samples.iter().filter(|s| s.in_b) {
        let h = s.h.unwrap();
        assert!(h.abs() <= 1e-14, "h = {h:e} along {:?}", s.nu);
    }
}

#[test]
fn root_certificates_survive_a_rerun() {
    let ctx = l3_context(1e-3);
    let lambda = 1e6;
    let (samples, stats) = sample_surface(lambda, ctx.amplitude, 200, &ctx).unwrap();
    assert!(stats.solved > 0);
    let tol = ctx.tol_root_rel * lambda;
    let mut rechecked = 0;
    for s in samples.iter().filter(|s| s.h.is_some()) {
        let kvec: Vec<f64> = s.nu.iter().map(|x| s.kappa.unwrap() * x).collect();
        let (j, t) = decompose(&kvec);
        // Re-run without the gate: only k̃ν is required to be admitted.
        let mut free = ctx.clone();
        free.gate = polywave::ResonanceGate::Isolated;
        let Ok((sol, _)) = iterate(&t, &j, &free) else {
            continue;
        };
        assert!((sol.lambda - lambda).abs() < 2.0 * tol, "residual {:e}", (sol.lambda - lambda).abs());
        rechecked += 1;
    }
    assert!(rechecked * 2 >= stats.solved, "{rechecked} of {} rechecked", stats.solved);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn radius_is_square_symmetric(theta in 0.0f64..std::f64::consts::TAU) {
        let ctx = l3_context(0.0);
        let nu = [theta.cos(), theta.sin()];
        let base = kappa_solve(1e6, ctx.amplitude, &nu, &ctx).unwrap();
        for (swap, sx, sy) in [(false, -1.0, 1.0), (false, 1.0, -1.0), (true, 1.0, 1.0), (true, -1.0, -1.0)] {
            let v = if swap { [sx * nu[1], sy * nu[0]] } else { [sx * nu[0], sy * nu[1]] };
            let image = kappa_solve(1e6, ctx.amplitude, &v, &ctx).unwrap();
            prop_assert_eq!(image.in_b, base.in_b);
            if let (Some(a), Some(b)) = (base.kappa, image.kappa) {
                prop_assert!((a - b).abs() <= 1e-10, "kappa {a} vs {b}");
            }
        }
    }
}
