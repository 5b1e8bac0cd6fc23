mod common;

use common::*;
use num_complex::Complex64;
use polywave::fixed_point::{apply_map, iterate, residual};
use polywave::galerkin::newton_solve;
use proptest::prelude::*;

fn desk(sigma_a2: f64, phase: f64) -> polywave::ModelContext {
    let mut ctx = gp_context(sigma_a2);
    ctx.amplitude = Complex64::from_polar(sigma_a2.sqrt(), phase);
    ctx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fixed_point_is_real_and_stable(sigma_a2 in 1e-4f64..2e-3) {
        let ctx = desk(sigma_a2, 0.0);
        let (t, j) = point(GP_K8_T, GP_K8_J);
        let (sol, trace) = iterate(&t, &j, &ctx).unwrap();
        prop_assert!(trace.converged);

        let w = &sol.w_fixed;
        prop_assert!(w.hermitian_defect() <= 1e-14 * w.star_norm());
        prop_assert!(sol.e_jj > 0.0 && sol.e_jj <= 1.0);

        let again = apply_map(w, &t, &j, &ctx).unwrap();
        let step = again.w_next.sub(w).star_norm();
        prop_assert!(step < 2.0 * ctx.tol_fp(), "extra step moved W by {step:e}");
    }

    #[test]
    fn newton_is_phase_equivariant(sigma_a2 in 1e-4f64..2e-3, phase in 0.0f64..std::f64::consts::TAU) {
        let (t, j) = point(GP_K8_T, GP_K8_J);
        let real = desk(sigma_a2, 0.0);
        let turned = desk(sigma_a2, phase);
        let (s0, _) = iterate(&t, &j, &real).unwrap();
        let (s1, _) = iterate(&t, &j, &turned).unwrap();
        let n0 = newton_solve(&s0, &real).unwrap().solution;
        let n1 = newton_solve(&s1, &turned).unwrap().solution;

        prop_assert!((n0.lambda - n1.lambda).abs() <= 1e-12 * n0.lambda.abs());
        let rotated = n0.psi.scale(Complex64::from_polar(1.0, phase));
        let gap = rotated.sub(&n1.psi).star_norm();
        prop_assert!(gap <= 1e-12 * n0.psi.star_norm(), "psi differs by {gap:e}");
    }

    #[test]
    fn newton_residual_never_increases(sigma_a2 in 1e-4f64..2e-3) {
        let ctx = desk(sigma_a2, 0.0);
        let (t, j) = point(GP_K8_T, GP_K8_J);
        let (sol, _) = iterate(&t, &j, &ctx).unwrap();
        let out = newton_solve(&sol, &ctx).unwrap();
        let h = &out.residual_history;
        prop_assert!(h.windows(2).all(|w| w[1] <= w[0]), "history {h:?}");
        // The full-space residual also sees modes outside the Galerkin window.
        prop_assert!(residual(&out.solution, &ctx.potential) < 1e-10);
    }
}
